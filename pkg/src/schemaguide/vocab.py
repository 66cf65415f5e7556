"""Token vocabulary with greedy longest-match encoding.

A Vocabulary maps token strings to dense integer ids and back.  It is
deliberately model-agnostic: any generator that shares the same token
list can drive the constrained decoder.  One token is designated as the
end-of-sequence marker; it never participates in text encoding.
"""

from __future__ import annotations

from .errors import (
    DuplicateToken,
    InvalidTokenId,
    MalformedVocab,
    UnencodableText,
    UnknownToken,
)

DEFAULT_EOS = "<EOS>"


class Vocabulary:
    """Dense-id token table.

    Ids are assigned in list order starting at 0.  If ``eos_token`` is
    not already present in ``tokens`` it is appended at the end, so the
    EOS id is stable for a fixed token list.
    """

    def __init__(self, tokens, eos_token=DEFAULT_EOS):
        tokens = list(tokens)
        if eos_token not in tokens:
            tokens.append(eos_token)
        self.tokens = tokens
        self.ids = {}
        for i, tok in enumerate(tokens):
            if not tok:
                raise MalformedVocab("empty token at id %d" % i)
            if tok in self.ids:
                raise DuplicateToken("token %r listed twice" % tok)
            self.ids[tok] = i
        self.eos_token = eos_token
        self.eos_id = self.ids[eos_token]
        # first-char buckets, longest token first, for greedy matching;
        # the EOS token is a control token and never matches text
        self._by_first = {}
        for tok in tokens:
            if tok == eos_token:
                continue
            self._by_first.setdefault(tok[0], []).append(tok)
        for bucket in self._by_first.values():
            bucket.sort(key=len, reverse=True)

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.ids

    def token_to_id(self, token):
        try:
            return self.ids[token]
        except KeyError:
            raise UnknownToken("no such token: %r" % token) from None

    def id_to_token(self, token_id):
        if not 0 <= token_id < len(self.tokens):
            raise InvalidTokenId(
                "id %r outside [0, %d)" % (token_id, len(self.tokens))
            )
        return self.tokens[token_id]

    def encode(self, text):
        """Tokenize ``text`` greedily, longest match first.

        At each position the longest vocabulary token matching the
        remaining text wins; single-character tokens act as the
        fallback.  Raises UnencodableText when no token matches.
        """
        out = []
        i = 0
        n = len(text)
        while i < n:
            bucket = self._by_first.get(text[i])
            matched = None
            if bucket:
                for tok in bucket:
                    if text.startswith(tok, i):
                        matched = tok
                        break
            if matched is None:
                raise UnencodableText(
                    "no token matches %r at position %d" % (text[i], i)
                )
            out.append(self.ids[matched])
            i += len(matched)
        return out

    def decode(self, token_ids):
        """Concatenate token strings; the EOS token decodes to ''."""
        parts = []
        for tid in token_ids:
            if not 0 <= tid < len(self.tokens):
                raise InvalidTokenId(
                    "id %r outside [0, %d)" % (tid, len(self.tokens))
                )
            if tid == self.eos_id:
                continue
            parts.append(self.tokens[tid])
        return "".join(parts)

    @classmethod
    def from_file(cls, path, eos_token=DEFAULT_EOS):
        """Load a vocabulary from a one-token-per-line file.

        Lines use three escapes so whitespace tokens survive the line
        format: ``\\n`` for newline, ``\\t`` for tab and ``\\\\`` for a
        backslash.
        """
        with open(path, "r", encoding="utf-8") as fh:
            raw = fh.read()
        lines = raw.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        tokens = []
        for lineno, line in enumerate(lines, 1):
            if line == "":
                raise MalformedVocab("empty line %d in %s" % (lineno, path))
            tokens.append(_unescape(line, lineno))
        return cls(tokens, eos_token=eos_token)

    def to_file(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for tok in self.tokens:
                fh.write(_escape(tok))
                fh.write("\n")


def _escape(token):
    return token.replace("\\", "\\\\").replace("\n", "\\n").replace("\t", "\\t")


def _unescape(line, lineno):
    out = []
    i = 0
    while i < len(line):
        ch = line[i]
        if ch == "\\":
            if i + 1 >= len(line):
                raise MalformedVocab("dangling backslash on line %d" % lineno)
            nxt = line[i + 1]
            if nxt == "n":
                out.append("\n")
            elif nxt == "t":
                out.append("\t")
            elif nxt == "\\":
                out.append("\\")
            else:
                raise MalformedVocab(
                    "unknown escape \\%s on line %d" % (nxt, lineno)
                )
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def reference_vocabulary(extra_tokens=(), eos_token=DEFAULT_EOS):
    """Printable-ASCII character vocabulary plus optional merged tokens.

    Layout: newline, tab, the characters 0x20..0x7e in codepoint order,
    then ``extra_tokens`` in the given order, then EOS.  Useful as a
    deterministic stand-in for a real model tokenizer.
    """
    tokens = ["\n", "\t"]
    tokens.extend(chr(c) for c in range(0x20, 0x7F))
    seen = set(tokens)
    for tok in extra_tokens:
        if tok in seen or tok == eos_token:
            continue
        seen.add(tok)
        tokens.append(tok)
    return Vocabulary(tokens, eos_token=eos_token)
