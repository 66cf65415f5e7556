"""Token-level constrained decoding.

A DecodingSession walks a generator through one output: it exposes, at
every step, either a set of allowed token ids or a forced continuation,
and consumes the token the generator picked.  The session tracks which
candidate library is being emitted (string selection over the template
prefixes), the position inside that library's template, flag and
keyword pools, and for YAML the stack of open nesting levels.

Key behaviors:

  * String selection: candidates live in a token trie.  Tokens off the
    trie are masked out; once a single candidate survives, the rest of
    its tokenization is forced.  A candidate that is a strict prefix of
    another commits when the generator picks a token belonging to the
    following state rather than the longer candidate (trie continuation
    wins when both are possible).
  * Dashed flags: after ``-`` the unused flags form a trie keyed by
    their remainder, so a second ``-`` narrows to the long options.
  * A pipe restarts library selection over the same retrieved
    candidates for the next segment.
  * YAML indentation is counted after every newline.  A count that
    matches no open nesting level is repaired: the bad run of spaces is
    truncated, the nearest valid level (ties break shallower) is
    emitted instead, and a cache-invalidation event is queued for the
    generator.
  * EOS stays available as a sentinel at end positions.  Proposing it
    while required fields are missing triggers interception: the engine
    forces the missing keys (deepest open level first), lets the model
    fill each value, then offers EOS again.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass

from .errors import (
    DisallowedToken,
    EmptyCandidateSet,
    GenerationStuck,
    MalformedSchema,
    NoCandidates,
    UnknownLibrary,
)
from .profiles import BOOL_WORDS
from .template import (
    Choice,
    FreeArg,
    OptionalSlot,
    Repeat,
    Static,
    bind_schema,
    parse_template,
    static_prefix,
    yaml_module_template,
)

log = logging.getLogger(__name__)

# session modes
M_SELECT = "select"
M_DECIDE = "decide"
M_CHOICE = "choice"
M_FLAGS = "flags"
M_FREE = "free"
M_END = "end"
M_YAML_LINEBREAK = "yaml-linebreak"
M_YAML_INDENT = "yaml-indent"
M_YAML_KEY = "yaml-key"
M_YAML_KEY_FREE = "yaml-key-free"
M_YAML_VALUE = "yaml-value"
M_YAML_VALUE_TRIE = "yaml-value-trie"
M_DONE = "done"

# boundary between emitted content and the next part
B_NONE = "none"        # glued: next content attaches directly
B_PENDING = "pending"  # a separator space must be emitted first
B_DONE = "done"        # separator already emitted


@dataclass(frozen=True)
class StepMask:
    """One decoding step: either an allowed set or a forced sequence."""

    allowed: frozenset | None = None
    forced: tuple | None = None

    def __post_init__(self):
        if (self.allowed is None) == (self.forced is None):
            raise ValueError("exactly one of allowed/forced must be set")
        if self.allowed is not None and not self.allowed:
            raise ValueError("allowed set must be non-empty")
        if self.forced is not None and not self.forced:
            raise ValueError("forced sequence must be non-empty")

    @property
    def is_forced(self):
        return self.forced is not None


@dataclass(frozen=True)
class CacheInvalidate:
    """Generated tokens past keep_prefix_len (prompt included) changed."""

    keep_prefix_len: int


# ---------------------------------------------------------------------------
# token trie


class TrieNode:
    __slots__ = ("children", "terminal", "count")

    def __init__(self):
        self.children = {}
        self.terminal = None
        self.count = 0


class StringTrie:
    """Trie over the canonical tokenizations of candidate strings."""

    def __init__(self, root, vocab):
        self.root = root
        self.vocab = vocab


def build_trie(strings, vocab):
    strings = list(strings)
    if not strings:
        raise EmptyCandidateSet("no candidate strings")
    root = TrieNode()
    for s in strings:
        if not s:
            raise EmptyCandidateSet("empty candidate string")
        node = root
        node.count += 1
        for tid in vocab.encode(s):
            node = node.children.setdefault(tid, TrieNode())
            node.count += 1
        if node.terminal is not None:
            raise EmptyCandidateSet("duplicate candidate %r" % s)
        node.terminal = s
    return StringTrie(root, vocab)


def trie_allowed(trie):
    """Token ids that keep at least one candidate alive."""
    return frozenset(trie.root.children)


def trie_step(trie, token):
    """Narrow to candidates whose tokenization continues with token."""
    child = trie.root.children.get(token)
    if child is None:
        raise DisallowedToken("token %d matches no candidate" % token)
    return StringTrie(child, trie.vocab)


def trie_survivors(trie):
    """All candidate strings still reachable, sorted."""
    out = []
    stack = [trie.root]
    while stack:
        node = stack.pop()
        if node.terminal is not None:
            out.append(node.terminal)
        stack.extend(node.children.values())
    return sorted(out)


def _unique_chain(node):
    """If one candidate survives, the token path down to it; else None."""
    if node.count != 1:
        return None
    path = []
    while node.terminal is None:
        ((tid, node),) = node.children.items()
        path.append(tid)
    return path, node.terminal


# ---------------------------------------------------------------------------
# helpers


class Frame:
    """One open YAML nesting level: the keys valid at ``level`` spaces."""

    __slots__ = ("schema", "level", "used")

    def __init__(self, schema, level):
        self.schema = schema  # None = free dict
        self.level = level
        self.used = set()

    def unused_keys(self):
        if self.schema is None:
            return None
        return [k for k in self.schema.fields if k not in self.used]

    def selectable(self):
        if self.schema is None:
            return True
        return bool(self.unused_keys())

    def required_left(self):
        if self.schema is None:
            return []
        return [n for n in self.schema.required_fields() if n not in self.used]


def selection_strings(schemas, profile):
    """The library-selection string for each candidate schema.

    Bash: the whitespace-stripped static prefix of the bound template.
    YAML: the module key line ``<fqn>:``.
    """
    out = []
    seen = set()
    for schema in schemas:
        if profile.name == "bash":
            template = bind_schema(parse_template(schema.template), schema)
            prefix = static_prefix(template).rstrip()
            if not prefix:
                raise MalformedSchema(
                    "%s: template must start with static text" % schema.library_id
                )
            out.append((prefix, template, schema))
        else:
            template = yaml_module_template(schema.library_id)
            out.append((schema.library_id + ":", template, schema))
        if out[-1][0] in seen:
            raise MalformedSchema("duplicate selection string %r" % out[-1][0])
        seen.add(out[-1][0])
    return out


def _content_ids(vocab, banned_chars, ban_leading_space=False):
    """(first, rest) token-id sets usable inside free text.

    A token qualifies when none of its characters is banned; the first
    set additionally drops tokens starting with a space when asked.
    """
    first = set()
    rest = set()
    for tid, tok in enumerate(vocab.tokens):
        if tid == vocab.eos_id:
            continue
        if any(ch in banned_chars for ch in tok):
            continue
        rest.add(tid)
        if ban_leading_space and tok[0] == " ":
            continue
        first.add(tid)
    return frozenset(first), frozenset(rest)


# ---------------------------------------------------------------------------
# the session


class DecodingSession:
    """Constrained decoding state for one generation."""

    def __init__(
        self,
        schemas,
        profile,
        vocab,
        free_arg_mode="literal",
        dedupe_flags=True,
        allow_pipes=True,
        max_free_len=None,
        prompt_len=0,
    ):
        if not schemas:
            raise NoCandidates("no candidate libraries")
        if free_arg_mode not in ("literal", "model"):
            raise ValueError("free_arg_mode must be literal or model")
        self.profile = profile
        self.vocab = vocab
        self.free_arg_mode = free_arg_mode
        self.dedupe_flags = dedupe_flags
        self.allow_pipes = allow_pipes and profile.name == "bash"
        self.max_free_len = None if max_free_len is None else max(1, max_free_len)
        self.prompt_len = prompt_len

        self.candidates = selection_strings(schemas, profile)
        self.sel_by_string = {prefix: (t, s) for prefix, t, s in self.candidates}
        self.emitted = []
        self.events = []
        self.healed = 0
        self.segments = []  # library ids committed so far

        self.space = vocab.token_to_id(" ")
        self.newline = vocab.token_to_id("\n")
        self.eos = vocab.eos_id
        self.dash = vocab.token_to_id("-")
        self.colon = vocab.token_to_id(":")
        self.pipe = vocab.ids.get("|")

        self._bash_free = _content_ids(vocab, banned_chars=" \t\n|")
        self._yaml_value = _content_ids(vocab, banned_chars="\n", ban_leading_space=True)
        self._yaml_key = _content_ids(vocab, banned_chars=":\n", ban_leading_space=True)
        self._digits = frozenset(
            tid
            for tid, tok in enumerate(vocab.tokens)
            if tid != vocab.eos_id and tok.isdigit()
        )

        self.forced = deque()
        self.on_forced_done = None
        self._mask = None
        self.done = False
        self.mode = M_SELECT

        # bash walk state
        self.active_schema = None
        self.walker = ()
        self.cursor = 0
        self.boundary = B_NONE
        self.trie = None
        self.trie_mode = None
        self.choice_part = None
        self.kw_override = None
        self.active_flags = []
        self.used_flags = set()
        self.free_len = 0
        self.repeat_started = set()

        # yaml state
        self.frames = []
        self.pending_child = None
        self.line_spaces = 0
        self.key_buf = []
        self.value_len = 0
        self.value_field = None
        self.drain_queue = []
        self.drain_mode = False

        self._start_selection()

    # -- plumbing -----------------------------------------------------------

    def pop_events(self):
        out = self.events
        self.events = []
        return out

    def _emit(self, token):
        self.emitted.append(token)

    def _schedule(self, tokens, done=None):
        if tokens:
            self.forced.extend(tokens)
            self.on_forced_done = done
        elif done is not None:
            done()

    def _encode(self, text):
        return self.vocab.encode(text)

    # -- selection ----------------------------------------------------------

    def _start_selection(self):
        self.mode = M_SELECT
        self.active_schema = None
        self.used_flags = set()
        self.kw_override = None
        self.repeat_started = set()
        self.trie = build_trie([c[0] for c in self.candidates], self.vocab)
        self.trie_mode = "select"

    def _post_selection_first(self, prefix):
        """First tokens of the state right after committing a candidate."""
        template, schema = self.sel_by_string[prefix]
        if self.profile.name == "yaml":
            return {self.newline}
        if len(template.parts) > 1 or static_prefix(template).endswith(" "):
            return {self.space}
        out = {self.eos}
        if self.allow_pipes and self.pipe is not None:
            out.add(self.space)
        return out

    def _commit_selection(self, prefix):
        template, schema = self.sel_by_string[prefix]
        self.active_schema = schema
        self.segments.append(schema.library_id)
        self.trie = None
        if self.profile.name == "yaml":
            self.frames = [Frame(schema, self.profile.option_level)]
            self.pending_child = None
            self.mode = M_YAML_LINEBREAK
            return
        self.walker = template.parts
        self.cursor = 1
        self.boundary = B_PENDING if static_prefix(template).endswith(" ") else B_NONE
        self.active_flags = schema.flag_names()
        self._enter_part()

    # -- bash template walk -------------------------------------------------

    def _required_flags_left(self):
        schema = self.active_schema
        if schema is None or self.profile.name != "bash":
            return []
        return [
            n
            for n in schema.required_fields()
            if schema.fields[n].kind == "flag" and n not in self.used_flags
        ]

    def _available_flags(self):
        pool = self.active_flags
        if self.dedupe_flags:
            pool = [f for f in pool if f not in self.used_flags]
        return pool

    def _resolve_alternatives(self, part, consume=False):
        """Alternatives for a choice part, honoring a pending dependency."""
        if part.name is not None and self.kw_override is not None:
            alts = self.kw_override
            if consume:
                self.kw_override = None
            return alts
        return part.alternatives

    def _enter_part(self):
        """Advance the walker to the next decision or scheduled emission."""
        while True:
            if self.cursor >= len(self.walker):
                self.mode = M_END
                return
            part = self.walker[self.cursor]
            inner = part.inner if isinstance(part, Repeat) else part
            if isinstance(part, Repeat) and not isinstance(inner, OptionalSlot):
                if self.cursor in self.repeat_started:
                    self.mode = M_DECIDE
                    return
                self.repeat_started.add(self.cursor)
                part = inner
            if isinstance(part, Static):
                text = self._collapse_static(part.text)
                if not text:
                    self.cursor += 1
                    continue
                cursor_after = self.cursor + 1

                def done(after=cursor_after):
                    self.cursor = after
                    self._enter_part()

                self._schedule(self._encode(text), done)
                return
            if isinstance(part, Choice):
                alts = self._resolve_alternatives(part)
                if not alts:
                    if part.name is not None and self.kw_override is not None:
                        self.kw_override = None
                    self.cursor += 1
                    continue
                if self.boundary == B_PENDING:
                    self._schedule([self.space], self._sep_flushed)
                    return
                self._resolve_alternatives(part, consume=True)
                self.trie = build_trie(alts, self.vocab)
                self.trie_mode = "choice"
                self.choice_part = part
                self.mode = M_CHOICE
                return
            if isinstance(part, FreeArg):
                if self.boundary == B_PENDING:
                    self._schedule([self.space], self._sep_flushed)
                    return
                if self.free_arg_mode == "literal":
                    cursor_after = self.cursor + 1

                    def done(after=cursor_after):
                        self.cursor = after
                        self.boundary = B_PENDING
                        self._enter_part()

                    self._schedule(self._encode(part.source), done)
                    return
                self.free_len = 0
                self.mode = M_FREE
                return
            # optional slot (possibly repeated)
            self.mode = M_DECIDE
            return

    def _sep_flushed(self):
        self.boundary = B_DONE
        self._enter_part()

    def _collapse_static(self, text):
        """Merge a static's edge whitespace with the boundary state."""
        if self.boundary == B_PENDING:
            text = " " + text.lstrip()
        elif self.boundary == B_DONE:
            text = text.lstrip()
        stripped = text.rstrip()
        if stripped != text:
            self.boundary = B_PENDING
            text = stripped
        elif text:
            self.boundary = B_NONE
        elif self.boundary != B_DONE:
            self.boundary = B_PENDING
        return text

    # first-token lookahead across skippable parts

    def _lookahead_first(self, cursor, boundary):
        while True:
            if cursor >= len(self.walker):
                return self._end_mask_tokens(boundary)
            part = self.walker[cursor]
            inner = part.inner if isinstance(part, Repeat) else part
            started = isinstance(part, Repeat) and cursor in self.repeat_started
            if isinstance(inner, Static):
                text = inner.text
                if boundary == B_PENDING:
                    text = " " + text.lstrip()
                elif boundary == B_DONE:
                    text = text.lstrip()
                if not text.strip():
                    if boundary != B_DONE:
                        boundary = B_PENDING
                    cursor += 1
                    continue
                return {self._encode(text.rstrip())[0]}
            if isinstance(inner, Choice) and not isinstance(part, Repeat):
                alts = self._resolve_alternatives(inner)
                if not alts:
                    cursor += 1
                    continue
                if boundary == B_PENDING:
                    return {self.space}
                return set(trie_allowed(build_trie(alts, self.vocab)))
            if isinstance(inner, FreeArg) and not isinstance(part, Repeat):
                if boundary == B_PENDING:
                    return {self.space}
                if self.free_arg_mode == "literal":
                    return {self._encode(inner.source)[0]}
                return set(self._bash_free[0])
            # optional slots, and repeats of any inner part
            take = self._slot_first(inner, boundary)
            if isinstance(inner, OptionalSlot) or started:
                return take | self._lookahead_first(cursor + 1, boundary)
            return take  # unstarted repeat: at least one occurrence

    def _slot_first(self, slot, boundary):
        if boundary == B_PENDING:
            return {self.space}
        if isinstance(slot, FreeArg):
            return set(self._bash_free[0])
        if isinstance(slot, Choice):
            alts = self._resolve_alternatives(slot)
            return set(trie_allowed(build_trie(alts, self.vocab))) if alts else set()
        if slot.pool_kind == "flags":
            first = {self.dash} if self._available_flags() else set()
            if self.kw_override:
                first |= set(trie_allowed(build_trie(self.kw_override, self.vocab)))
            return first
        if slot.pool_kind == "choice":
            return set(trie_allowed(build_trie(slot.pool, self.vocab)))
        return set(self._bash_free[0])

    def _end_mask_tokens(self, boundary):
        out = {self.eos}
        if self.allow_pipes and self.pipe is not None:
            if boundary == B_DONE:
                out.add(self.pipe)
            else:
                out.add(self.space)
        return out

    # -- mask computation ---------------------------------------------------

    def next_mask(self):
        if self.done:
            raise DisallowedToken("session is finished")
        if self._mask is not None:
            return self._mask
        if not self.forced and self.mode in (
            M_SELECT,
            M_CHOICE,
            M_FLAGS,
            M_YAML_KEY,
            M_YAML_VALUE_TRIE,
        ):
            self._maybe_force_unique()
        if self.forced:
            mask = StepMask(forced=tuple(self.forced))
        else:
            mode = self.mode
            if mode in (M_SELECT, M_CHOICE, M_FLAGS, M_YAML_KEY, M_YAML_VALUE_TRIE):
                mask = StepMask(allowed=frozenset(self._trie_allowed_mask()))
            elif mode == M_DECIDE:
                mask = StepMask(allowed=frozenset(self._decide_mask()))
            elif mode == M_FREE:
                mask = StepMask(allowed=frozenset(self._free_mask()))
            elif mode == M_END:
                mask = StepMask(allowed=frozenset(self._end_mask_tokens(self.boundary)))
            elif mode == M_YAML_LINEBREAK:
                mask = StepMask(allowed=frozenset({self.newline}))
            elif mode == M_YAML_INDENT:
                mask = StepMask(allowed=frozenset(self._indent_mask()))
            elif mode == M_YAML_KEY_FREE:
                mask = StepMask(allowed=frozenset(self._key_free_mask()))
            elif mode == M_YAML_VALUE:
                mask = StepMask(allowed=frozenset(self._value_mask()))
            else:
                raise DisallowedToken("no mask in mode %r" % mode)
        self._mask = mask
        return mask

    def _maybe_force_unique(self):
        """Schedule the remainder when a single trie candidate survives."""
        chain = _unique_chain(self.trie.root)
        if chain is None:
            return
        path, terminal = chain
        tokens = list(path)
        if self.trie_mode == "value":
            tokens.append(self.newline)
        if tokens:
            self._schedule(tokens, self._trie_done(terminal))

    def _trie_done(self, terminal):
        mode = self.trie_mode

        def done():
            if mode == "value":
                self._commit_value(terminal)
            else:
                self._commit_trie(terminal)

        return done

    def _trie_allowed_mask(self):
        allowed = set(trie_allowed(self.trie))
        terminal = self.trie.root.terminal
        if terminal is not None:
            if self.trie_mode == "value":
                allowed.add(self.newline)
            else:
                allowed |= self._after_trie_first(terminal)
        if not allowed:
            raise DisallowedToken("trie has no continuations")
        return allowed

    def _after_trie_first(self, terminal):
        """First tokens of the state after committing ``terminal``."""
        mode = self.trie_mode
        if mode == "select":
            return set(self._post_selection_first(terminal))
        if mode == "choice":
            next_cursor = self.cursor + (0 if self._slot_repeats() else 1)
            return set(self._lookahead_first(next_cursor, B_PENDING))
        if mode == "flags":
            return set(self._lookahead_first(self.cursor, B_PENDING))
        if mode == "key":
            frame = self.frames[-1]
            field = frame.schema.fields[terminal[:-1]]
            if field.kind == "nested" or field.value_type == "dict":
                return {self.newline}
            return {self.space}
        return set()

    def _slot_repeats(self):
        if self.cursor >= len(self.walker):
            return False
        part = self.walker[self.cursor]
        if isinstance(part, Repeat):
            return True
        return isinstance(part, OptionalSlot) and part.pool_kind == "flags"

    def _decide_mask(self):
        part = self.walker[self.cursor]
        slot = part.inner if isinstance(part, Repeat) else part
        take = self._slot_first(slot, self.boundary)
        skip = self._lookahead_first(self.cursor + 1, self.boundary)
        mask = take | skip
        if not mask:
            raise DisallowedToken("empty decision mask at part %d" % self.cursor)
        return mask

    def _free_mask(self):
        content = self._bash_free[0] if self.free_len == 0 else self._bash_free[1]
        if self.max_free_len is not None and self.free_len >= self.max_free_len:
            content = frozenset()
        mask = set(content)
        if self.free_len > 0:
            mask.add(self.space)
            tail = self._lookahead_first(self.cursor + 1, B_PENDING)
            if self.eos in tail:
                mask.add(self.eos)
        if not mask:
            raise DisallowedToken("free argument has no continuations")
        return mask

    # -- yaml masks ---------------------------------------------------------

    def _indent_targets(self):
        """(spaces, target) pairs valid for the current line."""
        if self.pending_child is not None:
            level, schema = self.pending_child
            child = [(level, "child")]
            if schema is not None and any(
                f.required for f in schema.fields.values()
            ):
                return child  # the child block must open
        else:
            child = []
        targets = []
        for i, frame in enumerate(self.frames):
            deeper_ok = all(not f.required_left() for f in self.frames[i + 1 :])
            if deeper_ok and frame.selectable():
                targets.append((frame.level, i))
        return targets + child

    def _target_key_first(self, target):
        if target == "child":
            schema = self.pending_child[1]
            keys = list(schema.fields) if schema is not None else None
        else:
            frame = self.frames[target]
            schema = frame.schema
            keys = frame.unused_keys()
        if schema is None:
            return set(self._yaml_key[0])
        return set(trie_allowed(build_trie([k + ":" for k in keys], self.vocab)))

    def _indent_mask(self):
        targets = self._indent_targets()
        c = self.line_spaces
        mask = set()
        levels = {t[0] for t in targets}
        if any(lv > c for lv in levels):
            mask.add(self.space)
        for lv, tgt in targets:
            if lv == c:
                mask |= self._target_key_first(tgt)
        if c not in levels:
            for lv, tgt in targets:
                mask |= self._target_key_first(tgt)
        if c == 0:
            mask.add(self.eos)
        if not mask:
            raise DisallowedToken("no indentation targets open")
        return mask

    def _key_free_mask(self):
        first, rest = self._yaml_key
        name = self.vocab.decode(self.key_buf).strip()
        duplicate = name in self.frames[-1].used
        content = first if not self.key_buf else rest
        capped = (
            self.max_free_len is not None and len(self.key_buf) >= self.max_free_len
        )
        mask = set()
        if duplicate or not capped:
            mask |= content
        if self.key_buf and name and not duplicate:
            mask.add(self.colon)
        if not mask:
            raise DisallowedToken("free key has no continuations")
        return mask

    def _value_mask(self):
        if self.value_field is not None and self.value_field.value_type == "int":
            first = rest = self._digits
        else:
            first, rest = self._yaml_value
        content = first if self.value_len == 0 else rest
        if self.max_free_len is not None and self.value_len >= self.max_free_len:
            content = frozenset()
        mask = set(content)
        if self.value_len > 0:
            mask.add(self.newline)
        if not mask:
            raise DisallowedToken("value has no continuations")
        return mask

    # -- advancing ----------------------------------------------------------

    def advance(self, token):
        """Consume one sampled token, updating all state."""
        if self.done:
            raise DisallowedToken("session is finished")
        mask = self.next_mask()
        if mask.is_forced:
            if token != mask.forced[0]:
                raise DisallowedToken(
                    "expected forced token %d, got %d" % (mask.forced[0], token)
                )
        elif token not in mask.allowed:
            raise DisallowedToken("token %d not in allowed set" % token)
        self._mask = None
        self._dispatch(token)

    def _dispatch(self, token):
        if self.forced:
            expected = self.forced.popleft()
            if token != expected:
                raise DisallowedToken(
                    "forced stream expected %d, got %d" % (expected, token)
                )
            self._emit(token)
            if not self.forced and self.on_forced_done is not None:
                cb = self.on_forced_done
                self.on_forced_done = None
                cb()
            return
        handler = {
            M_SELECT: self._adv_trie,
            M_CHOICE: self._adv_trie,
            M_FLAGS: self._adv_trie,
            M_YAML_KEY: self._adv_trie,
            M_YAML_VALUE_TRIE: self._adv_trie,
            M_DECIDE: self._adv_decide,
            M_FREE: self._adv_free,
            M_END: self._adv_end,
            M_YAML_LINEBREAK: self._adv_linebreak,
            M_YAML_INDENT: self._adv_indent,
            M_YAML_KEY_FREE: self._adv_key_free,
            M_YAML_VALUE: self._adv_value,
        }[self.mode]
        handler(token)

    # trie-backed modes (selection, choices, flags, keys, choice values)

    def _adv_trie(self, token):
        node = self.trie.root
        if token in node.children:
            self._emit(token)
            self.trie = StringTrie(node.children[token], self.vocab)
            self._maybe_force_unique()
            return
        terminal = node.terminal
        if terminal is None:
            raise DisallowedToken("token %d leaves no survivors" % token)
        if self.trie_mode == "value":
            if token != self.newline:
                raise DisallowedToken("choice value commits on newline only")
            self._emit(token)
            self._commit_value(terminal)
            return
        # delimiter of the following state: commit, then let it consume
        self._commit_trie(terminal)
        self._dispatch(token)

    def _commit_trie(self, terminal):
        mode = self.trie_mode
        self.trie = None
        if mode == "select":
            self._commit_selection(terminal)
        elif mode == "choice":
            self._commit_choice(terminal)
        elif mode == "flags":
            self.used_flags.add("-" + terminal)
            self.boundary = B_PENDING
            self._enter_part()
        elif mode == "key":
            self._commit_key(terminal[:-1])
        else:
            raise DisallowedToken("unexpected trie commit in %r" % mode)

    def _commit_choice(self, value):
        schema = self.active_schema
        self.choice_part = None
        self.boundary = B_PENDING
        dep = schema.dependencies.get(value) if schema is not None else None
        if dep is not None:
            self.kw_override = dep.keywords
            if dep.flags:
                self.active_flags = list(dep.flags)
        if not self._slot_repeats():
            self.cursor += 1
        self._enter_part()

    # bash decision point

    def _adv_decide(self, token):
        part = self.walker[self.cursor]
        slot = part.inner if isinstance(part, Repeat) else part
        if token == self.space and self.boundary == B_PENDING:
            self._emit(token)
            self.boundary = B_DONE
            return
        take = self._slot_first(slot, self.boundary)
        if token in take:
            if isinstance(slot, OptionalSlot) and slot.pool_kind == "flags":
                if token == self.dash:
                    self._emit(token)
                    pool = self._available_flags()
                    self.trie = build_trie([f[1:] for f in pool], self.vocab)
                    self.trie_mode = "flags"
                    self.mode = M_FLAGS
                    return
                # a dependency keyword claims the slot occurrence
                alts = self.kw_override
                self.kw_override = None
                self.trie = build_trie(alts, self.vocab)
                self.trie_mode = "choice"
                self.choice_part = None
                self.mode = M_CHOICE
                self._dispatch(token)
                return
            self._enter_slot(slot)
            self._dispatch(token)
            return
        # skip the slot
        self.cursor += 1
        self._enter_part()
        self._dispatch(token)

    def _enter_slot(self, slot):
        if isinstance(slot, Choice):
            alts = self._resolve_alternatives(slot, consume=True)
            self.trie = build_trie(alts, self.vocab)
            self.trie_mode = "choice"
            self.choice_part = slot
            self.mode = M_CHOICE
            return
        if isinstance(slot, OptionalSlot) and slot.pool_kind == "choice":
            self.trie = build_trie(slot.pool, self.vocab)
            self.trie_mode = "choice"
            self.choice_part = None
            self.mode = M_CHOICE
            return
        # free argument (bare or pooled)
        self.free_len = 0
        self.mode = M_FREE

    def _adv_free(self, token):
        if token == self.eos:
            self.cursor = len(self.walker)
            self.mode = M_END
            self._adv_end(token)
            return
        if token == self.space and self.free_len > 0:
            self._emit(token)
            self.boundary = B_DONE
            if not self._slot_repeats():
                self.cursor += 1
            self._enter_part()
            return
        self._emit(token)
        self.free_len += 1

    def _adv_end(self, token):
        if token == self.eos:
            missing = self._required_flags_left()
            if not missing:
                self.done = True
                self.mode = M_DONE
                return
            text = ""
            boundary = self.boundary
            for flag in missing:
                text += ("" if boundary == B_DONE else " ") + flag
                boundary = B_PENDING
                self.used_flags.add(flag)

            def done():
                self.boundary = B_PENDING
                self.mode = M_END

            self._schedule(self._encode(text), done)
            return
        if token == self.space:
            self._emit(token)
            self.boundary = B_DONE
            return
        # pipe: restart selection for the next segment; required flags the
        # generator skipped must land inside this segment, before the bar
        missing = self._required_flags_left()
        if missing:
            text = ""
            boundary = self.boundary
            for flag in missing:
                text += ("" if boundary == B_DONE else " ") + flag
                boundary = B_PENDING
                self.used_flags.add(flag)
            self._schedule(
                self._encode(text + " ") + [token, self.space],
                self._start_selection,
            )
            return
        self._emit(token)
        self._schedule([self.space], self._start_selection)

    # yaml handlers

    def _adv_linebreak(self, token):
        self._emit(token)
        self.line_spaces = 0
        self.mode = M_YAML_INDENT

    def _adv_indent(self, token):
        if token == self.space:
            self._emit(token)
            self.line_spaces += 1
            return
        if token == self.eos:
            self._intercept_eos()
            return
        targets = self._indent_targets()
        levels = {}
        for lv, tgt in targets:
            levels.setdefault(lv, tgt)
        c = self.line_spaces
        if c in levels:
            repaired = c
        else:
            repaired = self._backtrack_indent(sorted(levels), c)
        tgt = levels[repaired]
        key_first = self._target_key_first(tgt)
        if token not in key_first:
            self.healed += 1
            substitute = min(key_first)
            log.debug(
                "substituting token %d for %d after indentation repair",
                substitute,
                token,
            )
            token = substitute
        self._enter_level(tgt)
        self._dispatch(token)

    def _backtrack_indent(self, valid_levels, c):
        """Repair a bad indentation run to the nearest valid level.

        The emitted spaces are truncated, the replacement appended, and
        a cache-invalidation event records how much context survived.
        Ties round toward the shallower level.
        """
        best = min(valid_levels, key=lambda lv: (abs(lv - c), lv))
        keep = self.prompt_len + len(self.emitted) - c
        if c:
            del self.emitted[-c:]
        self.events.append(CacheInvalidate(keep_prefix_len=keep))
        for _ in range(best):
            self._emit(self.space)
        self.line_spaces = best
        return best

    def _enter_level(self, target):
        if target == "child":
            level, schema = self.pending_child
            self.pending_child = None
            frame = Frame(schema, level)
            self.frames.append(frame)
        else:
            self.frames = self.frames[: target + 1]
            self.pending_child = None
            frame = self.frames[target]
        if frame.schema is None:
            self.key_buf = []
            self.mode = M_YAML_KEY_FREE
            return
        keys = frame.unused_keys()
        self.trie = build_trie([k + ":" for k in keys], self.vocab)
        self.trie_mode = "key"
        self.mode = M_YAML_KEY

    def _commit_key(self, name):
        frame = self.frames[-1]
        frame.used.add(name)
        field = frame.schema.fields[name]
        if field.kind == "nested" or field.value_type == "dict":
            sub = field.suboptions if field.kind == "nested" else None
            self.pending_child = (frame.level + self.profile.indent_step, sub)
            self.mode = M_YAML_LINEBREAK
            return
        self.value_field = field
        self._schedule([self.space], self._enter_value)

    def _enter_value(self):
        field = self.value_field
        if field is not None and field.kind == "keyword-choice":
            self.trie = build_trie(field.valid_values, self.vocab)
            self.trie_mode = "value"
            self.mode = M_YAML_VALUE_TRIE
            return
        if field is not None and field.value_type == "bool":
            self.trie = build_trie(BOOL_WORDS, self.vocab)
            self.trie_mode = "value"
            self.mode = M_YAML_VALUE_TRIE
            return
        self.value_len = 0
        self.mode = M_YAML_VALUE

    def _adv_key_free(self, token):
        if token == self.colon and self.key_buf:
            name = self.vocab.decode(self.key_buf).strip()
            self._emit(token)
            self.frames[-1].used.add(name)
            self.value_field = None
            self._schedule([self.space], self._enter_value)
            return
        self._emit(token)
        self.key_buf.append(token)

    def _adv_value(self, token):
        if token == self.newline and self.value_len > 0:
            self._emit(token)
            self._end_line()
            return
        self._emit(token)
        self.value_len += 1

    def _commit_value(self, value):
        self.trie = None
        self._end_line()

    def _end_line(self):
        self.value_field = None
        if self.drain_mode:
            self._drain_next()
        else:
            self.line_spaces = 0
            self.mode = M_YAML_INDENT

    # EOS interception: force missing required fields before finishing

    def _pending_required(self):
        pending = []
        if self.pending_child is not None and self.pending_child[1] is not None:
            pending.extend(
                n for n, f in self.pending_child[1].fields.items() if f.required
            )
        for frame in self.frames:
            pending.extend(frame.required_left())
        return pending

    def _intercept_eos(self):
        if not self._pending_required():
            self.done = True
            self.mode = M_DONE
            return
        if self.pending_child is not None:
            level, schema = self.pending_child
            self.pending_child = None
            if schema is not None and any(f.required for f in schema.fields.values()):
                self.frames.append(Frame(schema, level))
        queue = []
        for frame in reversed(self.frames):
            for name in frame.required_left():
                queue.append((frame, name))
        self.drain_queue = queue
        self.drain_mode = True
        self._drain_next()

    def _drain_next(self):
        if not self.drain_queue:
            self.drain_mode = False
            self.line_spaces = 0
            self.mode = M_YAML_INDENT
            return
        frame, name = self.drain_queue.pop(0)
        frame.used.add(name)
        field = frame.schema.fields[name]
        prefix = " " * frame.level + name + ":"
        if field.kind == "nested" or field.value_type == "dict":
            sub = field.suboptions if field.kind == "nested" else None
            child = Frame(sub, frame.level + self.profile.indent_step)
            self.frames.append(child)
            if sub is not None:
                extra = [(child, n) for n in child.required_left()]
                self.drain_queue = extra + self.drain_queue
            self._schedule(self._encode(prefix + "\n"), self._drain_next)
            return
        self.value_field = field
        self._schedule(self._encode(prefix + " "), self._enter_value)


# ---------------------------------------------------------------------------
# run loop


@dataclass
class RunResult:
    output: str
    completion: str
    library_ids: list
    retrieved: list
    steps: int
    healed: int
    cache_events: int


def start_session(schemas, profile, vocab, **config):
    """Create a DecodingSession over candidate schemas in ranked order."""
    return DecodingSession(schemas, profile, vocab, **config)


def run_session(session, adapter, prompt_ids, max_steps=100000):
    """Drive a session with an adapter until EOS; returns (steps, events).

    On forced steps the adapter is still consulted (so a subprocess
    generator stays in sync) but its answer is overridden.  A token
    outside the allowed set is healed by substituting the lowest
    allowed id.
    """
    steps = 0
    cache_events = 0
    while not session.done:
        if steps >= max_steps:
            raise GenerationStuck("exceeded %d decoding steps" % max_steps)
        mask = session.next_mask()
        ctx = prompt_ids + session.emitted
        proposed = adapter.choose(ctx, mask)
        if mask.is_forced:
            token = mask.forced[0]
        elif proposed not in mask.allowed:
            session.healed += 1
            token = min(mask.allowed)
            log.warning(
                "generator proposed disallowed token %r; substituting %r",
                proposed,
                token,
            )
        else:
            token = proposed
        session.advance(token)
        for event in session.pop_events():
            cache_events += 1
            notify = getattr(adapter, "on_cache_invalidate", None)
            if notify is not None:
                notify(event.keep_prefix_len)
        steps += 1
    return steps, cache_events


def run_constrained(
    query,
    k,
    index,
    schema_store,
    profile,
    vocab,
    adapter,
    free_arg_mode="literal",
    dedupe_flags=True,
    allow_pipes=True,
    max_free_len=None,
    max_steps=100000,
):
    """Retrieve candidates for a query and decode one constrained output."""
    retrieved = index.retrieve(query, k)
    schemas = []
    for r in retrieved:
        if r.library_id not in schema_store:
            raise UnknownLibrary("retrieved %r has no schema" % r.library_id)
        schemas.append(schema_store.get(r.library_id))
    prompt = profile.format_prompt(query)
    prompt_ids = vocab.encode(prompt)
    session = DecodingSession(
        schemas,
        profile,
        vocab,
        free_arg_mode=free_arg_mode,
        dedupe_flags=dedupe_flags,
        allow_pipes=allow_pipes,
        max_free_len=max_free_len,
        prompt_len=len(prompt_ids),
    )
    steps, cache_events = run_session(session, adapter, prompt_ids, max_steps)
    completion = vocab.decode(session.emitted)
    output = profile.assemble_output(prompt, completion)
    return RunResult(
        output=output,
        completion=completion,
        library_ids=list(session.segments),
        retrieved=retrieved,
        steps=steps,
        healed=session.healed,
        cache_events=cache_events,
    )
