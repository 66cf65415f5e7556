"""Generator adapters.

The engine only needs one call per step: given the context token ids
and the current mask, pick a token.  Adapters wrap whatever actually
produces tokens: deterministic mocks for tests, a scripted replay, or
an external process speaking a JSON-lines protocol on stdio.

Stdio protocol, one JSON object per line:

    engine -> generator: {"ctx": [ids], "allowed": [ids] | null,
                          "forced": [ids] | null}
    generator -> engine: {"token": id}
    engine -> generator: {"event": "cache_invalidate",
                          "keep_prefix_len": n}   (no reply)

On forced steps the generator's reply is overridden by the engine; a
reply outside the allowed set is substituted with the lowest allowed id
and logged, so a misbehaving generator degrades instead of aborting.
"""

from __future__ import annotations

import json
import logging
import random
import shlex
import subprocess

from .errors import ConfigError, GeneratorFailure

log = logging.getLogger(__name__)


def _default_preference(vocab):
    """Termination-friendly tie-break order for the greedy mock."""
    ids = [vocab.eos_id]
    for tok in ("\n", ":", " "):
        if tok in vocab.ids:
            ids.append(vocab.ids[tok])
    return tuple(ids)


class MockGreedy:
    """Deterministic mock: preferred tokens first, else the lowest id."""

    def __init__(self, vocab, preference=None):
        self.vocab = vocab
        self.preference = (
            tuple(preference) if preference is not None else _default_preference(vocab)
        )

    def choose(self, ctx, mask):
        if mask is None:
            return self.vocab.eos_id
        if mask.is_forced:
            return mask.forced[0]
        for tid in self.preference:
            if tid in mask.allowed:
                return tid
        return min(mask.allowed)


class MockRandom:
    """Seeded mock sampling uniformly from the allowed set."""

    def __init__(self, vocab, seed=0):
        self.vocab = vocab
        self.rng = random.Random(seed)

    def choose(self, ctx, mask):
        if mask is None:
            return self.rng.randrange(len(self.vocab))
        if mask.is_forced:
            return mask.forced[0]
        return self.rng.choice(sorted(mask.allowed))


class Scripted:
    """Replays a fixed token list on free steps only.

    Forced steps echo the forced token without consuming the script;
    once the script runs out, a greedy mock takes over.
    """

    def __init__(self, vocab, tokens):
        self.vocab = vocab
        self.tokens = list(tokens)
        self.pos = 0
        self.fallback = MockGreedy(vocab)

    def choose(self, ctx, mask):
        if mask is not None and mask.is_forced:
            return mask.forced[0]
        if self.pos < len(self.tokens):
            tok = self.tokens[self.pos]
            self.pos += 1
            return tok
        return self.fallback.choose(ctx, mask)


class StdioGenerator:
    """Adapter around an external process speaking the line protocol."""

    def __init__(self, command):
        self.command = command
        try:
            self.proc = subprocess.Popen(
                shlex.split(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise GeneratorFailure("cannot start %r: %s" % (command, exc)) from None

    def _send(self, obj):
        if self.proc.poll() is not None:
            raise GeneratorFailure("generator process exited early")
        try:
            self.proc.stdin.write(json.dumps(obj) + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise GeneratorFailure("generator pipe closed: %s" % exc) from None

    def choose(self, ctx, mask):
        if mask is None:
            allowed = None
            forced = None
        elif mask.is_forced:
            allowed = None
            forced = list(mask.forced)
        else:
            allowed = sorted(mask.allowed)
            forced = None
        self._send({"ctx": list(ctx), "allowed": allowed, "forced": forced})
        line = self.proc.stdout.readline()
        if not line:
            raise GeneratorFailure("generator closed stdout")
        try:
            reply = json.loads(line)
            token = reply["token"]
        except (json.JSONDecodeError, KeyError, TypeError):
            log.warning("unparseable generator reply %r", line.strip())
            return -1  # out of any mask; the run loop substitutes
        if not isinstance(token, int):
            log.warning("non-integer token %r from generator", token)
            return -1
        return token

    def on_cache_invalidate(self, keep_prefix_len):
        self._send({"event": "cache_invalidate", "keep_prefix_len": keep_prefix_len})

    def close(self):
        if self.proc.poll() is None:
            self.proc.terminate()
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def parse_generator_spec(spec, vocab, seed=None):
    """Build an adapter from a CLI spec string.

    Forms: ``mock:greedy``, ``mock:random`` / ``mock:random:SEED``,
    ``stdio:COMMAND ...``.
    """
    if spec == "mock:greedy":
        return MockGreedy(vocab)
    if spec == "mock:random":
        return MockRandom(vocab, seed=0 if seed is None else seed)
    if spec.startswith("mock:random:"):
        tail = spec[len("mock:random:") :]
        try:
            return MockRandom(vocab, seed=int(tail))
        except ValueError:
            raise ConfigError("bad mock:random seed %r" % tail) from None
    if spec.startswith("stdio:"):
        command = spec[len("stdio:") :].strip()
        if not command:
            raise ConfigError("stdio generator needs a command")
        return StdioGenerator(command)
    raise ConfigError("unknown generator spec %r" % spec)


def run_unconstrained(adapter, prompt_ids, vocab, max_tokens=512):
    """Decode without masks until EOS; returns the generated text."""
    out = []
    ctx = list(prompt_ids)
    for _ in range(max_tokens):
        token = adapter.choose(ctx, None)
        if token == vocab.eos_id:
            break
        if not 0 <= token < len(vocab):
            break
        out.append(token)
        ctx.append(token)
    return vocab.decode(out)
