"""Shared driving utilities for engine-level tests."""

from schemaguide.engine import DecodingSession, run_session
from schemaguide.generator import Scripted


def ids(vocab, tokens):
    return [vocab.token_to_id(t) for t in tokens]


def run_scripted(schemas, profile, vocab, script, query="do the thing", **config):
    """Drive a session with a token script; returns (session, output, events).

    The script supplies tokens at non-forced steps only; the test fails
    indirectly if the engine must heal (session.healed goes nonzero).
    """
    prompt = profile.format_prompt(query)
    prompt_ids = vocab.encode(prompt)
    session = DecodingSession(
        schemas, profile, vocab, prompt_len=len(prompt_ids), **config
    )
    adapter = Scripted(vocab, ids(vocab, script))
    steps, events = run_session(session, adapter, prompt_ids)
    output = profile.assemble_output(prompt, vocab.decode(session.emitted))
    return session, output, events
