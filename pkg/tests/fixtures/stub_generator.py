"""Line-protocol generator used by stdio tests.

Usage: python3 stub_generator.py VOCAB_FILE TARGET_TEXT

Reads one JSON request per stdin line ({"ctx", "allowed", "forced"})
and answers {"token": id}, steering toward TARGET_TEXT: among the
allowed ids it picks the token matching the longest upcoming chunk of
the target, preferring EOS once the target is exhausted.  Cache
invalidation events are acknowledged silently.  Progress through the
target is recomputed from the request context each step, so truncated
context just works.
"""

import json
import sys


def load_vocab(path):
    tokens = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            tokens.append(
                line.replace("\\n", "\n").replace("\\t", "\t").replace("\\\\", "\\")
            )
    return tokens


def main():
    tokens = load_vocab(sys.argv[1])
    target = sys.argv[2]
    eos_id = len(tokens) - 1  # last line is the EOS marker by convention

    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        msg = json.loads(line)
        if msg.get("event"):
            continue
        forced = msg.get("forced")
        if forced:
            print(json.dumps({"token": forced[0]}), flush=True)
            continue
        ctx = msg.get("ctx") or []
        decoded = "".join(tokens[i] for i in ctx if 0 <= i < len(tokens))
        # longest suffix of the context that is a prefix of the target
        pos = 0
        for n in range(min(len(decoded), len(target)), 0, -1):
            if decoded.endswith(target[:n]):
                pos = n
                break
        remaining = target[pos:]
        allowed = msg.get("allowed")
        if allowed is None:  # unconstrained step: every id is fair game
            allowed = range(len(tokens))
        best = None
        best_len = -1
        for tid in allowed:
            if tid == eos_id:
                continue
            text = tokens[tid] if 0 <= tid < len(tokens) else ""
            if text and remaining.startswith(text) and len(text) > best_len:
                best = tid
                best_len = len(text)
        if best is None:
            if not remaining and eos_id in allowed:
                best = eos_id
            elif allowed:
                best = min(allowed)
            else:
                best = eos_id
        print(json.dumps({"token": best}), flush=True)


if __name__ == "__main__":
    main()
