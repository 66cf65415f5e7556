"""Evaluation metrics.

Surface metrics (exact match, token F1) treat code as whitespace
tokens.  Command accuracy compares invoked utilities, aware that some
utility names span two words.  The YAML metrics compare parsed task
structure: module identity, schema validity, and recall of gold
key-path/value pairs, which is order agnostic by construction.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from .errors import LengthMismatch, ParseFailure
from .profiles import get_profile


def normalize_ws(text):
    return " ".join(text.split())


def exact_match(pred, gold):
    """Whitespace-normalized string equality."""
    return normalize_ws(pred) == normalize_ws(gold)


def token_f1(pred, gold):
    """Multiset F1 over whitespace tokens."""
    p = Counter(pred.split())
    g = Counter(gold.split())
    if not p and not g:
        return 1.0
    if not p or not g:
        return 0.0
    overlap = sum((p & g).values())
    if overlap == 0:
        return 0.0
    precision = overlap / sum(p.values())
    recall = overlap / sum(g.values())
    return 2 * precision * recall / (precision + recall)


def extract_utility(code, utilities=None):
    """The utility a command invokes.

    With a known-utility list, the longest multi-word match against the
    leading tokens wins (``git mv`` beats ``git``); otherwise the first
    token is taken.  Only the first pipe segment is considered.
    """
    first = code.split("|")[0].split()
    if not first:
        return ""
    if utilities:
        best = ""
        for util in utilities:
            words = util.split()
            if first[: len(words)] == words and len(words) > len(best.split()):
                best = util
        if best:
            return best
    return first[0]


def cmd_acc(pred, gold, utilities=None):
    """True when both commands invoke the same utility."""
    return extract_utility(pred, utilities) == extract_utility(gold, utilities)


def _parse_yaml(code, profile):
    try:
        return profile.parse(code)
    except ParseFailure:
        return None


def module_of(code, profile):
    entries = _parse_yaml(code, profile)
    if entries is None:
        return None
    entry = profile.module_entry(entries)
    return entry.key if entry is not None else None


def module_match(pred, gold, profile=None):
    """Both task documents name the same module."""
    profile = profile or get_profile("yaml")
    pm = module_of(pred, profile)
    gm = module_of(gold, profile)
    return pm is not None and pm == gm


def schema_correct(pred, schema, profile=None):
    """The document validates with zero violations."""
    profile = profile or get_profile("yaml")
    return not profile.validate(pred, schema)


def leaf_pairs(code, profile=None):
    """Leaf (key-path, value) pairs of a task document.

    Paths are rooted at the module key; the task ``name`` line is
    excluded; values compare stripped, with empty-valued leaves (like a
    bare module key) keeping an empty string.  Returns None when the
    document does not parse.
    """
    profile = profile or get_profile("yaml")
    entries = _parse_yaml(code, profile)
    if entries is None:
        return None
    pairs = set()

    def collect(entry, prefix):
        path = prefix + (entry.key,)
        if not entry.children:
            pairs.add((path, (entry.value or "").strip()))
            return
        for child in entry.children:
            collect(child, path)

    for entry in entries:
        if entry.key in ("name",):
            continue
        collect(entry, ())
    return pairs


def ansible_aware(pred, gold, profile=None):
    """Recall of the gold document's leaf pairs in the prediction."""
    profile = profile or get_profile("yaml")
    gold_pairs = leaf_pairs(gold, profile)
    if not gold_pairs:
        return 0.0
    pred_pairs = leaf_pairs(pred, profile)
    if pred_pairs is None:
        return 0.0
    return len(gold_pairs & pred_pairs) / len(gold_pairs)


@dataclass
class EvalReport:
    """Aggregate percentages; None marks a metric the profile lacks."""

    profile: str
    count: int
    exact_match_pct: float
    token_f1_pct: float
    cmd_acc_pct: float | None = None
    module_match_pct: float | None = None
    schema_correct_pct: float | None = None
    ansible_aware_pct: float | None = None

    def to_dict(self):
        out = {"profile": self.profile, "count": self.count}
        for key in (
            "exact_match_pct",
            "token_f1_pct",
            "cmd_acc_pct",
            "module_match_pct",
            "schema_correct_pct",
            "ansible_aware_pct",
        ):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        return out


def evaluate(preds, golds, profile, schemas=None, gold_libs=None, utilities=None):
    """Score aligned prediction/gold lists under a profile.

    ``schemas`` (a SchemaStore) plus ``gold_libs`` enable
    schema_correct for YAML; ``utilities`` (or the schema store's ids)
    sharpen utility extraction for bash.
    """
    if len(preds) != len(golds):
        raise LengthMismatch("%d preds vs %d golds" % (len(preds), len(golds)))
    if gold_libs is not None and len(gold_libs) != len(golds):
        raise LengthMismatch("gold_libs misaligned with golds")
    n = len(preds)
    if n == 0:
        raise LengthMismatch("nothing to evaluate")
    em = 100.0 * sum(exact_match(p, g) for p, g in zip(preds, golds)) / n
    f1 = 100.0 * sum(token_f1(p, g) for p, g in zip(preds, golds)) / n
    if profile.name == "bash":
        utils = utilities
        if utils is None and schemas is not None:
            utils = schemas.ids()
        acc = 100.0 * sum(cmd_acc(p, g, utils) for p, g in zip(preds, golds)) / n
        return EvalReport(
            profile="bash",
            count=n,
            exact_match_pct=em,
            token_f1_pct=f1,
            cmd_acc_pct=acc,
        )
    mm = 100.0 * sum(module_match(p, g, profile) for p, g in zip(preds, golds)) / n
    aw = 100.0 * sum(ansible_aware(p, g, profile) for p, g in zip(preds, golds)) / n
    sc = None
    if schemas is not None and gold_libs is not None:
        good = 0
        for pred, lib in zip(preds, gold_libs):
            good += schema_correct(pred, schemas.get(lib), profile)
        sc = 100.0 * good / n
    return EvalReport(
        profile="yaml",
        count=n,
        exact_match_pct=em,
        token_f1_pct=f1,
        module_match_pct=mm,
        schema_correct_pct=sc,
        ansible_aware_pct=aw,
    )
