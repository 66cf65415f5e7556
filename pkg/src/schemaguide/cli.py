"""Command-line interface.

Subcommands: index, retrieve, generate, validate, check-template, eval.
Every subcommand accepts ``--config <path>``, a JSON object whose keys
are the flag names with dashes replaced by underscores; explicit flags
override config values.  Exit codes: 0 success, 1 domain error (a JSON
error object goes to stderr), 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .corpus import load_corpus
from .engine import run_constrained
from .errors import ConfigError, SchemaGuideError
from .generator import parse_generator_spec
from .metrics import evaluate, token_f1
from .profiles import get_profile
from .retrieval import BM25Index, build_index, hits_at_k
from .schema import load_bash_schema, load_ansible_schema, load_schema_dir
from .template import parse_template
from .vocab import DEFAULT_EOS, Vocabulary, reference_vocabulary

import os


def _read_text(path):
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


def _read_jsonl(path):
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ConfigError("%s line %d: %s" % (path, line_no, exc))
            if not isinstance(row, dict) or "code" not in row:
                raise ConfigError("%s line %d: expected an object with 'code'" % (path, line_no))
            rows.append(row)
    if not rows:
        raise ConfigError("%s holds no rows" % path)
    return rows


def _load_vocab(args):
    if getattr(args, "vocab", None):
        return Vocabulary.from_file(args.vocab, eos_token=args.eos_token)
    return reference_vocabulary(eos_token=args.eos_token)


def _part_dict(part):
    kind = type(part).__name__.lower()
    out = {"kind": kind}
    if kind == "static":
        out["text"] = part.text
    elif kind == "choice":
        out.update(
            name=part.name,
            alternatives=list(part.alternatives),
            open_ended=part.open_ended,
            style=part.style,
        )
    elif kind == "optionalslot":
        out.update(name=part.name, pool_kind=part.pool_kind, pool=list(part.pool))
    elif kind == "freearg":
        out.update(placeholder=part.placeholder, source=part.source)
    elif kind == "repeat":
        out["inner"] = _part_dict(part.inner)
    return out


# ---------------------------------------------------------------------------
# subcommand bodies


def _cmd_index(args):
    store = load_corpus(args.corpus)
    index = build_index(store, max_description_words=args.max_words)
    index.save(args.out)
    payload = {
        "documents": len(index.doc_ids),
        "terms": len(index.postings),
        "out": args.out,
    }
    if args.json:
        print(json.dumps(payload))
    else:
        print(
            "indexed %d documents (%d terms) -> %s"
            % (payload["documents"], payload["terms"], args.out)
        )
    return 0


def _cmd_retrieve(args):
    index = BM25Index.load(args.index)
    results = index.retrieve(args.query, args.k)
    if args.json:
        print(
            json.dumps(
                [
                    {"rank": r.rank, "library_id": r.library_id, "score": r.score}
                    for r in results
                ]
            )
        )
    else:
        for r in results:
            print("%d\t%.6f\t%s" % (r.rank, r.score, r.library_id))
    return 0


def _cmd_generate(args):
    vocab = _load_vocab(args)
    index = BM25Index.load(args.index)
    profile = get_profile(args.profile, prompt_style=args.prompt_style)
    store = load_schema_dir(args.schemas, args.profile)
    adapter = parse_generator_spec(args.generator, vocab, seed=args.seed)
    try:
        result = run_constrained(
            args.query,
            args.k,
            index,
            store,
            profile,
            vocab,
            adapter,
            free_arg_mode=args.free_arg,
            max_free_len=args.max_free_len,
            max_steps=args.max_steps,
        )
    finally:
        close = getattr(adapter, "close", None)
        if close is not None:
            close()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(result.output)
            if not result.output.endswith("\n"):
                fh.write("\n")
    if args.json:
        print(
            json.dumps(
                {
                    "query": args.query,
                    "output": result.output,
                    "completion": result.completion,
                    "libraries": result.library_ids,
                    "retrieved": [
                        {"rank": r.rank, "library_id": r.library_id, "score": r.score}
                        for r in result.retrieved
                    ],
                    "steps": result.steps,
                    "healed": result.healed,
                    "cache_events": result.cache_events,
                }
            )
        )
    else:
        print(result.output)
    return 0


def _load_single_schema(path, profile_name):
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    stem = os.path.splitext(os.path.basename(path))[0]
    if profile_name == "bash":
        return load_bash_schema(obj, library_id=obj.get("library_id", stem))
    return load_ansible_schema(obj, library_id=obj.get("library_id", stem))


def _cmd_validate(args):
    schema = _load_single_schema(args.schema, args.profile)
    profile = get_profile(args.profile, prompt_style=args.prompt_style)
    code = _read_text(args.codefile)
    violations = profile.validate(code, schema)
    if args.json:
        print(json.dumps([v.to_dict() for v in violations]))
    else:
        for v in violations:
            path = "/".join(v.path) or "-"
            print("%s\t%s\t%s" % (v.kind, path, v.message))
        if not violations:
            print("ok")
    if violations:
        print(
            json.dumps({"error": "ValidationFailed", "violations": len(violations)}),
            file=sys.stderr,
        )
        return 1
    return 0


def _cmd_check_template(args):
    text = _read_text(args.file)
    source = None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError:
        source = text.strip()
    else:
        if isinstance(obj, dict) and "template" in obj:
            source = obj["template"]
        elif isinstance(obj, str):
            source = obj
        else:
            raise ConfigError("%s: no 'template' key" % args.file)
    template = parse_template(source)
    parts = [_part_dict(p) for p in template.parts]
    if args.json:
        print(json.dumps({"source": template.source, "parts": parts}))
    else:
        print(template.source)
        for part in parts:
            detail = {k: v for k, v in part.items() if k != "kind"}
            print("  %-12s %s" % (part["kind"], json.dumps(detail)))
    return 0


def _cmd_eval(args):
    pred_rows = _read_jsonl(args.pred)
    gold_rows = _read_jsonl(args.gold)
    profile = get_profile(args.profile, prompt_style=args.prompt_style)
    preds = [r["code"] for r in pred_rows]
    golds = [r["code"] for r in gold_rows]
    gold_libs = None
    if all("library_id" in r for r in gold_rows):
        gold_libs = [r["library_id"] for r in gold_rows]
    schemas = None
    if args.schemas:
        schemas = load_schema_dir(args.schemas, args.profile)
    report = evaluate(
        preds,
        golds,
        profile,
        schemas=schemas,
        gold_libs=gold_libs if schemas is not None else None,
    )
    payload = report.to_dict()
    if args.index:
        if gold_libs is None:
            raise ConfigError("hits@k needs library_id on every gold row")
        index = BM25Index.load(args.index)
        ks = (1, 3, 5)
        results = [
            index.retrieve(row.get("query", row["code"]), max(ks))
            for row in gold_rows
        ]
        payload["hits_pct"] = {
            str(k): v for k, v in hits_at_k(results, gold_libs, ks).items()
        }
    if args.figures:
        from .figures import render_eval_figures

        scores = [token_f1(p, g) for p, g in zip(preds, golds)]
        payload["figures"] = render_eval_figures(report, scores, args.figures)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
    if args.json:
        print(json.dumps(payload))
    else:
        for key, value in payload.items():
            if isinstance(value, float):
                print("%-20s %.2f" % (key, value))
            else:
                print("%-20s %s" % (key, value))
    return 0


# ---------------------------------------------------------------------------
# parser assembly


def _add_common(sub):
    sub.add_argument("--config", help="JSON file of flag defaults")
    sub.add_argument("--json", action="store_true", help="machine-readable stdout")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="schemaguide",
        description="Library detection and schema-constrained code generation.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="cmd", metavar="SUBCOMMAND")
    registry = {}

    sub = subs.add_parser("index", help="build a BM25 index from a corpus directory")
    sub.add_argument("--corpus", help="directory of per-library JSON docs")
    sub.add_argument("--out", help="index file to write")
    sub.add_argument("--max-words", type=int, default=30, help="description word cap")
    _add_common(sub)
    sub.set_defaults(func=_cmd_index, _required=("corpus", "out"))
    registry["index"] = sub

    sub = subs.add_parser("retrieve", help="rank libraries for a query")
    sub.add_argument("--index", help="index file from the index subcommand")
    sub.add_argument("--query", help="natural-language request")
    sub.add_argument("-k", type=int, default=5, help="results to return")
    _add_common(sub)
    sub.set_defaults(func=_cmd_retrieve, _required=("index", "query"))
    registry["retrieve"] = sub

    sub = subs.add_parser("generate", help="constrained generation for a query")
    sub.add_argument("--index", help="index file")
    sub.add_argument("--schemas", help="schema directory")
    sub.add_argument("--profile", choices=("bash", "yaml"))
    sub.add_argument("-k", type=int, default=5, help="candidate libraries")
    sub.add_argument(
        "--generator",
        default="mock:greedy",
        help="mock:greedy | mock:random[:SEED] | stdio:CMD",
    )
    sub.add_argument("--query", help="natural-language request")
    sub.add_argument("--vocab", help="vocabulary file (default: built-in ASCII)")
    sub.add_argument("--eos-token", default=DEFAULT_EOS)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--prompt-style", choices=("array", "dict"), default="array")
    sub.add_argument("--free-arg", choices=("model", "literal"), default="model")
    sub.add_argument("--max-free-len", type=int, default=None)
    sub.add_argument("--max-steps", type=int, default=100000)
    sub.add_argument("--out", help="also write the output to this file")
    _add_common(sub)
    sub.set_defaults(
        func=_cmd_generate, _required=("index", "schemas", "profile", "query")
    )
    registry["generate"] = sub

    sub = subs.add_parser("validate", help="validate code against one schema")
    sub.add_argument("--schema", help="schema JSON file")
    sub.add_argument("--profile", choices=("bash", "yaml"))
    sub.add_argument("--prompt-style", choices=("array", "dict"), default="array")
    sub.add_argument("codefile", nargs="?", help="file holding the code to check")
    _add_common(sub)
    sub.set_defaults(func=_cmd_validate, _required=("schema", "profile", "codefile"))
    registry["validate"] = sub

    sub = subs.add_parser("check-template", help="parse a template and print its AST")
    sub.add_argument("--file", help="bash schema JSON or raw template text")
    _add_common(sub)
    sub.set_defaults(func=_cmd_check_template, _required=("file",))
    registry["check-template"] = sub

    sub = subs.add_parser("eval", help="score predictions against gold")
    sub.add_argument("--pred", help="predictions JSONL")
    sub.add_argument("--gold", help="gold JSONL")
    sub.add_argument("--profile", choices=("bash", "yaml"))
    sub.add_argument("--prompt-style", choices=("array", "dict"), default="array")
    sub.add_argument("--schemas", help="schema directory (enables schema_correct)")
    sub.add_argument("--index", help="index file (enables hits@k over gold queries)")
    sub.add_argument("--out", help="write the report JSON here")
    sub.add_argument("--figures", help="directory for rendered charts")
    _add_common(sub)
    sub.set_defaults(func=_cmd_eval, _required=("pred", "gold", "profile"))
    registry["eval"] = sub

    return parser, registry


def _apply_config(parser, registry, args, argv):
    """Re-parse with config-file values as defaults; flags still win."""
    path = getattr(args, "config", None)
    if not path:
        return args
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError("config %s: %s" % (path, exc))
    if not isinstance(cfg, dict):
        raise ConfigError("config %s: expected a JSON object" % path)
    sub = registry[args.cmd]
    valid = {a.dest for a in sub._actions}
    unknown = sorted(set(cfg) - valid)
    if unknown:
        raise ConfigError("config %s: unknown keys %s" % (path, ", ".join(unknown)))
    sub.set_defaults(**cfg)
    return parser.parse_args(argv)


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, registry = build_parser()
    args = parser.parse_args(argv)
    if args.cmd is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        args = _apply_config(parser, registry, args, argv)
        missing = [
            name
            for name in getattr(args, "_required", ())
            if getattr(args, name, None) in (None, "")
        ]
        if missing:
            sub = registry[args.cmd]
            sub.print_usage(sys.stderr)
            print(
                "%s: missing required: %s" % (args.cmd, ", ".join(missing)),
                file=sys.stderr,
            )
            return 2
        return args.func(args)
    except SchemaGuideError as exc:
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 1
    except OSError as exc:
        print(
            json.dumps({"error": "OSError", "message": str(exc)}),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
