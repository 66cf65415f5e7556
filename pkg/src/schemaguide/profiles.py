"""Target-language profiles: shell pipelines and YAML task documents.

A profile bundles everything language-specific: the trigger substrings
that switch the decoder between states, prompt layout, a forgiving
surface parser, and schema validation over parsed output.  The surface
parsers are deliberately line/token based rather than full grammars, so
arbitrary generated scalars never make a document unreadable.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import ConfigError, EmptyQuery, ParseFailure

BOOL_WORDS = ("true", "false", "yes", "no")
_INT_RE = re.compile(r"^[+-]?\d+$")

TASK_KEYS = {"name"}


@dataclass(frozen=True)
class TriggerRule:
    """A literal substring that, once emitted, changes decoder state."""

    pattern: str
    action: str


@dataclass(frozen=True)
class Violation:
    kind: str
    path: tuple
    message: str

    def to_dict(self):
        return {"kind": self.kind, "path": list(self.path), "message": self.message}


def bash_triggers():
    """Shell trigger rules, highest priority first."""
    return [
        TriggerRule(" --", "select a long flag from the unused flag pool"),
        TriggerRule(" -", "select a flag from the unused flag pool"),
        TriggerRule("|", "restart library selection for the next pipe segment"),
    ]


def yaml_triggers():
    """YAML trigger rules, highest priority first."""
    return [
        TriggerRule("\n", "end the line and count indentation for the next"),
        TriggerRule("  ", "one indentation step toward a deeper nesting level"),
        TriggerRule(":", "end of key; a value or nested block follows"),
    ]


# ---------------------------------------------------------------------------
# bash


class BashProfile:
    name = "bash"
    allow_pipes = True

    def triggers(self):
        return bash_triggers()

    def format_prompt(self, nl):
        nl = nl.strip()
        if not nl:
            raise EmptyQuery("empty natural-language query")
        return nl + "\n"

    def assemble_output(self, prompt, completion):
        return completion.rstrip()

    def parse(self, code):
        """Split a pipeline into per-segment token lists."""
        if not code.strip():
            raise ParseFailure("empty command")
        segments = []
        for seg in code.split("|"):
            tokens = seg.split()
            if not tokens:
                raise ParseFailure("empty pipe segment in %r" % code)
            segments.append(tokens)
        return segments

    def validate(self, code, schema):
        """Check one command (or the matching pipe segment) of a pipeline."""
        try:
            segments = self.parse(code)
        except ParseFailure as exc:
            return [Violation("parse-failure", (), str(exc))]
        util_words = schema.library_id.split()
        match = None
        for tokens in segments:
            if tokens[: len(util_words)] == util_words:
                match = tokens
                break
        if match is None:
            if len(segments) == 1:
                match = segments[0]
            else:
                return [
                    Violation(
                        "wrong-utility",
                        (),
                        "no pipe segment invokes %r" % schema.library_id,
                    )
                ]
        return self.validate_segment(match, schema)

    def validate_segment(self, tokens, schema):
        violations = []
        util_words = schema.library_id.split()
        if tokens[: len(util_words)] != util_words:
            violations.append(
                Violation(
                    "wrong-utility",
                    (tokens[0],),
                    "expected %r, got %r" % (schema.library_id, " ".join(tokens[:2])),
                )
            )
            return violations
        rest = tokens[len(util_words) :]
        seen_flags = set()
        active_dep = None
        keyword_open = False
        for tok in rest:
            if tok.startswith("{"):
                continue  # placeholder-style free argument
            if tok.startswith("-") and len(tok) > 1 and not tok[1].isdigit():
                known = set(schema.flag_names())
                if active_dep is not None:
                    known |= set(active_dep.flags)
                if tok not in known:
                    violations.append(
                        Violation("unknown-field", (tok,), "unknown flag %r" % tok)
                    )
                seen_flags.add(tok)
            elif schema.dependencies and active_dep is None:
                dep = schema.dependencies.get(tok)
                if dep is None:
                    violations.append(
                        Violation(
                            "unknown-field", (tok,), "unknown subcommand %r" % tok
                        )
                    )
                    active_dep = False  # stop keyword checking, rest is free
                else:
                    active_dep = dep
                    keyword_open = bool(dep.keywords)
            elif active_dep and keyword_open:
                if tok not in active_dep.keywords:
                    violations.append(
                        Violation(
                            "unknown-field",
                            (tok,),
                            "%r is not a valid argument here" % tok,
                        )
                    )
                keyword_open = False
            # anything else is a free argument
        for name in schema.required_fields():
            spec = schema.fields[name]
            if spec.kind == "flag" and name not in seen_flags:
                violations.append(
                    Violation("missing-required", (name,), "missing flag %r" % name)
                )
        return violations


# ---------------------------------------------------------------------------
# yaml


@dataclass
class Entry:
    """One parsed ``key: value`` line with its nested children."""

    key: str
    value: str | None
    children: list
    indent: int


class YamlProfile:
    name = "yaml"
    allow_pipes = False
    indent_step = 2

    def __init__(self, prompt_style="array"):
        if prompt_style not in ("array", "dict"):
            raise ConfigError("unknown prompt style %r" % prompt_style)
        self.prompt_style = prompt_style
        self.module_level = 2 if prompt_style == "array" else 0
        self.option_level = self.module_level + self.indent_step

    def triggers(self):
        return yaml_triggers()

    def format_prompt(self, nl):
        nl = nl.strip()
        if not nl:
            raise EmptyQuery("empty natural-language query")
        if self.prompt_style == "array":
            return "- name: %s\n  " % nl
        return "name: %s\n" % nl

    def assemble_output(self, prompt, completion):
        text = prompt + completion
        return text.rstrip() + "\n"

    def parse(self, code):
        """Parse a task document into an Entry tree.

        Line based: every non-blank line must look like ``key:`` or
        ``key: value``; nesting follows leading spaces.  A leading
        ``- `` (array item marker) counts as one indent step.
        """
        root = Entry(key="", value=None, children=[], indent=-1)
        stack = [root]
        for lineno, raw in enumerate(code.splitlines(), 1):
            if not raw.strip():
                continue
            indent = len(raw) - len(raw.lstrip(" "))
            content = raw.strip()
            if content.startswith("- "):
                content = content[2:].lstrip()
                indent += self.indent_step
            if ":" not in content:
                raise ParseFailure("line %d: no key separator in %r" % (lineno, raw))
            key, _, rest = content.partition(":")
            key = key.strip()
            if not key:
                raise ParseFailure("line %d: empty key in %r" % (lineno, raw))
            value = rest.strip()
            entry = Entry(key=key, value=value if value else None, children=[], indent=indent)
            while stack and stack[-1].indent >= indent:
                stack.pop()
            if not stack:
                raise ParseFailure("line %d: bad indentation in %r" % (lineno, raw))
            stack[-1].children.append(entry)
            stack.append(entry)
        if not root.children:
            raise ParseFailure("document has no entries")
        return root.children

    def module_entry(self, entries):
        """First top-level entry that is not a task keyword."""
        for e in entries:
            if e.key not in TASK_KEYS:
                return e
        return None

    def validate(self, code, schema):
        try:
            entries = self.parse(code)
        except ParseFailure as exc:
            return [Violation("parse-failure", (), str(exc))]
        violations = []
        module = self.module_entry(entries)
        if module is None:
            violations.append(Violation("missing-module", (), "no module key"))
            return violations
        for e in entries:
            if e.key not in TASK_KEYS and e is not module:
                violations.append(
                    Violation(
                        "unknown-field", (e.key,), "unexpected top-level key %r" % e.key
                    )
                )
        if module.key != schema.library_id:
            violations.append(
                Violation(
                    "wrong-module",
                    (module.key,),
                    "expected %r, got %r" % (schema.library_id, module.key),
                )
            )
            return violations
        if module.value:
            violations.append(
                Violation(
                    "wrong-nesting", (module.key,), "module key has a scalar value"
                )
            )
        self._walk(module.children, schema, (module.key,), violations)
        return violations

    def _walk(self, entries, schema, path, violations):
        seen = set()
        for e in entries:
            epath = path + (e.key,)
            if e.key in seen:
                violations.append(
                    Violation("duplicate-key", epath, "duplicate key %r" % e.key)
                )
                continue
            seen.add(e.key)
            spec = schema.fields.get(e.key) if schema is not None else None
            if schema is not None and spec is None:
                violations.append(
                    Violation("unknown-field", epath, "unknown field %r" % e.key)
                )
                continue
            if spec is None:
                # free dict: only duplicate keys are checkable
                self._walk(e.children, None, epath, violations)
                continue
            if spec.kind == "nested":
                if e.value:
                    violations.append(
                        Violation(
                            "wrong-nesting", epath, "%r needs nested keys" % e.key
                        )
                    )
                else:
                    self._walk(e.children, spec.suboptions, epath, violations)
                continue
            if spec.value_type == "dict":
                if e.value:
                    violations.append(
                        Violation("wrong-nesting", epath, "%r takes a mapping" % e.key)
                    )
                else:
                    self._walk(e.children, None, epath, violations)
                continue
            if e.children:
                violations.append(
                    Violation(
                        "wrong-nesting", epath, "%r takes a scalar value" % e.key
                    )
                )
                continue
            self._check_value(spec, e.value or "", epath, violations)
        if schema is not None:
            for name in schema.required_fields():
                if name not in seen:
                    violations.append(
                        Violation(
                            "missing-required",
                            path + (name,),
                            "missing required field %r" % name,
                        )
                    )

    def _check_value(self, spec, value, path, violations):
        if spec.kind == "keyword-choice":
            if value not in spec.valid_values:
                violations.append(
                    Violation(
                        "invalid-value",
                        path,
                        "%r not in %s" % (value, list(spec.valid_values)),
                    )
                )
        elif spec.value_type == "int":
            if not _INT_RE.match(value):
                violations.append(
                    Violation("invalid-value", path, "%r is not an integer" % value)
                )
        elif spec.value_type == "bool":
            if value.lower() not in BOOL_WORDS:
                violations.append(
                    Violation("invalid-value", path, "%r is not a boolean" % value)
                )


def get_profile(name, prompt_style="array"):
    if name == "bash":
        return BashProfile()
    if name == "yaml":
        return YamlProfile(prompt_style=prompt_style)
    raise ConfigError("unknown profile %r" % name)


def validate(code, schema, profile):
    """Validate generated code against a schema under a profile."""
    return profile.validate(code, schema)
