"""Structured library schemas.

A schema records what a library accepts: flags and subcommands for a
shell utility, typed option fields (possibly nested) for a YAML module.
Schemas are pure data; the decoding engine and the validator both read
from them.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from .errors import MalformedSchema, UnknownLibrary

BASH_VALUE_TYPES = ()
YAML_VALUE_TYPES = ("str", "int", "bool", "path", "list", "dict", "raw", "float")


@dataclass(frozen=True)
class FieldSpec:
    """One named thing a library accepts.

    kind is one of:
      flag            a dashed option (bash)
      keyword-choice  value drawn from a fixed keyword list
      free            unconstrained value of some declared type
      nested          dict value described by a sub-schema
    """

    name: str
    kind: str
    value_type: str | None = None
    required: bool = False
    valid_values: tuple = ()
    suboptions: "StructuredSchema | None" = None


@dataclass(frozen=True)
class Dependency:
    """What becomes valid after a subcommand keyword is chosen."""

    keywords: tuple = ()
    flags: tuple = ()


@dataclass
class StructuredSchema:
    library_id: str
    profile: str
    fields: dict = field(default_factory=dict)
    template: str | None = None
    dependencies: dict = field(default_factory=dict)

    def get_field(self, name):
        return self.fields.get(name)

    def required_fields(self):
        """Required field names in declaration order."""
        return [f.name for f in self.fields.values() if f.required]

    def flag_names(self):
        return [f.name for f in self.fields.values() if f.kind == "flag"]


def load_bash_schema(obj, library_id=None):
    """Build a shell-utility schema from its JSON description.

    Expected keys: ``template`` (synopsis string), ``flags`` (list of
    dashed names), ``subcommands`` (name -> {"flags": [...], "args":
    [...]}) and optional ``required`` (flag names that must appear).
    """
    if not isinstance(obj, dict):
        raise MalformedSchema("bash schema must be an object")
    library_id = obj.get("library_id", library_id)
    if not library_id:
        raise MalformedSchema("bash schema needs a library_id")
    template = obj.get("template")
    if not isinstance(template, str) or not template.strip():
        raise MalformedSchema("%s: bash schema needs a template string" % library_id)
    required = obj.get("required", [])
    if not isinstance(required, list):
        raise MalformedSchema("%s: required must be a list" % library_id)
    schema = StructuredSchema(library_id=library_id, profile="bash", template=template)

    flags = obj.get("flags", [])
    if not isinstance(flags, list):
        raise MalformedSchema("%s: flags must be a list" % library_id)
    for name in flags:
        if not isinstance(name, str) or not name.startswith("-"):
            raise MalformedSchema("%s: bad flag %r" % (library_id, name))
        schema.fields[name] = FieldSpec(
            name=name, kind="flag", required=name in required
        )

    subcommands = obj.get("subcommands", {})
    if not isinstance(subcommands, dict):
        raise MalformedSchema("%s: subcommands must be an object" % library_id)
    all_args = []
    for name, dep in subcommands.items():
        if not isinstance(dep, dict):
            raise MalformedSchema("%s: subcommand %r must be an object" % (library_id, name))
        keywords = tuple(dep.get("args", []))
        dep_flags = tuple(dep.get("flags", []))
        schema.dependencies[name] = Dependency(keywords=keywords, flags=dep_flags)
        for kw in keywords:
            if kw not in all_args:
                all_args.append(kw)
    if subcommands:
        schema.fields["command"] = FieldSpec(
            name="command", kind="keyword-choice", valid_values=tuple(subcommands)
        )
    if all_args:
        schema.fields["subcommand"] = FieldSpec(
            name="subcommand", kind="keyword-choice", valid_values=tuple(all_args)
        )

    for name in required:
        if name not in schema.fields:
            raise MalformedSchema("%s: required %r is not declared" % (library_id, name))
    return schema


def load_ansible_schema(obj, library_id=None):
    """Build a YAML-module schema from galaxy-style option docs.

    Each option may carry ``type``, ``required``, ``choices`` and
    ``suboptions``; suboptions recurse into a nested schema.
    """
    if not isinstance(obj, dict):
        raise MalformedSchema("yaml schema must be an object")
    library_id = obj.get("library_id", library_id)
    if not library_id:
        raise MalformedSchema("yaml schema needs a library_id")
    options = obj.get("options", {})
    if not isinstance(options, dict):
        raise MalformedSchema("%s: options must be an object" % library_id)
    schema = StructuredSchema(library_id=library_id, profile="yaml")
    for name, opt in options.items():
        if not isinstance(opt, dict):
            raise MalformedSchema("%s: option %r must be an object" % (library_id, name))
        value_type = opt.get("type", "str")
        if value_type not in YAML_VALUE_TYPES:
            raise MalformedSchema(
                "%s: option %r has unknown type %r" % (library_id, name, value_type)
            )
        required = bool(opt.get("required", False))
        choices = opt.get("choices")
        subopts = opt.get("suboptions")
        if subopts is not None:
            if value_type != "dict":
                raise MalformedSchema(
                    "%s: option %r has suboptions but type %r"
                    % (library_id, name, value_type)
                )
            nested = load_ansible_schema(
                {"options": subopts}, library_id="%s.%s" % (library_id, name)
            )
            schema.fields[name] = FieldSpec(
                name=name,
                kind="nested",
                value_type="dict",
                required=required,
                suboptions=nested,
            )
        elif choices:
            if not isinstance(choices, list) or not all(
                isinstance(c, str) and c for c in choices
            ):
                raise MalformedSchema("%s: option %r has bad choices" % (library_id, name))
            schema.fields[name] = FieldSpec(
                name=name,
                kind="keyword-choice",
                value_type=value_type,
                required=required,
                valid_values=tuple(choices),
            )
        else:
            schema.fields[name] = FieldSpec(
                name=name, kind="free", value_type=value_type, required=required
            )
    return schema


class SchemaStore:
    """Schemas for one profile, keyed by library id."""

    def __init__(self, profile, schemas):
        self.profile = profile
        self.by_id = dict(schemas)

    def __len__(self):
        return len(self.by_id)

    def __contains__(self, library_id):
        return library_id in self.by_id

    def ids(self):
        return sorted(self.by_id)

    def get(self, library_id):
        try:
            return self.by_id[library_id]
        except KeyError:
            raise UnknownLibrary("no schema for %r" % library_id) from None


def load_schema_dir(path, profile):
    """Load every ``*.json`` schema file under ``path``."""
    if profile not in ("bash", "yaml"):
        raise MalformedSchema("unknown profile %r" % profile)
    if not os.path.isdir(path):
        raise MalformedSchema("schema directory %r does not exist" % path)
    loader = load_bash_schema if profile == "bash" else load_ansible_schema
    schemas = {}
    for name in sorted(os.listdir(path)):
        if not name.endswith(".json"):
            continue
        full = os.path.join(path, name)
        with open(full, "r", encoding="utf-8") as fh:
            try:
                obj = json.load(fh)
            except json.JSONDecodeError as exc:
                raise MalformedSchema("%s: %s" % (full, exc)) from None
        fallback = os.path.splitext(name)[0]
        schema = loader(obj, library_id=obj.get("library_id", fallback))
        if schema.library_id in schemas:
            raise MalformedSchema("duplicate schema for %r" % schema.library_id)
        schemas[schema.library_id] = schema
    if not schemas:
        raise MalformedSchema("no schema files in %r" % path)
    return SchemaStore(profile, schemas)
