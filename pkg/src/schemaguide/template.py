"""Command synopsis templates.

A template is the skeleton of a valid invocation: literal text plus
slots.  ``cp [OPTION] {{SOURCE}} {{DIRECTORY}}`` has a static head, an
optional flag slot and two free arguments; ``fastboot [flags]
<flashall|erase partition|reboot bootloader|...>`` ends in an inline
keyword choice.  parse_template() turns the string into parts, and
bind_schema() resolves named slots against a library schema so the
decoding engine knows the concrete alternatives for every position.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .errors import EmptyChoice, UnbalancedBrackets, UnresolvedField

FLAG_POOL_NAMES = {"option", "options", "opt", "opts", "flag", "flags"}


@dataclass(frozen=True)
class Static:
    text: str


@dataclass(frozen=True)
class Choice:
    """Mandatory pick from alternatives.

    A named choice (``<command>``) starts with no alternatives and gets
    them from bind_schema().  An inline choice carries them directly;
    open_ended marks a trailing ``...`` alternative, meaning the listed
    ones are suggestions rather than the full set.
    """

    name: str | None
    alternatives: tuple = ()
    open_ended: bool = False
    style: str = "angle"


@dataclass(frozen=True)
class OptionalSlot:
    """Bracketed slot the generator may skip.

    pool_kind after binding: "flags" (dashed options, repeatable),
    "choice" (keyword pool) or "free" (unconstrained argument).
    """

    name: str
    pool_kind: str | None = None
    pool: tuple = ()


@dataclass(frozen=True)
class FreeArg:
    placeholder: str
    source: str


@dataclass(frozen=True)
class Repeat:
    inner: object


@dataclass(frozen=True)
class Template:
    source: str
    parts: tuple


def parse_template(source):
    """Parse a synopsis string into a Template.

    Delimiters: ``<...>`` choices (alternatives split on ``|``),
    ``[...]`` optional slots (inner ``...`` means repeatable),
    ``{{...}}`` free arguments, and a ``...`` directly after a slot
    repeats it.  Same-delimiter nesting is rejected.
    """
    parts = []
    buf = []
    i = 0
    n = len(source)

    def flush():
        if buf:
            parts.append(Static("".join(buf)))
            del buf[:]

    while i < n:
        if source.startswith("{{", i):
            flush()
            j = source.find("}}", i + 2)
            if j < 0:
                raise UnbalancedBrackets("unclosed {{ at position %d" % i)
            inner = source[i + 2 : j]
            if "{{" in inner:
                raise UnbalancedBrackets("nested {{ at position %d" % i)
            if "|" in inner:
                parts.append(_inline_choice(inner, style="brace"))
            else:
                name = inner.strip()
                if not name:
                    raise EmptyChoice("empty {{}} slot at position %d" % i)
                parts.append(FreeArg(placeholder=name, source=source[i : j + 2]))
            i = j + 2
        elif source[i] == "<":
            flush()
            j = source.find(">", i + 1)
            if j < 0:
                raise UnbalancedBrackets("unclosed < at position %d" % i)
            inner = source[i + 1 : j]
            if "<" in inner:
                raise UnbalancedBrackets("nested < at position %d" % i)
            if "|" in inner:
                parts.append(_inline_choice(inner, style="angle"))
            else:
                name = inner.strip()
                if not name:
                    raise EmptyChoice("empty <> choice at position %d" % i)
                parts.append(Choice(name=name))
            i = j + 1
        elif source[i] == "[":
            flush()
            j = source.find("]", i + 1)
            if j < 0:
                raise UnbalancedBrackets("unclosed [ at position %d" % i)
            inner = source[i + 1 : j]
            if "[" in inner:
                raise UnbalancedBrackets("nested [ at position %d" % i)
            name = inner.strip()
            repeat = False
            if name.endswith("..."):
                repeat = True
                name = name[:-3].strip()
            if not name:
                raise EmptyChoice("empty [] slot at position %d" % i)
            slot = OptionalSlot(name=name)
            parts.append(Repeat(slot) if repeat else slot)
            i = j + 1
        elif source[i] in ">]":
            raise UnbalancedBrackets("stray %r at position %d" % (source[i], i))
        elif source.startswith("...", i) and not buf and parts and not isinstance(parts[-1], Static):
            parts[-1] = Repeat(parts[-1])
            i += 3
        else:
            buf.append(source[i])
            i += 1
    flush()
    return Template(source=source, parts=tuple(parts))


def _inline_choice(inner, style):
    alts = [a.strip() for a in inner.split("|")]
    open_ended = False
    if alts and alts[-1] == "...":
        open_ended = True
        alts = alts[:-1]
    if not alts or any(not a for a in alts):
        raise EmptyChoice("empty alternative in %r" % inner)
    return Choice(name=None, alternatives=tuple(alts), open_ended=open_ended, style=style)


def serialize(template):
    """Render parts back to synopsis form (whitespace-normalized)."""
    return "".join(_serialize_part(p) for p in template.parts)


def _serialize_part(part):
    if isinstance(part, Static):
        return part.text
    if isinstance(part, Choice):
        if part.name is not None:
            return "<%s>" % part.name
        alts = list(part.alternatives)
        if part.open_ended:
            alts.append("...")
        body = "|".join(alts)
        return "{{%s}}" % body if part.style == "brace" else "<%s>" % body
    if isinstance(part, OptionalSlot):
        return "[%s]" % part.name
    if isinstance(part, FreeArg):
        return part.source
    if isinstance(part, Repeat):
        if isinstance(part.inner, OptionalSlot):
            return "[%s ...]" % part.inner.name
        return _serialize_part(part.inner) + "..."
    raise TypeError("unknown part %r" % (part,))


def static_prefix(template):
    """Leading literal text, exactly as written (trailing space kept)."""
    if template.parts and isinstance(template.parts[0], Static):
        return template.parts[0].text
    return ""


def bind_schema(template, schema):
    """Resolve named slots against a schema.

    Named choices take their alternatives from a matching
    keyword-choice field; optional slots are classified as flag pools
    (by conventional names like OPTION/flags), keyword pools or free
    arguments.  Raises UnresolvedField when a named choice has no
    schema counterpart.
    """
    bound = tuple(_bind_part(p, schema) for p in template.parts)
    return Template(source=template.source, parts=bound)


def _bind_part(part, schema):
    if isinstance(part, Repeat):
        return Repeat(_bind_part(part.inner, schema))
    if isinstance(part, Choice) and part.name is not None and not part.alternatives:
        field = schema.get_field(part.name.strip().lower())
        if field is None or field.kind != "keyword-choice" or not field.valid_values:
            raise UnresolvedField(
                "%s: no keyword field for <%s>" % (schema.library_id, part.name)
            )
        return replace(part, alternatives=field.valid_values)
    if isinstance(part, OptionalSlot) and part.pool_kind is None:
        name = part.name.strip()
        lowered = name.lower()
        if lowered in FLAG_POOL_NAMES:
            return replace(part, pool_kind="flags")
        field = schema.get_field(lowered) or schema.get_field(name)
        if field is not None and field.kind == "keyword-choice" and field.valid_values:
            return replace(part, pool_kind="choice", pool=field.valid_values)
        if name.startswith("-") and field is not None and field.kind == "flag":
            return replace(part, pool_kind="choice", pool=(name,))
        return replace(part, pool_kind="free")
    return part


def yaml_module_template(library_id):
    """The trivial template for a YAML module: its key line."""
    text = library_id + ":"
    return Template(source=text, parts=(Static(text),))
