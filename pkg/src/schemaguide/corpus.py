"""Per-library documentation corpus.

Each library (a shell utility or a configuration module) is described
by one JSON document: an id, a prose description, worked examples and a
train/test split tag.  The retrieval index is built over the text that
doc_text() assembles from these pieces.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

from .errors import DuplicateLibrary, EmptyCorpus, MalformedDoc, UnknownLibrary

VALID_SPLITS = ("train", "test")


@dataclass(frozen=True)
class Example:
    nl: str
    code: str


@dataclass(frozen=True)
class CorpusDoc:
    library_id: str
    description: str
    examples: tuple
    split: str


def parse_doc(obj):
    """Build a CorpusDoc from a decoded JSON object."""
    if not isinstance(obj, dict):
        raise MalformedDoc("corpus doc must be an object, got %s" % type(obj).__name__)
    for key in ("library_id", "description", "examples", "split"):
        if key not in obj:
            raise MalformedDoc("corpus doc missing key %r" % key)
    library_id = obj["library_id"]
    description = obj["description"]
    split = obj["split"]
    if not isinstance(library_id, str) or not library_id.strip():
        raise MalformedDoc("library_id must be a non-empty string")
    if not isinstance(description, str):
        raise MalformedDoc("description must be a string")
    if split not in VALID_SPLITS:
        raise MalformedDoc("split must be one of %s, got %r" % (VALID_SPLITS, split))
    if not isinstance(obj["examples"], list):
        raise MalformedDoc("examples must be a list")
    examples = []
    for i, ex in enumerate(obj["examples"]):
        if not isinstance(ex, dict) or "nl" not in ex or "code" not in ex:
            raise MalformedDoc("example %d needs 'nl' and 'code' keys" % i)
        if not isinstance(ex["nl"], str) or not isinstance(ex["code"], str):
            raise MalformedDoc("example %d fields must be strings" % i)
        examples.append(Example(nl=ex["nl"], code=ex["code"]))
    return CorpusDoc(
        library_id=library_id,
        description=description,
        examples=tuple(examples),
        split=split,
    )


class CorpusStore:
    """Loaded corpus with id lookup and split filters."""

    def __init__(self, docs):
        docs = sorted(docs, key=lambda d: d.library_id)
        self.docs = docs
        self.by_id = {}
        for doc in docs:
            if doc.library_id in self.by_id:
                raise DuplicateLibrary("library %r appears twice" % doc.library_id)
            self.by_id[doc.library_id] = doc
        if not self.docs:
            raise EmptyCorpus("corpus has no documents")

    def __len__(self):
        return len(self.docs)

    def __iter__(self):
        return iter(self.docs)

    def get(self, library_id):
        try:
            return self.by_id[library_id]
        except KeyError:
            raise UnknownLibrary("no corpus doc for %r" % library_id) from None

    def split(self, name):
        if name not in VALID_SPLITS:
            raise MalformedDoc("split must be one of %s" % (VALID_SPLITS,))
        return [d for d in self.docs if d.split == name]


def load_corpus(path):
    """Load every ``*.json`` file under ``path``, one doc per file."""
    if not os.path.isdir(path):
        raise EmptyCorpus("corpus directory %r does not exist" % path)
    docs = []
    for name in sorted(os.listdir(path)):
        if not name.endswith(".json"):
            continue
        full = os.path.join(path, name)
        with open(full, "r", encoding="utf-8") as fh:
            try:
                obj = json.load(fh)
            except json.JSONDecodeError as exc:
                raise MalformedDoc("%s: %s" % (full, exc)) from None
        try:
            docs.append(parse_doc(obj))
        except MalformedDoc as exc:
            raise MalformedDoc("%s: %s" % (full, exc)) from None
    return CorpusStore(docs)


def truncate_words(text, max_words):
    """Keep the first ``max_words`` whitespace-separated words."""
    if max_words is None:
        return text
    words = text.split()
    if len(words) <= max_words:
        return text
    return " ".join(words[:max_words])


def doc_text(doc, max_description_words=30, include_examples=True):
    """Assemble the indexable text for one corpus doc.

    Long descriptions are capped at their leading words (man pages and
    module docs front-load the summary), and each worked example is
    appended as an ``NL:`` / ``CODE:`` block so query terms can match
    either the prose or the example phrasing.
    """
    parts = [truncate_words(doc.description, max_description_words)]
    if include_examples:
        for ex in doc.examples:
            parts.append("NL: %s\nCODE: %s" % (ex.nl, ex.code))
    return "\n".join(parts)
