"""Shared exception types.

Every error raised on a domain-level failure (bad input, impossible
state requested by a caller) derives from SchemaGuideError so the CLI
can catch one base class and map it to exit code 1.
"""


class SchemaGuideError(Exception):
    """Base class for all library errors."""


class UnknownToken(SchemaGuideError):
    """A token string is not present in the vocabulary."""


class InvalidTokenId(SchemaGuideError):
    """A token id is outside the vocabulary's dense id range."""


class UnencodableText(SchemaGuideError):
    """Text cannot be tokenized because some character has no token."""


class DuplicateToken(SchemaGuideError):
    """The same token string appears twice in a vocabulary listing."""


class MalformedVocab(SchemaGuideError):
    """A vocabulary file has an empty or unparseable line."""


class MalformedDoc(SchemaGuideError):
    """A corpus document is missing required keys or has bad types."""


class DuplicateLibrary(SchemaGuideError):
    """Two corpus documents claim the same library id."""


class EmptyCorpus(SchemaGuideError):
    """No documents were found where a corpus was expected."""


class UnknownLibrary(SchemaGuideError):
    """A library id is not present in the corpus or schema store."""


class EmptyQuery(SchemaGuideError):
    """The query text is empty or contains no indexable terms."""


class MalformedSchema(SchemaGuideError):
    """A schema document does not match the expected layout."""


class UnbalancedBrackets(SchemaGuideError):
    """A template has unmatched [, ], <, >, {{ or }} delimiters."""


class EmptyChoice(SchemaGuideError):
    """A template choice lists no (or an empty) alternative."""


class UnresolvedField(SchemaGuideError):
    """A named template slot has no matching schema field to bind to."""


class EmptyCandidateSet(SchemaGuideError):
    """A string-selection trie was built over zero candidate strings."""


class DisallowedToken(SchemaGuideError):
    """advance() was called with a token outside the current mask."""


class NoCandidates(SchemaGuideError):
    """A decoding session was started with no candidate libraries."""


class GenerationStuck(SchemaGuideError):
    """A decoding run exceeded its step budget without finishing."""


class GeneratorFailure(SchemaGuideError):
    """A subprocess generator died or broke the line protocol."""


class ParseFailure(SchemaGuideError):
    """Generated or gold code does not parse under the profile grammar."""


class LengthMismatch(SchemaGuideError):
    """Two sequences that must align by position have different lengths."""


class ConfigError(SchemaGuideError):
    """A config file or CLI argument combination is invalid."""
