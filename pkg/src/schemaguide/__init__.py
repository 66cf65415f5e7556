"""Retrieval-backed constrained decoding for shell and YAML generation."""

__version__ = "0.1.0"

from .vocab import Vocabulary, reference_vocabulary
from .corpus import CorpusDoc, CorpusStore, load_corpus
from .retrieval import BM25Index, build_index, hits_at_k
from .schema import SchemaStore, load_schema_dir
from .template import parse_template
from .profiles import get_profile, validate
from .engine import DecodingSession, run_constrained, run_session, start_session
from .generator import parse_generator_spec
from .metrics import evaluate

__all__ = [
    "__version__",
    "Vocabulary",
    "reference_vocabulary",
    "CorpusDoc",
    "CorpusStore",
    "load_corpus",
    "BM25Index",
    "build_index",
    "hits_at_k",
    "SchemaStore",
    "load_schema_dir",
    "parse_template",
    "get_profile",
    "validate",
    "DecodingSession",
    "run_constrained",
    "run_session",
    "start_session",
    "parse_generator_spec",
    "evaluate",
]
