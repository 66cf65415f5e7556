import os
import sys

import pytest

from schemaguide.corpus import load_corpus
from schemaguide.profiles import get_profile
from schemaguide.retrieval import build_index
from schemaguide.schema import load_schema_dir
from schemaguide.vocab import reference_vocabulary

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT_LINES", []) if mod else []
    if lines:
        terminalreporter.section("end-to-end guarantees")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES


@pytest.fixture(scope="session")
def vocab():
    return reference_vocabulary()


@pytest.fixture(scope="session")
def bash_corpus():
    return load_corpus(os.path.join(FIXTURES, "corpus_bash"))


@pytest.fixture(scope="session")
def yaml_corpus():
    return load_corpus(os.path.join(FIXTURES, "corpus_yaml"))


@pytest.fixture(scope="session")
def bash_index(bash_corpus):
    return build_index(bash_corpus)


@pytest.fixture(scope="session")
def yaml_index(yaml_corpus):
    return build_index(yaml_corpus)


@pytest.fixture(scope="session")
def bash_schemas():
    return load_schema_dir(os.path.join(FIXTURES, "schemas", "bash"), "bash")


@pytest.fixture(scope="session")
def yaml_schemas():
    return load_schema_dir(os.path.join(FIXTURES, "schemas", "yaml"), "yaml")


@pytest.fixture(scope="session")
def bash_profile():
    return get_profile("bash")


@pytest.fixture(scope="session")
def yaml_profile():
    return get_profile("yaml")
