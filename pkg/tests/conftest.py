import json
from pathlib import Path

import pytest

from todkit.agent import DbBackend
from todkit.corpus import load_corpus
from todkit.lm import ScriptedLM
from todkit.schema import load_schema

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def schema():
    return load_schema(FIXTURES / "schema.json")


@pytest.fixture(scope="session")
def corpus(schema):
    return load_corpus(FIXTURES / "corpus.jsonl", schema)


@pytest.fixture(scope="session")
def tiny_corpus(schema):
    return load_corpus(FIXTURES / "tiny.jsonl", schema)


@pytest.fixture()
def tiny_lm():
    return ScriptedLM.from_file(FIXTURES / "scripted_tiny.json")


@pytest.fixture(scope="session")
def db():
    return DbBackend.from_file(FIXTURES / "db.json")


@pytest.fixture(scope="session")
def schema_path():
    return FIXTURES / "schema.json"


@pytest.fixture(scope="session")
def tiny_corpus_path():
    return FIXTURES / "tiny.jsonl"


@pytest.fixture(scope="session")
def scripted_tiny_path():
    return FIXTURES / "scripted_tiny.json"


@pytest.fixture(scope="session")
def db_path():
    return FIXTURES / "db.json"


def write_jsonl(path, docs):
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(json.dumps(doc) + "\n")
    return path
