import pathlib

import pytest

FIXTURES = pathlib.Path(__file__).resolve().parent / "fixtures"
GOLDEN = pathlib.Path(__file__).resolve().parent / "golden"


@pytest.fixture(scope="session")
def fixtures_dir() -> pathlib.Path:
    return FIXTURES


@pytest.fixture(scope="session")
def golden_dir() -> pathlib.Path:
    return GOLDEN


@pytest.fixture(scope="session")
def qa_dataset_path() -> pathlib.Path:
    return FIXTURES / "fixtureqa.jsonl"


@pytest.fixture(scope="session")
def cls_dataset_path() -> pathlib.Path:
    return FIXTURES / "fixturecls.jsonl"


@pytest.fixture(scope="session")
def banks_dir() -> pathlib.Path:
    return FIXTURES / "banks"


@pytest.fixture(scope="session")
def web_root() -> pathlib.Path:
    return FIXTURES / "web"
