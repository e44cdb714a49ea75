from importlib import resources

import pytest

from claimbench.corpus import load_dataset
from claimbench.provider import MockTransport, ProviderClient, ResponseCache


def _toy(name):
    return str(resources.files("claimbench").joinpath("data/toy").joinpath(name))


@pytest.fixture(scope="session")
def toy_paths():
    return {
        "claims": _toy("claims.jsonl"),
        "factchecks": _toy("factchecks.jsonl"),
        "qrels": _toy("qrels.tsv"),
        "split": _toy("split.json"),
    }


@pytest.fixture(scope="session")
def toy_data(toy_paths):
    return load_dataset(toy_paths["claims"], toy_paths["factchecks"], toy_paths["qrels"])


@pytest.fixture()
def mock_client():
    return ProviderClient(MockTransport(seed=7), cache=ResponseCache(), parallelism=4)
