"""Shared fixtures: small deterministic stores built once per session."""
import numpy as np
import pytest

from vecstore import Tier, fixture_records, open_store, write_store


@pytest.fixture(scope="session")
def small_records():
    """50 pinned records, d=16, from the platform-independent generator."""
    return fixture_records(50, 16)


@pytest.fixture(scope="session")
def store_paths(tmp_path_factory, small_records):
    """The same 50 records written at every tier."""
    root = tmp_path_factory.mktemp("stores")
    paths = {}
    for tier in (Tier.LIGHT, Tier.MEDIUM, Tier.HEAVY):
        path = root / f"small-{tier.name.lower()}.store"
        write_store(iter(small_records), str(path), tier=tier)
        paths[tier] = str(path)
    return paths


@pytest.fixture()
def light_reader(store_paths):
    with open_store(store_paths[Tier.LIGHT]) as reader:
        yield reader


@pytest.fixture()
def medium_reader(store_paths):
    with open_store(store_paths[Tier.MEDIUM]) as reader:
        yield reader


@pytest.fixture()
def heavy_reader(store_paths):
    with open_store(store_paths[Tier.HEAVY]) as reader:
        yield reader


@pytest.fixture(scope="session")
def word_store(tmp_path_factory):
    """A MEDIUM store over real-looking words used by OOV and search tests."""
    words = [
        "cat", "cats", "scatter", "dog", "dogs", "uber", "tuber", "uberify",
        "hi", "high", "mississippi", "missive", "king", "kings", "queen",
        "queens", "man", "woman", "play", "playing", "played", "player",
        "discriminatory", "discrimination", "run", "running", "runner",
    ]
    records = [(w, prvg_vector(w, 32)) for w in words]
    path = tmp_path_factory.mktemp("words") / "words.store"
    write_store(iter(records), str(path), tier=Tier.MEDIUM)
    return str(path)


def prvg_vector(word: str, d: int) -> np.ndarray:
    from vecstore import hash32, prvg

    return prvg(hash32("seed:" + word), d)


@pytest.fixture()
def word_reader(word_store):
    with open_store(word_store) as reader:
        yield reader
