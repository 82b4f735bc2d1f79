from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from sqlmentor.corpus import load_bird
from sqlmentor.fixtures import build_bird_fixture, build_synthetic_db

REPO_ROOT = Path(__file__).resolve().parents[1]
SHIPPED_FIXTURES = REPO_ROOT / "fixtures"


@pytest.fixture(scope="session")
def bird_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("bird") / "root"
    build_bird_fixture(root)
    return root


@pytest.fixture(scope="session")
def corpus(bird_root):
    return load_bird(bird_root)


@pytest.fixture(scope="session")
def financial(corpus):
    return corpus.catalogs["financial"]


@pytest.fixture(scope="session")
def synthetic_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth") / "root"
    build_bird_fixture(root)
    build_synthetic_db(root, "toyshop", 24)
    return load_bird(root)


@pytest.fixture(scope="session")
def shipped_root():
    assert (SHIPPED_FIXTURES / "bird_root" / "dev.json").is_file()
    return SHIPPED_FIXTURES / "bird_root"


@pytest.fixture(scope="session")
def shipped_cassettes():
    return SHIPPED_FIXTURES / "cassettes"


class DictEmbedder:
    """Test embedder with preset vectors per text; unknown texts get a unit basis vector."""

    def __init__(self, vectors: dict[str, np.ndarray] | None = None, dim: int = 8):
        self.backend_id = "dict"
        self.dim = dim
        self.vectors = dict(vectors or {})
        self._fallback = 0

    def add(self, text: str, vector) -> None:
        self.vectors[text] = np.asarray(vector, dtype=np.float64)

    def embed(self, text: str) -> np.ndarray:
        if text in self.vectors:
            return self.vectors[text]
        v = np.zeros(self.dim)
        v[self._fallback % self.dim] = 1.0
        self._fallback += 1
        self.vectors[text] = v
        return v


@pytest.fixture
def dict_embedder():
    return DictEmbedder()
