"""Shared fixtures: tiny hand-checkable graphs, small random instances,
and session-scoped structures over the bundled benchmark datasets."""

from pathlib import Path

import numpy as np
import pytest

from boltzknn import Prior, build_graph
from boltzknn.data import load_csv, load_ripley
from boltzknn.posterior import ModelContext

DATA = Path(__file__).resolve().parent.parent / "data"


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA


@pytest.fixture()
def line_graph():
    """1-D points {0, 1, 3}: the middle point is everybody's nearest
    neighbour, the right point is nobody's."""
    return build_graph(np.array([[0.0], [1.0], [3.0]]), K=2)


@pytest.fixture()
def pair_graph():
    """Two points; the only possible neighbour structure (mutual pair)."""
    return build_graph(np.array([[0.0], [1.0]]), K=1)


def make_instance(n: int, G: int = 2, K: int = 2, p: int = 2, seed: int = 0):
    """A small random instance: graph plus i.i.d. uniform labels."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    y = rng.integers(0, G, n)
    return build_graph(X, K=K), y


@pytest.fixture()
def small_instance():
    return make_instance(8, G=2, K=2, seed=42)


@pytest.fixture(scope="session")
def synth_train():
    return load_ripley(DATA / "synth.tr")


@pytest.fixture(scope="session")
def synth_test():
    return load_ripley(DATA / "synth.te")


@pytest.fixture(scope="session")
def synth_ctx(synth_train):
    """Full training context over the two-class synthetic benchmark
    (K = 125, the minimal class size)."""
    ds = synth_train
    g = build_graph(ds.X, K=125)
    return ModelContext(g, ds.y - 1, ds.G, Prior(beta_max=4.0, K=125))


@pytest.fixture(scope="session")
def pima_train():
    return load_csv(DATA / "pima_train.csv", label_column="type")


@pytest.fixture(scope="session")
def pima_test():
    return load_csv(DATA / "pima_test.csv", label_column="type")


@pytest.fixture(scope="session")
def glass_full():
    return load_csv(DATA / "fgl.csv", label_column="type")
