import numpy as np
import pytest

from fairlens.data import split
from fairlens.datasets import benchmark_dataset, make_synthetic
from fairlens.models import train


@pytest.fixture(scope="session")
def synth():
    """Planted-bias data: eight attributes, ``gender`` protected."""
    return make_synthetic(n_attrs=8, n_rows=2000, seed=3)


@pytest.fixture(scope="session")
def synth_split(synth):
    return split(synth, 0.6, 0)


@pytest.fixture(scope="session")
def synth_models(synth_split):
    tr, _ = synth_split
    small = {"MLP": {"layer_widths": (16, 8, 1), "epochs": 20}}
    return {k: train(k, tr, small.get(k), rng_seed=1) for k in ("LR", "SVM", "DT", "MLP")}


class _Bench:
    """Lazily trained default MLPs on the built-in datasets, shared across the session."""

    def __init__(self):
        self._cache = {}

    def __call__(self, name):
        if name not in self._cache:
            ds = benchmark_dataset(name)
            tr, te = split(ds, 0.6, 0)
            self._cache[name] = (ds, tr, te, train("MLP", tr, rng_seed=0))
        return self._cache[name]


@pytest.fixture(scope="session")
def bench():
    return _Bench()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
