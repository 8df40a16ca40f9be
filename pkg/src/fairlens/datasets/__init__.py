"""Bundled benchmark datasets and the synthetic generator.

Census (UCI Adult) and Compas ship as raw files and are encoded on first use
with the schema files next to this module.  Bank Marketing is not bundled;
set ``FAIRLENS_BANK_CSV`` to a local ``bank-full.csv`` to use it, or use
``bank-synthetic``, a planted-bias stand-in drawn over the Bank schema.
"""
from __future__ import annotations

import functools
import gzip
import os
from importlib import resources

import numpy as np

from fairlens.data import AttributeSpec, Binning, Dataset, DatasetSchema, load_schema, preprocess_bin, read_raw

BUILTIN = ("census", "compas", "bank", "bank-synthetic")

# the dataset/protected-attribute grid of the benchmark tables
BENCHMARK_CONFIGS = (
    ("census", "age"),
    ("census", "race"),
    ("census", "sex"),
    ("compas", "age"),
    ("compas", "race"),
    ("compas", "sex"),
    ("bank", "age"),
)

_RAW = {"census": "adult.data.gz", "compas": "compas-scores-two-years.csv.gz"}


def schema_path(name: str):
    return resources.files(__name__).joinpath(f"{name}.schema")


def builtin_binning(name: str) -> Binning:
    base = "bank" if name == "bank-synthetic" else name
    if base not in ("census", "compas", "bank"):
        raise KeyError(f"unknown builtin dataset {name!r}; choose from {BUILTIN}")
    with resources.as_file(schema_path(base)) as p:
        return load_schema(p)


def raw_path(name: str):
    return resources.files(__name__).joinpath("raw", _RAW[name])


def bank_available() -> bool:
    p = os.environ.get("FAIRLENS_BANK_CSV")
    return bool(p) and os.path.exists(p)


@functools.lru_cache(maxsize=None)
def load_builtin(name: str) -> Dataset:
    binning = builtin_binning(name)
    if name in _RAW:
        with resources.as_file(raw_path(name)) as p, gzip.open(p, "rt", encoding="utf-8") as fh:
            raw = read_raw(fh, binning)
        return preprocess_bin(raw, binning)
    if name == "bank":
        path = os.environ.get("FAIRLENS_BANK_CSV")
        if not path or not os.path.exists(path):
            raise FileNotFoundError("Bank Marketing is not bundled; set FAIRLENS_BANK_CSV to bank-full.csv")
        return preprocess_bin(read_raw(path, binning), binning)
    return synthetic_like(binning.schema, n_rows=45211, seed=20240, bias=2.0)


def benchmark_dataset(name: str) -> Dataset:
    """Like :func:`load_builtin` but falls back to the Bank stand-in offline."""
    if name == "bank" and not bank_available():
        return load_builtin("bank-synthetic")
    return load_builtin(name)


# ---------------------------------------------------------------- synthetic

def _planted_labels(schema: DatasetSchema, X: np.ndarray, rng, bias: float, noise: float) -> np.ndarray:
    span = np.maximum(schema.upper - schema.lower, 1.0)
    Z = (X - schema.lower) / span
    prot = schema.protected_indices
    w = rng.normal(0.0, 1.0, size=schema.n_attributes)
    w[prot] = 0.0
    score = Z @ w
    # the planted bias: the first protected attribute shifts the score
    score = score + bias * Z[:, prot[0]] * np.std(score) if prot else score
    score = score + rng.logistic(0.0, noise * (np.std(score) + 1e-12), size=len(X))
    return (score > np.median(score)).astype(np.int64)


def synthetic_like(schema: DatasetSchema, n_rows: int, seed: int, bias: float = 1.5,
                   noise: float = 0.3) -> Dataset:
    """Uniform rows over ``schema`` labelled by a random linear rule plus a protected shift."""
    rng = np.random.default_rng(seed)
    X = np.column_stack([np.asarray(a.domain)[rng.integers(0, a.size, n_rows)] for a in schema.attributes])
    return Dataset(schema, X, _planted_labels(schema, X, rng, bias, noise))


def make_synthetic(n_attrs: int = 8, n_rows: int = 2000, seed: int = 0, bias: float = 1.5,
                   domain_size: int = 10, noise: float = 0.3) -> Dataset:
    """A small planted-bias dataset.

    Attribute ``gender`` (binary) is protected and pushes the label up; the
    remaining ``n_attrs - 1`` attributes take values ``0..domain_size-1``.
    """
    if n_attrs < 2:
        raise ValueError("need at least two attributes")
    attrs = [AttributeSpec("gender", (0, 1), protected=True)]
    attrs += [AttributeSpec.from_range(f"a{i}", 0, domain_size - 1) for i in range(1, n_attrs)]
    schema = DatasetSchema(tuple(attrs), label_name="label", name=f"synthetic{n_attrs}")
    return synthetic_like(schema, n_rows, seed, bias=bias, noise=noise)
