from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from fairlens.data import Dataset, DatasetSchema

THRESHOLD = 0.5


class ModelError(RuntimeError):
    pass


class TrainingError(ModelError):
    pass


class SchemaMismatch(ModelError, ValueError):
    pass


class NotDifferentiable(ModelError, TypeError):
    pass


def _positive(cfg, *names) -> None:
    for n in names:
        if not getattr(cfg, n) > 0:
            raise ValueError(f"{type(cfg).__name__}.{n} must be positive, got {getattr(cfg, n)!r}")


@dataclass
class LrConfig:
    iterations: int = 500
    learning_rate: float = 1.0

    def __post_init__(self):
        _positive(self, "iterations", "learning_rate")


@dataclass
class SvmConfig:
    epochs: int = 200
    learning_rate: float = 0.01
    l2: float = 1e-4
    batch_size: int = 128

    def __post_init__(self):
        _positive(self, "epochs", "learning_rate", "batch_size")
        if self.l2 < 0:
            raise ValueError("SvmConfig.l2 must be non-negative")


@dataclass
class DtConfig:
    max_depth: int = 8
    min_leaf: int = 5

    def __post_init__(self):
        _positive(self, "min_leaf")
        if self.max_depth < 0:
            raise ValueError("DtConfig.max_depth must be non-negative")


@dataclass
class MlpConfig:
    layer_widths: tuple[int, ...] = (30, 20, 15, 10, 5, 1)
    epochs: int = 30
    batch_size: int = 128
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        self.layer_widths = tuple(int(w) for w in self.layer_widths)
        _positive(self, "epochs", "batch_size", "learning_rate", "epsilon")
        if any(w < 1 for w in self.layer_widths):
            raise ValueError("layer widths must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if not self.layer_widths or self.layer_widths[-1] != 1:
            raise ValueError("the last layer of a binary classifier has width 1")


CONFIGS = {"LR": LrConfig, "SVM": SvmConfig, "DT": DtConfig, "MLP": MlpConfig}


def make_config(kind: str, overrides: dict | None = None):
    if kind not in CONFIGS:
        raise ValueError(f"unknown model kind {kind!r}; choose from {sorted(CONFIGS)}")
    return CONFIGS[kind](**(overrides or {}))


def config_to_dict(config) -> dict:
    d = asdict(config)
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


class Model:
    """Common surface of every classifier: probability of class 1 for integer rows.

    Inputs are min-max scaled with the schema's domain bounds, so any instance of
    the input domain maps into the unit cube regardless of the training split.
    """

    kind: str = ""

    def __init__(self, schema: DatasetSchema, config, seed: int = 0):
        self.schema = schema
        self.config = config
        self.seed = seed
        self._lo = schema.lower
        self._span = np.maximum(schema.upper - schema.lower, 1.0)

    @property
    def schema_fingerprint(self) -> str:
        return self.schema.fingerprint()

    @property
    def n_features(self) -> int:
        return self.schema.n_attributes

    def scale(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.n_features:
            raise SchemaMismatch(f"model expects {self.n_features} attributes, got {X.shape[-1]}")
        return (X - self._lo) / self._span

    def check_dataset(self, ds: Dataset) -> None:
        if ds.schema.fingerprint() != self.schema_fingerprint:
            raise SchemaMismatch(f"dataset schema {ds.schema.name!r} differs from the model's training schema")

    # subclasses implement these on scaled inputs
    def _proba(self, Z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def predict_proba(self, X) -> np.ndarray:
        X = np.asarray(X)
        Z = self.scale(np.atleast_2d(X))
        p = self._proba(Z)
        return p[0] if X.ndim == 1 else p

    def predict(self, X) -> np.ndarray:
        p = self.predict_proba(X)
        return (np.asarray(p) >= THRESHOLD).astype(np.int64)

    def input_gradient(self, X) -> np.ndarray:
        raise NotDifferentiable(f"{self.kind} models have no input gradient")

    def fit(self, Z: np.ndarray, y: np.ndarray, rng: np.random.Generator) -> None:
        raise NotImplementedError

    def continue_training(self, Z: np.ndarray, y: np.ndarray, epochs: int, rng: np.random.Generator) -> None:
        raise NotImplementedError

    def get_params(self) -> dict[str, np.ndarray]:
        raise NotImplementedError

    def set_params(self, params: dict) -> None:
        raise NotImplementedError

    def param_shapes(self) -> dict[str, tuple]:
        return {k: np.shape(v) for k, v in self.get_params().items()}

    def copy(self) -> "Model":
        m = type(self)(self.schema, self.config, self.seed)
        m.set_params({k: np.array(v, copy=True) for k, v in self.get_params().items()})
        return m

    def __repr__(self):
        return f"{type(self).__name__}(schema={self.schema.name!r}, config={self.config})"


def sigmoid(t):
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def check_binary_labels(y: np.ndarray) -> None:
    if len(y) == 0:
        raise TrainingError("cannot train on an empty dataset")
    if np.unique(y).size < 2:
        raise TrainingError("training data contains a single class")
