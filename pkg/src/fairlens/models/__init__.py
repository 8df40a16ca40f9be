"""Binary classifiers, their metrics and the majority-vote labelling oracle."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from fairlens.data import Dataset, DatasetSchema
from fairlens.models.base import (
    THRESHOLD,
    DtConfig,
    LrConfig,
    MlpConfig,
    Model,
    ModelError,
    NotDifferentiable,
    SchemaMismatch,
    SvmConfig,
    TrainingError,
    check_binary_labels,
    config_to_dict,
    make_config,
    sigmoid,
)
from fairlens.models.linear import LinearSVM, LogisticModel
from fairlens.models.mlp import MLP, Nadam
from fairlens.models.tree import DecisionTree

KINDS = {"LR": LogisticModel, "SVM": LinearSVM, "DT": DecisionTree, "MLP": MLP}
MODEL_FORMAT = "fairlens-model"
MODEL_VERSION = 1


def train(kind: str, ds: Dataset, config=None, rng_seed: int = 0) -> Model:
    """Train a classifier of ``kind``; identical inputs give identical parameters."""
    if config is None or isinstance(config, dict):
        config = make_config(kind, config)
    check_binary_labels(ds.y)
    model = KINDS[kind](ds.schema, config, rng_seed)
    model.fit(model.scale(ds.X), ds.y, np.random.default_rng(rng_seed))
    return model


def f1_per_class(y_true, y_pred) -> dict[int, float]:
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    out = {}
    for c in (0, 1):
        tp = int(np.sum((y_pred == c) & (y_true == c)))
        fp = int(np.sum((y_pred == c) & (y_true != c)))
        fn = int(np.sum((y_pred != c) & (y_true == c)))
        denom = 2 * tp + fp + fn
        out[c] = 2 * tp / denom if denom else 0.0
    return out


def f1_weighted(y_true, y_pred) -> float:
    """Per-class F1 averaged with weights equal to the true class supports."""
    y_true = np.asarray(y_true)
    if len(y_true) == 0:
        raise ValueError("empty label vector")
    per = f1_per_class(y_true, y_pred)
    support = {c: int(np.sum(y_true == c)) for c in (0, 1)}
    return sum(per[c] * support[c] for c in (0, 1)) / len(y_true)


def f1_score(model: Model, ds: Dataset) -> float:
    model.check_dataset(ds)
    return f1_weighted(ds.y, model.predict(ds.X))


def vote_counts(models, X) -> np.ndarray:
    return np.sum([m.predict(np.atleast_2d(X)) for m in models], axis=0)


def majority_vote_label(models, X, tiebreak: Model) -> np.ndarray:
    """Label rows by four-model majority; a 2-2 split goes to ``tiebreak``.

    Accepts a single instance or a matrix; returns a scalar or a vector.
    """
    if len(models) != 4:
        raise ValueError("majority voting uses exactly four models")
    fps = {m.schema_fingerprint for m in models} | {tiebreak.schema_fingerprint}
    if len(fps) != 1:
        raise SchemaMismatch("voting models were trained on different schemas")
    X = np.asarray(X)
    votes = vote_counts(models, X)
    labels = np.where(votes >= 3, 1, 0)
    tie = votes == 2
    if tie.any():
        labels[tie] = tiebreak.predict(np.atleast_2d(X)[tie])
    return labels[0] if X.ndim == 1 else labels


def continue_training(model: Model, ds: Dataset, epochs: int, rng_seed: int) -> Model:
    """Copy of ``model`` trained ``epochs`` more passes over ``ds`` (trees are refit)."""
    model.check_dataset(ds)
    out = model.copy()
    if epochs <= 0:
        return out
    check_binary_labels(ds.y)
    out.continue_training(out.scale(ds.X), ds.y, epochs, np.random.default_rng(rng_seed))
    return out


# ---------------------------------------------------------------- files

def model_to_dict(model: Model) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "kind": model.kind,
        "config": config_to_dict(model.config),
        "seed": model.seed,
        "schema": model.schema.to_dict(),
        "schema_fingerprint": model.schema_fingerprint,
        "params": {k: {"shape": list(np.shape(v)), "data": np.asarray(v).ravel().tolist()}
                   for k, v in model.get_params().items()},
    }


def model_from_dict(d: dict) -> Model:
    if d.get("format") != MODEL_FORMAT:
        raise ModelError("not a fairlens model file")
    if d.get("version") != MODEL_VERSION:
        raise ModelError(f"unsupported model file version {d.get('version')}")
    schema = DatasetSchema.from_dict(d["schema"])
    if schema.fingerprint() != d["schema_fingerprint"]:
        raise SchemaMismatch("schema fingerprint in model file does not match its schema")
    kind = d["kind"]
    model = KINDS[kind](schema, make_config(kind, d["config"]), d.get("seed", 0))
    model.set_params({k: np.asarray(v["data"]).reshape(v["shape"]) for k, v in d["params"].items()})
    return model


def save_model(model: Model, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model)), encoding="utf-8")


def load_model(path) -> Model:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


__all__ = [
    "THRESHOLD", "KINDS", "Model", "LogisticModel", "LinearSVM", "DecisionTree", "MLP", "Nadam",
    "LrConfig", "SvmConfig", "DtConfig", "MlpConfig", "ModelError", "TrainingError", "SchemaMismatch",
    "NotDifferentiable", "train", "make_config", "f1_score", "f1_weighted", "f1_per_class",
    "majority_vote_label", "vote_counts", "continue_training", "save_model", "load_model",
    "model_to_dict", "model_from_dict", "sigmoid",
]
