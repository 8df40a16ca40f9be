"""Retrain on generated IDIs and count how many test cases still discriminate.

Generated instances are labelled by majority vote of four model kinds, added
to the training data, and the model under test continues training from its
current parameters.  Both arms of a head-to-head are measured on the same
test-case list: the deduplicated union of the instances either arm found.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from fairlens.data import Dataset
from fairlens.discrimination import DEFAULT_CAP, IdiRecord, Oracle
from fairlens.generation import GenBudget, GenResult, run_engine
from fairlens.models import KINDS, Model, continue_training, f1_score, majority_vote_label, train
from fairlens.rng import derive_seed

RETRAIN_EPOCHS = 10
TEST_FRACTION = 0.4


@dataclass(frozen=True)
class ArmConfig:
    """One side of a head-to-head: a seeding strategy and a generation engine."""
    strategy: str = "iand"
    engine: str = "aequitas"

    @property
    def label(self) -> str:
        return f"{self.engine}+{self.strategy}"


@dataclass
class RetrainOutcome:
    retrained: Model
    test_cases: np.ndarray
    remaining_before: int
    remaining_after: int
    f1_before: float
    f1_after: float
    arm: str = ""
    added: int = 0
    generated: GenResult | None = field(default=None, repr=False)

    @property
    def f1_drift(self) -> float:
        return abs(self.f1_after - self.f1_before)

    def to_dict(self) -> dict:
        return {
            "arm": self.arm,
            "test_cases": int(len(self.test_cases)),
            "added": self.added,
            "remaining_before": self.remaining_before,
            "remaining_after": self.remaining_after,
            "f1_before": self.f1_before,
            "f1_after": self.f1_after,
        }


def voting_models(model: Model, train_ds: Dataset, rng_seed: int = 0) -> list[Model]:
    """One model per kind; the model under test stands in for its own kind."""
    out = []
    for kind in KINDS:
        if kind == model.kind:
            out.append(model)
        else:
            out.append(train(kind, train_ds, rng_seed=derive_seed(rng_seed, f"voter-{kind}")))
    return out


def label_idis(idis, oracle_models, tiebreak: Model) -> tuple[np.ndarray, np.ndarray]:
    """Rows and majority-vote labels for the IDI instances (witnesses are not added)."""
    d = tiebreak.schema.n_attributes
    X = np.array([r.instance if isinstance(r, IdiRecord) else r for r in idis], dtype=np.int64).reshape(-1, d)
    if len(X) == 0:
        return X, np.zeros(0, dtype=np.int64)
    return X, np.asarray(majority_vote_label(oracle_models, X, tiebreak), dtype=np.int64)


def retrain(model: Model, train_ds: Dataset, labeled, epochs: int = RETRAIN_EPOCHS, rng_seed: int = 0,
            from_scratch: bool = False, learning_rate: float | None = None) -> Model:
    """Continue training ``model`` on the training rows plus the labelled IDIs.

    ``labeled`` is a pair (rows, labels).  Trees are refit; ``from_scratch``
    trains a fresh model of the same kind and configuration instead.  The
    original learning rate is used unless ``learning_rate`` is given; the
    returned model keeps the original configuration either way.
    """
    X, y = labeled
    aug = Dataset(train_ds.schema, np.vstack([train_ds.X, np.asarray(X, dtype=np.int64).reshape(-1, train_ds.X.shape[1])]),
                  np.concatenate([train_ds.y, np.asarray(y, dtype=np.int64)]))
    if from_scratch:
        return train(model.kind, aug, model.config, rng_seed)
    if learning_rate is None or not hasattr(model.config, "learning_rate"):
        return continue_training(model, aug, epochs, rng_seed)
    tuned = model.copy()
    tuned.config = replace(model.config, learning_rate=learning_rate)
    out = continue_training(tuned, aug, epochs, rng_seed)
    out.config = model.config
    return out


def measure_remaining(model: Model, test_cases, protected, cap: int = DEFAULT_CAP) -> int:
    """Number of test cases that are still IDIs under ``model``."""
    X = np.atleast_2d(np.asarray(test_cases, dtype=np.int64))
    if X.size == 0:
        return 0
    return int(Oracle(model, protected, cap).is_idi(X).sum())


def union_cases(*results) -> np.ndarray:
    """Distinct instances over all results, in first-seen order."""
    seen, rows = set(), []
    for r in results:
        for rec in r.idis:
            if rec.instance not in seen:
                seen.add(rec.instance)
                rows.append(rec.instance)
    return np.array(rows, dtype=np.int64)


def retrain_arms(model: Model, train_ds: Dataset, test_ds: Dataset, results, labels, protected, voters,
                 epochs: int = RETRAIN_EPOCHS, rng_seed: int = 0, from_scratch: bool = False,
                 learning_rate: float | None = None) -> list[RetrainOutcome]:
    """Retrain one copy of ``model`` per generation result, all measured on the union of their IDIs."""
    protected = tuple(protected)
    cases = union_cases(*results)
    before = measure_remaining(model, cases, protected)
    f1_before = f1_score(model, test_ds)
    outs = []
    for label, res in zip(labels, results):
        labeled = label_idis(res.idis, voters, model)
        new = retrain(model, train_ds, labeled, epochs, derive_seed(rng_seed, "retrain"), from_scratch, learning_rate)
        outs.append(RetrainOutcome(new, cases, before, measure_remaining(new, cases, protected),
                                   f1_before, f1_score(new, test_ds), label, len(labeled[0]), res))
    return outs


def head_to_head(arm_a: ArmConfig, arm_b: ArmConfig, model: Model, train_ds: Dataset, test_ds: Dataset,
                 protected, budget: GenBudget | None = None, rng_seed: int = 0, epochs: int = RETRAIN_EPOCHS,
                 from_scratch: bool = False, voters=None, seed_kwargs: dict | None = None,
                 full_ds: Dataset | None = None, learning_rate: float | None = None):
    """Generate under both arms, retrain a copy per arm, and measure both on the shared test cases.

    Seeds are drawn from ``full_ds`` when given, otherwise from the training
    split.  Both arms use the same sub-seeds, so identical arms give
    identical outcomes.
    """
    from fairlens.seeding import make_seeds

    budget = budget or GenBudget()
    protected = tuple(protected)
    voters = voters or voting_models(model, train_ds, rng_seed)
    source = full_ds if full_ds is not None else train_ds
    results = []
    for arm in (arm_a, arm_b):
        seeds = make_seeds(arm.strategy, model, source, budget.seed_limit, derive_seed(rng_seed, "seeds"),
                           protected, **(seed_kwargs or {}))
        results.append(run_engine(arm.engine, model, seeds, protected, budget, derive_seed(rng_seed, "generate")))
    a, b = retrain_arms(model, train_ds, test_ds, results, (arm_a.label, arm_b.label), protected, voters,
                        epochs, rng_seed, from_scratch, learning_rate)
    return a, b
