"""Initial seed selection: random sampling, k-means round robin, and I&D.

I&D trains a chiral twin of the model under test on data whose protected
attributes were mutated, keeps the rows where the two models disagree and the
original model is confirmed to discriminate, clusters those IDIs by their
Shapley vectors and picks round robin across clusters.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from fairlens import cluster as clustering
from fairlens import shapley
from fairlens.data import Dataset, mutate_protected
from fairlens.discrimination import DEFAULT_CAP, Oracle
from fairlens.models import Model, train

STRATEGIES = ("random", "cluster", "iand")
UNEXPLAINED = -2
DEFAULT_K = 4


@dataclass
class ShapConfig:
    mode: str = "auto"
    background_size: int = shapley.DEFAULT_BACKGROUND
    n_coalitions: int = shapley.AUTO_COALITIONS
    # pools above this are subsampled for explanation, the rest are picked last;
    # None means max(1000, 10 * budget)
    max_explain: int | None = None

    def explain_limit(self, budget: int) -> int:
        return self.max_explain if self.max_explain is not None else max(1000, 10 * budget)


@dataclass
class SeedSet:
    seeds: np.ndarray
    strategy: str
    budget: int
    idi_flags: np.ndarray
    fill_count: int = 0
    cluster_ids: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)

    def __post_init__(self):
        self.seeds = np.asarray(self.seeds, dtype=np.int64).reshape(len(self.idi_flags), -1) \
            if len(self.idi_flags) else np.asarray(self.seeds, dtype=np.int64).reshape(0, -1)
        self.idi_flags = np.asarray(self.idi_flags, dtype=bool)
        if self.cluster_ids is None:
            self.cluster_ids = np.full(len(self.idi_flags), -1, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.seeds)

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "budget": self.budget,
            "fill_count": self.fill_count,
            "diagnostics": self.diagnostics,
            "seeds": [
                {"instance": [int(v) for v in s], "idi": bool(f), "cluster": int(c),
                 "source": "fill" if (self.strategy == "iand" and not f) else self.strategy}
                for s, f, c in zip(self.seeds, self.idi_flags, self.cluster_ids)
            ],
        }

    @classmethod
    def from_dict(cls, d) -> "SeedSet":
        seeds = [s["instance"] for s in d["seeds"]]
        return cls(np.array(seeds, dtype=np.int64), d["strategy"], d["budget"],
                   np.array([s["idi"] for s in d["seeds"]], dtype=bool), d.get("fill_count", 0),
                   np.array([s.get("cluster", -1) for s in d["seeds"]], dtype=np.int64),
                   d.get("diagnostics", {}))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "SeedSet":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _distinct_in_order(X: np.ndarray, order, budget: int, taken: set | None = None) -> list[int]:
    taken = set() if taken is None else taken
    out = []
    for i in order:
        key = X[i].tobytes()
        if key in taken:
            continue
        taken.add(key)
        out.append(int(i))
        if len(out) >= budget:
            break
    return out


def round_robin(groups: list[np.ndarray], budget: int, X: np.ndarray, taken: set | None = None) -> tuple[list[int], list[int]]:
    """Visit ``groups`` cyclically, taking the next unused distinct row of each.

    Returns (row indices, group position of each pick).
    """
    taken = set() if taken is None else taken
    pos = [0] * len(groups)
    picks, owner = [], []
    active = list(range(len(groups)))
    while len(picks) < budget and active:
        still = []
        for g in active:
            if len(picks) >= budget:
                still.append(g)
                continue
            grp = groups[g]
            while pos[g] < len(grp) and X[grp[pos[g]]].tobytes() in taken:
                pos[g] += 1
            if pos[g] < len(grp):
                i = int(grp[pos[g]])
                taken.add(X[i].tobytes())
                picks.append(i)
                owner.append(g)
                pos[g] += 1
            if pos[g] < len(grp):
                still.append(g)
        active = still
    return picks, owner


def seed_random(ds: Dataset, budget: int, rng_seed: int) -> SeedSet:
    """``budget`` distinct rows drawn uniformly without replacement."""
    if budget < 1:
        raise ValueError("budget must be at least 1")
    if len(ds) == 0:
        raise ValueError("cannot seed from an empty dataset")
    order = np.random.default_rng(rng_seed).permutation(len(ds))
    idx = _distinct_in_order(ds.X, order, budget)
    return SeedSet(ds.X[idx], "random", budget, np.zeros(len(idx), dtype=bool))


def _ordered_groups(assign: np.ndarray, rng, noise_last: bool = True) -> tuple[list[np.ndarray], list[int]]:
    """Cluster member lists by descending size (noise last), each shuffled."""
    labels = [c for c in np.unique(assign) if c != clustering.NOISE]
    labels.sort(key=lambda c: (-int(np.sum(assign == c)), c))
    if noise_last and np.any(assign == clustering.NOISE):
        labels.append(clustering.NOISE)
    groups = [rng.permutation(np.flatnonzero(assign == c)) for c in labels]
    return groups, labels


def seed_cluster(ds: Dataset, budget: int, k: int = DEFAULT_K, rng_seed: int = 0) -> SeedSet:
    """k-means over scaled rows, then round robin over clusters (largest first)."""
    if budget < 1:
        raise ValueError("budget must be at least 1")
    if len(ds) == 0:
        raise ValueError("cannot seed from an empty dataset")
    if not 1 <= k <= len(ds):
        raise ValueError(f"k must lie in 1..{len(ds)}")
    rng = np.random.default_rng(rng_seed)
    lo, span = ds.schema.lower, np.maximum(ds.schema.upper - ds.schema.lower, 1)
    cl = clustering.kmeans((ds.X - lo) / span, k, int(rng.integers(2**63)))
    groups, labels = _ordered_groups(cl.assignments, rng)
    picks, owner = round_robin(groups, budget, ds.X)
    return SeedSet(ds.X[picks], "cluster", budget, np.zeros(len(picks), dtype=bool),
                   cluster_ids=np.array([labels[g] for g in owner], dtype=np.int64),
                   diagnostics={"k": k, "cluster_sizes": [len(g) for g in groups]})


def _resolve_protected(ds: Dataset, protected) -> tuple[str, ...]:
    names = tuple(protected) if protected else tuple(ds.schema.protected_names)
    if not names:
        raise ValueError("no protected attribute given")
    return names


def build_chiral(original: Model, ds: Dataset, rng_seed: int, protected=None) -> Model:
    """Same kind and hyper-parameters as ``original``, trained on protected-mutated data."""
    names = _resolve_protected(ds, protected)
    mutated = mutate_protected(ds.with_schema(ds.schema.with_protected(names)), rng_seed)
    return train(original.kind, mutated, original.config, rng_seed)


def iand_candidates(original: Model, chiral: Model, ds: Dataset, protected, cap: int = DEFAULT_CAP):
    """Distinct rows where the two models disagree and the original discriminates.

    Returns (candidate rows, diagnostics).
    """
    disagree = np.flatnonzero(original.predict(ds.X) != chiral.predict(ds.X))
    rows = ds.X[disagree]
    if len(rows):
        _, first = np.unique(rows, axis=0, return_index=True)
        rows = rows[np.sort(first)]
    if len(rows):
        confirmed = Oracle(original, protected, cap).is_idi(rows)
    else:
        confirmed = np.zeros(0, dtype=bool)
    diag = {"disagreements": int(len(disagree)), "distinct_disagreements": int(len(rows)),
            "confirmed": int(confirmed.sum()), "rejected": int(len(rows) - confirmed.sum())}
    return rows[confirmed], diag


def seed_iand(original: Model, ds: Dataset, budget: int, dbscan: tuple[float, int] = (clustering.DBSCAN_EPS, clustering.DBSCAN_MIN_PTS),
              shap_cfg: ShapConfig | None = None, rng_seed: int = 0, protected=None,
              chiral: Model | None = None, cap: int = DEFAULT_CAP) -> SeedSet:
    """I&D seeds for ``original`` (protected set from ``protected`` or the schema flags).

    A pre-trained ``chiral`` model may be passed to skip training; timing for
    training is reported separately from selection.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    shap_cfg = shap_cfg or ShapConfig()
    names = _resolve_protected(ds, protected)
    rng = np.random.default_rng(rng_seed)
    chiral_seed, cluster_seed, fill_seed, bg_seed = (int(s) for s in rng.integers(2**63, size=4))
    timing = {}
    t0 = time.perf_counter()
    if chiral is None:
        chiral = build_chiral(original, ds, chiral_seed, names)
    timing["chiral_training"] = time.perf_counter() - t0

    t1 = time.perf_counter()
    pool, diag = iand_candidates(original, chiral, ds, names, cap)
    eps, min_pts = dbscan
    if len(pool):
        crng = np.random.default_rng(cluster_seed)
        order = np.arange(len(pool))
        limit = shap_cfg.explain_limit(budget)
        if len(pool) > limit:
            order = crng.permutation(len(pool))
        explained, rest = order[:limit], order[limit:]
        background = shapley.select_background(ds, shap_cfg.background_size, bg_seed)
        phi, _ = shapley.explain_many(original, pool[explained], background, shap_cfg.mode,
                                      shap_cfg.n_coalitions, bg_seed)
        cl = clustering.dbscan(phi, eps, min_pts)
        groups, labels = _ordered_groups(cl.assignments, crng)
        groups = [explained[g] for g in groups]
        if len(rest):
            groups.append(rest)
            labels.append(UNEXPLAINED)
        diag.update(clusters=cl.n_clusters, noise=cl.noise_count, unexplained=int(len(rest)))
    else:
        groups, labels = [], []
        diag.update(clusters=0, noise=0)
    taken: set = set()
    picks, owner = round_robin(groups, budget, pool, taken)
    seeds = [pool[i] for i in picks]
    flags = [True] * len(picks)
    cids = [labels[g] for g in owner]
    fill = 0
    if len(picks) < budget:
        order = np.random.default_rng(fill_seed).permutation(len(ds))
        extra = _distinct_in_order(ds.X, order, budget - len(picks), taken)
        seeds += [ds.X[i] for i in extra]
        flags += [False] * len(extra)
        cids += [-1] * len(extra)
        fill = len(extra)
    timing["selection"] = time.perf_counter() - t1
    diag["pool"] = int(len(pool))
    seeds_arr = np.array(seeds, dtype=np.int64).reshape(-1, ds.schema.n_attributes)
    return SeedSet(seeds_arr, "iand", budget, np.array(flags, dtype=bool), fill,
                   np.array(cids, dtype=np.int64), diag, timing)


def make_seeds(strategy: str, model: Model, ds: Dataset, budget: int, rng_seed: int, protected=None,
               k: int = DEFAULT_K, dbscan=(clustering.DBSCAN_EPS, clustering.DBSCAN_MIN_PTS),
               shap_cfg: ShapConfig | None = None, chiral: Model | None = None) -> SeedSet:
    if strategy == "random":
        return seed_random(ds, budget, rng_seed)
    if strategy == "cluster":
        return seed_cluster(ds, budget, k, rng_seed)
    if strategy == "iand":
        return seed_iand(model, ds, budget, dbscan, shap_cfg, rng_seed, protected, chiral)
    raise ValueError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")
