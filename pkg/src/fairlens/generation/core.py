"""Budget accounting, results and the batched local walk shared by the engines."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from fairlens.discrimination import DEFAULT_CAP, IdiRecord, Oracle
from fairlens.rng import stream


@dataclass(frozen=True)
class GenBudget:
    """Seed, global and local limits.

    At most ``global_limit * (1 + local_limit)`` instances are evaluated.
    """
    seed_limit: int = 100
    global_limit: int = 100
    local_limit: int = 100

    def __post_init__(self):
        if min(self.seed_limit, self.global_limit) < 1 or self.local_limit < 0:
            raise ValueError("seed and global limits must be positive, local limit non-negative")
        if self.seed_limit > self.global_limit:
            raise ValueError(f"seed_limit {self.seed_limit} exceeds global_limit {self.global_limit}")

    @property
    def max_explored(self) -> int:
        return self.global_limit * (1 + self.local_limit)

    @classmethod
    def parse(cls, text: str) -> "GenBudget":
        """``"G,L"`` (seed limit = G) or ``"S,G,L"``."""
        parts = [int(p) for p in str(text).split(",")]
        if len(parts) == 2:
            return cls(parts[0], parts[0], parts[1])
        if len(parts) == 3:
            return cls(*parts)
        raise ValueError(f"budget {text!r} must look like G,L or S,G,L")


@dataclass
class GenResult:
    idis: list[IdiRecord]
    explored: int
    per_phase: tuple[int, int]
    wall_time: float = 0.0
    engine: str = ""
    init_count: int = 0
    diagnostics: dict = field(default_factory=dict)

    @property
    def total(self) -> int:
        return len(self.idis)

    def instances(self) -> np.ndarray:
        if not self.idis:
            return np.zeros((0, 0), dtype=np.int64)
        return np.array([r.instance for r in self.idis], dtype=np.int64)

    def to_dict(self, timing: bool = True) -> dict:
        d = {
            "engine": self.engine,
            "total": self.total,
            "explored": self.explored,
            "init": self.init_count,
            "global": self.per_phase[0],
            "local": self.per_phase[1],
            "diagnostics": self.diagnostics,
            "idis": [r.to_dict() for r in self.idis],
        }
        if timing:
            d["wall_time"] = self.wall_time
        return d

    @classmethod
    def from_dict(cls, d) -> "GenResult":
        return cls([IdiRecord.from_dict(r) for r in d["idis"]], d["explored"], (d["global"], d["local"]),
                   d.get("wall_time", 0.0), d.get("engine", ""), d.get("init", 0), d.get("diagnostics", {}))


class Collector:
    """Deduplicating record store that keeps first-discovery provenance."""

    def __init__(self):
        self.records: list[IdiRecord] = []
        self._seen: set = set()
        self.counts = {"global": 0, "local": 0}

    def add(self, rec: IdiRecord | None) -> bool:
        if rec is None or rec.instance in self._seen:
            return False
        self._seen.add(rec.instance)
        self.records.append(rec)
        self.counts[rec.provenance] += 1
        return True


def seed_rows(seeds, budget: GenBudget) -> np.ndarray:
    X = np.asarray(getattr(seeds, "seeds", seeds), dtype=np.int64)
    if X.ndim != 2 or len(X) == 0:
        raise ValueError("seeds must be a non-empty set of instances")
    return X[: budget.seed_limit]


def domain_steps(schema, free: np.ndarray):
    """Sorted domain arrays for the free attributes, used for +/-1 domain moves."""
    return [np.asarray(schema.attributes[i].domain, dtype=np.int64) for i in free]


def shift(x: np.ndarray, attr: int, direction: int, dom: np.ndarray) -> np.ndarray:
    """``x`` with ``attr`` moved one domain position; the sign flips at a boundary."""
    pos = int(np.searchsorted(dom, x[attr]))
    nxt = pos + direction
    if not 0 <= nxt < len(dom):
        nxt = pos - direction
    y = x.copy()
    if 0 <= nxt < len(dom):
        y[attr] = dom[nxt]
    return y


def allowances(n_walks: int, local_limit: int, remaining: int) -> np.ndarray:
    """Steps granted to each walk when walks draw in order on a shared cap."""
    out = np.zeros(n_walks, dtype=np.int64)
    for k in range(n_walks):
        out[k] = min(local_limit, max(0, remaining))
        remaining -= out[k]
    return out


def local_walks(oracle: Oracle, starts: np.ndarray, witnesses: np.ndarray, steps: np.ndarray,
                propose, accept, rng_seed: int, collector: Collector, state_init=None) -> int:
    """Run one walk per start, all advanced in lock step.

    ``propose(k, x, w, rng, state)`` returns the next candidate for walk ``k``;
    an IDI candidate becomes the walk's position and ``accept`` updates its
    state.  Each walk draws from its own stream so walks are independent of
    one another and of the cap on other walks.  Returns evaluations made.
    """
    n = len(starts)
    if n == 0:
        return 0
    rngs = [stream(rng_seed, k) for k in range(n)]
    cur = starts.copy()
    wit = witnesses.copy()
    states = [state_init(k) if state_init else None for k in range(n)]
    explored = 0
    for t in range(int(steps.max(initial=0))):
        active = np.flatnonzero(steps > t)
        cands = np.array([propose(k, cur[k], wit[k], rngs[k], states[k]) for k in active], dtype=np.int64)
        labels, is_idi, W, counts = oracle.check_many(cands)
        explored += len(active)
        for j, k in enumerate(active):
            if not is_idi[j]:
                continue
            collector.add(_record(oracle, cands[j], W[j], labels[j], counts[j], "local"))
            cur[k], wit[k] = cands[j], W[j]
            accept(k, states[k])
    return explored


def _record(oracle: Oracle, x, w, label, count, phase) -> IdiRecord:
    return IdiRecord(tuple(int(v) for v in x), tuple(int(v) for v in w), (int(label), 1 - int(label)),
                     phase, oracle.protected, oracle.exhaustive, int(count))


def oracle_for(model, protected, cap: int = DEFAULT_CAP) -> Oracle:
    names = tuple(protected) if protected else tuple(model.schema.protected_names)
    if not names:
        raise ValueError("no protected attribute given")
    return Oracle(model, names, cap)
