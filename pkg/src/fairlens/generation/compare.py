"""Repeated seeding + generation runs, summarised per (strategy, engine)."""
from __future__ import annotations

import csv
import io
import statistics
import time
from dataclasses import dataclass, field

from fairlens.generation.adf import generate_adf
from fairlens.generation.aequitas import generate_aequitas
from fairlens.generation.core import GenBudget, GenResult
from fairlens.rng import derive_seed

ENGINES = {"aequitas": generate_aequitas, "adf": generate_adf}
COMPARE_COLUMNS = ("dataset", "protected", "strategy", "engine", "trials", "mean_total", "mean_init",
                   "mean_global", "mean_local", "mean_explored", "rate", "mean_wall_time")


def run_engine(engine: str, model, seeds, protected, budget: GenBudget, rng_seed: int, **kw) -> GenResult:
    if engine not in ENGINES:
        raise ValueError(f"unknown engine {engine!r}; choose from {sorted(ENGINES)}")
    return ENGINES[engine](model, seeds, protected, budget, rng_seed, **kw)


@dataclass
class ComparisonRow:
    strategy: str
    engine: str
    totals: list[int] = field(default_factory=list)
    inits: list[int] = field(default_factory=list)
    globals_: list[int] = field(default_factory=list)
    locals_: list[int] = field(default_factory=list)
    explored: list[int] = field(default_factory=list)
    wall: list[float] = field(default_factory=list)

    def add(self, r: GenResult, seconds: float) -> None:
        self.totals.append(r.total)
        self.inits.append(r.init_count)
        self.globals_.append(r.per_phase[0])
        self.locals_.append(r.per_phase[1])
        self.explored.append(r.explored)
        self.wall.append(seconds)

    @property
    def mean_total(self) -> float:
        return statistics.fmean(self.totals)

    def summary(self) -> dict:
        explored = sum(self.explored)
        return {
            "strategy": self.strategy, "engine": self.engine, "trials": len(self.totals),
            "mean_total": self.mean_total, "mean_init": statistics.fmean(self.inits),
            "mean_global": statistics.fmean(self.globals_), "mean_local": statistics.fmean(self.locals_),
            "mean_explored": statistics.fmean(self.explored),
            "rate": sum(self.totals) / explored if explored else 0.0,
            "mean_wall_time": statistics.fmean(self.wall),
        }


def compare_engines(configs, model, ds, protected, budget: GenBudget | None = None, trials: int = 10,
                    rng_seed: int = 0, seed_kwargs: dict | None = None) -> list[ComparisonRow]:
    """Run every (strategy, engine) pair ``trials`` times.

    Trial ``t`` uses the same seeding and generation sub-seeds for every pair,
    so pairs sharing a strategy share their seed sets.
    """
    from fairlens.seeding import make_seeds

    if trials < 1:
        raise ValueError("trials must be at least 1")
    budget = budget or GenBudget()
    rows = [ComparisonRow(s, e) for s, e in configs]
    for t in range(trials):
        seed_sets = {}
        for row in rows:
            if row.strategy not in seed_sets:
                seed_sets[row.strategy] = make_seeds(row.strategy, model, ds, budget.seed_limit,
                                                     derive_seed(rng_seed, "seeds", t), protected,
                                                     **(seed_kwargs or {}))
            t0 = time.perf_counter()
            r = run_engine(row.engine, model, seed_sets[row.strategy], protected, budget,
                           derive_seed(rng_seed, "generate", t))
            row.add(r, time.perf_counter() - t0)
    return rows


def comparison_csv(rows: list[ComparisonRow], dataset: str, protected) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, COMPARE_COLUMNS, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({"dataset": dataset, "protected": "+".join(protected), **row.summary()})
    return buf.getvalue()
