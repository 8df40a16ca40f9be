"""Semi-directed AEQUITAS: seeds are checked as they are, then each IDI found
starts a random walk over non-protected attributes with a per-walk attribute
preference that grows whenever a move lands on a new IDI."""
from __future__ import annotations

import time

import numpy as np

from fairlens.discrimination import DEFAULT_CAP
from fairlens.generation.core import (Collector, GenBudget, GenResult, _record, allowances, domain_steps,
                                      local_walks, oracle_for, seed_rows, shift)
from fairlens.rng import derive_seed

PROBABILITY_STEP = 0.001


def generate_aequitas(model, seeds, protected=None, budget: GenBudget | None = None, rng_seed: int = 0,
                      cap: int = DEFAULT_CAP, step: float = PROBABILITY_STEP) -> GenResult:
    budget = budget or GenBudget()
    t0 = time.perf_counter()
    oracle = oracle_for(model, protected, cap)
    X = seed_rows(seeds, budget)
    col = Collector()

    labels, is_idi, W, counts = oracle.check_many(X)
    explored = len(X)
    starts, wits = [], []
    for i in np.flatnonzero(is_idi):
        if col.add(_record(oracle, X[i], W[i], labels[i], counts[i], "global")):
            starts.append(X[i])
            wits.append(W[i])
    init = col.counts["global"]

    free = np.array([i for i in range(X.shape[1]) if i not in oracle.idx], dtype=np.int64)
    doms = domain_steps(model.schema, free)
    steps = allowances(len(starts), budget.local_limit, budget.max_explored - explored)

    probs_last: dict[int, int] = {}

    def propose(k, x, w, rng, probs):
        j = int(rng.choice(len(free), p=probs))
        probs_last[k] = j
        return shift(x, int(free[j]), 1 if rng.random() < 0.5 else -1, doms[j])

    def accept(k, probs):
        probs[probs_last[k]] += step
        probs /= probs.sum()

    if len(free):
        explored += local_walks(oracle, np.array(starts, dtype=np.int64).reshape(-1, X.shape[1]),
                                np.array(wits, dtype=np.int64).reshape(-1, X.shape[1]), steps, propose, accept,
                                derive_seed(rng_seed, "aequitas-local"), col,
                                lambda k: np.full(len(free), 1.0 / len(free)))
    return GenResult(col.records, explored, (col.counts["global"], col.counts["local"]),
                     time.perf_counter() - t0, "aequitas", init)
