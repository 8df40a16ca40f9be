"""Gradient-guided generation in the style of ADF (MLP only).

Global search moves a seed along the loss-gradient sign on which the seed and
its most divergent protected variant agree.  Local search perturbs the found
IDIs, preferring attributes with small gradients, which keep the prediction
(and so the discrimination) stable.
"""
from __future__ import annotations

import time

import numpy as np

from fairlens.discrimination import DEFAULT_CAP
from fairlens.generation.core import (Collector, GenBudget, GenResult, _record, allowances, domain_steps,
                                      local_walks, oracle_for, seed_rows)
from fairlens.models.base import NotDifferentiable
from fairlens.rng import derive_seed

GLOBAL_STEPS = 10
LOCAL_CHOICES = ("inverse", "argmin")
_EPS = 1e-12


def _step_along(X: np.ndarray, direction: np.ndarray, doms) -> np.ndarray:
    """Move each row one domain position per nonzero direction entry, clipped to the domain."""
    Y = X.copy()
    for j, (col, dom) in enumerate(doms):
        d = direction[:, j]
        nz = np.flatnonzero(d)
        if len(nz) == 0:
            continue
        pos = np.searchsorted(dom, X[nz, col]) + d[nz]
        Y[nz, col] = dom[np.clip(pos, 0, len(dom) - 1)]
    return Y


def _worst_variants(model, oracle, X: np.ndarray) -> np.ndarray:
    """The protected variant of each row with the largest probability gap."""
    out = np.empty_like(X)
    p = model.predict_proba(X)
    for i, x in enumerate(X):
        V = oracle.variants(x)
        if len(V) == 0:
            out[i] = x
            continue
        out[i] = V[int(np.argmax(np.abs(model.predict_proba(V) - p[i])))]
    return out


def generate_adf(model, seeds, protected=None, budget: GenBudget | None = None, rng_seed: int = 0,
                 cap: int = DEFAULT_CAP, global_steps: int = GLOBAL_STEPS, local_choice: str = "inverse") -> GenResult:
    """ADF-style generation.

    ``local_choice`` picks the local attribute either with probability
    inversely proportional to its mean absolute gradient (``inverse``) or
    always the smallest one (``argmin``).
    """
    if model.kind != "MLP":
        raise NotDifferentiable(f"gradient-guided generation needs an MLP, got {model.kind}")
    if local_choice not in LOCAL_CHOICES:
        raise ValueError(f"local_choice must be one of {LOCAL_CHOICES}")
    budget = budget or GenBudget()
    t0 = time.perf_counter()
    oracle = oracle_for(model, protected, cap)
    X = seed_rows(seeds, budget)
    d = X.shape[1]
    free = np.array([i for i in range(d) if i not in oracle.idx], dtype=np.int64)
    doms = list(zip(free, domain_steps(model.schema, free)))
    col = Collector()
    cap_total = budget.max_explored

    # global phase: all seeds advance together, a seed stops once it is an IDI or stuck
    cur = X.copy()
    alive = np.ones(len(X), dtype=bool)
    explored = 0
    starts, wits = [], []
    init = 0
    for it in range(global_steps + 1):
        idx = np.flatnonzero(alive)
        if len(idx) == 0 or explored >= cap_total:
            break
        idx = idx[: cap_total - explored]
        labels, is_idi, W, counts = oracle.check_many(cur[idx])
        explored += len(idx)
        for j, i in enumerate(idx):
            if is_idi[j]:
                alive[i] = False
                if col.add(_record(oracle, cur[i], W[j], labels[j], counts[j], "global")):
                    starts.append(cur[i])
                    wits.append(W[j])
                    init += it == 0
        if it == global_steps:
            break
        idx = idx[~is_idi]
        if len(idx) == 0:
            break
        Xa = cur[idx]
        Va = _worst_variants(model, oracle, Xa)
        g, gv = model.input_gradient(Xa), model.input_gradient(Va)
        # loss gradient sign: raising the probability raises the loss when the label is 0
        s = np.where(labels[~is_idi] == 0, 1, -1)[:, None]
        sg, sv = np.sign(g[:, free]) * s, np.sign(gv[:, free]) * s
        direction = np.where(sg == sv, sg, 0).astype(np.int64)
        moved = _step_along(Xa, direction, doms)
        stuck = np.all(moved == Xa, axis=1)
        alive[idx[stuck]] = False
        cur[idx] = moved

    global_count = col.counts["global"]
    steps = allowances(len(starts), budget.local_limit, cap_total - explored)

    def propose(k, x, w, rng, state):
        grad = 0.5 * (np.abs(model.input_gradient(x)) + np.abs(model.input_gradient(w)))[free]
        if local_choice == "argmin":
            j = int(np.argmin(grad))
        else:
            p = 1.0 / (grad + _EPS)
            j = int(rng.choice(len(free), p=p / p.sum()))
        direction = np.zeros((1, len(free)), dtype=np.int64)
        direction[0, j] = 1 if rng.random() < 0.5 else -1
        cand = _step_along(x[None, :], direction, doms)[0]
        if np.array_equal(cand, x):
            direction[0, j] *= -1
            cand = _step_along(x[None, :], direction, doms)[0]
        return cand

    if len(free) and starts:
        explored += local_walks(oracle, np.array(starts, dtype=np.int64), np.array(wits, dtype=np.int64), steps,
                                propose, lambda k, s: None, derive_seed(rng_seed, "adf-local"), col)
    return GenResult(col.records, explored, (global_count, col.counts["local"]),
                     time.perf_counter() - t0, "adf", init, {"global_steps": global_steps, "local_choice": local_choice})
