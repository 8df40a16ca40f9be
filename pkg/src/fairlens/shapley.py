"""Model-agnostic Shapley values with interventional masking.

The value of a coalition ``S`` for instance ``x`` is the mean model output
(probability of class 1) over background rows ``b`` of the hybrid that takes
``x`` on ``S`` and ``b`` elsewhere.  Exact mode enumerates coalitions; the
sampled mode fits the Shapley kernel regression on drawn coalitions with the
efficiency constraint imposed exactly.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from fairlens.cluster import medoids

EXACT_LIMIT = 20
AUTO_EXACT_MAX = 16
# auto mode: mean hybrids per background row above which sampling is used instead
AUTO_PAIR_COST = 4096
AUTO_COALITIONS = 512
DEFAULT_BACKGROUND = 25
_CHUNK_ROWS = 250_000


class ShapError(ValueError):
    pass


@dataclass
class ShapVector:
    values: np.ndarray
    base_value: float
    instance: np.ndarray
    mode: str
    output: float

    @property
    def reconstruction_error(self) -> float:
        return abs(self.base_value + float(np.sum(self.values)) - self.output)

    def to_dict(self, names=None) -> dict:
        d = {
            "instance": [int(v) for v in self.instance],
            "values": [float(v) for v in self.values],
            "base_value": float(self.base_value),
            "output": float(self.output),
            "mode": self.mode,
            "reconstruction_error": self.reconstruction_error,
        }
        if names is not None:
            d["attributes"] = list(names)
        return d


def _rows(background) -> np.ndarray:
    X = getattr(background, "X", background)
    X = np.atleast_2d(np.asarray(X, dtype=np.int64))
    if len(X) == 0:
        raise ShapError("background is empty")
    return X


def base_value(model, background) -> float:
    """Mean probability output over the background rows."""
    return float(np.mean(model.predict_proba(_rows(background))))


def select_background(ds, size: int = DEFAULT_BACKGROUND, rng_seed: int = 0) -> np.ndarray:
    """Up to ``size`` rows of ``ds``: the medoids of a k-means clustering of its scaled rows."""
    X = np.asarray(getattr(ds, "X", ds))
    uniq = np.unique(X, axis=0)
    if len(uniq) <= size:
        return uniq
    span = np.maximum(X.max(axis=0) - X.min(axis=0), 1)
    idx = medoids((uniq - X.min(axis=0)) / span, size, rng_seed)
    return uniq[idx]


@functools.lru_cache(maxsize=None)
def _bits(m: int) -> np.ndarray:
    a = np.arange(1 << m)
    return ((a[:, None] >> np.arange(m)[None, :]) & 1).astype(bool)


@functools.lru_cache(maxsize=None)
def _shapley_operator(m: int) -> np.ndarray:
    """Matrix ``M`` with ``phi = v @ M`` for an m-player game tabulated by bitmask."""
    bits = _bits(m)
    size = bits.sum(axis=1)
    w = np.array([math.factorial(s) * math.factorial(m - s - 1) / math.factorial(m) for s in range(m)])
    M = np.where(bits, w[np.maximum(size - 1, 0)][:, None], -w[np.minimum(size, m - 1)][:, None])
    return M


def _predict_chunked(model, H: np.ndarray) -> np.ndarray:
    if len(H) <= _CHUNK_ROWS:
        return model.predict_proba(H)
    return np.concatenate([model.predict_proba(H[s:s + _CHUNK_ROWS]) for s in range(0, len(H), _CHUNK_ROWS)])


def shap_exact_many(model, X, background) -> tuple[np.ndarray, float, np.ndarray]:
    """Exact Shapley values for every row of ``X``.

    Only features on which ``x`` and a background row differ can matter for
    that row, so each (x, b) pair is an ``m``-player game with ``m`` the number
    of differing features; averaging the per-pair values gives the values of the
    averaged game.  Returns (values n x d, base value, model outputs).
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.int64))
    B = _rows(background)
    n, d = X.shape
    if d > EXACT_LIMIT:
        raise ShapError(f"{d} attributes exceed the exact-mode limit of {EXACT_LIMIT}; use shap_sampled")
    phi = np.zeros((n, d))
    pb = model.predict_proba(B)
    base = float(pb.mean())
    diff = X[:, None, :] != B[None, :, :]  # n x r x d
    msize = diff.sum(axis=2)
    for m in np.unique(msize):
        m = int(m)
        if m == 0:
            continue
        pi, bi = np.nonzero(msize == m)
        bits = _bits(m)
        M = _shapley_operator(m)
        per = max(1, _CHUNK_ROWS // (1 << m))
        for s in range(0, len(pi), per):
            xi, bj = pi[s:s + per], bi[s:s + per]
            D = np.nonzero(diff[xi, bj])[1].reshape(len(xi), m)
            H = np.repeat(B[bj][:, None, :], 1 << m, axis=1)
            xs = np.take_along_axis(X[xi], D, axis=1)
            bs = np.take_along_axis(B[bj], D, axis=1)
            hyb = np.where(bits[None, :, :], xs[:, None, :], bs[:, None, :])
            cols = np.broadcast_to(D[:, None, :], hyb.shape)
            np.put_along_axis(H, cols, hyb, axis=2)
            v = _predict_chunked(model, H.reshape(-1, d)).reshape(len(xi), 1 << m)
            contrib = v @ M
            np.add.at(phi, (xi[:, None], D), contrib)
    phi /= len(B)
    out = model.predict_proba(X)
    return phi, base, out


def shap_exact(model, x, background) -> ShapVector:
    x = np.asarray(x, dtype=np.int64)
    phi, base, out = shap_exact_many(model, x[None, :], background)
    return ShapVector(phi[0], base, x, "exact", float(out[0]))


def _kernel_weight(d: int, s: np.ndarray) -> np.ndarray:
    s = np.asarray(s)
    comb = np.array([math.comb(d, int(k)) for k in s], dtype=float)
    return (d - 1) / (comb * s * (d - s))


def _coalitions(d: int, n_coalitions: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Coalition masks (excluding empty and full) with regression weights."""
    proper = (1 << d) - 2
    if n_coalitions >= proper:
        masks = _bits(d)[1:-1]
        return masks, _kernel_weight(d, masks.sum(axis=1))
    sizes = np.arange(1, d)
    p = (d - 1) / (sizes * (d - sizes))
    p = p / p.sum()
    half = n_coalitions // 2
    drawn = rng.choice(sizes, size=half, p=p)
    masks = np.zeros((2 * half, d), dtype=bool)
    for i, s in enumerate(drawn):
        chosen = rng.choice(d, size=int(s), replace=False)
        masks[2 * i, chosen] = True
        masks[2 * i + 1] = ~masks[2 * i]
    # sampled from the kernel itself, so every draw carries equal weight
    return masks, np.ones(len(masks))


def shap_sampled(model, x, background, n_coalitions: int, rng_seed: int = 0) -> ShapVector:
    """Kernel-regression Shapley estimate with exact efficiency.

    ``n_coalitions`` at or above ``2**d - 2`` enumerates every coalition with
    its exact kernel weight, which reproduces the exact values.
    """
    x = np.asarray(x, dtype=np.int64)
    B = _rows(background)
    d = len(x)
    if n_coalitions < 2 * d + 2:
        raise ShapError(f"need at least {2 * d + 2} coalitions for {d} attributes")
    rng = np.random.default_rng(rng_seed)
    masks, w = _coalitions(d, n_coalitions, rng)
    base = float(model.predict_proba(B).mean())
    fx = float(model.predict_proba(x[None, :])[0])
    H = np.where(masks[:, None, :], x[None, None, :], B[None, :, :]).reshape(-1, d)
    v = _predict_chunked(model, H).reshape(len(masks), len(B)).mean(axis=1)
    total = fx - base
    Zm = masks.astype(float)
    A = Zm[:, :-1] - Zm[:, [-1]]
    t = v - base - Zm[:, -1] * total
    sw = np.sqrt(w)
    sol, _, rank, _ = np.linalg.lstsq(A * sw[:, None], t * sw, rcond=None)
    if rank < d - 1:
        raise ShapError("singular coalition system; use more coalitions")
    phi = np.append(sol, total - sol.sum())
    return ShapVector(phi, base, x, "sampled", fx)


def exact_cost(X, background) -> np.ndarray:
    """Mean number of hybrids per background row that exact mode evaluates for each row of ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=np.int64))
    B = _rows(background)
    m = (X[:, None, :] != B[None, :, :]).sum(axis=2)
    return np.mean(2.0 ** m, axis=1)


def explain_many(model, X, background, mode: str = "auto", n_coalitions: int = AUTO_COALITIONS,
                 rng_seed: int = 0) -> tuple[np.ndarray, float]:
    """Shapley vectors for every row of ``X``.

    ``auto`` uses exact mode for rows of at most 16 attributes whose enumeration
    averages at most ``AUTO_PAIR_COST`` hybrids per background row, and the
    sampled mode with ``n_coalitions`` for the rest.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.int64))
    n, d = X.shape
    if mode not in ("auto", "exact", "sampled"):
        raise ShapError(f"unknown mode {mode!r}")
    if mode == "exact":
        use_exact = np.ones(n, dtype=bool)
    elif mode == "sampled" or d > AUTO_EXACT_MAX:
        use_exact = np.zeros(n, dtype=bool)
    else:
        use_exact = exact_cost(X, background) <= AUTO_PAIR_COST
    phi = np.zeros((n, d))
    base = base_value(model, background)
    if use_exact.any():
        phi[use_exact], base, _ = shap_exact_many(model, X[use_exact], background)
    for i in np.flatnonzero(~use_exact):
        phi[i] = shap_sampled(model, X[i], background, n_coalitions, rng_seed + int(i)).values
    return phi, base


def explain(model, x, background, mode: str = "auto", n_coalitions: int = AUTO_COALITIONS, rng_seed: int = 0) -> ShapVector:
    x = np.asarray(x, dtype=np.int64)
    if mode == "auto":
        ok = len(x) <= AUTO_EXACT_MAX and exact_cost(x, background)[0] <= AUTO_PAIR_COST
        mode = "exact" if ok else "sampled"
    if mode == "exact":
        return shap_exact(model, x, background)
    return shap_sampled(model, x, background, n_coalitions, rng_seed)
