"""DBSCAN and k-means over real vectors."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

NOISE = -1
DBSCAN_EPS = 0.09
DBSCAN_MIN_PTS = 10


@dataclass
class Clustering:
    assignments: np.ndarray
    params: dict
    point_count: int
    core: np.ndarray | None = None
    centroids: np.ndarray | None = None
    inertia_history: list[float] = field(default_factory=list)

    @property
    def n_clusters(self) -> int:
        a = self.assignments
        return int(a.max()) + 1 if a.size and a.max() >= 0 else 0

    @property
    def noise_count(self) -> int:
        return int(np.sum(self.assignments == NOISE))

    def members(self, c: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == c)


def _as_points(points) -> np.ndarray:
    try:
        P = np.asarray(points, dtype=float)
    except ValueError:
        raise ValueError("all vectors must have the same dimension") from None
    if P.ndim == 1:
        P = P.reshape(-1, 1) if P.size else P.reshape(0, 1)
    if P.ndim != 2:
        raise ValueError("all vectors must have the same dimension")
    return P


def neighbourhoods(P: np.ndarray, eps: float, chunk: int = 2048) -> list[np.ndarray]:
    """Indices within distance ``eps`` (inclusive) of each point, itself included."""
    sq = np.einsum("ij,ij->i", P, P)
    out = []
    eps2 = eps * eps
    for s in range(0, len(P), chunk):
        block = P[s:s + chunk]
        d2 = sq[s:s + chunk, None] + sq[None, :] - 2.0 * block @ P.T
        for i, row in enumerate(d2):
            # exact recheck near the boundary, the expansion above loses precision
            cand = np.flatnonzero(row <= eps2 + 1e-9)
            diff = P[cand] - block[i]
            out.append(cand[np.einsum("ij,ij->i", diff, diff) <= eps2])
    return out


def dbscan(points, eps: float = DBSCAN_EPS, min_pts: int = DBSCAN_MIN_PTS) -> Clustering:
    """Classical DBSCAN with Euclidean distance.

    A point is core when at least ``min_pts`` points (itself included) lie
    within ``eps``.  Clusters are numbered in discovery order while scanning the
    input; a border point reachable from several clusters joins the first.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if min_pts < 1:
        raise ValueError("min_pts must be at least 1")
    P = _as_points(points)
    n = len(P)
    nbrs = neighbourhoods(P, eps) if n else []
    core = np.array([len(nb) >= min_pts for nb in nbrs], dtype=bool)
    labels = np.full(n, NOISE, dtype=np.int64)
    cid = 0
    for i in range(n):
        if labels[i] != NOISE or not core[i]:
            continue
        labels[i] = cid
        queue = deque([i])
        while queue:
            p = queue.popleft()
            if not core[p]:
                continue
            for q in nbrs[p]:
                if labels[q] == NOISE:
                    labels[q] = cid
                    if core[q]:
                        queue.append(q)
        cid += 1
    return Clustering(labels, {"eps": eps, "min_pts": min_pts}, n, core=core)


def _kmeanspp(P: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(P)
    centers = [int(rng.integers(n))]
    d2 = np.sum((P - P[centers[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            # every point coincides with a centre already; fall back to unused points
            rest = np.setdiff1d(np.arange(n), centers)
            nxt = int(rng.choice(rest))
        else:
            nxt = int(rng.choice(n, p=d2 / total))
        centers.append(nxt)
        d2 = np.minimum(d2, np.sum((P - P[nxt]) ** 2, axis=1))
    return P[centers].copy()


def _assign(P, C):
    d2 = np.sum(P * P, axis=1)[:, None] + np.sum(C * C, axis=1)[None, :] - 2.0 * P @ C.T
    lab = np.argmin(d2, axis=1)
    return lab, float(np.sum((P - C[lab]) ** 2))


def kmeans(points, k: int, rng_seed: int = 0, max_iter: int = 100, tol: float = 1e-6) -> Clustering:
    """Lloyd's algorithm from a k-means++ start.

    Stops after ``max_iter`` rounds or when no centroid moves more than ``tol``.
    An empty cluster keeps its previous centroid.  ``inertia_history`` records
    the inertia after every assignment step.
    """
    P = _as_points(points)
    n = len(P)
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in 1..{n}")
    rng = np.random.default_rng(rng_seed)
    C = _kmeanspp(P, k, rng)
    history = []
    lab, inertia = _assign(P, C)
    history.append(inertia)
    for _ in range(max_iter):
        newC = C.copy()
        counts = np.bincount(lab, minlength=k)
        sums = np.zeros_like(C)
        np.add.at(sums, lab, P)
        filled = counts > 0
        newC[filled] = sums[filled] / counts[filled, None]
        shift = np.sqrt(np.sum((newC - C) ** 2, axis=1)).max()
        C = newC
        lab, inertia = _assign(P, C)
        history.append(inertia)
        if shift < tol:
            break
    return Clustering(lab, {"k": k, "rng_seed": rng_seed}, n, centroids=C, inertia_history=history)


def medoids(points, k: int, rng_seed: int = 0) -> np.ndarray:
    """Indices of the points nearest each k-means centroid (distinct, sorted by cluster)."""
    P = _as_points(points)
    cl = kmeans(P, min(k, len(P)), rng_seed)
    chosen = []
    for c in range(len(cl.centroids)):
        d2 = np.sum((P - cl.centroids[c]) ** 2, axis=1)
        for j in np.argsort(d2, kind="stable"):
            if j not in chosen:
                chosen.append(int(j))
                break
    return np.array(chosen, dtype=np.int64)
