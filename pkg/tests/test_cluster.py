import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fairlens.cluster import NOISE, dbscan, kmeans, medoids, neighbourhoods
from oracles import dbscan_reference, same_partition


def blobs(rng, centres, n=20, spread=0.01):
    return np.vstack([c + rng.normal(0, spread, size=(n, len(c))) for c in centres])


def test_two_blobs(rng):
    P = blobs(rng, [np.zeros(2), np.full(2, 5.0)])
    cl = dbscan(P, 0.09, 5)
    assert cl.n_clusters == 2 and cl.noise_count == 0
    assert len(set(cl.assignments[:20])) == 1 and len(set(cl.assignments[20:])) == 1


def test_all_noise():
    P = np.arange(10, dtype=float)[:, None]
    cl = dbscan(P, 0.5, 2)
    assert cl.noise_count == 10 and cl.n_clusters == 0


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        dbscan([[0.0, 1.0], [1.0]], 0.1, 2)


def test_bad_parameters():
    with pytest.raises(ValueError):
        dbscan([[0.0]], 0.0, 2)
    with pytest.raises(ValueError):
        dbscan([[0.0]], 0.1, 0)


def test_empty_input():
    assert dbscan(np.zeros((0, 3)), 0.1, 2).point_count == 0


def test_eps_is_inclusive():
    cl = dbscan([[0.0], [0.5]], 0.5, 2)
    assert cl.n_clusters == 1


@pytest.mark.parametrize("seed", range(5))
def test_dbscan_matches_reference(seed):
    rng = np.random.default_rng(seed)
    P = np.vstack([rng.normal(c, 0.05, size=(60, 2)) for c in rng.random((3, 2))] + [rng.random((20, 2))])
    cl = dbscan(P, 0.06, 6)
    clusters, amb = dbscan_reference(P, 0.06, 6)
    assert same_partition(cl.assignments, clusters, amb)
    # core flags from a full distance matrix
    D = np.sqrt(((P[:, None] - P[None]) ** 2).sum(-1))
    assert np.array_equal(cl.core, (D <= 0.06).sum(1) >= 6)


def test_neighbourhoods_match_distance_matrix(rng):
    P = rng.random((300, 3))
    D = np.sqrt(((P[:, None] - P[None]) ** 2).sum(-1))
    for i, nb in enumerate(neighbourhoods(P, 0.2, chunk=64)):
        assert sorted(nb.tolist()) == np.flatnonzero(D[i] <= 0.2).tolist()


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31))
def test_dbscan_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    P = np.vstack([rng.normal(c, 0.04, size=(30, 2)) for c in rng.random((2, 2))])
    perm = rng.permutation(len(P))
    a = dbscan(P, 0.05, 5)
    b = dbscan(P[perm], 0.05, 5)
    clusters, amb = dbscan_reference(P, 0.05, 5)
    assert np.array_equal(a.core[perm], b.core)
    back = np.empty_like(b.assignments)
    back[perm] = b.assignments
    assert same_partition(a.assignments, clusters, amb)
    assert same_partition(back, clusters, amb)


def test_kmeans_separated_blobs(rng):
    P = blobs(rng, [np.zeros(2), np.full(2, 3.0)], n=25)
    cl = kmeans(P, 2, rng_seed=1)
    assert len(set(cl.assignments[:25])) == 1 and len(set(cl.assignments[25:])) == 1
    assert cl.assignments[0] != cl.assignments[-1]


def test_kmeans_k_equals_n(rng):
    P = rng.random((12, 3))
    cl = kmeans(P, 12, rng_seed=0)
    assert sorted(cl.assignments.tolist()) == list(range(12))
    assert cl.inertia_history[-1] == pytest.approx(0.0, abs=1e-12)


def test_kmeans_inertia_non_increasing(rng):
    P = rng.random((400, 4))
    h = kmeans(P, 6, rng_seed=3).inertia_history
    assert all(b <= a + 1e-9 for a, b in zip(h, h[1:]))


def test_kmeans_nearest_centroid(rng):
    P = rng.random((200, 3))
    cl = kmeans(P, 5, rng_seed=2)
    d2 = ((P[:, None, :] - cl.centroids[None]) ** 2).sum(-1)
    assert np.array_equal(np.argmin(d2, axis=1), cl.assignments)


def test_kmeans_deterministic(rng):
    P = rng.random((100, 2))
    assert np.array_equal(kmeans(P, 4, 9).assignments, kmeans(P, 4, 9).assignments)


def test_kmeans_bad_k(rng):
    with pytest.raises(ValueError):
        kmeans(rng.random((5, 2)), 6)


def test_medoids_are_distinct_points(rng):
    P = rng.random((80, 2))
    idx = medoids(P, 10, 0)
    assert len(set(idx.tolist())) == 10 and idx.max() < 80


def test_noise_label_constant():
    assert NOISE == -1
