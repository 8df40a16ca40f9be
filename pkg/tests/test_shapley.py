import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fairlens.datasets import make_synthetic
from fairlens.models import train
from fairlens.shapley import (
    ShapError,
    base_value,
    exact_cost,
    explain,
    explain_many,
    select_background,
    shap_exact,
    shap_exact_many,
    shap_sampled,
)
from oracles import interventional_game, shapley_reference


class Stub:
    """Probability model defined by a plain function of integer rows."""

    def __init__(self, fn):
        self.fn = fn

    def predict_proba(self, X):
        X = np.asarray(X)
        out = self.fn(np.atleast_2d(X).astype(float))
        return out[0] if X.ndim == 1 else out


@pytest.fixture(scope="module")
def ten():
    ds = make_synthetic(n_attrs=10, n_rows=1500, seed=4, domain_size=5)
    return ds, train("MLP", ds, {"layer_widths": (12, 6, 1), "epochs": 10}, rng_seed=0)


@pytest.mark.parametrize("kind", ["LR", "SVM", "DT", "MLP"])
def test_exact_additivity(kind, synth, synth_models):
    m = synth_models[kind]
    bg = select_background(synth, 10, 0)
    phi, base, out = shap_exact_many(m, synth.X[:50], bg)
    assert np.max(np.abs(base + phi.sum(axis=1) - out)) <= 1e-9


def test_exact_matches_subset_enumeration(synth, synth_models):
    m = synth_models["MLP"]
    bg = synth.X[100:104]
    for x in synth.X[:5]:
        want = shapley_reference(interventional_game(m, x, bg), synth.schema.n_attributes)
        assert np.allclose(shap_exact(m, x, bg).values, want, atol=1e-12)


def test_dummy_feature(synth, synth_models):
    lr = synth_models["LR"].copy()
    w = lr.w.copy()
    w[3] = 0.0
    lr.set_params({"w": w, "b": np.array([lr.b])})
    bg = select_background(synth, 10, 0)
    phi, _, _ = shap_exact_many(lr, synth.X[:100], bg)
    assert np.max(np.abs(phi[:, 3])) <= 1e-9


def test_symmetry():
    m = Stub(lambda X: 1 / (1 + np.exp(-(X[:, 0] * X[:, 1] + 0.3 * X[:, 2]))))
    bg = np.array([[0, 0, 0], [1, 2, 1], [2, 1, 1]])
    phi = shap_exact(m, np.array([3, 3, 1]), bg).values
    assert phi[0] == pytest.approx(phi[1], abs=1e-12)


def test_additive_closed_form():
    g = [lambda v: 0.1 * v, lambda v: 0.05 * v ** 2, lambda v: np.sin(v) / 10]
    m = Stub(lambda X: 0.2 + sum(gi(X[:, i]) for i, gi in enumerate(g)))
    x, b = np.array([1, 3, 2]), np.array([[4, 0, 5]])
    phi = shap_exact(m, x, b).values
    assert np.allclose(phi, [g[i](x[i]) - g[i](b[0, i]) for i in range(3)], atol=1e-12)


def test_constant_model_zero_both_modes():
    m = Stub(lambda X: np.full(len(X), 0.37))
    bg = np.random.default_rng(0).integers(0, 5, size=(6, 5))
    x = np.array([1, 2, 3, 4, 0])
    assert np.allclose(shap_exact(m, x, bg).values, 0.0)
    assert np.allclose(shap_sampled(m, x, bg, 20, 1).values, 0.0, atol=1e-12)
    assert base_value(m, bg) == pytest.approx(0.37)


def test_base_value_hard_outputs():
    bg = np.arange(1000)[:, None]
    m = Stub(lambda X: (X[:, 0] >= 757).astype(float))
    # class-1 base is the share of class-1 outputs, so the class-0 score is its complement
    assert 1 - base_value(m, bg) == pytest.approx(0.757)


def test_linearity():
    f1 = lambda X: 0.1 * X[:, 0] - 0.2 * X[:, 1] + 0.05 * X[:, 0] * X[:, 2]
    f2 = lambda X: 0.3 * X[:, 2] ** 2 - 0.1 * X[:, 1] * X[:, 0]
    bg = np.random.default_rng(1).integers(0, 4, size=(5, 3))
    x = np.array([3, 1, 2])
    a = shap_exact(Stub(f1), x, bg).values
    b = shap_exact(Stub(f2), x, bg).values
    ab = shap_exact(Stub(lambda X: f1(X) + f2(X)), x, bg).values
    assert np.allclose(a + b, ab, atol=1e-12)


def test_sampled_full_enumeration_matches_exact(ten):
    ds, m = ten
    bg = select_background(ds, 10, 0)
    worst = 0.0
    for x in ds.X[:50]:
        e = shap_exact(m, x, bg).values
        s = shap_sampled(m, x, bg, 2 ** 10, rng_seed=0).values
        worst = max(worst, float(np.max(np.abs(e - s))))
    assert worst <= 0.02


def test_sampled_additivity_under_subsampling(ten):
    ds, m = ten
    bg = select_background(ds, 10, 0)
    for i, x in enumerate(ds.X[:20]):
        assert shap_sampled(m, x, bg, 64, rng_seed=i).reconstruction_error <= 1e-9


def test_sampled_deterministic(ten):
    ds, m = ten
    bg = select_background(ds, 10, 0)
    a = shap_sampled(m, ds.X[0], bg, 64, rng_seed=5).values
    assert np.array_equal(a, shap_sampled(m, ds.X[0], bg, 64, rng_seed=5).values)


def test_exact_result_independent_of_background_order(synth, synth_models):
    m = synth_models["MLP"]
    bg = select_background(synth, 8, 0)
    a = shap_exact_many(m, synth.X[:10], bg)[0]
    b = shap_exact_many(m, synth.X[:10], bg[::-1])[0]
    assert np.allclose(a, b, atol=1e-12)


def test_auto_mode_choice(synth, synth_models):
    m = synth_models["MLP"]
    bg = select_background(synth, 10, 0)
    assert explain(m, synth.X[0], bg).mode == "exact"
    # more than 16 attributes always goes to the sampled mode
    stub = Stub(lambda X: X.mean(axis=1) / 3)
    assert explain(stub, np.zeros(17, dtype=int), np.ones((3, 17), dtype=int)).mode == "sampled"


def test_explain_many_agrees_with_single(synth, synth_models):
    m = synth_models["LR"]
    bg = select_background(synth, 10, 0)
    phi, base = explain_many(m, synth.X[:5], bg)
    for i in range(5):
        v = explain(m, synth.X[i], bg)
        assert np.allclose(phi[i], v.values) and base == pytest.approx(v.base_value)


def test_exact_cost():
    X = np.array([[0, 0, 0]])
    B = np.array([[0, 0, 0], [1, 1, 0]])
    assert exact_cost(X, B).tolist() == [(1 + 4) / 2]


def test_errors(synth_models, synth):
    m = synth_models["LR"]
    with pytest.raises(ShapError):
        shap_exact(m, synth.X[0], np.zeros((0, 8)))
    with pytest.raises(ShapError):
        shap_sampled(m, synth.X[0], synth.X[:3], 10)
    with pytest.raises(ShapError):
        explain_many(m, synth.X[:2], synth.X[:3], mode="fast")
    with pytest.raises(ShapError, match="shap_sampled"):
        shap_exact(Stub(lambda X: X[:, 0]), np.zeros(21, dtype=int), np.ones((2, 21), dtype=int))


def test_background_is_distinct_training_rows(synth):
    bg = select_background(synth, 25, 0)
    assert len(bg) == 25 and len(np.unique(bg, axis=0)) == 25
    rows = {tuple(r) for r in synth.X.tolist()}
    assert all(tuple(r) in rows for r in bg.tolist())


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(0, 4), min_size=4, max_size=4), st.integers(0, 2**31))
def test_exact_efficiency_property(x, seed):
    rng = np.random.default_rng(seed)
    W = rng.normal(size=(4, 4))
    m = Stub(lambda X: 1 / (1 + np.exp(-np.tanh(X @ W).sum(axis=1))))
    bg = rng.integers(0, 5, size=(4, 4))
    v = shap_exact(m, np.array(x), bg)
    assert v.reconstruction_error <= 1e-9
