import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fairlens.data import AttributeSpec, Dataset, DatasetSchema
from fairlens.models import (
    KINDS,
    MLP,
    ModelError,
    NotDifferentiable,
    SchemaMismatch,
    TrainingError,
    continue_training,
    f1_per_class,
    f1_score,
    f1_weighted,
    load_model,
    majority_vote_label,
    make_config,
    model_from_dict,
    model_to_dict,
    save_model,
    sigmoid,
    train,
    vote_counts,
)


class Fixed:
    """Stand-in voter with a fixed label and a shared schema."""

    kind = "FIXED"

    def __init__(self, schema, label):
        self.schema, self.label = schema, label
        self.schema_fingerprint = schema.fingerprint()

    def predict(self, X):
        return np.full(len(np.atleast_2d(X)), self.label, dtype=np.int64)


def two_attr():
    return DatasetSchema((AttributeSpec.from_range("a", 0, 9), AttributeSpec.from_range("b", 0, 9)))


def separable():
    rng = np.random.default_rng(0)
    X = rng.integers(0, 10, size=(200, 2))
    keep = np.abs(X[:, 0] - X[:, 1]) >= 2
    X = X[keep]
    return Dataset(two_attr(), X, (X[:, 0] > X[:, 1]).astype(int))


def zero_mlp(schema, widths=(4, 3, 1)):
    return MLP(schema, make_config("MLP", {"layer_widths": widths}))


# ------------------------------------------------------------ F1

def test_f1_hand_example():
    # TP=2 FP=1 FN=1 TN=6; class 0 sees TP=6 FP=1 FN=1
    y_true = np.array([1, 1, 1, 0, 0, 0, 0, 0, 0, 0])
    y_pred = np.array([1, 1, 0, 1, 0, 0, 0, 0, 0, 0])
    per = f1_per_class(y_true, y_pred)
    assert per[1] == pytest.approx(2 / 3)
    assert per[0] == pytest.approx(12 / 14)
    assert f1_weighted(y_true, y_pred) == pytest.approx(0.3 * (2 / 3) + 0.7 * (12 / 14))
    assert f1_weighted(y_true, y_pred) == pytest.approx(0.8)


def test_f1_perfect_and_all_wrong():
    y = np.array([0, 1, 1, 0, 1])
    assert f1_weighted(y, y) == 1.0
    assert f1_weighted(y, 1 - y) == 0.0


def test_f1_empty():
    with pytest.raises(ValueError):
        f1_weighted([], [])


def test_f1_score_checks_schema(synth_models):
    other = Dataset(two_attr(), [[1, 2]], [0])
    with pytest.raises(SchemaMismatch):
        f1_score(synth_models["LR"], other)


# ------------------------------------------------------------ voting

def test_vote_clear_majority():
    s = two_attr()
    voters = [Fixed(s, 1), Fixed(s, 1), Fixed(s, 1), Fixed(s, 0)]
    assert majority_vote_label(voters, np.array([1, 2]), Fixed(s, 0)) == 1


def test_vote_tie_goes_to_tiebreak():
    s = two_attr()
    voters = [Fixed(s, 1), Fixed(s, 1), Fixed(s, 0), Fixed(s, 0)]
    assert majority_vote_label(voters, np.array([1, 2]), Fixed(s, 0)) == 0
    assert majority_vote_label(voters, np.array([1, 2]), Fixed(s, 1)) == 1


def test_vote_needs_four():
    s = two_attr()
    with pytest.raises(ValueError):
        majority_vote_label([Fixed(s, 1)] * 3, np.array([1, 2]), Fixed(s, 0))


def test_vote_schema_mismatch(synth_models):
    s = two_attr()
    with pytest.raises(SchemaMismatch):
        majority_vote_label([Fixed(s, 1)] * 3 + [synth_models["LR"]], np.array([1, 2]), Fixed(s, 0))


def test_vote_matches_recount(synth, synth_models):
    voters = list(synth_models.values())
    tiebreak = synth_models["MLP"]
    X = synth.X[:300]
    got = majority_vote_label(voters, X, tiebreak)
    for i, x in enumerate(X):
        votes = [int(m.predict(x[None, :])[0]) for m in voters]
        if sum(votes) == 2:
            want = int(tiebreak.predict(x[None, :])[0])
        else:
            want = int(sum(votes) >= 3)
        assert got[i] == want
    assert np.array_equal(vote_counts(voters, X), np.sum([m.predict(X) for m in voters], axis=0))


# ------------------------------------------------------------ training

@pytest.mark.parametrize("kind", sorted(KINDS))
def test_training_is_deterministic(kind, synth_split):
    tr, te = synth_split
    cfg = {"layer_widths": (8, 1), "epochs": 3} if kind == "MLP" else None
    a, b = train(kind, tr, cfg, rng_seed=5), train(kind, tr, cfg, rng_seed=5)
    for k, v in a.get_params().items():
        assert np.array_equal(v, b.get_params()[k])
    assert np.array_equal(a.predict(te.X), b.predict(te.X))


def test_lr_separable_accuracy():
    ds = separable()
    m = train("LR", ds, {"iterations": 3000, "learning_rate": 5.0})
    assert np.mean(m.predict(ds.X) == ds.y) == 1.0


def test_single_class_rejected():
    ds = Dataset(two_attr(), [[1, 2], [3, 4]], [1, 1])
    for kind in KINDS:
        with pytest.raises(TrainingError):
            train(kind, ds)


def test_unknown_kind():
    with pytest.raises(ValueError):
        make_config("KNN")


@pytest.mark.parametrize("kind,over", [("LR", {"iterations": -5}), ("SVM", {"l2": -1.0}),
                                       ("DT", {"min_leaf": 0}), ("MLP", {"layer_widths": (4, 2)}),
                                       ("MLP", {"beta1": 1.0})])
def test_bad_hyper_parameters(kind, over):
    with pytest.raises(ValueError):
        make_config(kind, over)


def test_dt_depth_zero_is_majority():
    rng = np.random.default_rng(1)
    X = rng.integers(0, 10, size=(101, 2))
    y = (rng.random(101) < 0.3).astype(int)
    m = train("DT", Dataset(two_attr(), X, y), {"max_depth": 0})
    majority = int(np.sum(y) * 2 > len(y))
    assert set(m.predict(X).tolist()) == {majority}
    assert m.depth == 0


def test_constant_model_predicts_one_label():
    rng = np.random.default_rng(1)
    X = rng.integers(0, 10, size=(50, 2))
    m = train("DT", Dataset(two_attr(), X, np.r_[np.zeros(49), 1]), {"max_depth": 0})
    assert len(set(m.predict(X).tolist())) == 1


def test_census_mlp_f1(bench):
    _, _, te, m = bench("census")
    assert f1_score(m, te) >= 0.80


def test_predict_schema_mismatch(synth_models):
    with pytest.raises(SchemaMismatch):
        synth_models["LR"].predict(np.zeros((2, 3)))


def test_predict_accepts_single_instance(synth, synth_models):
    m = synth_models["SVM"]
    assert m.predict(synth.X[0]) == m.predict(synth.X[:1])[0]


# ------------------------------------------------------------ gradients

def test_non_mlp_has_no_gradient(synth, synth_models):
    for kind in ("LR", "SVM", "DT"):
        with pytest.raises(NotDifferentiable):
            synth_models[kind].input_gradient(synth.X[:2])


def test_zero_weight_mlp_zero_gradient(synth):
    m = zero_mlp(synth.schema)
    assert np.all(m.input_gradient(synth.X[:20]) == 0.0)
    assert np.allclose(m.predict_proba(synth.X[:20]), 0.5)


def test_single_layer_sigmoid_gradient(synth):
    m = zero_mlp(synth.schema, widths=(1,))
    rng = np.random.default_rng(2)
    w = rng.normal(size=synth.schema.n_attributes)
    m.set_params({"W0": w[:, None], "b0": np.array([0.3])})
    X = synth.X[:30]
    p = sigmoid(m.scale(X) @ w + 0.3)
    assert np.allclose(m.predict_proba(X), p)
    assert np.allclose(m.input_gradient(X), (p * (1 - p))[:, None] * w[None, :], atol=1e-12)


def _activation_pattern(m, Z):
    h, pats = Z, []
    for W, b in zip(m.weights[:-1], m.biases[:-1]):
        a = h @ W + b
        pats.append(a > 0)
        h = np.maximum(a, 0)
    return np.concatenate(pats, axis=1)


def central_difference(m, z, h):
    d = len(z)
    E = np.eye(d) * h
    up, down = m._proba(z + E), m._proba(z - E)
    return (up - down) / (2 * h), np.vstack([z + E, z - E])


def test_gradient_matches_central_difference(synth_models):
    """Step 1e-3 on scaled inputs; points whose stencil crosses a ReLU kink are redrawn."""
    m = synth_models["MLP"]
    rng = np.random.default_rng(7)
    checked, worst = 0, 0.0
    while checked < 100:
        z = rng.random(m.n_features)
        fd, stencil = central_difference(m, z, 1e-3)
        pats = _activation_pattern(m, stencil)
        if not (pats == pats[0]).all():
            continue
        analytic = m.input_gradient(m.schema.lower + z * m._span)
        worst = max(worst, float(np.max(np.abs(analytic - fd))))
        checked += 1
    assert worst <= 1e-4


def test_gradient_difference_error_shrinks_quadratically(bench):
    """On the steeper census network the truncation error falls about 100x per 10x step."""
    m = bench("census")[3]
    rng = np.random.default_rng(3)
    errs = {h: [] for h in (1e-3, 1e-4)}
    while len(errs[1e-3]) < 20:
        z = rng.random(m.n_features)
        fd, stencil = central_difference(m, z, 1e-3)
        pats = _activation_pattern(m, stencil)
        if not (pats == pats[0]).all():
            continue
        g = m.input_gradient(m.schema.lower + z * m._span)
        for h in errs:
            errs[h].append(np.max(np.abs(g - central_difference(m, z, h)[0])))
    assert max(errs[1e-4]) <= max(max(errs[1e-3]) / 50, 1e-9)


# ------------------------------------------------------------ persistence

@pytest.mark.parametrize("kind", sorted(KINDS))
def test_model_file_round_trip(kind, synth, synth_models, tmp_path):
    m = synth_models[kind]
    p = tmp_path / "m.json"
    save_model(m, p)
    again = load_model(p)
    assert again.kind == m.kind and again.config == m.config
    assert np.array_equal(again.predict_proba(synth.X), m.predict_proba(synth.X))
    assert json.dumps(model_to_dict(again)) == json.dumps(model_to_dict(m))


def test_model_file_tampered_schema(synth_models):
    d = model_to_dict(synth_models["LR"])
    d["schema_fingerprint"] = "0" * 16
    with pytest.raises(SchemaMismatch):
        model_from_dict(d)


def test_model_file_wrong_format():
    with pytest.raises(ModelError):
        model_from_dict({"format": "other"})


@pytest.mark.parametrize("kind", sorted(KINDS))
def test_retraining_keeps_shapes(kind, synth_split, synth_models):
    tr, _ = synth_split
    m = synth_models[kind]
    out = continue_training(m, tr, 2, 0)
    assert out.param_shapes() == m.param_shapes()
    assert out.config == m.config


@pytest.mark.parametrize("kind", sorted(KINDS))
def test_zero_epochs_leaves_params(kind, synth_split, synth_models):
    tr, _ = synth_split
    m = synth_models[kind]
    out = continue_training(m, tr, 0, 0)
    for k, v in m.get_params().items():
        assert np.array_equal(out.get_params()[k], v)


@settings(max_examples=50, deadline=None)
@given(st.floats(-700, 700))
def test_sigmoid_is_stable(t):
    s = float(sigmoid(np.array([t]))[0])
    assert 0.0 <= s <= 1.0
    assert s == pytest.approx(1 - float(sigmoid(np.array([-t]))[0]), abs=1e-12)
