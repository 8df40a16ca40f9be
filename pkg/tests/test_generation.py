import csv
import io
import statistics

import numpy as np
import pytest

from fairlens.discrimination import Oracle
from fairlens.generation import (
    GenBudget,
    GenResult,
    compare_engines,
    comparison_csv,
    generate_adf,
    generate_aequitas,
    run_engine,
)
from fairlens.generation.core import allowances, shift
from fairlens.models import MLP, NotDifferentiable, make_config
from fairlens.seeding import seed_random

ENGINES = ["aequitas", "adf"]


@pytest.fixture(scope="module")
def seeds(synth):
    return seed_random(synth, 40, 1)


def revalidate(result, model, protected):
    """Independent re-check of every emitted record against the model."""
    oracle = Oracle(model, protected)
    for rec in result.idis:
        rec.validate(model.schema)
        x, w = np.array(rec.instance), np.array(rec.witness)
        assert model.schema.conforms(x[None, :])[0] and model.schema.conforms(w[None, :])[0]
        assert int(model.predict(x[None])[0]) == rec.model_labels[0]
        assert int(model.predict(w[None])[0]) == rec.model_labels[1]
        assert oracle.is_idi(x[None])[0]


@pytest.mark.parametrize("engine", ENGINES)
def test_constant_model_finds_nothing(engine, synth, seeds):
    m = MLP(synth.schema, make_config("MLP", {"layer_widths": (4, 1)}))
    r = run_engine(engine, m, seeds, ["gender"], GenBudget(40, 40, 10), 0)
    assert r.total == 0 and r.per_phase == (0, 0)
    if engine == "aequitas":
        assert r.explored == min(len(seeds), 40)


@pytest.mark.parametrize("engine", ENGINES)
def test_records_revalidate(engine, synth_models, seeds):
    m = synth_models["MLP"]
    r = run_engine(engine, m, seeds, ["gender"], GenBudget(40, 40, 30), 3)
    assert r.total > 0
    revalidate(r, m, ["gender"])
    assert len({rec.instance for rec in r.idis}) == r.total
    assert {rec.provenance for rec in r.idis} <= {"global", "local"}
    assert r.per_phase[0] + r.per_phase[1] == r.total


@pytest.mark.parametrize("engine", ENGINES)
@pytest.mark.parametrize("limits", [(5, 5, 0), (10, 20, 7), (40, 40, 50)])
def test_budget_cap(engine, limits, synth_models, seeds):
    budget = GenBudget(*limits)
    r = run_engine(engine, synth_models["MLP"], seeds, ["gender", "a1"], budget, 0)
    assert r.explored <= budget.max_explored
    assert r.total <= r.explored


@pytest.mark.parametrize("engine", ENGINES)
def test_more_local_budget_never_hurts(engine, synth_models, seeds):
    totals = [run_engine(engine, synth_models["MLP"], seeds, ["gender"], GenBudget(40, 40, L), 5).total
              for L in (0, 5, 20, 60)]
    assert totals == sorted(totals)


@pytest.mark.parametrize("engine", ENGINES)
def test_deterministic(engine, synth_models, seeds):
    a = run_engine(engine, synth_models["MLP"], seeds, ["gender"], GenBudget(40, 40, 20), 9)
    b = run_engine(engine, synth_models["MLP"], seeds, ["gender"], GenBudget(40, 40, 20), 9)
    assert a.to_dict(timing=False) == b.to_dict(timing=False)


def test_result_round_trip(synth_models, seeds):
    r = generate_aequitas(synth_models["MLP"], seeds, ["gender"], GenBudget(40, 40, 10), 0)
    back = GenResult.from_dict(r.to_dict())
    assert back.to_dict() == r.to_dict()


def test_adf_needs_gradients(synth_models, seeds):
    for kind in ("LR", "SVM", "DT"):
        with pytest.raises(NotDifferentiable):
            generate_adf(synth_models[kind], seeds, ["gender"])


def test_aequitas_works_on_any_kind(synth_models, seeds):
    for kind in ("LR", "SVM", "DT"):
        r = generate_aequitas(synth_models[kind], seeds, ["gender"], GenBudget(40, 40, 10), 0)
        revalidate(r, synth_models[kind], ["gender"])


def test_adf_at_least_aequitas_on_census(bench):
    ds, _, _, m = bench("census")
    s = seed_random(ds, 100, 0)
    adf = generate_adf(m, s, ["sex"], GenBudget(), 0)
    aeq = generate_aequitas(m, s, ["sex"], GenBudget(), 0)
    assert adf.total >= aeq.total


def test_budget_parse():
    assert GenBudget.parse("100,50") == GenBudget(100, 100, 50)
    assert GenBudget.parse("10,100,50") == GenBudget(10, 100, 50)
    with pytest.raises(ValueError):
        GenBudget.parse("1,2,3,4")
    with pytest.raises(ValueError):
        GenBudget(200, 100, 10)
    with pytest.raises(ValueError):
        GenBudget(1, 1, -1)


def test_allowances_share_the_cap():
    a = allowances(5, 10, 23)
    assert a.tolist() == [10, 10, 3, 0, 0]
    assert allowances(3, 4, 100).tolist() == [4, 4, 4]


def test_shift_flips_direction_at_the_boundary():
    dom = np.array([0, 1, 2])
    x = np.array([2, 0])
    assert shift(x, 0, +1, dom).tolist() == [1, 0]
    assert shift(x, 0, -1, dom).tolist() == [1, 0]
    assert shift(np.array([1, 0]), 0, +1, dom).tolist() == [2, 0]


def test_unknown_engine(synth_models, seeds):
    with pytest.raises(ValueError):
        run_engine("sg", synth_models["MLP"], seeds, ["gender"], GenBudget(), 0)


def test_compare_one_trial_matches_direct_call(synth, synth_models):
    m = synth_models["MLP"]
    from fairlens.rng import derive_seed
    rows = compare_engines([("random", "aequitas")], m, synth, ["gender"], GenBudget(30, 30, 10), trials=1,
                           rng_seed=2)
    s = seed_random(synth, 30, derive_seed(2, "seeds", 0))
    direct = generate_aequitas(m, s, ["gender"], GenBudget(30, 30, 10), derive_seed(2, "generate", 0))
    assert rows[0].totals == [direct.total]


def test_compare_means_and_csv(synth, synth_models):
    rows = compare_engines([("random", "aequitas"), ("random", "adf")], synth_models["MLP"], synth, ["gender"],
                           GenBudget(20, 20, 10), trials=4, rng_seed=0)
    for row in rows:
        assert row.summary()["mean_total"] == pytest.approx(statistics.fmean(row.totals))
        assert row.summary()["trials"] == 4
    table = list(csv.DictReader(io.StringIO(comparison_csv(rows, "synthetic", ["gender"]))))
    assert [r["engine"] for r in table] == ["aequitas", "adf"]
    assert float(table[0]["mean_total"]) == pytest.approx(rows[0].mean_total)


def test_compare_needs_trials(synth, synth_models):
    with pytest.raises(ValueError):
        compare_engines([("random", "aequitas")], synth_models["MLP"], synth, ["gender"], trials=0)
