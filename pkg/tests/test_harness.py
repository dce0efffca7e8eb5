import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riskal.data import from_arrays
from riskal.decision import ActionKind, DecisionParams
from riskal.harness import (ExperimentConfig, Fitter, ScenarioConfig, ScenarioError,
                            SimulationResult, SyntheticConfig, TimelineEntry, compare,
                            generate_synthetic, gold_standard_replacements, gold_standard_result,
                            run_periodic, run_risk_based, substream_seed)
from riskal.sampler import SamplerConfig

FAST = SamplerConfig(warmup=300, draws=300, chains=2, seed=1)


# generator -----------------------------------------------------------------


def test_noiseless_generator_gives_exact_lines():
    data = generate_synthetic(SyntheticConfig(noise_gamma=0.0, seed=4))
    for t in data.tools:
        truth = data.truth[t.tool_id]
        np.testing.assert_allclose(t.y, truth["m"] * t.x + truth["c"], rtol=0, atol=1e-12)
        np.testing.assert_allclose(t.x, 6.02 * np.arange(1, 13))


def test_generator_is_deterministic():
    a = generate_synthetic(SyntheticConfig(seed=5))
    b = generate_synthetic(SyntheticConfig(seed=5))
    c = generate_synthetic(SyntheticConfig(seed=6))
    assert a == b and a != c


def test_generator_noise_is_bounded_and_slopes_positive():
    data = generate_synthetic(SyntheticConfig(noise_gamma=1.0, noise_bound=0.5, seed=2))
    for t in data.tools:
        tr = data.truth[t.tool_id]
        assert tr["m"] > 0
        assert np.all(np.abs(t.y - (tr["m"] * t.x + tr["c"])) <= 0.5 + 1e-12)


def test_least_squares_slopes_track_truth():
    # 50 replications: per-tool least-squares slope within 3 standard errors of the true slope
    misses, total = 0, 0
    for s in range(50):
        data = generate_synthetic(SyntheticConfig(seed=s, noise_bound=0.05))
        for t in data.tools:
            fit = np.polyfit(t.x, t.y, 1, full=False, cov=True)
            slope, se = fit[0][0], np.sqrt(fit[1][0, 0])
            total += 1
            misses += abs(slope - data.truth[t.tool_id]["m"]) > 3 * se
    assert misses / total < 0.05


def test_generator_validation():
    for bad in ({"n_tools": 0}, {"n_steps": 0}, {"noise_bound": 0.0}, {"true_sigma_m": -1.0}):
        with pytest.raises(ScenarioError):
            SyntheticConfig(**bad)
    with pytest.raises(ScenarioError, match="no positive slope"):
        generate_synthetic(SyntheticConfig(true_mu_m=-10.0, true_sigma_m=0.01))


def test_substreams_are_distinct_and_stable():
    assert substream_seed(1, "generator") == substream_seed(1, "generator")
    assert substream_seed(1, "generator") != substream_seed(1, "sampler")
    assert substream_seed(1, "sampler") != substream_seed(2, "sampler")


# scenario ------------------------------------------------------------------


def test_scenario_defaults(population):
    historic, active = ScenarioConfig().resolve(population)
    assert historic == (1, 2, 3, 4) and active == (5, 6, 7)
    masks = ScenarioConfig().initial_masks(population)
    assert all(masks[k] == [True] * 12 for k in historic)
    assert all(sum(masks[k]) == 2 and masks[k][:2] == [True, True] for k in active)


def test_scenario_validation(population, caplog):
    with pytest.raises(ScenarioError, match="overlap"):
        ScenarioConfig(historic_tools=(1, 2), active_tools=(2, 3))
    with pytest.raises(ScenarioError):
        ScenarioConfig(periodic_period=0)
    with pytest.raises(ScenarioError, match="unknown tool"):
        ScenarioConfig(active_tools=(99,)).resolve(population)
    ScenarioConfig(historic_tools=(1, 2)).resolve(population)
    assert "only 2 historic tools" in caplog.text


def test_experiment_config_roundtrip():
    doc = {"seed": 3, "synthetic": {"n_tools": 6}, "scenario": {"periodic_period": 2, "pooling": "partial"},
           "sampler": {"chains": 2}, "decision": {"c_inspection": 0.1}, "policies": ["risk"]}
    cfg = ExperimentConfig.from_dict(doc)
    assert cfg.policies == ("risk_based",)
    again = ExperimentConfig.from_dict(cfg.to_dict())
    assert again == cfg
    assert json.dumps(again.to_dict()) == json.dumps(cfg.to_dict())


@pytest.mark.parametrize("doc,field", [
    ({"synthetic": {"n_tools": 0}}, "n_tools"),
    ({"bogus": 1}, "bogus"),
    ({"synthetic": {"seed": 1}}, "synthetic.seed"),
    ({"scenario": {"sampler": {}}}, "scenario.sampler"),
    ({"policies": ["greedy"]}, "greedy"),
    ({"sampler": {"warmup": 0}}, "warmup"),
])
def test_experiment_config_errors_name_the_field(doc, field):
    with pytest.raises(ScenarioError, match=field):
        ExperimentConfig.from_dict(doc)


# gold standard -------------------------------------------------------------


def steep_population():
    """Near-noiseless lines; tool 5 crosses 0.9 between steps 5 and 6."""
    x = 6.02 * np.arange(1, 11)
    ids, xs, ys = [], [], []
    jitter = 0.002 * np.array([1, -1] * 5)
    lines = {1: (0.012, 0.45), 2: (0.010, 0.42), 3: (0.011, 0.47), 4: (0.013, 0.43),
             5: (0.5 / (5.5 * 6.02), 0.40), 6: (0.011, 0.44), 7: (0.012, 0.46)}
    for k, (m, c) in lines.items():
        ids += [k] * 10
        xs += list(x)
        ys += list(m * x + c + jitter)
    return from_arrays(ids, xs, ys)


@pytest.fixture(scope="module")
def steep_fitter():
    data = steep_population()
    scen = ScenarioConfig(sampler=FAST)
    return data, scen, Fitter(data, scen)


def test_gold_standard_on_constructed_crossing(steep_fitter):
    data, scen, fitter = steep_fitter
    gold = gold_standard_replacements(data, scen, fitter)
    assert gold[5] == 5


def test_gold_standard_alpha_limits(steep_fitter):
    data, scen, fitter = steep_fitter
    always = replace(scen, decision=DecisionParams(c_tool=0.0))
    assert set(gold_standard_replacements(data, always, fitter).values()) == {1}
    never = replace(scen, decision=DecisionParams(c_tool=2.0))
    res = gold_standard_result(data, never, fitter)
    assert res.replacement_step == {5: 10, 6: 10, 7: 10}
    assert all(res.end_of_life.values())


def test_all_labels_and_no_inspections_reproduce_gold(steep_fitter):
    data, scen, fitter = steep_fitter
    oracle = gold_standard_replacements(data, scen, fitter)
    visible = replace(scen, all_labels_visible=True, periodic_period=10**6)
    res = run_periodic(data, visible, Fitter(data, visible))
    assert res.inspections == 0
    assert dict(res.replacement_step) == oracle


# online loops with a stub predictor ----------------------------------------


def stub(value):
    return lambda tool, step: value


def test_certain_failure_inspects_then_replaces(population):
    res = run_risk_based(population, ScenarioConfig(), p_override=stub(1.0))
    for k in (5, 6, 7):
        evs = [(e.step, e.action) for e in res.timeline if e.tool_id == k]
        assert evs == [(3, ActionKind.INSPECT), (3, ActionKind.REPLACE)]
    assert res.inspections == 3


@settings(max_examples=25)
@given(st.lists(st.floats(0, 1), min_size=12, max_size=12))
def test_expensive_inspection_is_never_chosen(population, ps):
    scen = ScenarioConfig(decision=DecisionParams(c_inspection=2.0))
    res = run_risk_based(population, scen, p_override=lambda k, s: ps[s - 1])
    assert res.inspections == 0
    assert sorted(res.replacement_step) == [5, 6, 7]


def test_periodic_every_step_and_never(population):
    res = run_periodic(population, ScenarioConfig(periodic_period=1), p_override=stub(0.0))
    assert res.inspections == 30  # 10 live steps on each of three tools
    assert res.replacement_step == {5: 12, 6: 12, 7: 12} and all(res.end_of_life.values())
    res = run_periodic(population, ScenarioConfig(periodic_period=50), p_override=stub(0.0))
    assert res.inspections == 0
    res = run_periodic(population, ScenarioConfig(periodic_period=3), p_override=stub(0.0))
    assert [e.step for e in res.timeline if e.tool_id == 5 and e.action is ActionKind.INSPECT] == [5, 8, 11]


def test_timeline_invariants(population):
    ps = [0.0, 0.0, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 0.9, 1.0, 1.0]
    res = run_risk_based(population, ScenarioConfig(), p_override=lambda k, s: ps[s - 1])
    for k in (5, 6, 7):
        steps = [e.step for e in res.timeline if e.tool_id == k]
        assert steps == sorted(steps)
        assert sum(e.action is ActionKind.REPLACE for e in res.timeline if e.tool_id == k) == 1
    counts = [r["n_revealed"] for r in res.refits]
    historic = 4 * 12 + 3 * 2
    for k in (5, 6, 7):
        mine = [r["n_revealed"] for r in res.refits if r["tool_id"] == k]
        assert mine == list(range(historic + 1, historic + 1 + len(mine)))
    assert all(c > historic for c in counts)


def test_stop_step_truncates(population):
    ps = [0.0, 0.0, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 0.9, 1.0, 1.0]
    full = run_risk_based(population, ScenarioConfig(), p_override=lambda k, s: ps[s - 1])
    part = run_risk_based(population, ScenarioConfig(), p_override=lambda k, s: ps[s - 1], stop_step=6)
    assert part.timeline == tuple(e for e in full.timeline if e.step <= 6)


def test_sampler_failure_carries_context(population, monkeypatch):
    from riskal import harness
    from riskal.sampler import InferenceError

    def boom(*a, **k):
        raise InferenceError("all divergent")

    monkeypatch.setattr(harness, "sample", boom)
    with pytest.raises(harness.SimulationError, match=r"risk_based policy, tool 5, step 3"):
        run_risk_based(population, ScenarioConfig(sampler=FAST))


# comparison ----------------------------------------------------------------


def result(policy, per_tool):
    """per_tool: tool -> (inspection steps, replacement step)."""
    tl = []
    for k, (insp, rep) in per_tool.items():
        tl += [TimelineEntry(k, s, ActionKind.INSPECT) for s in insp]
        tl.append(TimelineEntry(k, rep, ActionKind.REPLACE))
    return SimulationResult(policy, tuple(tl), {k: v[1] for k, v in per_tool.items()},
                            {k: False for k in per_tool})


def test_compare_constructed_ledgers():
    oracle = {5: 2, 6: 2, 7: 5}
    periodic = result("periodic", {5: ([1, 2, 3], 1), 6: ([1, 2, 3], 1), 7: ([1, 2, 3, 4], 2)})
    risk = result("risk_based", {5: ([1], 2), 6: ([2], 2), 7: ([3, 4], 4)})
    rep = compare([periodic, risk], oracle, DecisionParams())
    p, r = rep.rows
    assert p.ledger.total == pytest.approx(0.9, abs=1e-12)  # 10 x 0.05 + 0.25 x (1/2 + 1/2 + 3/5)
    assert r.ledger.total == pytest.approx(0.25, abs=1e-12)
    assert r.reduction == pytest.approx((0.9 - 0.25) / 0.9, abs=1e-12)
    assert p.reduction == 0.0
    assert p.discrepancy == {5: -1, 6: -1, 7: -3}
    csv_text = rep.to_csv_string()
    assert csv_text.splitlines()[0].startswith("policy,tool_id,optimal_step,actual_step,discrepancy")


def test_compare_identical_is_zero_and_mismatch_errors():
    a = result("periodic", {5: ([3], 4)})
    rep = compare([a, replace(a, policy="risk_based")], {5: 4}, DecisionParams())
    assert [r.reduction for r in rep.rows] == [0.0, 0.0]
    with pytest.raises(ScenarioError, match="different tools"):
        compare([a, result("risk_based", {6: ([], 4)})], {5: 4, 6: 4}, DecisionParams())


def test_result_json_roundtrip_and_recount():
    res = result("periodic", {5: ([3, 4], 4), 6: ([3], 6)}).settle({5: 5, 6: 6}, DecisionParams())
    back = SimulationResult.from_dict(json.loads(json.dumps(res.to_dict())))
    assert back == res
    assert back.recount().total == pytest.approx(back.ledger.total, abs=1e-12)
    doc = res.to_dict()
    doc["schema_version"] = 99
    with pytest.raises(ScenarioError, match="schema version"):
        SimulationResult.from_dict(doc)
