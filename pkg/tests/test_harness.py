import numpy as np
import pytest

from rfidguard.detector import AlarmEvent, DetectorConfig
from rfidguard.geometry import Scene
from rfidguard.harness import (
    HarnessError,
    Scenario,
    TrialOutcome,
    compute_metrics,
    empirical_cdf,
    format_outcomes,
    format_report,
    parse_outcomes,
    run_scenario,
    velocity_accuracy_experiment,
)
from rfidguard.simulator import SimConfig
from rfidguard.velocity import build_database

CFG = DetectorConfig()


def outcome(i, truth, said):
    ev = [AlarmEvent(1.0, "raw_alarm", 1.0), AlarmEvent(1.0, "ur_confirmed", 1.0)] if said else []
    return TrialOutcome(i, truth, said, ev, onset=0.5)


def test_metrics_all_correct():
    m = compute_metrics([outcome(i, i % 2 == 0, i % 2 == 0) for i in range(10)])
    assert m.accuracy == 1.0 and m.fpr == 0.0


def test_metrics_fpr_example():
    outs = [outcome(i, False, i < 2) for i in range(10)] + [outcome(10 + i, True, True) for i in range(5)]
    m = compute_metrics(outs)
    assert m.fpr == pytest.approx(0.2)
    assert m.false_alarms == 2 and m.ur_present == 5


def test_metrics_undefined_fpr_and_empty():
    m = compute_metrics([outcome(0, True, True)])
    assert m.fpr is None
    assert "fpr = undefined" in format_report("free", m)
    with pytest.raises(HarnessError):
        compute_metrics([])


def test_metrics_independent_of_order():
    outs = [outcome(i, i % 3 == 0, i % 2 == 0) for i in range(12)]
    assert compute_metrics(outs).summary() == compute_metrics(outs[::-1]).summary()


def test_cdf_properties():
    pts = empirical_cdf([3.0, 1.0, 2.0, 2.0])
    assert pts == [(1.0, 0.25), (2.0, 0.75), (3.0, 1.0)]
    assert empirical_cdf([]) == []


def test_scenario_validation():
    with pytest.raises(HarnessError):
        Scenario(condition="chaos")
    with pytest.raises(HarnessError):
        Scenario(trials=0)
    with pytest.raises(HarnessError):
        Scenario(condition="interference", obj_spec=None)
    with pytest.raises(HarnessError):
        Scenario(ur_schedule="sometimes")


def test_single_trial(small_db):
    outs = run_scenario(Scenario(condition="eliminated", trials=1), small_db, CFG, seed=3)
    assert len(outs) == 1 and outs[0].trial_id == 0


def test_eliminated_needs_matching_db(small_db):
    with pytest.raises(HarnessError):
        run_scenario(Scenario(trials=1), None, CFG)
    other = build_database(Scene.doorway(d_door=1.2), SimConfig(scene=Scene.doorway(d_door=1.2)), 0.8, 1.2, 0.2, trials=2)
    with pytest.raises(HarnessError):
        run_scenario(Scenario(trials=1), other, CFG)


def test_scenario_determinism_and_persistence(small_db):
    sc = Scenario(condition="eliminated", trials=40)
    a = run_scenario(sc, small_db, CFG, seed=9)
    b = run_scenario(sc, small_db, CFG, seed=9)
    ma, mb = compute_metrics(a), compute_metrics(b)
    assert format_report("eliminated", ma) == format_report("eliminated", mb)
    text = format_outcomes(a)
    back = parse_outcomes(text)
    assert format_outcomes(back) == text
    mc = compute_metrics(back)
    assert mc.summary() == ma.summary()
    assert mc.cdf_points == ma.cdf_points
    assert [o.verdict_ur for o in back] == [o.verdict_ur for o in a]


def test_verdict_derived_from_events(small_db):
    for o in run_scenario(Scenario(condition="interference", trials=20), None, CFG, seed=1):
        assert o.verdict_ur == any(e.stage == "ur_confirmed" for e in o.events)


def test_balanced_coin(small_db):
    outs = run_scenario(Scenario(condition="free", trials=400), None, CFG, seed=0)
    frac = np.mean([o.ground_truth_ur for o in outs])
    assert 0.43 < frac < 0.57


def test_free_condition_ur_always():
    outs = run_scenario(Scenario(condition="free", trials=500, ur_schedule="always"), None, CFG, seed=0)
    assert compute_metrics(outs).accuracy >= 0.95


def test_interference_fpr_above_eliminated(small_db):
    sc = Scenario(condition="interference", trials=100, ur_schedule="never")
    fi = compute_metrics(run_scenario(sc, None, CFG, seed=0)).fpr
    fe = compute_metrics(run_scenario(sc.with_(condition="eliminated"), small_db, CFG, seed=0)).fpr
    assert fi - fe >= 0.2


def test_cdf_monotone_and_ends_at_one(small_db):
    m = compute_metrics(run_scenario(Scenario(condition="eliminated", trials=60), small_db, CFG, seed=2))
    xs = [x for x, _ in m.cdf_points]
    ps = [p for _, p in m.cdf_points]
    assert xs == sorted(xs) and ps == sorted(ps)
    assert ps[-1] == 1.0


def test_velocity_experiment_errors(small_db):
    with pytest.raises(HarnessError):
        velocity_accuracy_experiment(small_db, SimConfig(), [])
    with pytest.raises(HarnessError):
        velocity_accuracy_experiment(small_db, SimConfig(), [3.0])


def test_velocity_experiment_grid_point_noiseless(default_db):
    rep = velocity_accuracy_experiment(default_db, SimConfig(noise_sigma=0.0), [1.0], trials_per_v=10)
    assert rep[0]["hit_rate"] == 1.0


def test_velocity_experiment_off_grid_noiseless(default_db):
    rep = velocity_accuracy_experiment(default_db, SimConfig(noise_sigma=0.0), [0.11], trials_per_v=1)
    assert rep[0]["estimates"][0] in (0.10, 0.12)
