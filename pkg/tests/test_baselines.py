import numpy as np
import pytest

from senscov.baselines import (KmncProfile, baseline_campaign, build_kmnc_profile,
                               kmnc_update, nc_update, new_kmnc_state, new_nc_state)
from senscov.datasets import Dataset
from senscov.engine import Dense, Model, build_mlp


def test_nc_hand_normalisation():
    # one layer of two neurons with activations [0, 10] -> normalised [0, 1];
    # only the second exceeds 0.5
    model = Model([Dense(np.eye(2), np.zeros(2))], (2,))
    state = new_nc_state(model.num_neurons)
    trace = model.forward(np.array([0.0, 1.0])).values * 10
    nc_update(state, model, trace, threshold=0.5)
    assert list(state.covered) == [False, True]
    assert state.coverage() == 0.5


def test_nc_degenerate_layer_counts_nothing():
    model = Model([Dense(np.eye(3), np.zeros(3))], (3,))
    state = new_nc_state(3)
    nc_update(state, model, np.array([2.0, 2.0, 2.0]), threshold=0.5)
    assert not state.covered.any()


def test_nc_threshold_validated():
    model = Model([Dense(np.eye(2), np.zeros(2))], (2,))
    with pytest.raises(ValueError):
        nc_update(new_nc_state(2), model, np.zeros(2), threshold=1.5)


def test_kmnc_single_input_covers_one_section_per_neuron():
    k = 10
    profile = KmncProfile(lows=np.zeros(3), highs=np.ones(3), k=k)
    state = new_kmnc_state(3, k)
    kmnc_update(state, np.array([0.05, 0.55, 0.95]), profile)
    assert state.coverage() == 1.0 / k
    assert list(np.nonzero(state.covered[0])[0]) == [0]
    assert list(np.nonzero(state.covered[1])[0]) == [5]


def test_kmnc_at_high_bound_clamps_to_last_section():
    profile = KmncProfile(lows=np.zeros(1), highs=np.ones(1), k=4)
    state = new_kmnc_state(1, 4)
    kmnc_update(state, np.array([1.0]), profile)
    assert list(np.nonzero(state.covered[0])[0]) == [3]


def test_kmnc_out_of_range_ignored():
    profile = KmncProfile(lows=np.zeros(2), highs=np.ones(2), k=4)
    state = new_kmnc_state(2, 4)
    kmnc_update(state, np.array([-0.1, 1.2]), profile)
    assert not state.covered.any()


def test_kmnc_degenerate_range_exact_hit_only():
    profile = KmncProfile(lows=np.full(2, 0.5), highs=np.full(2, 0.5), k=4)
    state = new_kmnc_state(2, 4)
    kmnc_update(state, np.array([0.5, 0.4]), profile)
    assert list(np.nonzero(state.covered[0])[0]) == [0]
    assert not state.covered[1].any()


def test_kmnc_profile_mismatch_rejected():
    profile = KmncProfile(lows=np.zeros(3), highs=np.ones(3), k=4)
    with pytest.raises(ValueError, match="mismatch"):
        kmnc_update(new_kmnc_state(2, 4), np.zeros(2), profile)


def test_metric_monotone_under_updates():
    model = build_mlp([6, 5, 3], seed=0)
    state = new_nc_state(model.num_neurons)
    rng = np.random.default_rng(1)
    last = 0.0
    for _ in range(10):
        nc_update(state, model, model.forward(rng.random(6)).values, 0.5)
        cov = state.coverage()
        assert cov >= last
        last = cov


def digits_subset(digits, lo, hi, split="test"):
    return digits.subset(range(lo, hi), split=split)


def test_kmnc_profile_brackets_training_traces(digits):
    model = build_mlp([784, 8, 10], seed=2)
    train = digits_subset(digits, 0, 40, "train")
    profile = build_kmnc_profile(model, train, k=100)
    assert np.all(profile.lows <= profile.highs)
    trace = model.forward(train.inputs[0]).values
    assert np.all(trace >= profile.lows) and np.all(trace <= profile.highs)


def test_baseline_campaign_deterministic(digits, trained_small):
    data = digits_subset(digits, 500, 620)
    runs = []
    for _ in range(2):
        res = baseline_campaign(trained_small, data, "gaussian", "nc",
                                budget=150, seed=3)
        runs.append((res.extra["events"], len(res.faults), res.total_inputs))
    assert runs[0] == runs[1]


def test_baseline_campaign_saturates_and_counts_kept_faults(digits, trained_small):
    data = digits_subset(digits, 500, 700)
    res = baseline_campaign(trained_small, data, "gaussian", "nc",
                            budget=1500, seed=4, stall_limit=100)
    assert res.termination in ("saturated", "coverage_reached", "budget_exhausted")
    assert res.extra["inputs_accepted"] <= res.total_inputs
    assert len(res.faults) <= res.extra["inputs_accepted"]
    assert len(res.faults) <= res.extra["faults_on_attempts"]


def test_baseline_campaign_kmnc_runs(digits, trained_small):
    train = digits_subset(digits, 0, 60, "train")
    data = digits_subset(digits, 500, 560)
    profile = build_kmnc_profile(trained_small, train, k=50)
    res = baseline_campaign(trained_small, data, "gaussian", "kmnc",
                            budget=80, seed=5, profile=profile)
    assert res.extra["final_coverage"] > 0
    assert res.config["metric"] == "kmnc"


def test_baseline_campaign_full_coverage_stops():
    # which neuron normalises to 1 depends on the input half that dominates,
    # so two different inputs cover both neurons
    w = np.array([[1.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 1.0]])
    model = Model([Dense(w, np.zeros(2))], (4,))
    data = Dataset([np.array([0.9, 0.9, 0.1, 0.1]),
                    np.array([0.1, 0.1, 0.9, 0.9])] * 5,
                   np.zeros(10, dtype=int), "test", 2)
    res = baseline_campaign(model, data, "gaussian", "nc", budget=200, seed=7)
    assert res.termination == "coverage_reached"
    assert res.extra["final_coverage"] == 1.0
    assert res.extra["inputs_accepted"] == 2


def test_unknown_metric_rejected(digits, trained_small):
    with pytest.raises(ValueError):
        baseline_campaign(trained_small, digits, "gaussian", "idc", 10, 0)
