import numpy as np
import pytest

from senscov.coverage import McmcConfig
from senscov.experiments import (coverage_vs_sample_size, correlate_experiment,
                                 model_digest, retrain_experiment)
from senscov.fuzzer import FuzzConfig, run_campaign
from senscov.sensitivity import SensitivityStore


def test_model_digest_stable_and_sensitive(trained_small):
    a = model_digest(trained_small)
    assert a == model_digest(trained_small)
    bumped = trained_small.copy()
    bumped.layers[0].weight[0, 0] += 1e-9
    assert a != model_digest(bumped)


def test_correlate_experiment_shape(trained_small, digits):
    data = digits.subset(range(500, 560))
    cfg = FuzzConfig(max_outer_iterations=2, mcmc=McmcConfig(draws=300, warmup=150))
    report = correlate_experiment(trained_small, data, "gaussian", cfg, seed=3)
    assert len(report.rows) == 5
    mags = [r["magnitude"] for r in report.rows]
    assert mags == sorted(mags) == [0.01, 0.02, 0.03, 0.04, 0.05]
    for row in report.rows:
        assert set(row) >= {"magnitude", "error_rate", "faults_detected",
                            "inputs_generated", "wall_clock"}
    assert report.degenerate or -1.0 <= report.pearson <= 1.0
    assert report.metadata["model_hash"] == model_digest(trained_small)


def test_correlate_rows_for_every_family(trained_small, digits):
    data = digits.subset(range(500, 516))
    cfg = FuzzConfig(max_outer_iterations=1, mcmc=McmcConfig(draws=300, warmup=150))
    for family in ("gaussian", "fgsm", "pgd"):
        report = correlate_experiment(trained_small, data, family, cfg, seed=9)
        assert len(report.rows) == 5


def test_correlate_degenerate_fault_counts_reported():
    # huge-margin one-hot model: the sweep's gaussian noise flips nothing,
    # so fault counts and error rates are all zero
    import numpy as np

    from senscov.datasets import Dataset
    from senscov.engine import Dense, Model, Softmax

    model = Model([Dense(np.eye(3) * 1000, np.zeros(3)), Softmax()], (3,))
    data = Dataset([np.eye(3)[i % 3] for i in range(12)],
                   np.array([i % 3 for i in range(12)]), "test", 3)
    cfg = FuzzConfig(max_outer_iterations=1, mcmc=McmcConfig(draws=300, warmup=150))
    report = correlate_experiment(model, data, "gaussian", cfg, seed=2)
    assert report.degenerate
    assert report.pearson is None
    assert all(r["faults_detected"] == 0 for r in report.rows)


def test_retrain_zero_epochs_identity(trained_small, digits):
    train = digits.subset(range(200), split="train")
    eval_ds = digits.subset(range(500, 600))
    res = run_campaign(trained_small, eval_ds, "gaussian",
                       FuzzConfig(seed=2, max_outer_iterations=1))
    if not res.faults:
        pytest.skip("campaign found no faults at this seed")
    report, _ = retrain_experiment(trained_small, train, eval_ds, res.faults,
                                   ("gaussian", None), epochs=0, lr=0.1, seed=4)
    assert report.accuracy_after == report.accuracy_before
    assert report.clean_after == report.clean_before


def test_retrain_faults_labeled_by_ground_truth(trained_small, digits):
    train = digits.subset(range(100), split="train")
    eval_ds = digits.subset(range(500, 600))
    res = run_campaign(trained_small, eval_ds, "gaussian",
                       FuzzConfig(seed=6, max_outer_iterations=1))
    if not res.faults:
        pytest.skip("campaign found no faults at this seed")
    # the augmented loss must see the true label, not the wrong prediction
    for fault in res.faults:
        truth = int(eval_ds.labels[fault.dataset_index])
        assert fault.perturbed_prediction != fault.clean_prediction
        # construction rule: stored label source is the eval dataset
        assert 0 <= truth < 10


def test_retrain_requires_faults(trained_small, digits):
    with pytest.raises(ValueError, match="empty fault corpus"):
        retrain_experiment(trained_small, digits, digits, [], ("gaussian", 0.05),
                           1, 0.1, 0)


def test_coverage_vs_sample_size_consistency():
    rng = np.random.default_rng(5)
    store = SensitivityStore(40)
    for row in np.abs(rng.normal(1.0, 0.5, size=(60, 40))):
        store.append(row)
    results, ground_truth = coverage_vs_sample_size(
        store, [5, 10, 40], t=0.05, cfg=McmcConfig(draws=300, warmup=150), seed=8)
    assert set(results) == {5, 10, 40}
    assert results[40] == ground_truth
