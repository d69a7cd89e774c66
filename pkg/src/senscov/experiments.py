"""The three evaluation protocols: fault/error-rate correlation across the
magnitude sweep, retraining on detected faults, and the coverage-vs-sample-
size study.
"""

import hashlib
import time
from dataclasses import dataclass, replace

import numpy as np

from . import model_io
from .coverage import coverage as compute_coverage
from .engine import accuracy, sgd_train
from .datasets import Dataset
from .fuzzer import run_campaign
from .perturb import PerturbSpec, magnitude_sweep
from .rng import substream, STREAM_EXPERIMENT
from .stats import error_rate, pearson


def model_digest(model):
    layers = []
    arrays = []
    for layer in model.layers:
        desc = layer.descriptor()
        desc["params"] = [list(a.shape) for a in layer.param_arrays()]
        layers.append(desc)
        arrays.extend(layer.param_arrays())
    manifest = {"kind": "model", "arch_name": model.arch_name,
                "input_shape": list(model.input_shape), "layers": layers}
    return hashlib.sha256(model_io._pack(manifest, arrays)).hexdigest()


@dataclass
class ExperimentReport:
    rows: list               # one dict per magnitude, sorted by magnitude
    pearson: float           # None when fault counts were degenerate
    degenerate: bool
    metadata: dict

    def to_dict(self):
        return {
            "kind": "correlation_experiment",
            "rows": self.rows,
            "pearson": self.pearson,
            "degenerate": self.degenerate,
            "metadata": self.metadata,
        }


def correlate_experiment(model, dataset, family, cfg, seed):
    """Run one campaign per sweep magnitude and correlate error rate with
    the fault count at termination."""
    rows = []
    for idx, theta in enumerate(magnitude_sweep(family)):
        campaign_cfg = replace(cfg, magnitude=theta, budget=theta,
                               seed=int(substream(seed, STREAM_EXPERIMENT, idx).integers(2**63)))
        t0 = time.perf_counter()
        result = run_campaign(model, dataset, family, campaign_cfg)
        wall = time.perf_counter() - t0
        spec = PerturbSpec(family, theta)
        err = error_rate(model, dataset, spec, int(
            substream(seed, STREAM_EXPERIMENT, 100 + idx).integers(2**63)))
        rows.append({
            "magnitude": theta,
            "error_rate": err,
            "faults_detected": len(result.faults),
            "inputs_generated": result.total_inputs,
            "iterations": len(result.reports),
            "termination": result.termination,
            "wall_clock": wall,
        })
    rows.sort(key=lambda r: r["magnitude"])
    try:
        r = pearson([row["error_rate"] for row in rows],
                    [row["faults_detected"] for row in rows])
        degenerate = False
    except ValueError:
        r = None
        degenerate = True
    metadata = {
        "family": family,
        "seed": seed,
        "model_hash": model_digest(model),
        "config": cfg.to_dict(),
        "dataset_size": len(dataset),
    }
    return ExperimentReport(rows=rows, pearson=r, degenerate=degenerate, metadata=metadata)


@dataclass
class RetrainReport:
    accuracy_before: float
    accuracy_after: float
    clean_before: float
    clean_after: float
    num_faults: int
    epochs: int
    learning_rate: float

    def to_dict(self):
        return {
            "kind": "retrain_experiment",
            "accuracy_before": self.accuracy_before,
            "accuracy_after": self.accuracy_after,
            "gain": self.accuracy_after - self.accuracy_before,
            "clean_before": self.clean_before,
            "clean_after": self.clean_after,
            "num_faults": self.num_faults,
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
        }


def retrain_experiment(model, train_ds, eval_ds, faults, perturbation, epochs, lr,
                       seed, batch_size=32):
    """Fine-tune on train data plus fault inputs (ground-truth labelled) and
    measure accuracy on a freshly perturbed held-out set before and after.

    ``perturbation`` is (family, magnitude); a None magnitude draws a fresh
    magnitude per evaluation input from the family range, mirroring a
    random-magnitude campaign. The same perturbed evaluation set scores both
    models, so epochs=0 leaves the accuracies identical.
    """
    if not faults:
        raise ValueError("empty fault corpus")
    fault_inputs = [np.asarray(f.perturbed_input, dtype=np.float64) for f in faults]
    fault_labels = [int(eval_ds.labels[f.dataset_index]) for f in faults]
    augmented = Dataset(
        list(train_ds.inputs) + fault_inputs,
        np.concatenate([train_ds.labels, np.asarray(fault_labels, dtype=int)]),
        split="train",
        num_classes=train_ds.num_classes,
    )
    eval_seed = int(substream(seed, STREAM_EXPERIMENT, 0).integers(2**63))
    perturbed_eval = Dataset(
        [_perturb_for_eval(perturbation, model, x, int(y), eval_seed, i)
         for i, (x, y) in enumerate(zip(eval_ds.inputs, eval_ds.labels))],
        eval_ds.labels.copy(),
        split="eval",
        num_classes=eval_ds.num_classes,
    )
    acc_before = accuracy(model, perturbed_eval)
    clean_before = accuracy(model, eval_ds)
    tuned = sgd_train(model, augmented, epochs, lr, batch_size,
                      seed=int(substream(seed, STREAM_EXPERIMENT, 1).integers(2**63)))
    acc_after = accuracy(tuned, perturbed_eval)
    clean_after = accuracy(tuned, eval_ds)
    return RetrainReport(
        accuracy_before=acc_before,
        accuracy_after=acc_after,
        clean_before=clean_before,
        clean_after=clean_after,
        num_faults=len(faults),
        epochs=epochs,
        learning_rate=lr,
    ), tuned


def _perturb_for_eval(perturbation, model, x, y, seed, index):
    from .perturb import MAGNITUDE_RANGE, perturb

    family, magnitude = perturbation
    rng = substream(seed, STREAM_EXPERIMENT, 2, index)
    if magnitude is None:
        lo, hi = MAGNITUDE_RANGE[family]
        magnitude = float(rng.uniform(lo, hi))
    return perturb(PerturbSpec(family, magnitude), model, x, y, rng)


def coverage_vs_sample_size(store, k_values, t, cfg, seed, iteration=0):
    """Coverage at each sample size plus the all-neuron ground truth.

    Per-neuron fits derive their streams from (seed, iteration, neuron id),
    so a neuron's converged flag is identical across sample sizes.
    """
    ground_truth = compute_coverage(store, store.num_neurons, t, cfg, seed,
                                    iteration=iteration)
    converged = {s.neuron_id: s.converged for s in ground_truth.stats}
    results = {}
    for k in k_values:
        report = compute_coverage(store, k, t, cfg, seed, iteration=iteration)
        # sanity: flags must agree with the ground-truth fit
        for s in report.stats:
            assert converged[s.neuron_id] == s.converged
        results[k] = report.coverage
    return results, ground_truth.coverage
