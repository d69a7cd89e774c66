"""Reference coverage metrics: Neuron Coverage and k-Multisection NC.

NC normalises each layer's activations to [0, 1] per input (min-max) and
marks a neuron covered once its normalised value exceeds the threshold.
KMNC partitions each neuron's training-set activation range into k sections
and counts sections hit; out-of-range activations are ignored.

The selection loop mutates random inputs with random sweep magnitudes and
keeps a mutant only when it raises the metric; faults are counted among the
kept inputs, using the same prediction-flip definition as Phase 1.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .fuzzer import CampaignResult
from .perturb import MAGNITUDE_RANGE, PerturbSpec
from .perturb import perturb as apply_perturb
from .rng import substream, STREAM_BASELINE
from .sensitivity import FaultRecord

DEFAULT_STALL_LIMIT = 200


@dataclass
class KmncProfile:
    lows: np.ndarray
    highs: np.ndarray
    k: int

    def __post_init__(self):
        self.lows = np.asarray(self.lows, dtype=np.float64)
        self.highs = np.asarray(self.highs, dtype=np.float64)
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.lows.shape != self.highs.shape:
            raise ValueError("low/high shape mismatch")
        if np.any(self.lows > self.highs):
            raise ValueError("profile requires low <= high per neuron")


def build_kmnc_profile(model, dataset, k):
    """Per-neuron activation bounds over a (training) dataset."""
    lows = np.full(model.num_neurons, np.inf)
    highs = np.full(model.num_neurons, -np.inf)
    for x in dataset.inputs:
        vals = model.forward(x).values
        np.minimum(lows, vals, out=lows)
        np.maximum(highs, vals, out=highs)
    return KmncProfile(lows=lows, highs=highs, k=k)


@dataclass
class BaselineState:
    metric: str
    covered: np.ndarray = field(repr=False)
    inputs_accepted: int = 0
    faults: list = field(default_factory=list)

    def coverage(self):
        return float(np.count_nonzero(self.covered)) / self.covered.size


def new_nc_state(num_neurons):
    return BaselineState(metric="nc", covered=np.zeros(num_neurons, dtype=bool))


def new_kmnc_state(num_neurons, k):
    return BaselineState(metric="kmnc", covered=np.zeros((num_neurons, k), dtype=bool))


def _nc_hits(model, trace, threshold):
    hits = np.zeros(model.num_neurons, dtype=bool)
    for idx in range(len(model.layers)):
        start, end = model.segment(idx)
        seg = trace[start:end]
        lo, hi = seg.min(), seg.max()
        if hi > lo:
            hits[start:end] = (seg - lo) / (hi - lo) > threshold
        # all-equal layer normalises to 0: nothing covered
    return hits


def nc_update(state, model, trace, threshold):
    """Mark neurons whose per-layer min-max normalised activation > threshold."""
    if not 0 <= threshold <= 1:
        raise ValueError("NC threshold must be in [0, 1]")
    state.covered |= _nc_hits(model, trace, threshold)
    return state


def _kmnc_hits(trace, profile):
    k = profile.k
    span = profile.highs - profile.lows
    hits = np.zeros((trace.shape[0], k), dtype=bool)
    in_range = (trace >= profile.lows) & (trace <= profile.highs)
    degenerate = span == 0
    normal = in_range & ~degenerate
    sections = np.zeros(trace.shape[0], dtype=int)
    np.floor_divide((trace - profile.lows) * k, np.where(span == 0, 1.0, span),
                    out=sections, where=normal, casting="unsafe")
    sections = np.clip(sections, 0, k - 1)
    hits[np.nonzero(normal)[0], sections[normal]] = True
    # zero-width range: section 0 iff the activation equals the bound
    exact = degenerate & (trace == profile.lows)
    hits[np.nonzero(exact)[0], 0] = True
    return hits


def kmnc_update(state, trace, profile):
    """Mark (neuron, section) cells hit by in-range activations."""
    if profile.lows.shape[0] != trace.shape[0]:
        raise ValueError(
            f"profile/model neuron count mismatch: profile {profile.lows.shape[0]}, "
            f"trace {trace.shape[0]}"
        )
    if state.covered.shape != (trace.shape[0], profile.k):
        raise ValueError("state shape does not match trace/profile")
    state.covered |= _kmnc_hits(trace, profile)
    return state


def baseline_campaign(model, dataset, family, metric, budget, seed,
                      nc_threshold=0.5, profile=None,
                      stall_limit=DEFAULT_STALL_LIMIT):
    """Coverage-driven input selection with the given metric.

    Stops at 100% coverage, after ``budget`` mutation attempts, or once
    ``stall_limit`` consecutive attempts fail to raise the metric.
    """
    if metric == "nc":
        state = new_nc_state(model.num_neurons)
    elif metric == "kmnc":
        if profile is None:
            raise ValueError("kmnc needs a training-data profile")
        state = new_kmnc_state(model.num_neurons, profile.k)
    else:
        raise ValueError(f"unknown baseline metric {metric!r}")

    lo, hi = MAGNITUDE_RANGE[family]
    t0 = time.perf_counter()
    attempts = 0
    faults_on_attempts = 0
    stall = 0
    events = []
    termination = "budget_exhausted"
    for attempt in range(budget):
        if state.coverage() >= 1.0:
            termination = "coverage_reached"
            break
        if stall >= stall_limit:
            termination = "saturated"
            break
        rng = substream(seed, STREAM_BASELINE, attempt)
        idx = int(rng.integers(len(dataset)))
        theta = float(rng.uniform(lo, hi))
        spec = PerturbSpec(family, theta)
        clean = np.asarray(dataset.inputs[idx], dtype=np.float64)
        mutant = apply_perturb(spec, model, clean, int(dataset.labels[idx]), rng)
        trace = model.forward(mutant)
        attempts += 1

        if metric == "nc":
            hits = _nc_hits(model, trace.values, nc_threshold)
        else:
            hits = _kmnc_hits(trace.values, profile)
        gain = np.any(hits & ~state.covered)
        clean_pred = model.predict(clean)
        pert_pred = int(np.argmax(trace.output))
        if clean_pred != pert_pred:
            faults_on_attempts += 1
        if not gain:
            stall += 1
            continue
        stall = 0
        state.covered |= hits
        state.inputs_accepted += 1
        if clean_pred != pert_pred:
            state.faults.append(FaultRecord(
                input_id=attempt, dataset_index=idx, perturb_spec=spec.to_dict(),
                clean_prediction=clean_pred, perturbed_prediction=pert_pred,
                iteration=attempt, perturbed_input=mutant,
            ))
        events.append({"attempt": attempt, "coverage": state.coverage(),
                       "accepted": state.inputs_accepted})
    else:
        if state.coverage() >= 1.0:
            termination = "coverage_reached"

    elapsed = time.perf_counter() - t0
    config = {
        "metric": metric, "family": family, "budget": budget, "seed": seed,
        "nc_threshold": nc_threshold if metric == "nc" else None,
        "kmnc_k": profile.k if profile is not None else None,
        "stall_limit": stall_limit,
        "arch_name": model.arch_name,
        "num_neurons": model.num_neurons,
    }
    return CampaignResult(
        config=config,
        reports=[],
        faults=state.faults,
        total_inputs=attempts,
        termination=termination,
        timings={"calculator": elapsed, "coverage": 0.0, "fuzzer": 0.0},
        kind="baseline",
        extra={
            "events": events,
            "final_coverage": state.coverage(),
            "inputs_accepted": state.inputs_accepted,
            "faults_on_attempts": faults_on_attempts,
        },
    )
