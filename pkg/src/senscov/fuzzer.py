"""Phase 3 and the outer testing loop.

Candidates are ascended directly in input space to maximise the summed
sensitivity of the currently unconverged neurons, then projected back onto
the L-inf budget ball around their clean input and clamped to [0, 1]. The
loop alternates sensitivity collection, coverage, and ascent until the
coverage target is met or the iteration budget runs out.
"""

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .coverage import McmcConfig, coverage
from .engine import AbsDiffSum, input_gradient
from .perturb import PerturbSpec, MAGNITUDE_RANGE, family_budget, perturb
from .rng import substream, STREAM_ASCENT, STREAM_PERTURB
from .sensitivity import BatchItem, SensitivityStore, process_batch

PROJECTION_TOL = 1e-9


@dataclass
class FuzzConfig:
    coverage_target: float = 1.0
    max_outer_iterations: int = 50
    inner_steps: int = 10
    step_size: float = 0.01
    budget: float = None        # L-inf radius; None resolves per family/magnitude
    batch_size: int = None      # None processes the whole dataset each iteration
    seed: int = 0
    magnitude: float = None     # None draws a fresh magnitude per input
    sample_size: int = 1000     # neurons fitted per iteration (k)
    mcse_threshold: float = 0.05
    freeze_sample_after_first: bool = False
    pgd_steps: int = 10
    pgd_alpha: float = None
    mcmc: McmcConfig = field(default_factory=McmcConfig)

    def __post_init__(self):
        if not 0 <= self.coverage_target <= 1:
            raise ValueError("coverage_target must be in [0, 1]")
        if min(self.max_outer_iterations, self.inner_steps, self.sample_size) < 1:
            raise ValueError("iteration counts and sample_size must be positive")
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.mcse_threshold < 0:
            raise ValueError("mcse_threshold must be non-negative")

    def to_dict(self):
        return {
            "coverage_target": self.coverage_target,
            "max_outer_iterations": self.max_outer_iterations,
            "inner_steps": self.inner_steps,
            "step_size": self.step_size,
            "budget": self.budget,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "magnitude": self.magnitude,
            "sample_size": self.sample_size,
            "mcse_threshold": self.mcse_threshold,
            "freeze_sample_after_first": self.freeze_sample_after_first,
            "pgd_steps": self.pgd_steps,
            "pgd_alpha": self.pgd_alpha,
            "mcmc": self.mcmc.to_dict(),
        }


@dataclass
class CampaignResult:
    config: dict
    reports: list
    faults: list
    total_inputs: int
    termination: str
    timings: dict
    kind: str = "senscov"
    extra: dict = field(default_factory=dict)
    store: SensitivityStore = field(default=None, repr=False)

    def to_dict(self):
        """Deterministic serialisation; wall-clock timings are kept separate."""
        d = {
            "kind": self.kind,
            "config": self.config,
            "iterations": [r.to_dict() for r in self.reports],
            "faults": [f.to_dict(archive_index=i) for i, f in enumerate(self.faults)],
            "total_inputs": self.total_inputs,
            "fault_count": len(self.faults),
            "termination": self.termination,
        }
        d.update(self.extra)
        return d


def objective(model, clean, candidate, unconverged):
    """Summed |activation difference| over the unconverged neurons."""
    ids = np.asarray(list(unconverged), dtype=int)
    if ids.size == 0:
        raise ValueError("empty unconverged neuron set")
    baseline = model.forward(clean).values
    return AbsDiffSum(baseline, ids).value(model.forward(candidate).values)


def maximize(model, clean, seed_candidate, unconverged, cfg, rng):
    """Gradient-ascend the candidate, keeping the best iterate seen.

    Every iterate (and the returned tensor) satisfies
    ``|result - clean|_inf <= cfg.budget`` and lies in [0, 1].
    """
    if cfg.budget is None:
        raise ValueError("cfg.budget must be resolved before maximize")
    budget = cfg.budget
    clean = np.asarray(clean, dtype=np.float64)
    cand = np.asarray(seed_candidate, dtype=np.float64)
    if np.max(np.abs(cand - clean)) > budget + PROJECTION_TOL:
        raise ValueError("seed candidate outside the perturbation budget")
    ids = np.asarray(list(unconverged), dtype=int)
    if ids.size == 0:
        raise ValueError("empty unconverged neuron set")
    obj = AbsDiffSum(model.forward(clean).values, ids)
    best_val = obj.value(model.forward(cand).values)
    best = cand.copy()
    for _ in range(cfg.inner_steps):
        g = input_gradient(model, cand, obj)
        if np.any(g):
            cand = cand + cfg.step_size * g
        else:
            # all gradient paths dead (ReLU kinks): random nudge inside the ball
            cand = cand + rng.uniform(-cfg.step_size, cfg.step_size, size=cand.shape)
        cand = np.clip(cand, clean - budget, clean + budget)
        cand = np.clip(cand, 0.0, 1.0)
        val = obj.value(model.forward(cand).values)
        if val > best_val:
            best_val = val
            best = cand.copy()
    return best


def run_campaign(model, dataset, family, cfg, flush_path=None):
    """Full testing loop for one model, dataset, and perturbation family.

    When ``flush_path`` is set, whatever has been collected so far is saved
    there before an interrupting error propagates.
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    budget = cfg.budget if cfg.budget is not None else family_budget(family, cfg.magnitude)
    run_cfg = replace(cfg, budget=budget)
    batch = cfg.batch_size or len(dataset)
    slots = [i % len(dataset) for i in range(batch)]
    cleans = [np.asarray(dataset.inputs[i], dtype=np.float64) for i in slots]
    labels = [int(dataset.labels[i]) for i in slots]

    lo, hi = MAGNITUDE_RANGE[family]
    specs = []
    candidates = []
    for s, slot in enumerate(slots):
        rng = substream(cfg.seed, STREAM_PERTURB, 0, s)
        theta = cfg.magnitude if cfg.magnitude is not None else float(rng.uniform(lo, hi))
        if family == "pgd":
            spec = PerturbSpec(family, theta, steps=cfg.pgd_steps, alpha=cfg.pgd_alpha)
        else:
            spec = PerturbSpec(family, theta)
        specs.append(spec)
        candidates.append(perturb(spec, model, cleans[s], labels[s], rng))

    store = SensitivityStore(model.num_neurons)
    faults = []
    reports = []
    timings = {"calculator": 0.0, "coverage": 0.0, "fuzzer": 0.0}
    total_inputs = 0
    termination = "budget_exhausted"
    frozen_sample = None

    config = run_cfg.to_dict()
    config["family"] = family
    config["num_neurons"] = model.num_neurons
    config["arch_name"] = model.arch_name

    def build_result(reason):
        return CampaignResult(
            config=config,
            reports=reports,
            faults=faults,
            total_inputs=total_inputs,
            termination=reason,
            timings=timings,
            store=store,
        )

    try:
        for it in range(cfg.max_outer_iterations):
            t0 = time.perf_counter()
            items = [BatchItem(input_id=s, dataset_index=slots[s], clean=cleans[s],
                               perturbed=candidates[s], spec=specs[s].to_dict())
                     for s in range(batch)]
            process_batch(model, items, store, faults, iteration=it)
            total_inputs += batch
            timings["calculator"] += time.perf_counter() - t0

            t0 = time.perf_counter()
            report = coverage(store, cfg.sample_size, cfg.mcse_threshold, cfg.mcmc,
                              cfg.seed, iteration=it, neuron_ids=frozen_sample)
            if cfg.freeze_sample_after_first and frozen_sample is None:
                frozen_sample = report.sampled_neuron_ids
            reports.append(report)
            timings["coverage"] += time.perf_counter() - t0

            if report.coverage >= cfg.coverage_target:
                termination = "coverage_reached"
                break
            if it == cfg.max_outer_iterations - 1:
                break

            t0 = time.perf_counter()
            unconverged = report.unconverged_ids()
            for s in range(batch):
                seed_cand = np.clip(candidates[s], cleans[s] - budget, cleans[s] + budget)
                seed_cand = np.clip(seed_cand, 0.0, 1.0)
                candidates[s] = maximize(model, cleans[s], seed_cand, unconverged,
                                         run_cfg, substream(cfg.seed, STREAM_ASCENT, it, s))
            timings["fuzzer"] += time.perf_counter() - t0
    except BaseException:
        if flush_path is not None:
            from .campaign_io import save_campaign

            save_campaign(build_result("interrupted"), flush_path)
        raise

    return build_result(termination)
