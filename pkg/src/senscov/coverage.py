"""Phase 2: sensitivity-convergence coverage.

A normal model is fitted to each sampled neuron's sensitivity samples by
adaptive random-walk Metropolis over (mu, log sigma). A neuron counts as
converged when the Monte Carlo Standard Error of its posterior-mean chain,
estimated by batch means, falls at or below the threshold t. Coverage is the
converged fraction of the sampled neurons.

Neuron selection sorts all neurons by sample variance and takes k evenly
spaced ranks; higher-variance neurons converge more slowly, so the spread
over variance ranks proxies the convergence rate of the whole model.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import kernels
from .backend import worker_count
from .rng import substream, STREAM_MCMC

# below this many samples a neuron is never counted converged
MIN_FIT_SAMPLES = 30


@dataclass
class McmcConfig:
    chains: int = 2
    draws: int = 1000          # kept draws per chain, after warm-up
    warmup: int = 500
    target_accept: float = 0.3
    prior_mu_sd: float = 10.0
    prior_sigma_sd: float = 10.0
    stream_tag: int = STREAM_MCMC  # sub-streams derive from (seed, tag, iteration, neuron)

    def __post_init__(self):
        if min(self.chains, self.draws, self.warmup) < 1:
            raise ValueError("chains, draws and warmup must be positive")
        if not 0 < self.target_accept < 1:
            raise ValueError("target_accept must be in (0, 1)")

    def to_dict(self):
        return {
            "chains": self.chains, "draws": self.draws, "warmup": self.warmup,
            "target_accept": self.target_accept,
            "prior_mu_sd": self.prior_mu_sd, "prior_sigma_sd": self.prior_sigma_sd,
        }


@dataclass
class NeuronStats:
    neuron_id: int
    sample_count: int
    variance: float
    posterior_mean_mu: float = None
    posterior_sd_mu: float = None
    mcse: float = math.inf
    converged: bool = False

    def to_dict(self):
        return {
            "neuron_id": self.neuron_id,
            "sample_count": self.sample_count,
            "variance": self.variance,
            "posterior_mean_mu": self.posterior_mean_mu,
            "posterior_sd_mu": self.posterior_sd_mu,
            "mcse": None if math.isinf(self.mcse) else self.mcse,
            "converged": self.converged,
        }


@dataclass
class CoverageReport:
    sampled_neuron_ids: list
    stats: list
    coverage: float
    iteration: int
    threshold: float

    def unconverged_ids(self):
        return [s.neuron_id for s in self.stats if not s.converged]

    def to_dict(self):
        return {
            "iteration": self.iteration,
            "threshold": self.threshold,
            "coverage": self.coverage,
            "sampled": len(self.sampled_neuron_ids),
            "converged": sum(1 for s in self.stats if s.converged),
            "neurons": [s.to_dict() for s in self.stats],
        }

    def csv_rows(self):
        rows = [("neuron_id", "samples", "variance", "mcse", "converged")]
        for s in self.stats:
            rows.append((s.neuron_id, s.sample_count, repr(s.variance),
                         "inf" if math.isinf(s.mcse) else repr(s.mcse),
                         int(s.converged)))
        return rows


def sample_neurons(variances, k):
    """Variance-stratified neuron selection.

    Sort ids ascending by (variance, id), pick the 1-indexed sorted positions
    ceil(j*n/k) for j = 1..k, clamp to [1, n], and deduplicate preserving
    order. For n <= k this yields every neuron.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    variances = np.asarray(variances, dtype=np.float64)
    n = variances.shape[0]
    if n == 0:
        raise ValueError("no neurons to sample")
    order = np.lexsort((np.arange(n), variances))
    selected = []
    seen = set()
    for j in range(1, k + 1):
        pos = (j * n + k - 1) // k  # ceil(j*n/k)
        pos = min(max(pos, 1), n)
        nid = int(order[pos - 1])
        if nid not in seen:
            seen.add(nid)
            selected.append(nid)
    return selected


def fit_posterior(samples, cfg, rng):
    """Posterior (mu, sigma) draws for a Normal model of the samples.

    Runs cfg.chains adaptive random-walk Metropolis chains; returns
    (mu_draws, sigma_draws) with shape (chains, draws). Priors are
    Normal(0, prior_mu_sd^2) on mu and HalfNormal(prior_sigma_sd) on sigma.
    """
    samples = np.asarray(samples, dtype=np.float64)
    m = samples.shape[0]
    if m < 2:
        raise ValueError("need at least 2 samples to fit a posterior")
    s1 = float(np.sum(samples))
    s2 = float(np.sum(samples * samples))
    mean = s1 / m
    sd = float(np.std(samples, ddof=1))
    x0 = math.log(max(sd, 1e-6))
    scale_mu = 2.4 * max(sd, 1e-8) / math.sqrt(m)
    scale_x = 2.4 / math.sqrt(2.0 * m)
    total = cfg.warmup + cfg.draws
    mu_chains = np.empty((cfg.chains, cfg.draws))
    sigma_chains = np.empty((cfg.chains, cfg.draws))
    for c in range(cfg.chains):
        jitter = rng.normal(size=2)
        mu0 = mean + (sd / math.sqrt(m)) * jitter[0]
        x0_c = x0 + 0.1 * jitter[1]
        x0_c = min(max(x0_c, kernels.LOG_SIGMA_MIN), kernels.LOG_SIGMA_MAX)
        z = rng.normal(size=(total, 2))
        logu = np.log1p(-rng.random(total))
        mu_draws, sigma_draws, _ = kernels.mh_chain(
            m, s1, s2, cfg.draws, cfg.warmup, cfg.target_accept,
            mu0, x0_c, cfg.prior_mu_sd ** 2, cfg.prior_sigma_sd ** 2,
            scale_mu, scale_x, z, logu,
        )
        mu_chains[c] = mu_draws
        sigma_chains[c] = sigma_draws
    return mu_chains, sigma_chains


def mcse(chain):
    """Batch-means Monte Carlo Standard Error.

    Each chain of length L is split into floor(sqrt(L)) consecutive batches
    of floor(L/b) draws (remainder dropped); the estimate is the sample
    standard deviation of the pooled batch means over sqrt(batch count).
    """
    chain = np.asarray(chain, dtype=np.float64)
    if chain.ndim == 1:
        chain = chain[None, :]
    if chain.ndim != 2:
        raise ValueError("chain must be 1-D or (chains, draws)")
    L = chain.shape[1]
    if L < 4:
        raise ValueError(f"chain too short for batch means: {L} < 4")
    b = math.isqrt(L)
    size = L // b
    used = chain[:, : b * size].reshape(chain.shape[0], b, size)
    means = used.mean(axis=2).reshape(-1)
    return float(np.std(means, ddof=1) / math.sqrt(means.shape[0]))


def _fit_one(args):
    samples, variance, neuron_id, t, cfg, seed, iteration = args
    m = samples.shape[0]
    stats = NeuronStats(neuron_id=neuron_id, sample_count=m, variance=float(variance))
    if m < MIN_FIT_SAMPLES:
        return stats
    rng = substream(seed, cfg.stream_tag, iteration, neuron_id)
    mu_chains, _ = fit_posterior(samples, cfg, rng)
    stats.posterior_mean_mu = float(np.mean(mu_chains))
    stats.posterior_sd_mu = float(np.std(mu_chains, ddof=1))
    stats.mcse = mcse(mu_chains)
    stats.converged = stats.mcse <= t
    return stats


def coverage(store, k, t, cfg, seed, iteration=0, neuron_ids=None):
    """Full Phase 2: sample neurons, fit posteriors, report converged fraction.

    Pass ``neuron_ids`` to skip re-sampling and reuse a fixed neuron set.
    """
    if len(store) == 0:
        raise ValueError("empty sensitivity store")
    variances = store.variances()
    sampled = list(neuron_ids) if neuron_ids is not None else sample_neurons(variances, k)
    matrix = store.matrix()
    jobs = [(matrix[:, nid], variances[nid], nid, t, cfg, seed, iteration)
            for nid in sampled]
    workers = worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            stats = list(pool.map(_fit_one, jobs))
    else:
        stats = [_fit_one(job) for job in jobs]
    converged = sum(1 for s in stats if s.converged)
    return CoverageReport(
        sampled_neuron_ids=sampled,
        stats=stats,
        coverage=converged / len(sampled),
        iteration=iteration,
        threshold=t,
    )
