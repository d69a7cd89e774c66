"""Coverage-guided testing for neural-network classifiers.

The workflow alternates three phases over a working set of perturbed inputs:
per-neuron sensitivity sampling with fault detection, a coverage metric that
declares neurons converged by the Monte Carlo Standard Error of a fitted
normal sensitivity model, and gradient ascent that steers inputs toward the
still-unconverged neurons.
"""

__version__ = "0.1.0"

from .coverage import CoverageReport, McmcConfig, NeuronStats, coverage, fit_posterior, mcse, sample_neurons
from .datasets import Dataset, load_csv, load_idx
from .engine import Model, build_convnet, build_from_arch, build_mlp, input_gradient, param_gradients, sgd_train
from .fuzzer import CampaignResult, FuzzConfig, maximize, objective, run_campaign
from .model_io import load_model, save_model
from .perturb import PerturbSpec, magnitude_sweep, perturb
from .sensitivity import FaultRecord, SensitivityStore, process_batch, sensitivity_of_pair
from .stats import error_rate, pearson

__all__ = [
    "__version__",
    "CampaignResult", "CoverageReport", "Dataset", "FaultRecord", "FuzzConfig",
    "McmcConfig", "Model", "NeuronStats", "PerturbSpec", "SensitivityStore",
    "build_convnet", "build_from_arch", "build_mlp", "coverage", "error_rate",
    "fit_posterior", "input_gradient", "load_csv", "load_idx", "load_model",
    "magnitude_sweep", "maximize", "mcse", "objective", "param_gradients",
    "pearson", "perturb", "process_batch", "run_campaign", "sample_neurons",
    "save_model", "sensitivity_of_pair", "sgd_train",
]
