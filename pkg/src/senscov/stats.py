"""Small statistics helpers for the experiment harness."""

import math

import numpy as np

from .perturb import perturb
from .rng import substream, STREAM_ERROR_RATE


def pearson(xs, ys):
    """Sample Pearson correlation; raises on degenerate variance."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("pearson needs two equal-length vectors")
    if xs.shape[0] < 2:
        raise ValueError("pearson needs at least 2 points")
    dx = xs - xs.mean()
    dy = ys - ys.mean()
    sx = math.sqrt(float(np.dot(dx, dx)))
    sy = math.sqrt(float(np.dot(dy, dy)))
    if sx == 0.0 or sy == 0.0:
        raise ValueError("degenerate variance: cannot compute correlation")
    return float(np.dot(dx, dy) / (sx * sy))


def error_rate(model, dataset, spec, seed):
    """Fraction of freshly perturbed inputs misclassified vs ground truth."""
    wrong = 0
    for i, (x, y) in enumerate(zip(dataset.inputs, dataset.labels)):
        rng = substream(seed, STREAM_ERROR_RATE, i)
        mutant = perturb(spec, model, x, int(y), rng)
        if model.predict(mutant) != y:
            wrong += 1
    return wrong / len(dataset)
