"""Perturbed-input generation: gaussian noise, FGSM, and PGD.

Magnitudes follow the evaluation sweep: five sigma values for gaussian noise
and five epsilon values for the two gradient attacks. All outputs stay in
[0, 1] elementwise and are deterministic given the caller's RNG stream.
"""

from dataclasses import dataclass

import numpy as np

from .engine import CrossEntropy, input_gradient

MAGNITUDE_SWEEP = {
    "gaussian": [0.01, 0.02, 0.03, 0.04, 0.05],
    "fgsm": [0.1, 0.2, 0.3, 0.4, 0.5],
    "pgd": [0.1, 0.2, 0.3, 0.4, 0.5],
}

MAGNITUDE_RANGE = {
    "gaussian": (0.0, 0.05),
    "fgsm": (0.0, 0.5),
    "pgd": (0.0, 0.5),
}

FAMILIES = tuple(MAGNITUDE_SWEEP)


class UnsupportedFamilyError(ValueError):
    pass


def _check_family(family):
    if family not in FAMILIES:
        raise UnsupportedFamilyError(f"unsupported perturbation family: {family!r}")


def magnitude_sweep(family):
    _check_family(family)
    return list(MAGNITUDE_SWEEP[family])


def family_budget(family, magnitude=None):
    """L-inf budget: the given magnitude, else the family's sweep maximum."""
    _check_family(family)
    return float(magnitude) if magnitude is not None else max(MAGNITUDE_SWEEP[family])


@dataclass(frozen=True)
class PerturbSpec:
    family: str
    magnitude: float
    steps: int = 10          # pgd only
    alpha: float = None      # pgd step size, defaults to magnitude / 4

    def __post_init__(self):
        _check_family(self.family)
        lo, hi = MAGNITUDE_RANGE[self.family]
        if not lo <= self.magnitude <= hi:
            raise ValueError(
                f"{self.family} magnitude {self.magnitude} outside [{lo}, {hi}]"
            )
        if self.family == "pgd":
            if self.steps < 1:
                raise ValueError("pgd steps must be >= 1")
            if self.alpha is not None and self.alpha <= 0:
                raise ValueError("pgd alpha must be positive")

    def resolved_alpha(self):
        return self.alpha if self.alpha is not None else self.magnitude / 4.0

    def to_dict(self):
        d = {"family": self.family, "magnitude": self.magnitude}
        if self.family == "pgd":
            d["steps"] = self.steps
            d["alpha"] = self.resolved_alpha()
        return d

    def key(self):
        return tuple(sorted(self.to_dict().items()))


def parse_spec(text):
    """Parse a CLI spec string like ``gaussian:sigma=0.03``.

    A bare family name parses to (family, None): magnitude drawn per input
    from the family range. Returns (family, PerturbSpec or None).
    """
    if ":" not in text:
        _check_family(text)
        return text, None
    family, _, args = text.partition(":")
    _check_family(family)
    kv = {}
    for part in args.split(","):
        if "=" not in part:
            raise ValueError(f"bad perturbation parameter {part!r} in {text!r}")
        k, _, v = part.partition("=")
        kv[k.strip()] = v.strip()
    try:
        if family == "gaussian":
            spec = PerturbSpec("gaussian", float(kv.pop("sigma")))
        elif family == "fgsm":
            spec = PerturbSpec("fgsm", float(kv.pop("eps")))
        else:
            alpha_txt = kv.pop("alpha", None)
            spec = PerturbSpec(
                "pgd", float(kv.pop("eps")),
                steps=int(kv.pop("steps", 10)),
                alpha=float(alpha_txt) if alpha_txt is not None else None,
            )
    except KeyError as exc:
        raise ValueError(f"missing parameter {exc} in perturbation spec {text!r}")
    if kv:
        raise ValueError(f"unknown perturbation parameters {sorted(kv)} in {text!r}")
    return family, spec


def perturb(spec, model, x, label, rng):
    """Apply one perturbation; result is clamped to [0, 1] elementwise."""
    x = np.asarray(x, dtype=np.float64)
    if x.min() < 0.0 or x.max() > 1.0:
        raise ValueError("perturbation input must lie in [0, 1]")
    if spec.family == "gaussian":
        noise = rng.normal(0.0, spec.magnitude, size=x.shape)
        return np.clip(x + noise, 0.0, 1.0)
    if not 0 <= label < model.num_classes:
        raise ValueError(f"label {label} invalid for {spec.family}")
    if spec.family == "fgsm":
        g = input_gradient(model, x, CrossEntropy(model, label))
        return np.clip(x + spec.magnitude * np.sign(g), 0.0, 1.0)
    # pgd
    alpha = spec.resolved_alpha()
    eps = spec.magnitude
    cur = x.copy()
    for _ in range(spec.steps):
        g = input_gradient(model, cur, CrossEntropy(model, label))
        cur = cur + alpha * np.sign(g)
        cur = np.clip(cur, x - eps, x + eps)
        cur = np.clip(cur, 0.0, 1.0)
    return cur
