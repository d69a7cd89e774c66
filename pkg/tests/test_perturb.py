import numpy as np
import pytest

from senscov.engine import build_mlp
from senscov.perturb import (PerturbSpec, UnsupportedFamilyError, magnitude_sweep,
                             parse_spec, perturb)
from senscov.rng import substream


@pytest.fixture(scope="module")
def model():
    return build_mlp([8, 6, 3], seed=4)


def rand_input(rng, n=8):
    return rng.random(n)


def test_gaussian_zero_sigma_is_identity(model):
    rng = np.random.default_rng(0)
    x = rand_input(rng)
    out = perturb(PerturbSpec("gaussian", 0.0), model, x, 0, substream(1, 0))
    assert np.array_equal(out, x)


def test_fgsm_zero_eps_is_identity(model):
    rng = np.random.default_rng(1)
    x = rand_input(rng)
    out = perturb(PerturbSpec("fgsm", 0.0), model, x, 1, substream(1, 0))
    assert np.array_equal(out, x)


def test_pgd_respects_linf_budget(model):
    rng = np.random.default_rng(2)
    for trial in range(50):
        x = rand_input(rng)
        eps = float(rng.uniform(0.05, 0.5))
        out = perturb(PerturbSpec("pgd", eps), model, x, int(rng.integers(3)),
                      substream(2, trial))
        assert np.max(np.abs(out - x)) <= eps + 1e-12
        assert out.min() >= 0.0 and out.max() <= 1.0


def test_gaussian_outputs_clamped(model):
    rng = np.random.default_rng(3)
    for trial in range(20):
        x = rand_input(rng)
        out = perturb(PerturbSpec("gaussian", 0.05), model, x, 0, substream(3, trial))
        assert out.min() >= 0.0 and out.max() <= 1.0


def test_fgsm_budget_exact_where_unclamped(model):
    eps = 0.2
    x = np.full(8, 0.5)  # eps away from neither clamp boundary
    out = perturb(PerturbSpec("fgsm", eps), model, x, 0, substream(4, 0))
    moved = out != x
    assert moved.any()
    assert np.allclose(np.abs(out - x)[moved], eps, atol=1e-15)


def test_determinism(model):
    x = np.random.default_rng(5).random(8)
    a = perturb(PerturbSpec("gaussian", 0.03), model, x, 0, substream(7, 1))
    b = perturb(PerturbSpec("gaussian", 0.03), model, x, 0, substream(7, 1))
    assert np.array_equal(a, b)


def test_magnitude_sweep_values():
    assert magnitude_sweep("gaussian") == [0.01, 0.02, 0.03, 0.04, 0.05]
    assert magnitude_sweep("fgsm") == [0.1, 0.2, 0.3, 0.4, 0.5]
    assert magnitude_sweep("pgd") == [0.1, 0.2, 0.3, 0.4, 0.5]


def test_cw_reported_unsupported():
    with pytest.raises(UnsupportedFamilyError, match="cw"):
        magnitude_sweep("cw")


def test_magnitude_range_validated():
    with pytest.raises(ValueError):
        PerturbSpec("gaussian", 0.2)
    with pytest.raises(ValueError):
        PerturbSpec("fgsm", -0.1)


def test_input_range_validated(model):
    with pytest.raises(ValueError, match=r"\[0, 1\]"):
        perturb(PerturbSpec("gaussian", 0.01), model, np.full(8, 1.5), 0, substream(0, 0))


def test_invalid_label(model):
    with pytest.raises(ValueError, match="label"):
        perturb(PerturbSpec("fgsm", 0.1), model, np.full(8, 0.5), 9, substream(0, 0))


def test_parse_spec_strings():
    family, spec = parse_spec("gaussian:sigma=0.03")
    assert family == "gaussian" and spec.magnitude == 0.03
    family, spec = parse_spec("fgsm:eps=0.2")
    assert family == "fgsm" and spec.magnitude == 0.2
    family, spec = parse_spec("pgd:eps=0.2,steps=5,alpha=0.04")
    assert spec.steps == 5 and spec.alpha == 0.04
    family, spec = parse_spec("pgd:eps=0.4")
    assert spec.resolved_alpha() == 0.1
    family, spec = parse_spec("gaussian")
    assert family == "gaussian" and spec is None
    with pytest.raises(ValueError):
        parse_spec("gaussian:wat=1")
    with pytest.raises(UnsupportedFamilyError):
        parse_spec("cw:c=10")
