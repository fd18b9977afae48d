import math

import numpy as np
import pytest

from komatsu_spectral.catalog import FAMILIES, family_coeffs, family_norms
from komatsu_spectral.coeff_space import (
    DECAY_CURVE_HEADER, CoeffArray, EmptyGridError, alpha_dual_sum_probe,
    bidual_membership, classify, decay_curve_rows, default_L_grid)
from komatsu_spectral.spectral_models import build_model
from komatsu_spectral.weights import WeightSequence


@pytest.fixture
def circle():
    return build_model("circle", 60)


@pytest.fixture
def factorial():
    return WeightSequence.gevrey(1.0)


@pytest.mark.parametrize("a", [0.3, 0.5, 1.0])
def test_poisson_decay_rate_recovered(circle, factorial, a):
    u = family_coeffs(circle, "poisson", {"a": a})
    env = classify(u, factorial, "gevrey_roumieu")
    assert env.passed
    assert env.cls == "gevrey_roumieu"
    assert abs(env.L - a) <= 0.1 * a
    assert env.l_verdicts[max(env.l_verdicts)] is False


def test_analytic_class_matches_gevrey_one(circle, factorial):
    u = family_coeffs(circle, "poisson", {"a": 0.5})
    env = classify(u, factorial, "analytic")
    assert env.passed
    assert env.L == pytest.approx(0.5, rel=0.1)


def test_subgevrey_is_smooth_but_not_gevrey(circle, factorial):
    u = family_coeffs(circle, "subgevrey", {"c": 1.0})
    assert classify(u, factorial, "smooth").passed
    assert not classify(u, factorial, "gevrey_roumieu").passed


def test_polynomial_decay_is_not_smooth(circle, factorial):
    u = family_coeffs(circle, "polynomial_decay", {"p": 2.0})
    env = classify(u, factorial, "smooth")
    assert not env.passed
    assert env.cls == "none"
    assert env.L is None


@pytest.mark.parametrize("b", [0.1, 0.2, 0.3])
def test_tempered_growth_is_roumieu_dual(circle, factorial, b):
    u = family_coeffs(circle, "tempered_growth", {"b": b})
    assert classify(u, factorial, "alpha_dual_roumieu").passed
    for target in ("smooth", "analytic", "gevrey_roumieu"):
        assert not classify(u, factorial, target).passed


def test_exponential_growth_is_beurling_dual_only(circle, factorial):
    u = family_coeffs(circle, "dual_growth", {"a": 0.3})
    assert classify(u, factorial, "alpha_dual_beurling").passed
    assert not classify(u, factorial, "alpha_dual_roumieu").passed
    assert not classify(u, factorial, "gevrey_roumieu").passed


def test_zero_coefficients_are_trivial(circle, factorial):
    u = family_coeffs(circle, "zero")
    env = classify(u, factorial, "gevrey_beurling")
    assert env.cls == "trivial"
    assert env.passed
    assert all(env.l_verdicts.values())


def test_roumieu_versus_beurling(circle, factorial):
    grid = default_L_grid()
    u = family_coeffs(circle, "associated_decay", {"L0": 1.0})
    assert classify(u, factorial, "gevrey_roumieu", grid).passed
    beurling = classify(u, factorial, "gevrey_beurling", grid)
    assert not beurling.passed
    assert not any(ok for L, ok in beurling.l_verdicts.items() if L > 1.2)

    fast = family_coeffs(circle, "beurling_decay")
    assert classify(fast, factorial, "gevrey_beurling",
                    default_L_grid(0.01, 1.0, 49)).passed


def test_empty_grid_rejected(circle, factorial):
    u = family_coeffs(circle, "poisson")
    with pytest.raises(EmptyGridError):
        classify(u, factorial, "gevrey_roumieu", [])
    with pytest.raises(ValueError):
        classify(u, factorial, "gevrey_roumieu", [1.0, 0.5])
    with pytest.raises(ValueError):
        classify(u, factorial, "real_analytic")


@pytest.mark.parametrize("L0", [0.5, 2.0, 10.0])
def test_bidual_agrees_with_classifier(circle, factorial, L0):
    grid = default_L_grid(0.1, 100.0, 73)
    u = family_coeffs(circle, "associated_decay", {"L0": L0})
    env = classify(u, factorial, "gevrey_roumieu", grid)
    bid = bidual_membership(u, factorial, grid)
    assert env.passed and bid.found_L is not None
    steps = abs(
        int(np.searchsorted(grid, env.L)) -
        int(np.searchsorted(grid, bid.found_L)))
    assert steps <= 1


def test_bidual_of_zero_is_trivial(circle, factorial):
    report = bidual_membership(CoeffArray.zeros(circle), factorial)
    assert report.trivial
    assert report.found_L is not None


def test_alpha_dual_sum_probe(circle, factorial):
    decaying = family_coeffs(circle, "poisson", {"a": 0.5})
    assert alpha_dual_sum_probe(decaying, factorial).summable
    growing = family_coeffs(circle, "tempered_growth", {"b": 1.0})
    assert not alpha_dual_sum_probe(growing, factorial).summable


def test_decay_curve_rows(circle, factorial):
    u = family_coeffs(circle, "poisson", {"a": 0.5})
    env = classify(u, factorial, "gevrey_roumieu")
    rows = decay_curve_rows(u, factorial, env)
    assert rows.shape == (60, len(DECAY_CURVE_HEADER))
    np.testing.assert_array_equal(rows[:, 0], np.arange(60))
    np.testing.assert_allclose(rows[1:, 4], -0.5 * np.arange(1, 60))
    assert math.isnan(rows[0, 5])
    assert np.all(np.isfinite(rows[1:, 5]))


@pytest.mark.parametrize("name", sorted(FAMILIES))
def test_family_norms_shape(name):
    model = build_model("sphere2", 12)
    norms = family_norms(model, name)
    assert norms.shape == (12, )
    assert np.all(norms >= 0)
    if name != "zero":
        assert norms[0] == 1.0
