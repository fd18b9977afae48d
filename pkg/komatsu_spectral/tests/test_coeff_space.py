import math

import numpy as np
import pytest

from komatsu_spectral.coeff_space import (
    AlignmentError, CoeffArray, HypothesisWarning, analyze, block_norm,
    coeffs_from_json, coeffs_to_json, duality_equivalence_probe,
    komatsu_class_check, norm_inequality_check, operator_power_norms,
    pairing, plancherel_residual, synthesize)
from komatsu_spectral.spectral_models import (build_model,
                                              default_quadrature_size)
from komatsu_spectral.tests.utils import (band_limited, poisson_norms,
                                          random_coeffs)
from komatsu_spectral.weights import WeightSequence


@pytest.fixture
def seed():
    return np.random.default_rng(0)


@pytest.mark.parametrize("manifold,J", [("circle", 16), ("torus2", 8),
                                        ("sphere2", 10)])
def test_analyze_synthesize_round_trip(seed, manifold, J):
    model = build_model(manifold, J, default_quadrature_size(manifold, J))
    u = band_limited(model, seed, J // 2)
    f = synthesize(model, u)
    np.testing.assert_allclose(analyze(model, f).flat(), u.flat(), atol=1e-10)
    assert plancherel_residual(model, f) < 1e-8


def test_analyze_cosine_on_circle():
    model = build_model("circle", 4, 16)
    u = analyze(model, model.sample(np.cos))
    expected = np.zeros(model.dim())
    expected[1] = math.sqrt(math.pi)
    np.testing.assert_allclose(u.flat(), expected, atol=1e-12)
    assert block_norm(u, 1) == pytest.approx(math.sqrt(math.pi))


def test_synthesize_at_point():
    model = build_model("sphere2", 4, default_quadrature_size("sphere2", 4))
    u = CoeffArray.from_hs_norms(model, [1.0, 0.0, 0.0, 0.0])
    assert synthesize(model, u, (0.3, 1.0)).real == pytest.approx(
        1 / math.sqrt(4 * math.pi))


def test_from_hs_norms(seed):
    model = build_model("sphere2", 6)
    norms = poisson_norms(model, 0.5)
    u = CoeffArray.from_hs_norms(model, norms, seed)
    np.testing.assert_allclose(u.hs_norms(), norms)
    assert [b.size for b in u.blocks] == [1, 3, 5, 7, 9, 11]


def test_truncate_and_tail(seed):
    model = build_model("circle", 10)
    u = random_coeffs(model, seed)
    t = u.truncate(4)
    assert t.J == 4
    tail = u.tail_norm(4)
    assert tail**2 + np.sum(t.hs_norms()**2) == pytest.approx(
        np.sum(u.hs_norms()**2))
    with pytest.raises(AlignmentError):
        t.truncate(5)


def test_arithmetic_requires_alignment(seed):
    circle = build_model("circle", 5)
    sphere = build_model("sphere2", 5)
    u = random_coeffs(circle, seed)
    np.testing.assert_allclose((u + u - u * 2.0).flat(), 0.0)
    with pytest.raises(AlignmentError):
        u + random_coeffs(sphere, seed)


def test_pairing_is_bilinear(seed):
    model = build_model("torus2", 6)
    u, u2, v = (random_coeffs(model, seed) for _ in range(3))
    alpha = 0.4 - 1.3j
    lhs = pairing(u * alpha + u2, v).value
    rhs = alpha * pairing(u, v).value + pairing(u2, v).value
    assert abs(lhs - rhs) < 1e-10 * abs(lhs)


def test_pairing_does_not_conjugate():
    model = build_model("circle", 2)
    u = CoeffArray.from_flat(model, [1j, 0, 0])
    assert pairing(u, u).value == pytest.approx(-1.0)


def test_pairing_tail_verdict():
    model = build_model("circle", 200)
    decaying = CoeffArray.from_hs_norms(model, poisson_norms(model, 1.0))
    report = pairing(decaying, decaying)
    assert report.converged
    flat = CoeffArray.from_hs_norms(model, np.ones(200))
    assert not pairing(flat, flat).converged


@pytest.mark.parametrize("p,q", [(1, 2), (1, math.inf), (2, math.inf)])
def test_norm_inequalities(seed, p, q):
    report = norm_inequality_check(16, p, q, trials=1000, rng=seed)
    assert report.violations == 0
    assert report.worst_slack > 0


def test_norm_inequality_rejects_order():
    with pytest.raises(ValueError):
        norm_inequality_check(4, 2, 1)


def test_duality_sums_agree(seed):
    model = build_model("circle", 60)
    rho, lam = model.rho, model.lambdas
    for _ in range(10):
        a, b = seed.uniform(0.8, 2.0), seed.uniform(0.0, 0.3)
        v = CoeffArray.from_hs_norms(model, np.exp(-a * rho), seed)
        w = CoeffArray.from_hs_norms(model, (1.0 + lam)**b, seed)
        report = duality_equivalence_probe(v, w)
        assert report.agree and report.hs_converged
        assert report.min_cs_slack >= -1e-15


def test_duality_warns_on_failed_hypothesis():
    model = build_model("circle", 60)
    v = CoeffArray.from_hs_norms(model, 1.0 + model.lambdas)
    w = CoeffArray.from_hs_norms(model, np.ones(60))
    with pytest.warns(HypothesisWarning):
        report = duality_equivalence_probe(
            v, w, weight=WeightSequence.gevrey(1.0))
    assert not report.hs_converged


def test_operator_power_norms_of_single_mode():
    model = build_model("circle", 5)
    u = CoeffArray.from_hs_norms(model, [0, 0, 0, 2.0, 0])
    np.testing.assert_allclose(
        operator_power_norms(u, 3),
        [math.log(2.0) + k * math.log(9.0) for k in range(4)])


@pytest.mark.parametrize("a", [1.0, 2.0])
def test_komatsu_constant_tracks_decay_rate(a):
    model = build_model("circle", 120)
    u = CoeffArray.from_hs_norms(model, poisson_norms(model, a))
    fit = komatsu_class_check(u, WeightSequence.gevrey(1.0), k_max=10)
    assert fit.h == pytest.approx(1.0 / a, rel=0.25)
    assert fit.C > 0


def test_coefficient_json_round_trip(seed):
    model = build_model("torus2", 4)
    u = random_coeffs(model, seed)
    again = coeffs_from_json(coeffs_to_json(u))
    np.testing.assert_array_equal(again.flat(), u.flat())
    with pytest.raises(AlignmentError):
        coeffs_from_json(coeffs_to_json(u), build_model("circle", 4))
