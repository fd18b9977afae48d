import math
import warnings

import numpy as np
import pytest

from komatsu_spectral.catalog import derivative, laplacian, multiply, operator
from komatsu_spectral.coeff_space import (AlignmentError, CoeffArray, analyze,
                                          synthesize)
from komatsu_spectral.spectral_models import (build_model,
                                              default_quadrature_size)
from komatsu_spectral.tensor_ops import (
    AliasingWarning, TensorRep, adjoint_transpose, adjointness_report,
    adjointness_residual, apply, block_norm_rows, from_basis_action,
    multiplier_extract, sequentiality_probe, tensor_from_json,
    tensor_to_json)
from komatsu_spectral.tests.utils import (band_limited, poisson_norms,
                                          random_coeffs, random_tensor)


@pytest.fixture
def seed():
    return np.random.default_rng(0)


def _model(manifold, t):
    J = 2 * t + 2
    return build_model(manifold, J, default_quadrature_size(manifold, J))


def test_block_layout(seed):
    model = _model("sphere2", 4)
    T = random_tensor(model, 3, 4, seed)
    assert T.block(2, 3).shape == (5, 7)
    assert T.block_norms().shape == (3, 4)
    rows = block_norm_rows(T)
    assert rows.shape == (12, 3)
    assert rows[5, 2] == pytest.approx(np.linalg.norm(T.block(1, 1)))


def test_tensor_shape_checked():
    model = _model("circle", 4)
    assert TensorRep(model, model, 2, 2, np.zeros((3, 3))).matrix.shape == (
        3, 3)
    with pytest.raises(AlignmentError, match="shape"):
        TensorRep(model, model, 2, 2, np.zeros((3, 4)))
    with pytest.raises(AlignmentError, match="shape"):
        TensorRep(model, model, 2, 2, np.zeros((4, 3)))


def test_sum_and_scaling(seed):
    model = _model("circle", 4)
    S, T = random_tensor(model, 4, 4, seed), random_tensor(model, 4, 4, seed)
    u = random_coeffs(model, seed, 4)
    np.testing.assert_allclose(
        apply(S + T * 2.0, u).flat(),
        apply(S, u).flat() + 2.0 * apply(T, u).flat())


@pytest.mark.parametrize("manifold", ["circle", "torus2", "sphere2"])
def test_adjointness_identity_random(seed, manifold):
    model = _model(manifold, 8)
    for _ in range(5):
        T = random_tensor(model, 8, 8, seed)
        u, v = random_coeffs(model, seed, 8), random_coeffs(model, seed, 8)
        scale = (np.linalg.norm(T.matrix) * np.linalg.norm(u.flat()) *
                 np.linalg.norm(v.flat()))
        assert adjointness_residual(T, u, v) < 1e-12 * scale


def test_adjointness_unit_random_tensors(seed):
    model = _model("circle", 8)
    D = model.dim(8)

    def unit(x):
        return x / np.linalg.norm(x)

    for _ in range(100):
        T = TensorRep(model, model, 8, 8,
                      unit(seed.standard_normal((D, D)) +
                           1j * seed.standard_normal((D, D))))
        u = CoeffArray.from_flat(model, unit(random_coeffs(model, seed,
                                                           8).flat()), 8)
        v = CoeffArray.from_flat(model, unit(random_coeffs(model, seed,
                                                           8).flat()), 8)
        assert adjointness_residual(T, u, v) < 1e-12


def test_transpose_is_not_conjugate(seed):
    model = _model("circle", 3)
    T = random_tensor(model, 3, 2, seed)
    S = adjoint_transpose(T)
    assert (S.K, S.J) == (2, 3)
    np.testing.assert_array_equal(S.block(1, 2), T.block(2, 1).T)
    np.testing.assert_array_equal(adjoint_transpose(S).matrix, T.matrix)


def test_laplacian_is_a_multiplier():
    model = _model("torus2", 6)
    T = from_basis_action(laplacian(model), model, 6, 6)
    report = multiplier_extract(T)
    assert report.accepted
    for l, sigma in enumerate(report.sigma):
        np.testing.assert_allclose(
            sigma, model.lambdas[l] * np.eye(model.mults[l]), atol=1e-10)


def test_laplacian_on_circle_is_not_aliased():
    model = _model("circle", 8)
    with warnings.catch_warnings():
        warnings.simplefilter("error", AliasingWarning)
        T = from_basis_action(laplacian(model), model, 8, 8)
    assert not T.aliased
    report = multiplier_extract(T)
    assert report.accepted
    np.testing.assert_allclose(report.sigma[0], [[0.0]], atol=1e-12)


def test_zero_operator_is_not_aliased():
    model = _model("sphere2", 3)
    with warnings.catch_warnings():
        warnings.simplefilter("error", AliasingWarning)
        T = from_basis_action(np.zeros_like, model, 3, 3)
    assert not T.aliased
    np.testing.assert_array_equal(T.matrix, 0.0)


def test_derivative_blocks_on_circle():
    model = _model("circle", 6)
    T = from_basis_action(derivative(model), model, 6, 6)
    report = multiplier_extract(T)
    assert report.accepted
    np.testing.assert_allclose(report.sigma[0], [[0.0]], atol=1e-12)
    for j in range(1, 6):
        np.testing.assert_allclose(
            report.sigma[j], [[0.0, j], [-j, 0.0]], atol=1e-10)


def test_derivative_undefined_on_sphere():
    with pytest.raises(ValueError):
        derivative(_model("sphere2", 2))


def test_cosine_multiplication_couples_neighbours():
    model = _model("circle", 6)
    T = from_basis_action(multiply(model, "cos"), model, 6, 6)
    assert T.block(1, 0)[0, 0] == pytest.approx(1 / math.sqrt(2))
    assert T.block(2, 1)[0, 0] == pytest.approx(0.5)
    assert T.block(0, 1)[0, 0] == pytest.approx(1 / math.sqrt(2))
    np.testing.assert_allclose(T.block(3, 1), 0.0, atol=1e-12)
    report = multiplier_extract(T)
    assert not report.accepted
    assert report.sigma is None
    assert report.ratio > 0.9


@pytest.mark.parametrize("manifold,name,params",
                         [("circle", "multiply", {"g": "cos"}),
                          ("circle", "derivative", {}),
                          ("torus2", "multiply", {"g": "sin"}),
                          ("sphere2", "multiply", {"g": "cos"}),
                          ("sphere2", "laplacian", {})])
def test_apply_matches_sample_oracle(seed, manifold, name, params):
    t = 6
    model = _model(manifold, t)
    op = operator(model, name, params)
    T = from_basis_action(op, model, t, t)
    u = band_limited(model, seed, t - 1).truncate(t)
    expected = analyze(model, op(synthesize(model, u)), t)
    np.testing.assert_allclose(apply(T, u).flat(), expected.flat(), atol=1e-8)


def test_multiplier_round_trip(seed):
    model = _model("sphere2", 4)
    sigmas = [
        seed.standard_normal((d, d)) + 1j * seed.standard_normal((d, d))
        for d in model.mults[:4]
    ]
    report = multiplier_extract(TensorRep.block_diagonal(model, sigmas))
    assert report.accepted and report.ratio == 0.0
    for a, b in zip(sigmas, report.sigma):
        np.testing.assert_array_equal(a, b)


def test_aliasing_guard():
    model = build_model("circle", 8, 32)
    with pytest.warns(AliasingWarning):
        T = from_basis_action(multiply(model, "cos"), model, 8, 8)
    assert T.aliased

    wide = _model("circle", 8)
    with warnings.catch_warnings():
        warnings.simplefilter("error", AliasingWarning)
        assert not from_basis_action(multiply(wide), wide, 8, 8).aliased


def test_apply_rejects_short_input(seed):
    model = _model("circle", 4)
    T = random_tensor(model, 4, 4, seed)
    with pytest.raises(AlignmentError):
        apply(T, random_coeffs(model, seed, 3))


def test_sequentiality_of_multiplication():
    t = 32
    model = build_model("circle", 2 * t + 2, default_quadrature_size(
        "circle", 2 * t + 2))
    T = from_basis_action(multiply(model, "cos"), model, t, t)
    u = CoeffArray.from_hs_norms(model, poisson_norms(model, 1.0))
    report = sequentiality_probe(T, u, u)
    assert report.f1_flag
    assert report.f2_stable
    assert report.f1_sums.shape == (model.dim(t), )


def test_adjointness_report_tail():
    model = _model("circle", 8)
    T = from_basis_action(multiply(model), model, 8, 8)
    u = CoeffArray.from_hs_norms(model, poisson_norms(model, 0.2))
    report = adjointness_report(T, u, u)
    assert report.residual < 1e-12
    assert report.u_tail == pytest.approx(u.tail_norm(8))
    assert report.tail_bound > 0
    assert report.truncation_dominated


def test_tensor_json_round_trip(seed):
    model = _model("torus2", 3)
    T = random_tensor(model, 3, 2, seed)
    again = tensor_from_json(tensor_to_json(T))
    np.testing.assert_array_equal(again.matrix, T.matrix)
    assert (again.K, again.J) == (3, 2)
