import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from komatsu_spectral.coeff_space import CoeffArray, pairing
from komatsu_spectral.spectral_models import build_model
from komatsu_spectral.tensor_ops import TensorRep, adjointness_residual
from komatsu_spectral.weights import (WeightSequence, associated_function,
                                      associated_function_array)

SPHERE = build_model("sphere2", 4)
DIM = SPHERE.dim()

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
vectors = arrays(np.float64, DIM, elements=finite)
matrices = arrays(np.float64, (DIM, DIM), elements=finite)


@settings(max_examples=50, deadline=None)
@given(vectors, vectors, vectors, finite)
def test_pairing_bilinear(a, b, c, alpha):
    u, u2, v = (CoeffArray.from_flat(SPHERE, x) for x in (a, b, c))
    lhs = pairing(u * alpha + u2, v).value
    rhs = alpha * pairing(u, v).value + pairing(u2, v).value
    scale = (abs(alpha) * np.abs(a) + np.abs(b)) @ np.abs(c)
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, scale)


@settings(max_examples=50, deadline=None)
@given(matrices, vectors, vectors)
def test_transpose_identity(m, a, b):
    T = TensorRep(SPHERE, SPHERE, SPHERE.J, SPHERE.J, m)
    u, v = CoeffArray.from_flat(SPHERE, a), CoeffArray.from_flat(SPHERE, b)
    scale = np.abs(b) @ np.abs(m) @ np.abs(a)
    assert adjointness_residual(T, u, v) <= 1e-12 * max(1.0, scale)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.integers(1, 16), elements=finite))
def test_block_norm_comparison(a):
    m = a.size
    one, two = np.linalg.norm(a, 1), np.linalg.norm(a, 2)
    sup = np.linalg.norm(a, np.inf)
    assert two <= m * one * (1 + 1e-12)
    assert sup <= one * (1 + 1e-12)
    assert one <= m * sup * (1 + 1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(1.0, 3.0), st.floats(0.01, 500.0), st.floats(1.0, 4.0))
def test_associated_function_monotone(s, r, factor):
    w = WeightSequence.gevrey(s)
    low = associated_function(w, 1.0, r)
    high = associated_function(w, 1.0, r * factor)
    assert low >= 0.0
    assert high >= low - 1e-12
    np.testing.assert_allclose(
        associated_function_array(w, 1.0, [r, r * factor]), [low, high],
        atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, 4, elements=st.floats(0.0, 1e6)))
def test_hs_norms_preserved(norms):
    u = CoeffArray.from_hs_norms(SPHERE, norms, np.random.default_rng(0))
    np.testing.assert_allclose(u.hs_norms(), norms, rtol=1e-12, atol=1e-300)
