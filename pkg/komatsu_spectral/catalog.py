"""Builtin coefficient families and the operator catalog.

Families are defined by closed-form block norms as functions of
``rho_l = lambda_l^(1/nu)``, placed on the first eigenfunction of each
block (``cos`` on the circle and torus, zonal on the sphere). Block 0
carries 1. Samples are synthesized from these coefficients on demand.
"""
from typing import Callable, Dict, Optional

import numpy as np

from komatsu_spectral.coeff_space import CoeffArray, analyze, synthesize
from komatsu_spectral.spectral_models import SpectralModel
from komatsu_spectral.weights import WeightSequence, associated_function_array

SampleOp = Callable[[np.ndarray], np.ndarray]


def _poisson(model, rho, lam, a=0.5):
    return np.exp(-a * rho)


def _gevrey_decay(model, rho, lam, a=0.5, s=1.0):
    return np.exp(-a * rho**(1.0 / s))


def _subgevrey(model, rho, lam, c=1.0):
    return np.exp(-c * np.log1p(lam)**2)


def _dual_growth(model, rho, lam, a=0.3):
    return np.exp(a * rho)


def _tempered_growth(model, rho, lam, b=0.2):
    return (1.0 + lam)**b


def _polynomial_decay(model, rho, lam, p=2.0):
    return (1.0 + lam)**(-p)


def _beurling_decay(model, rho, lam):
    return np.exp(-rho * np.log1p(rho))


def _associated_decay(model, rho, lam, L0=1.0, s=1.0):
    out = np.ones_like(rho)
    pos = rho > 0
    out[pos] = np.exp(-associated_function_array(
        WeightSequence.gevrey(s), model.nu, L0 * rho[pos]))
    return out


def _zero(model, rho, lam):
    return np.zeros_like(rho)


FAMILIES: Dict[str, Callable] = {
    "poisson": _poisson,
    "gevrey_decay": _gevrey_decay,
    "subgevrey": _subgevrey,
    "dual_growth": _dual_growth,
    "tempered_growth": _tempered_growth,
    "polynomial_decay": _polynomial_decay,
    "beurling_decay": _beurling_decay,
    "associated_decay": _associated_decay,
    "zero": _zero,
}


def family_norms(model: SpectralModel,
                 name: str,
                 params: Optional[Dict] = None,
                 J: Optional[int] = None) -> np.ndarray:
    """Block norms of the builtin family ``name`` for blocks ``0 .. J-1``."""
    if name not in FAMILIES:
        raise KeyError(f"Unknown builtin family {name!r}; choose from "
                       f"{sorted(FAMILIES)}.")
    J = model.J if J is None else J
    rho, lam = model.rho[:J], model.lambdas[:J]
    norms = np.asarray(FAMILIES[name](model, rho, lam, **(params or {})),
                       dtype=float)
    if name != "zero" and J:
        norms[0] = 1.0
    return norms


def family_coeffs(model: SpectralModel,
                  name: str,
                  params: Optional[Dict] = None,
                  J: Optional[int] = None) -> CoeffArray:
    return CoeffArray.from_hs_norms(model, family_norms(model, name, params,
                                                        J))


def family_samples(model: SpectralModel,
                   name: str,
                   params: Optional[Dict] = None) -> np.ndarray:
    return synthesize(model, family_coeffs(model, name, params))


def laplacian(model: SpectralModel) -> SampleOp:
    """Laplace-Beltrami operator applied spectrally on the model's blocks."""
    lam = np.repeat(model.lambdas, model.mults)

    def apply(f):
        u = analyze(model, f)
        return model.basis.T @ (lam * u.flat())

    return apply


def derivative(model: SpectralModel) -> SampleOp:
    """``d/dx`` (first coordinate) via the FFT on the periodic grid."""
    if model.manifold == "sphere2":
        raise ValueError(
            "The derivative operator is defined on the circle and the torus "
            "only.")
    N = model.quadrature_size[0]
    freq = np.fft.fftfreq(N, d=1.0 / N)
    if N % 2 == 0:
        freq[N // 2] = 0.0

    if model.manifold == "circle":

        def apply(f):
            return np.fft.ifft(1j * freq * np.fft.fft(f))
    else:

        def apply(f):
            grid = np.asarray(f).reshape(N, N)
            spec = np.fft.fft(grid, axis=0)
            return np.fft.ifft(1j * freq[:, None] * spec, axis=0).ravel()

    return apply


MULTIPLIERS = {
    # Each entry maps node coordinates to the multiplying function.
    "cos": lambda *c: np.cos(c[0]),
    "sin": lambda *c: np.sin(c[0]),
    "one": lambda *c: np.ones_like(c[0]),
}


def multiply(model: SpectralModel, g: str = "cos") -> SampleOp:
    """Multiplication by a builtin real function.

    On the sphere the first coordinate is the colatitude, so ``cos`` is the
    height ``z``.
    """
    if g not in MULTIPLIERS:
        raise KeyError(f"Unknown multiplier {g!r}; choose from "
                       f"{sorted(MULTIPLIERS)}.")
    values = model.sample(MULTIPLIERS[g])

    def apply(f):
        return values * np.asarray(f)

    return apply


OPERATORS = {
    "laplacian": laplacian,
    "derivative": derivative,
    "multiply": multiply,
}


def operator(model: SpectralModel, name: str,
             params: Optional[Dict] = None) -> SampleOp:
    if name not in OPERATORS:
        raise KeyError(f"Unknown operator {name!r}; choose from "
                       f"{sorted(OPERATORS)}.")
    return OPERATORS[name](model, **(params or {}))
