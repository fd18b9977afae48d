from typing import Optional

import numpy as np

from komatsu_spectral.coeff_space import CoeffArray
from komatsu_spectral.spectral_models import SpectralModel
from komatsu_spectral.tensor_ops import TensorRep


def poisson_norms(model: SpectralModel, a: float,
                  J: Optional[int] = None) -> np.ndarray:
    """Block norms ``exp(-a * lambda^(1/2))`` with block 0 set to 1."""
    J = model.J if J is None else J
    norms = np.exp(-a * model.rho[:J])
    norms[0] = 1.0
    return norms


def random_coeffs(model: SpectralModel,
                  rng: np.random.Generator,
                  J: Optional[int] = None) -> CoeffArray:
    J = model.J if J is None else J
    D = model.dim(J)
    return CoeffArray.from_flat(
        model,
        rng.standard_normal(D) + 1j * rng.standard_normal(D), J)


def band_limited(model: SpectralModel, rng: np.random.Generator,
                 band: int) -> CoeffArray:
    """Random real coefficients on the first ``band`` blocks, zero after."""
    flat = np.zeros(model.dim(), dtype=complex)
    flat[:model.dim(band)] = rng.standard_normal(model.dim(band))
    return CoeffArray.from_flat(model, flat)


def random_tensor(model: SpectralModel, K: int, J: int,
                  rng: np.random.Generator) -> TensorRep:
    shape = (model.dim(K), model.dim(J))
    return TensorRep(model, model, K, J,
                     rng.standard_normal(shape) +
                     1j * rng.standard_normal(shape))
