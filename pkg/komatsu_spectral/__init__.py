import logging

_logger = logging.getLogger("komatsu_spectral")

from komatsu_spectral.weights import (  # noqa: E402
    WeightSequence, associated_function, associated_function_array,
    doubling_constant_fit, fit_constants, verify_conditions)
from komatsu_spectral.spectral_models import (  # noqa: E402
    SpectralModel, build_model, eval_all, eval_basis, summability_probe,
    weyl_ratios)
from komatsu_spectral.coeff_space import (  # noqa: E402
    CoeffArray, analyze, bidual_membership, classify,
    duality_equivalence_probe, pairing, synthesize)
from komatsu_spectral.tensor_ops import (  # noqa: E402
    TensorRep, adjoint_transpose, apply, from_basis_action,
    multiplier_extract)
from komatsu_spectral.parallel import RayPool  # noqa: E402

__all__ = [
    "WeightSequence", "associated_function", "associated_function_array",
    "doubling_constant_fit", "fit_constants", "verify_conditions",
    "SpectralModel", "build_model", "eval_all", "eval_basis",
    "summability_probe", "weyl_ratios", "CoeffArray", "analyze",
    "bidual_membership", "classify", "duality_equivalence_probe", "pairing",
    "synthesize", "TensorRep", "adjoint_transpose", "apply",
    "from_basis_action", "multiplier_extract", "RayPool"
]
