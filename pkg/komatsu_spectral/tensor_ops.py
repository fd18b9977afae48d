"""Truncated tensor representations of linear maps between coefficient spaces.

A :class:`TensorRep` stores the blocks ``f_kj`` (``d_k x d_j``) as one
dense matrix: row ``(k, i)`` is output coefficient ``i`` of block ``k``,
column ``(j, l)`` is input coefficient ``l`` of block ``j``. The
transpose-adjoint is the plain transpose, matching the bilinear pairing.
"""
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from komatsu_spectral import _logger as log
from komatsu_spectral.coeff_space import (AlignmentError, CoeffArray,
                                          _tail_converged, analyze, pairing)
from komatsu_spectral.parallel import RayPool, map_items
from komatsu_spectral.spectral_models import (SpectralModel,
                                              _require_quadrature,
                                              model_descriptor,
                                              model_from_descriptor,
                                              same_spectrum)

# Share of output energy tolerated in the top tenth of the model's blocks.
ALIAS_ENERGY_FRACTION = 0.01
# Columns below this share of the largest column energy are not screened.
NEGLIGIBLE_ENERGY = 1e-20
SEQUENTIAL_RTOL = 1e-9


class AliasingWarning(UserWarning):
    """An operator pushed energy to where the quadrature cannot resolve it."""


@dataclass(frozen=True, eq=False)
class TensorRep:
    """Blocks ``f_kj`` for ``0 <= k < K`` (output) and ``0 <= j < J`` (input).

    Args:
        in_model (SpectralModel): Model of the input coefficients.
        out_model (SpectralModel): Model of the output coefficients.
        K (int): Retained output blocks.
        J (int): Retained input blocks.
        matrix (np.ndarray): Dense ``dim(K) x dim(J)`` complex matrix.
        aliased (bool): Set when the construction tripped the aliasing
            guard.
    """
    in_model: SpectralModel
    out_model: SpectralModel
    K: int
    J: int
    matrix: np.ndarray
    aliased: bool = False

    def __post_init__(self):
        if not 0 <= self.K <= self.out_model.J:
            raise AlignmentError(
                f"K={self.K} outside 0 <= K <= {self.out_model.J}.")
        if not 0 <= self.J <= self.in_model.J:
            raise AlignmentError(
                f"J={self.J} outside 0 <= J <= {self.in_model.J}.")
        matrix = np.array(self.matrix, dtype=complex)
        shape = (self.out_model.dim(self.K), self.in_model.dim(self.J))
        if matrix.shape != shape:
            raise AlignmentError(
                f"Tensor matrix has shape {matrix.shape}, expected {shape} "
                "from the models' multiplicities.")
        if not np.all(np.isfinite(matrix)):
            raise ValueError("Tensor holds non-finite entries.")
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    def block(self, k: int, j: int) -> np.ndarray:
        ko, jo = self.out_model.offsets, self.in_model.offsets
        return self.matrix[ko[k]:ko[k + 1], jo[j]:jo[j + 1]]

    @property
    def blocks(self) -> List[List[np.ndarray]]:
        return [[self.block(k, j) for j in range(self.J)]
                for k in range(self.K)]

    def block_norms(self) -> np.ndarray:
        """Frobenius norms ``||f_kj||`` as a ``K x J`` array."""
        out = np.empty((self.K, self.J))
        for k in range(self.K):
            for j in range(self.J):
                out[k, j] = np.linalg.norm(self.block(k, j))
        return out

    @classmethod
    def zeros(cls, in_model: SpectralModel, out_model: SpectralModel, K: int,
              J: int) -> "TensorRep":
        return cls(in_model, out_model, K, J,
                   np.zeros((out_model.dim(K), in_model.dim(J))))

    @classmethod
    def block_diagonal(cls, model: SpectralModel,
                       sigmas: Sequence[np.ndarray]) -> "TensorRep":
        """The Fourier multiplier acting as ``sigmas[l]`` on block ``l``."""
        J = len(sigmas)
        matrix = np.zeros((model.dim(J), model.dim(J)), dtype=complex)
        offs = model.offsets
        for l, sigma in enumerate(sigmas):
            matrix[offs[l]:offs[l + 1], offs[l]:offs[l + 1]] = sigma
        return cls(model, model, J, J, matrix)

    def __add__(self, other: "TensorRep") -> "TensorRep":
        if (self.K, self.J) != (other.K, other.J) or not (
                same_spectrum(self.in_model, other.in_model)
                and same_spectrum(self.out_model, other.out_model)):
            raise AlignmentError("Tensors are not aligned.")
        return TensorRep(self.in_model, self.out_model, self.K, self.J,
                         self.matrix + other.matrix)

    def __mul__(self, scalar: complex) -> "TensorRep":
        return TensorRep(self.in_model, self.out_model, self.K, self.J,
                         scalar * self.matrix)

    __rmul__ = __mul__

    def __repr__(self):
        return (f"TensorRep(K={self.K}, J={self.J}, "
                f"in={self.in_model!r}, out={self.out_model!r})")


class _ColumnBuilder:
    """Picklable column job: project ``op(e_c)`` onto every model block."""

    def __init__(self, op: Callable, model: SpectralModel, K: int):
        self.op = op
        self.model = model
        self.K = K

    def __call__(self, c: int):
        model = self.model
        quad = model.quadrature
        out = np.asarray(self.op(model.basis[c]))
        full = analyze(model, out).flat()
        energy = float(np.sum(quad.weights * np.abs(out)**2))
        top = model.offsets[model.J - max(1, math.ceil(0.1 * model.J))]
        top_energy = float(np.sum(np.abs(full[top:])**2))
        deficit = energy - float(np.sum(np.abs(full)**2))
        return full[:model.dim(self.K)], energy, top_energy, deficit


def _alias_shares(results) -> Tuple[float, float]:
    """Worst top-band and escaped energy shares over the columns.

    Columns whose energy is negligible against the largest column carry
    only round-off and are skipped.
    """
    energies = np.array([energy for _, energy, _, _ in results])
    floor = NEGLIGIBLE_ENERGY * float(energies.max(initial=0.0))
    worst_top = worst_deficit = 0.0
    for _, energy, top, deficit in results:
        if energy <= floor or energy == 0.0:
            continue
        worst_top = max(worst_top, top / energy)
        worst_deficit = max(worst_deficit, deficit / energy)
    return worst_top, worst_deficit


def from_basis_action(op: Callable,
                      model: SpectralModel,
                      K: int,
                      J: int,
                      pool: Optional[RayPool] = None) -> TensorRep:
    """Tensor of ``op`` from its action on the retained eigenfunctions.

    Column ``(j, l)`` is ``analyze(op(e_j^l))`` truncated to ``K`` blocks.
    Warns with :class:`AliasingWarning` and marks the tensor ``aliased``
    when more than 1% of some column's energy lands in the top tenth of the
    model's blocks or escapes the model altogether.

    Args:
        op (Callable): Maps samples on the quadrature nodes to samples.
        model (SpectralModel): Model with quadrature, ``J`` and ``K`` at
            most ``model.J``.
        K (int): Retained output blocks.
        J (int): Retained input blocks.
        pool (Optional[RayPool]): Builds columns on Ray actors when given.
    """
    _require_quadrature(model)
    if not (1 <= K <= model.J and 1 <= J <= model.J):
        raise AlignmentError(
            f"Truncation K={K}, J={J} must lie within the model's "
            f"J={model.J}.")
    builder = _ColumnBuilder(op, model, K)
    results = map_items(builder, list(range(model.dim(J))), pool)
    matrix = np.column_stack([col for col, _, _, _ in results])
    worst_top, worst_deficit = _alias_shares(results)
    aliased = (worst_top > ALIAS_ENERGY_FRACTION
               or worst_deficit > ALIAS_ENERGY_FRACTION)
    if aliased:
        warnings.warn(
            f"Operator output reaches the edge of the resolved band: "
            f"{worst_top:.2%} of a column's energy sits in the top tenth "
            f"of {model.J} blocks and {worst_deficit:.2%} is not "
            "captured. The tensor may be aliased; build the model with "
            "more blocks than the truncation.", AliasingWarning)
    T = TensorRep(model, model, K, J, matrix, aliased)
    log.info(f"Built tensor {T!r} (aliased={aliased})")
    return T


def apply(T: TensorRep, u: CoeffArray) -> CoeffArray:
    """Output block ``k`` is ``sum_{j<J} f_kj u_hat(j)``.

    ``u`` is truncated to ``J`` blocks.
    """
    if not same_spectrum(u.model, T.in_model):
        raise AlignmentError(f"{u!r} is not aligned to the tensor input "
                             f"{T.in_model!r}.")
    if u.J < T.J:
        raise AlignmentError(
            f"{u!r} has {u.J} blocks but the tensor reads J={T.J}.")
    out = T.matrix @ u.truncate(T.J).flat()
    return CoeffArray.from_flat(T.out_model, out, T.K)


def adjoint_transpose(T: TensorRep) -> TensorRep:
    """``S_jk = (f_kj)^t``, without conjugation."""
    return TensorRep(T.out_model, T.in_model, T.J, T.K, T.matrix.T,
                     T.aliased)


def adjointness_residual(T: TensorRep, u: CoeffArray, v: CoeffArray) -> float:
    """``|<T u, v> - <u, T^t v>|`` for the bilinear pairing."""
    u_t, v_t = u.truncate(T.J), v.truncate(T.K)
    lhs = pairing(apply(T, u_t), v_t).value
    rhs = pairing(u_t, apply(adjoint_transpose(T), v_t)).value
    return abs(lhs - rhs)


@dataclass
class AdjointnessReport:
    residual: float
    roundoff_bound: float
    tail_bound: float
    u_tail: float
    v_tail: float

    @property
    def truncation_dominated(self) -> bool:
        return self.tail_bound > self.roundoff_bound


def adjointness_report(T: TensorRep, u: CoeffArray,
                       v: CoeffArray) -> AdjointnessReport:
    """Residual plus an estimate of what the truncation leaves out.

    ``tail_bound`` bounds the missing part of both pairings by the HS mass
    of ``u`` beyond ``J`` and of ``v`` beyond ``K``.
    """
    residual = adjointness_residual(T, u, v)
    u_t, v_t = u.truncate(T.J), v.truncate(T.K)
    norm_t = float(np.linalg.norm(T.matrix))
    norm_u = float(np.linalg.norm(u_t.flat()))
    norm_v = float(np.linalg.norm(v_t.flat()))
    u_tail, v_tail = u.tail_norm(T.J), v.tail_norm(T.K)
    roundoff = 64.0 * np.finfo(float).eps * max(norm_t * norm_u * norm_v,
                                                 np.finfo(float).tiny)
    tail = norm_t * (u_tail * norm_v + norm_u * v_tail)
    return AdjointnessReport(residual, float(roundoff), float(tail), u_tail,
                             v_tail)


@dataclass
class SequentialityReport:
    """Row sums ``sum_j sum_l |f_kjli| |u(j,l)|`` and their doubly weighted
    total, tracked over input truncations ``n = 1 .. J``.

    A row is stable when its increment over the last quarter of ``n`` is at
    most ``rtol`` of the largest row total.
    """
    f1_partial_sums: np.ndarray
    f1_stable: np.ndarray
    f2_partial_sums: np.ndarray
    f2_stable: bool

    @property
    def f1_sums(self) -> np.ndarray:
        return self.f1_partial_sums[:, -1]

    @property
    def f1_flag(self) -> bool:
        return bool(np.all(self.f1_stable))


def sequentiality_probe(T: TensorRep,
                        u: CoeffArray,
                        v: CoeffArray,
                        rtol: float = SEQUENTIAL_RTOL) -> SequentialityReport:
    """Stabilization of the sequentiality sums at increasing truncations."""
    u_t, v_t = u.truncate(T.J), v.truncate(T.K)
    if not (same_spectrum(u.model, T.in_model)
            and same_spectrum(v.model, T.out_model)):
        raise AlignmentError("Operands are not aligned to the tensor.")
    contrib = np.abs(T.matrix) * np.abs(u_t.flat())[None, :]
    per_block = np.add.reduceat(contrib, T.in_model.offsets[:T.J], axis=1)
    f1 = np.cumsum(per_block, axis=1)
    # Increments are relative to the largest row total.
    if f1.size:
        ref = f1[:, max(0, (3 * T.J) // 4 - 1)]
        f1_stable = f1[:, -1] - ref <= rtol * f1[:, -1].max()
    else:
        f1_stable = np.ones(f1.shape[0], dtype=bool)
    f2 = np.abs(v_t.flat()) @ f1
    return SequentialityReport(f1, f1_stable, f2,
                               _tail_converged(f2, rtol))


@dataclass
class MultiplierReport:
    accepted: bool
    sigma: Optional[List[np.ndarray]]
    ratio: float


def multiplier_extract(T: TensorRep,
                       off_diag_tol: float = 1e-10) -> MultiplierReport:
    """``sigma(l) = f_ll`` when the off-diagonal Frobenius mass is at most
    ``off_diag_tol`` of the total; otherwise a rejection with the ratio."""
    if T.K != T.J or not same_spectrum(T.in_model, T.out_model):
        raise ValueError(
            "Multiplier extraction needs a square truncation on one model.")
    total = float(np.sum(np.abs(T.matrix)**2))
    diag = sum(
        float(np.sum(np.abs(T.block(l, l))**2)) for l in range(T.J))
    off = max(0.0, total - diag)
    ratio = off / total if total > 0 else 0.0
    if ratio > off_diag_tol:
        return MultiplierReport(False, None, ratio)
    return MultiplierReport(True, [T.block(l, l).copy() for l in range(T.J)],
                            ratio)


def tensor_to_json(T: TensorRep) -> Dict:
    def encode(m):
        return [[[float(z.real), float(z.imag)] for z in row] for row in m]

    return {
        "in_model": model_descriptor(T.in_model, labels=False),
        "out_model": model_descriptor(T.out_model, labels=False),
        "K": T.K,
        "J": T.J,
        "aliased": T.aliased,
        "blocks": [[encode(T.block(k, j)) for j in range(T.J)]
                   for k in range(T.K)],
    }


def tensor_from_json(data: Dict,
                     in_model: Optional[SpectralModel] = None,
                     out_model: Optional[SpectralModel] = None) -> TensorRep:
    in_model = in_model or model_from_descriptor(data["in_model"])
    out_model = out_model or (in_model if data["out_model"] == data[
        "in_model"] else model_from_descriptor(data["out_model"]))
    K, J = int(data["K"]), int(data["J"])
    rows = []
    for k in range(K):
        row = []
        for j in range(J):
            raw = np.asarray(data["blocks"][k][j], dtype=float)
            raw = raw.reshape(int(out_model.mults[k]), int(in_model.mults[j]),
                              2)
            row.append(raw[..., 0] + 1j * raw[..., 1])
        rows.append(row)
    matrix = np.block(rows) if K and J else np.zeros(
        (out_model.dim(K), in_model.dim(J)))
    return TensorRep(in_model, out_model, K, J, matrix,
                     bool(data.get("aliased", False)))


BLOCK_NORM_HEADER = ("k", "j", "frobenius_norm")


def block_norm_rows(T: TensorRep) -> np.ndarray:
    norms = T.block_norms()
    k, j = np.meshgrid(np.arange(T.K), np.arange(T.J), indexing="ij")
    return np.column_stack([k.ravel(), j.ravel(), norms.ravel()])
