"""Block coefficient arrays and the decay/growth classifiers.

Membership in the Roumieu/Beurling classes and their alpha-duals is a
statement about infinitely many blocks. Here it is decided on a finite
horizon by a boundedness heuristic: an envelope residual ``e_l`` (the
log of the block norm corrected by the candidate bound) counts as bounded
when its maximum over the second half of the nonzero blocks exceeds the
maximum over the first half by at most ``tol`` (log units). ``exists L``
verdicts are additionally required to be stable between half and full
horizon. All verdicts are heuristic.
"""
import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from komatsu_spectral import _logger as log
from komatsu_spectral.spectral_models import (
    SampleLengthError, SpectralModel, _require_quadrature, eval_all,
    model_descriptor, model_from_descriptor, same_spectrum)
from komatsu_spectral.weights import (WeightSequence,
                                      associated_function_array)

DECAY_CLASSES = ("smooth", "analytic", "gevrey_roumieu", "gevrey_beurling")
DUAL_CLASSES = ("alpha_dual_roumieu", "alpha_dual_beurling")
CLASSES = DECAY_CLASSES + DUAL_CLASSES

# Criterion identifiers embedded in reports.
CRITERIA = {
    "smooth": "polynomial decay |u_l| <= C_N lambda_l^-N for every N",
    "analytic": "|u_l| <= C exp(-L lambda_l^(1/nu)) for some L",
    "gevrey_roumieu": "|u_l| <= C exp(-M(L lambda_l^(1/nu))) for some L",
    "gevrey_beurling": "|u_l| <= C_L exp(-M(L lambda_l^(1/nu))) for every L",
    "alpha_dual_roumieu":
    "|v_l| <= K_L exp(M(L lambda_l^(1/nu))) for every L",
    "alpha_dual_beurling":
    "|v_l| <= K exp(M(L lambda_l^(1/nu))) for some L",
}

DEFAULT_TOLERANCE = 0.5
# Grid steps an exists-L fit may lose between half and full horizon.
STABILITY_STEPS = 2
PAIRING_RTOL = 1e-9


class AlignmentError(ValueError):
    """Arrays or tensors that do not share a spectral model and truncation."""


class EmptyGridError(ValueError):
    """A classifier was handed an empty parameter grid."""


class HypothesisWarning(UserWarning):
    """Inputs of a probe do not satisfy the hypotheses it is stated for."""


def default_L_grid(lo: float = 0.01, hi: float = 10.0,
                   points: int = 73) -> np.ndarray:
    """Geometric grid, 24 points per decade over three decades by default."""
    return np.geomspace(lo, hi, points)


def default_N_grid() -> np.ndarray:
    return np.arange(1, 401) * 0.25


@dataclass(frozen=True, eq=False)
class CoeffArray:
    """An element of the coefficient space: blocks ``v_l`` of length ``d_l``.

    ``blocks`` may cover fewer than ``model.J`` eigenspaces; the array is
    then the truncation to its first ``len(blocks)`` blocks.
    """
    model: SpectralModel
    blocks: Tuple[np.ndarray, ...]

    def __post_init__(self):
        blocks = tuple(
            np.array(b, dtype=complex).ravel() for b in self.blocks)
        if len(blocks) > self.model.J:
            raise AlignmentError(
                f"{len(blocks)} blocks given but the model retains only "
                f"J={self.model.J}.")
        for l, b in enumerate(blocks):
            if b.size != self.model.mults[l]:
                raise AlignmentError(
                    f"Block {l} has length {b.size}, expected "
                    f"d_{l}={self.model.mults[l]}.")
            if not np.all(np.isfinite(b)):
                raise ValueError(f"Block {l} holds non-finite entries.")
            b.setflags(write=False)
        object.__setattr__(self, "blocks", blocks)

    @property
    def J(self) -> int:
        return len(self.blocks)

    @classmethod
    def from_flat(cls, model: SpectralModel, vec,
                  J: Optional[int] = None) -> "CoeffArray":
        J = model.J if J is None else J
        vec = np.asarray(vec).ravel()
        offs = model.offsets
        if vec.size != offs[J]:
            raise AlignmentError(
                f"Flat vector of length {vec.size} does not cover {J} "
                f"blocks ({offs[J]} entries).")
        return cls(model, tuple(vec[offs[l]:offs[l + 1]] for l in range(J)))

    @classmethod
    def zeros(cls, model: SpectralModel,
              J: Optional[int] = None) -> "CoeffArray":
        J = model.J if J is None else J
        return cls.from_flat(model, np.zeros(model.dim(J), dtype=complex), J)

    @classmethod
    def from_hs_norms(cls,
                      model: SpectralModel,
                      norms,
                      rng: Optional[np.random.Generator] = None
                      ) -> "CoeffArray":
        """Block ``l`` gets HS norm ``norms[l]``.

        Without ``rng`` the mass sits on the first entry (the constant,
        ``cos`` or zonal eigenfunction); with ``rng`` each block points in
        a random complex direction.
        """
        norms = np.asarray(norms, dtype=float).ravel()
        blocks = []
        for l, value in enumerate(norms):
            d = int(model.mults[l])
            if rng is None:
                b = np.zeros(d, dtype=complex)
                b[0] = value
            else:
                b = rng.standard_normal(d) + 1j * rng.standard_normal(d)
                b *= value / np.linalg.norm(b)
            blocks.append(b)
        return cls(model, tuple(blocks))

    def flat(self) -> np.ndarray:
        if not self.blocks:
            return np.zeros(0, dtype=complex)
        return np.concatenate(self.blocks)

    def hs_norms(self) -> np.ndarray:
        return np.array([np.linalg.norm(b) for b in self.blocks])

    def truncate(self, J: int) -> "CoeffArray":
        if J > self.J:
            raise AlignmentError(
                f"Cannot truncate {self.J} blocks to J={J}.")
        return CoeffArray(self.model, self.blocks[:J])

    def tail_norm(self, J: int) -> float:
        """HS norm of the blocks at index ``J`` and beyond."""
        tail = self.hs_norms()[J:]
        return float(np.sqrt(np.sum(tail**2)))

    def __add__(self, other: "CoeffArray") -> "CoeffArray":
        check_aligned(self, other)
        return CoeffArray.from_flat(self.model,
                                    self.flat() + other.flat(), self.J)

    def __sub__(self, other: "CoeffArray") -> "CoeffArray":
        return self + (-1.0) * other

    def __mul__(self, scalar: complex) -> "CoeffArray":
        return CoeffArray.from_flat(self.model, scalar * self.flat(), self.J)

    __rmul__ = __mul__

    def __repr__(self):
        return f"CoeffArray(model={self.model!r}, J={self.J})"


def check_aligned(u: CoeffArray, v: CoeffArray):
    if not same_spectrum(u.model, v.model) or u.J != v.J:
        raise AlignmentError(
            f"{u!r} and {v!r} are not aligned to the same model and "
            "truncation.")


def analyze(model: SpectralModel, f, J: Optional[int] = None) -> CoeffArray:
    """Fourier coefficients ``(f, e_j^k)`` of samples on the quadrature."""
    quad = _require_quadrature(model)
    J = model.J if J is None else J
    f = np.asarray(f).ravel()
    if f.size != len(quad):
        raise SampleLengthError(
            f"Expected {len(quad)} samples on the quadrature nodes, got "
            f"{f.size}.")
    coeffs = model.basis[:model.dim(J)] @ (quad.weights * f)
    return CoeffArray.from_flat(model, coeffs, J)


def synthesize(model: SpectralModel, u: CoeffArray, x=None):
    """Truncated inverse transform.

    Returns samples on the quadrature nodes when ``x`` is ``None``, else the
    value at the single point ``x``.
    """
    if not same_spectrum(model, u.model):
        raise AlignmentError(f"{u!r} is not aligned to {model!r}.")
    if x is None:
        _require_quadrature(model)
        return model.basis[:model.dim(u.J)].T @ u.flat()
    return complex(eval_all(model, x, u.J) @ u.flat())


def plancherel_residual(model: SpectralModel, f,
                        J: Optional[int] = None) -> float:
    """``| ||f||^2 - sum_j ||f_hat(j)||_HS^2 |`` on the quadrature."""
    quad = _require_quadrature(model)
    f = np.asarray(f).ravel()
    energy = float(np.sum(quad.weights * np.abs(f)**2))
    return abs(energy - float(np.sum(analyze(model, f, J).hs_norms()**2)))


def block_norm(u: CoeffArray, l: int, p: float = 2) -> float:
    """``l^p`` norm of block ``l``; ``p=2`` is the HS norm."""
    return float(np.linalg.norm(u.blocks[l], ord=p))


@dataclass
class NormInequalityReport:
    worst_slack: float
    violations: int
    trials: int


def _inv(p: float) -> float:
    return 0.0 if math.isinf(p) else 1.0 / p


def norm_inequality_check(d: int,
                          p: float,
                          q: float,
                          trials: int = 1000,
                          rng: Optional[np.random.Generator] = None
                          ) -> NormInequalityReport:
    """Randomized check of the block norm comparisons used for Köthe duals.

    For random complex ``a`` of length ``m <= d`` it checks
    ``|a|_q <= m^(2/q) |a|_p`` and ``|a|_p <= m^(2(1/p - 1/q)) |a|_q``.
    Slack is relative to the left side, with a ``1e-12`` round-off
    allowance.
    """
    if not 1 <= p < q:
        raise ValueError(f"Need 1 <= p < q, got p={p}, q={q}.")
    if rng is None:
        from komatsu_spectral.session import get_rng
        rng = get_rng()
    worst, violations = math.inf, 0
    for _ in range(trials):
        m = int(rng.integers(1, d + 1))
        a = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        if rng.random() < 0.2:
            keep = int(rng.integers(m))
            a = np.where(np.arange(m) == keep, a, 0.0)
        norm_p = float(np.linalg.norm(a, ord=p))
        norm_q = float(np.linalg.norm(a, ord=q))
        for lhs, rhs in ((norm_q, m**(2.0 * _inv(q)) * norm_p),
                         (norm_p, m**(2.0 * (_inv(p) - _inv(q))) * norm_q)):
            slack = (rhs - lhs) / max(lhs, 1e-300) + 1e-12
            worst = min(worst, slack)
            violations += int(slack < 0)
    return NormInequalityReport(float(worst), violations, trials)


@dataclass
class DecayEnvelope:
    """Result of :func:`classify`.

    ``cls`` is the target class on a pass, ``"none"`` on a fail and
    ``"trivial"`` when no block ``l >= 1`` is nonzero. ``L`` is the fitted
    grid value; for every-L classes it is the hardest grid value, and for
    ``smooth`` it is the fitted polynomial order ``N``.
    """
    cls: str
    target: str
    C: float
    L: Optional[float]
    l_verdicts: Dict[float, bool]
    residual: float
    horizon: int
    tolerance: float
    half_L: Optional[float] = None
    criterion: str = ""
    heuristic: bool = True

    @property
    def passed(self) -> bool:
        return self.cls != "none"


def _rise(e: np.ndarray) -> float:
    """Max over the second half minus max over the first half."""
    if e.shape[-1] < 2:
        return -math.inf
    half = e.shape[-1] // 2
    return float(e[..., half:].max() - e[..., :half].max())


def _rises(e: np.ndarray) -> np.ndarray:
    return np.array([_rise(row) for row in e])


def _nonzero_blocks(u: CoeffArray) -> Tuple[np.ndarray, np.ndarray]:
    """Indices ``l >= 1`` with nonzero blocks and their log HS norms."""
    norms = u.hs_norms()
    idx = np.flatnonzero(norms > 0)
    idx = idx[idx >= 1]
    return idx, np.log(norms[idx])


def _envelope_terms(target: str, w: WeightSequence, model: SpectralModel,
                    idx: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Correction added to ``log |u_l|`` for each grid value (rows)."""
    if target == "smooth":
        return np.outer(grid, np.log(model.lambdas[idx]))
    rho = model.rho[idx]
    if target == "analytic":
        return np.outer(grid, rho)
    M = associated_function_array(w, model.nu, np.outer(grid, rho))
    return M if target in DECAY_CLASSES else -M


def _largest(feasible: np.ndarray) -> Optional[int]:
    hits = np.flatnonzero(feasible)
    return int(hits[-1]) if hits.size else None


def _smallest(feasible: np.ndarray) -> Optional[int]:
    hits = np.flatnonzero(feasible)
    return int(hits[0]) if hits.size else None


def _log_c(e: np.ndarray) -> float:
    return float(e.max()) if e.size else 0.0


def classify(u: CoeffArray,
             w: WeightSequence,
             target: str,
             L_grid: Optional[Sequence[float]] = None,
             tol: float = DEFAULT_TOLERANCE) -> DecayEnvelope:
    """Decides membership of ``u`` in ``target`` on a finite grid.

    Block ``l = 0`` is excluded and zero blocks satisfy every envelope. For
    ``smooth`` the grid is over the polynomial order ``N`` (defaults to
    ``0.25 ... 100``) and the class passes when the fitted ``N`` keeps
    growing with the horizon or hits the top of the grid.

    Args:
        u (CoeffArray): Coefficients to classify.
        w (WeightSequence): Weight defining ``M``.
        target (str): One of :data:`CLASSES`.
        L_grid (Sequence[float]): Positive increasing grid.
        tol (float): Allowed rise of the residual, in log units.

    Raises:
        EmptyGridError: if the grid is empty.
    """
    if target not in CLASSES:
        raise ValueError(f"Unknown class {target!r}, expected one of "
                         f"{CLASSES}.")
    if L_grid is None:
        grid = default_N_grid() if target == "smooth" else default_L_grid()
    else:
        grid = np.asarray(L_grid, dtype=float).ravel()
    if grid.size == 0:
        raise EmptyGridError("The classifier grid is empty.")
    if np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise ValueError("The classifier grid must be positive and "
                         "increasing.")

    idx, y = _nonzero_blocks(u)
    common = dict(
        target=target,
        horizon=u.J,
        tolerance=tol,
        criterion=CRITERIA.get(target, ""))
    if idx.size == 0:
        return DecayEnvelope(
            cls="trivial",
            C=1.0,
            L=float(grid[-1]),
            l_verdicts={float(g): True
                        for g in grid},
            residual=-math.inf,
            **common)

    e = y[None, :] + _envelope_terms(target, w, u.model, idx, grid)
    half = max(1, idx.size // 2)
    rise_full = _rises(e)
    rise_half = _rises(e[:, :half])
    feas_full = rise_full <= tol
    feas_half = rise_half <= tol
    verdicts = {float(g): bool(ok) for g, ok in zip(grid, feas_full)}

    chosen: Optional[int]
    half_choice: Optional[int] = None
    if target in ("gevrey_beurling", "alpha_dual_roumieu"):
        passed = bool(np.all(feas_full))
        if passed:
            chosen = grid.size - 1 if target == "gevrey_beurling" else 0
            residual = float(rise_full.max())
        else:
            chosen = int(np.argmax(rise_full))
            residual = float(rise_full[chosen])
    elif target == "alpha_dual_beurling":
        chosen = _smallest(feas_full)
        half_choice = _smallest(feas_half)
        passed = chosen is not None and (
            half_choice is None or chosen <= half_choice + STABILITY_STEPS)
        if passed:
            residual = float(rise_full[chosen])
        elif chosen is None:
            residual = float(rise_full.min())
        else:
            residual = float(rise_full[chosen - 1])
    else:
        chosen = _largest(feas_full)
        half_choice = _largest(feas_half)
        if target == "smooth":
            passed = chosen is not None and (
                chosen == grid.size - 1 or
                (half_choice is not None and chosen > half_choice))
        else:
            passed = chosen is not None and (
                half_choice is None or chosen >= half_choice - STABILITY_STEPS)
        if passed:
            residual = float(rise_full[chosen])
        elif chosen is None:
            residual = float(rise_full.min())
        else:
            residual = float(rise_full[min(chosen + 1, grid.size - 1)])

    if chosen is None:
        chosen_row = int(np.argmin(rise_full))
    else:
        chosen_row = chosen
    envelope = DecayEnvelope(
        cls=target if passed else "none",
        C=math.exp(min(700.0, _log_c(e[chosen_row]))),
        L=float(grid[chosen]) if passed else None,
        l_verdicts=verdicts,
        residual=residual,
        half_L=None if half_choice is None else float(grid[half_choice]),
        **common)
    log.debug(f"classify {target}: cls={envelope.cls} L={envelope.L} "
              f"residual={residual:.4g}")
    return envelope


def envelope_curve(u: CoeffArray, w: WeightSequence,
                   envelope: DecayEnvelope) -> np.ndarray:
    """Fitted bound ``log C -+ correction`` per block; NaN where undefined."""
    out = np.full(u.J, np.nan)
    if envelope.L is None or envelope.cls == "trivial":
        return out
    idx = np.arange(1, u.J)
    if idx.size == 0:
        return out
    terms = _envelope_terms(envelope.target, w, u.model, idx,
                            np.array([envelope.L]))[0]
    out[idx] = math.log(envelope.C) - terms
    return out


def decay_curve_rows(u: CoeffArray, w: WeightSequence,
                     envelope: DecayEnvelope) -> np.ndarray:
    """Columns ``l, lambda, lambda^(1/nu), hs_norm, log_hs_norm,
    envelope_value``."""
    l = np.arange(u.J)
    norms = u.hs_norms()
    with np.errstate(divide="ignore"):
        log_norms = np.log(norms)
    return np.column_stack([
        l,
        u.model.lambdas[:u.J],
        u.model.rho[:u.J],
        norms,
        log_norms,
        envelope_curve(u, w, envelope),
    ])


DECAY_CURVE_HEADER = ("l", "lambda", "lambda^{1/nu}", "hs_norm",
                      "log_hs_norm", "envelope_value")


@dataclass
class PairingReport:
    value: complex
    abs_partial_sums: np.ndarray
    converged: bool


def _tail_converged(sums: np.ndarray, rtol: float) -> bool:
    """Increment over the last quarter at most ``rtol`` of the total."""
    if sums.size == 0 or sums[-1] == 0:
        return True
    ref = sums[max(0, (3 * sums.size) // 4 - 1)]
    return bool(sums[-1] - ref <= rtol * sums[-1])


def _block_sums(x: np.ndarray, model: SpectralModel, J: int) -> np.ndarray:
    return np.add.reduceat(x, model.offsets[:J]) if J else np.zeros(0)


def pairing(u: CoeffArray, v: CoeffArray,
            rtol: float = PAIRING_RTOL) -> PairingReport:
    """Bilinear pairing ``sum_l sum_k u_l(k) v_l(k)``, no conjugation."""
    check_aligned(u, v)
    a, b = u.flat(), v.flat()
    value = complex(np.sum(a * b))
    sums = np.cumsum(_block_sums(np.abs(a) * np.abs(b), u.model, u.J))
    return PairingReport(value, sums, _tail_converged(sums, rtol))


@dataclass
class DualityReport:
    hs_sums: np.ndarray
    componentwise_sums: np.ndarray
    hs_converged: bool
    componentwise_converged: bool
    min_cs_slack: float

    @property
    def agree(self) -> bool:
        return self.hs_converged == self.componentwise_converged


def duality_equivalence_probe(v: CoeffArray,
                              w: CoeffArray,
                              J: Optional[int] = None,
                              weight: Optional[WeightSequence] = None,
                              L_grid: Optional[Sequence[float]] = None,
                              tol: float = DEFAULT_TOLERANCE,
                              rtol: float = PAIRING_RTOL) -> DualityReport:
    """Compares ``sum |v_k|_HS |w_k|_HS`` with ``sum_k sum_i |v_ki| |w_ki|``.

    When ``weight`` is given the hypotheses are checked first: ``v`` must
    classify as gevrey_roumieu and ``w`` as alpha_dual_roumieu. A failure
    warns with :class:`HypothesisWarning` and the probe still runs.
    """
    check_aligned(v, w)
    J = v.J if J is None else J
    v, w = v.truncate(J), w.truncate(J)
    if weight is not None:
        if not classify(v, weight, "gevrey_roumieu", L_grid, tol).passed:
            warnings.warn(
                "The first operand fails the gevrey_roumieu test, so the "
                "equivalence of the two duality sums is not guaranteed.",
                HypothesisWarning)
        if not classify(w, weight, "alpha_dual_roumieu", L_grid,
                        tol).passed:
            warnings.warn(
                "The second operand fails the alpha_dual_roumieu test, so "
                "the equivalence of the two duality sums is not "
                "guaranteed.", HypothesisWarning)
    hs_terms = v.hs_norms() * w.hs_norms()
    comp_terms = _block_sums(
        np.abs(v.flat()) * np.abs(w.flat()), v.model, J)
    hs_sums, comp_sums = np.cumsum(hs_terms), np.cumsum(comp_terms)
    slack = float(np.min(hs_terms - comp_terms)) if J else 0.0
    return DualityReport(hs_sums, comp_sums,
                         _tail_converged(hs_sums, rtol),
                         _tail_converged(comp_sums, rtol), slack)


@dataclass
class BidualReport:
    found_L: Optional[float]
    trivial: bool
    partial_sums: np.ndarray
    l_verdicts: Dict[float, bool] = field(default_factory=dict)


def _summable(e: np.ndarray, tol: float) -> np.ndarray:
    return np.array([_rise(row) <= -tol for row in e])


def bidual_membership(w: CoeffArray,
                      weight: WeightSequence,
                      L_grid: Optional[Sequence[float]] = None,
                      tol: float = DEFAULT_TOLERANCE) -> BidualReport:
    """Largest grid ``L`` with ``sum_l exp(M(L lambda_l^(1/nu))) |w_l|_HS``
    looking summable.

    A weighted series looks summable when its log terms over the second
    half of the nonzero blocks stay at least ``tol`` below those over the
    first half. The fitted ``L`` must be stable between half and full
    horizon.
    """
    grid = default_L_grid() if L_grid is None else np.asarray(
        L_grid, dtype=float).ravel()
    if grid.size == 0:
        raise EmptyGridError("The bidual grid is empty.")
    idx, y = _nonzero_blocks(w)
    if idx.size == 0:
        return BidualReport(float(grid[-1]), True, np.zeros(w.J),
                            {float(g): True
                             for g in grid})
    e = y[None, :] + _envelope_terms("gevrey_roumieu", weight, w.model, idx,
                                     grid)
    half = max(1, idx.size // 2)
    full_ok = _summable(e, tol)
    half_ok = _summable(e[:, :half], tol)
    chosen, half_choice = _largest(full_ok), _largest(half_ok)
    found = None
    if chosen is not None and (half_choice is None or
                               chosen >= half_choice - STABILITY_STEPS):
        found = float(grid[chosen])
    row = e[0 if chosen is None else chosen]
    sums = np.cumsum(np.exp(np.minimum(row, 700.0)))
    return BidualReport(found, False, sums,
                        {float(g): bool(ok)
                         for g, ok in zip(grid, full_ok)})


@dataclass
class AlphaDualSumReport:
    summable: bool
    l_verdicts: Dict[float, bool]


def alpha_dual_sum_probe(v: CoeffArray,
                         weight: WeightSequence,
                         L_grid: Optional[Sequence[float]] = None,
                         tol: float = DEFAULT_TOLERANCE
                         ) -> AlphaDualSumReport:
    """``sum_l exp(-M(L lambda_l^(1/nu))) |v_l|_HS`` for every grid ``L``."""
    grid = default_L_grid() if L_grid is None else np.asarray(
        L_grid, dtype=float).ravel()
    if grid.size == 0:
        raise EmptyGridError("The alpha-dual grid is empty.")
    idx, y = _nonzero_blocks(v)
    if idx.size == 0:
        return AlphaDualSumReport(True, {float(g): True for g in grid})
    e = y[None, :] + _envelope_terms("alpha_dual_roumieu", weight, v.model,
                                     idx, grid)
    ok = _summable(e, tol)
    return AlphaDualSumReport(
        bool(np.all(ok)), {float(g): bool(o)
                           for g, o in zip(grid, ok)})


def operator_power_norms(u: CoeffArray, k_max: int) -> np.ndarray:
    """``log ||E^k phi||_{L^2}`` for ``k = 0 .. k_max``."""
    norms = u.hs_norms()
    nz = np.flatnonzero(norms > 0)
    if nz.size == 0:
        return np.full(k_max + 1, -np.inf)
    log_norm2 = 2.0 * np.log(norms[nz])
    lam = u.model.lambdas[nz]
    out = np.empty(k_max + 1)
    out[0] = 0.5 * logsumexp(log_norm2)
    pos = lam > 0
    for k in range(1, k_max + 1):
        if not np.any(pos):
            out[k] = -np.inf
            continue
        out[k] = 0.5 * logsumexp(2.0 * k * np.log(lam[pos]) + log_norm2[pos])
    return out


@dataclass
class KomatsuFit:
    h: float
    C: float
    log_norms: np.ndarray


def komatsu_class_check(u: CoeffArray, w: WeightSequence,
                        k_max: int = 10) -> KomatsuFit:
    """Fits ``||E^k phi|| <= C h^(nu k) M_(nu k)`` for ``k <= k_max``.

    ``log h`` is the growth rate of ``log ||E^k phi|| - log M_(nu k)`` per
    unit of ``nu k`` over the upper half of the range; ``C`` is then the
    smallest constant making the bound hold.
    """
    if k_max < 2:
        raise ValueError(f"k_max must be at least 2, got {k_max}.")
    log_norms = operator_power_norms(u, k_max)
    if not np.all(np.isfinite(log_norms)):
        return KomatsuFit(0.0, 0.0, log_norms)
    nu = u.model.nu
    k = np.arange(k_max + 1, dtype=float)
    g = log_norms - w.log_m_real(nu * k)
    mid = k_max // 2
    log_h = float((g[-1] - g[mid]) / (nu * (k_max - mid)))
    log_c = float(np.max(g - nu * k * log_h))
    return KomatsuFit(math.exp(log_h), math.exp(min(700.0, log_c)),
                      log_norms)


def coeffs_to_json(u: CoeffArray) -> Dict:
    return {
        "model": model_descriptor(u.model, labels=False),
        "blocks": [[[float(z.real), float(z.imag)] for z in b]
                   for b in u.blocks],
    }


def coeffs_from_json(data: Dict,
                     model: Optional[SpectralModel] = None) -> CoeffArray:
    """Inverse of :func:`coeffs_to_json`; rebuilds the model if needed."""
    if model is None:
        model = model_from_descriptor(data["model"])
    elif data.get("model", {}).get("manifold", model.manifold) \
            != model.manifold:
        raise AlignmentError("Coefficient file belongs to another manifold.")
    blocks: List[np.ndarray] = []
    for b in data["blocks"]:
        pairs = np.asarray(b, dtype=float).reshape(-1, 2)
        blocks.append(pairs[:, 0] + 1j * pairs[:, 1])
    return CoeffArray(model, tuple(blocks))
