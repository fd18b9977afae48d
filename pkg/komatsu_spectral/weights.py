"""Weight sequences, the Komatsu conditions and the associated function.

Every table is handled in log space: ``log M_k`` is stored or generated on
demand, never ``M_k`` itself, since ``(k!)^s`` overflows a double well
before the horizons used here.
"""
import math
from dataclasses import dataclass, field, replace
from typing import Dict, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.special import gammaln

from komatsu_spectral import _logger as log

VARIANTS = ("roumieu", "beurling")
KINDS = ("gevrey", "tabulated")

# Consecutive strictly decreasing terms required after the running argmax.
STALL_WINDOW = 8
# Upper bound on the scan length for generated (untabulated) weights.
MAX_SCAN = 1 << 24
# Cap on the number of float64 cells materialized per vectorized chunk.
_CHUNK_CELLS = 4_000_000

CONDITIONS = ("M.0", "M.1", "M.2", "M.3", "M.3'")


class HorizonTooSmallError(ValueError):
    """The table does not reach the index a check needs."""


class NonpositiveWeightError(ValueError):
    """A weight is zero, negative or not finite."""


class DivergentSupremumError(RuntimeError):
    """The associated-function scan ran off the end of the table."""


@dataclass(frozen=True, eq=False)
class WeightSequence:
    """A weight sequence ``M_k`` with its stability constants.

    Args:
        kind (str): ``"gevrey"`` for ``M_k = (k!)^s`` or ``"tabulated"``
            for an explicit table of ``log M_k``.
        s (float): Gevrey order, required when ``kind == "gevrey"``.
        log_values (Sequence[float]): ``log M_0, log M_1, ...`` for
            tabulated weights. The table length fixes ``k_max``.
        variant (str): ``"roumieu"`` or ``"beurling"``.
        A (float): Fitted stability constant, ``None`` until fitted.
        H (float): Fitted stability base, ``None`` until fitted.

    Example:

        .. code-block:: python

            w = WeightSequence.gevrey(1.5)
            report = verify_conditions(w, k_max=20)
            assert report.accepted
            w = fit_constants(w, k_max=20)

    """
    kind: str
    s: Optional[float] = None
    log_values: Optional[np.ndarray] = None
    variant: str = "roumieu"
    A: Optional[float] = None
    H: Optional[float] = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"Unknown variant {self.variant!r}, expected "
                             f"one of {VARIANTS}.")
        if self.kind == "gevrey":
            if self.s is None or not self.s > 0:
                raise ValueError(
                    f"Gevrey weights need s > 0, got s={self.s}.")
            object.__setattr__(self, "log_values", None)
        elif self.kind == "tabulated":
            if self.log_values is None:
                raise ValueError("Tabulated weights need log_values.")
            table = np.array(self.log_values, dtype=float).ravel()
            if table.size == 0:
                raise ValueError("Tabulated weights need a nonempty table.")
            if not np.all(np.isfinite(table)):
                bad = int(np.flatnonzero(~np.isfinite(table))[0])
                raise NonpositiveWeightError(
                    f"log M_{bad} is not finite; every M_k must be a "
                    "positive real.")
            table.setflags(write=False)
            object.__setattr__(self, "log_values", table)
        else:
            raise ValueError(
                f"Unknown weight kind {self.kind!r}, expected one of "
                f"{KINDS}.")

    @classmethod
    def gevrey(cls, s: float, variant: str = "roumieu") -> "WeightSequence":
        return cls(kind="gevrey", s=float(s), variant=variant)

    @classmethod
    def tabulated(cls, log_values: Sequence[float],
                  variant: str = "roumieu") -> "WeightSequence":
        return cls(kind="tabulated", log_values=log_values, variant=variant)

    @classmethod
    def from_values(cls, values: Sequence[float],
                    variant: str = "roumieu") -> "WeightSequence":
        """Builds a tabulated sequence from the raw values ``M_k``."""
        values = np.asarray(values, dtype=float).ravel()
        bad = np.flatnonzero(~(values > 0) | ~np.isfinite(values))
        if bad.size:
            raise NonpositiveWeightError(
                f"M_{int(bad[0])} = {values[bad[0]]!r}; every M_k must be a "
                "positive real.")
        return cls.tabulated(np.log(values), variant=variant)

    @property
    def k_max(self) -> Optional[int]:
        """Largest available index, ``None`` when generated on demand."""
        if self.kind == "tabulated":
            return int(self.log_values.size - 1)
        return None

    @property
    def fitted(self) -> bool:
        return self.A is not None and self.H is not None

    def log_m(self, k) -> np.ndarray:
        """``log M_k`` for integer ``k`` (scalar or array)."""
        k = np.asarray(k, dtype=np.int64)
        if np.any(k < 0):
            raise IndexError("Weight indices must be nonnegative.")
        if self.kind == "gevrey":
            return self.s * gammaln(k + 1.0)
        if k.size and int(k.max()) > self.k_max:
            raise HorizonTooSmallError(
                f"Index {int(k.max())} is beyond the table horizon "
                f"k_max={self.k_max}.")
        return self.log_values[k]

    def log_m_real(self, x) -> np.ndarray:
        """``log M_x`` at real ``x``, log-linear between integer nodes."""
        x = np.asarray(x, dtype=float)
        lo = np.floor(x + 1e-12).astype(np.int64)
        t = np.clip(x - lo, 0.0, 1.0)
        t = np.where(t < 1e-12, 0.0, t)
        hi = np.where(t > 0, lo + 1, lo)
        return (1.0 - t) * self.log_m(lo) + t * self.log_m(hi)

    def describe(self) -> Dict:
        out = {"kind": self.kind, "variant": self.variant}
        if self.kind == "gevrey":
            out["s"] = self.s
        else:
            out["k_max"] = self.k_max
        if self.fitted:
            out["A"] = self.A
            out["H"] = self.H
        return out


def _scan_limit(w: WeightSequence, nu: float) -> int:
    if w.k_max is None:
        return MAX_SCAN
    return int(math.floor(w.k_max / nu + 1e-12)) + 1


def _terms(w: WeightSequence, nu: float, log_r, n: int) -> np.ndarray:
    k = np.arange(n, dtype=float)
    return np.multiply.outer(np.asarray(log_r, dtype=float),
                             nu * k) - w.log_m_real(nu * k)


def _scan(w: WeightSequence, nu: float,
          log_r: float) -> Tuple[float, int, int]:
    """Returns ``(sup, argmax, extent)`` of ``nu*k*log_r - log M_{nu*k}``."""
    limit = _scan_limit(w, nu)
    extent = 64
    while True:
        n = min(extent, limit)
        terms = _terms(w, nu, log_r, n)
        kstar = int(np.argmax(terms))
        if n - kstar > STALL_WINDOW:
            if np.all(np.diff(terms[-(STALL_WINDOW + 1):]) < 0):
                return float(terms[kstar]), kstar, n
        if n >= limit:
            raise DivergentSupremumError(
                f"Terms of the associated function still increase at "
                f"k={n - 1} (log r={log_r:.6g}); r is too large for the "
                "weight table horizon.")
        extent *= 2


def associated_function(w: WeightSequence, nu: float, r: float) -> float:
    """``M(r) = sup_k (nu*k*log r - log M_{nu*k})``.

    The scan stops once the last ``STALL_WINDOW`` terms have strictly
    decreased past the running maximum.
    """
    if not nu > 0:
        raise ValueError(f"nu must be positive, got {nu}.")
    if not r > 0:
        raise ValueError(f"The associated function needs r > 0, got {r}.")
    value, kstar, _ = _scan(w, nu, math.log(r))
    log.debug(f"M({r:.6g}) = {value:.6g} attained at k={kstar}")
    return value


def associated_function_array(w: WeightSequence, nu: float, r) -> np.ndarray:
    """Vectorized :func:`associated_function` over an array of radii."""
    r = np.asarray(r, dtype=float)
    if r.size == 0:
        return np.zeros_like(r)
    if not nu > 0:
        raise ValueError(f"nu must be positive, got {nu}.")
    if np.any(~(r > 0)):
        raise ValueError("The associated function needs r > 0.")
    flat = np.log(r.ravel())
    order = np.argsort(flat)
    out = np.empty_like(flat)
    start = 0
    while start < flat.size:
        # The argmax is nondecreasing in r for log-convex weights, so the
        # extent needed by the chunk's largest radius covers the chunk.
        stop = min(flat.size, start + 256)
        _, _, n = _scan(w, nu, float(flat[order[stop - 1]]))
        stop = min(stop, start + max(1, _CHUNK_CELLS // n))
        idx = order[start:stop]
        _, _, n = _scan(w, nu, float(flat[idx[-1]]))
        out[idx] = _terms(w, nu, flat[idx], n).max(axis=1)
        start = stop
    return out.reshape(r.shape)


class RatioCheck(NamedTuple):
    sup: float
    bounded: bool


def bounded_ratio_check(w: WeightSequence, nu: float, q: float, delta: float,
                        L: float, lambdas: Sequence[float]) -> RatioCheck:
    """Sup of ``lambda^q * exp(-delta*M(L*lambda^(1/nu)))`` over ``lambdas``.

    ``bounded`` is true when the running sup did not grow over the last
    quarter of the list.
    """
    lam = np.asarray(lambdas, dtype=float).ravel()
    if lam.size == 0:
        raise ValueError("lambdas must be nonempty.")
    if np.any(lam <= 0) or np.any(np.diff(lam) <= 0):
        raise ValueError("lambdas must be positive and increasing.")
    logs = q * np.log(lam) - delta * associated_function_array(
        w, nu, L * lam**(1.0 / nu))
    running = np.maximum.accumulate(logs)
    cut = max(1, int(math.floor(0.75 * lam.size)))
    bounded = bool(running[-1] <= running[cut - 1] + 1e-12)
    return RatioCheck(float(math.exp(running[-1])), bounded)


@dataclass
class ConditionReport:
    """Outcome of :func:`verify_conditions` over a finite horizon."""
    passed: Dict[str, bool]
    A: float
    H: float
    l: float
    C_l: float
    constants: Dict[str, Tuple[float, float]]
    C_l_grid: Dict[float, float]
    first_violation: Dict[str, Optional[int]]
    horizon: int
    variant: str
    slopes: Dict[str, Tuple[float, float]] = field(default_factory=dict)

    @property
    def accepted(self) -> bool:
        third = "M.3" if self.variant == "roumieu" else "M.3'"
        return all(self.passed[c] for c in ("M.0", "M.1", "M.2", third))


def _window_slope(x: np.ndarray, lo: int, hi: int) -> float:
    return float((x[hi] - x[lo]) / (hi - lo))


def _tail_slopes(x: np.ndarray) -> Tuple[float, float]:
    K = x.size - 1
    return (_window_slope(x, K // 4, K // 2),
            _window_slope(x, (3 * K) // 4, K))


def _settles(slopes: Tuple[float, float]) -> bool:
    first, last = slopes
    return last <= first + 0.05 * max(1.0, abs(first))


def _fit_linear(x: np.ndarray) -> Tuple[float, float]:
    """Smallest ``log H >= 0``, then ``log A >= 0``, with
    ``x_k <= log A + k log H``."""
    k = np.arange(x.size, dtype=float)
    log_h = max(0.0, float(np.max(x[1:] / k[1:]))) if x.size > 1 else 0.0
    log_a = max(0.0, float(np.max(x - k * log_h)))
    return log_a, log_h


def _first_violation(x: np.ndarray) -> Optional[int]:
    half = x.size // 2
    log_a, log_h = _fit_linear(x[:half + 1])
    k = np.arange(x.size, dtype=float)
    over = np.flatnonzero(x[half + 1:] > log_a + k[half + 1:] * log_h + 1e-9)
    return int(over[0] + half + 1) if over.size else None


def verify_conditions(w: WeightSequence, k_max: int) -> ConditionReport:
    """Checks (M.0)-(M.3) and (M.3') on indices up to ``2*k_max``.

    (M.1) and (M.2) are fitted as ``x_k <= log A + k log H`` where ``x_k``
    is the log-ratio of the two sides without ``A H^k``; a condition passes
    when the growth rate of ``x_k`` over the last quarter of the horizon
    has not outrun the rate over the second quarter. (M.2) uses the form
    ``M_k <= A H^k min_q M_q M_{k-q}``.
    """
    if k_max < 2:
        raise ValueError(f"k_max must be at least 2, got {k_max}.")
    K = 2 * k_max
    if w.k_max is not None and w.k_max < K:
        raise HorizonTooSmallError(
            f"Checking the conditions up to k_max={k_max} needs M_k for "
            f"k <= {K}, but the table stops at {w.k_max}.")
    L = np.asarray(w.log_m(np.arange(K + 1)), dtype=float)
    if not np.all(np.isfinite(L)):
        bad = int(np.flatnonzero(~np.isfinite(L))[0])
        raise NonpositiveWeightError(f"M_{bad} is not a positive real.")

    passed: Dict[str, bool] = {}
    first: Dict[str, Optional[int]] = {c: None for c in CONDITIONS}
    slopes: Dict[str, Tuple[float, float]] = {}
    constants: Dict[str, Tuple[float, float]] = {}

    passed["M.0"] = bool(abs(L[0]) <= 1e-12)
    if not passed["M.0"]:
        first["M.0"] = 0

    stability = L[1:] - L[:-1]
    splitting = np.array([
        L[k] - np.min(L[:k + 1] + L[k::-1]) for k in range(K + 1)])
    for name, x in (("M.1", stability), ("M.2", splitting)):
        log_a, log_h = _fit_linear(x)
        constants[name] = (math.exp(log_a), math.exp(log_h))
        slopes[name] = _tail_slopes(x)
        passed[name] = _settles(slopes[name])
        if not passed[name]:
            first[name] = _first_violation(x)

    k = np.arange(K + 1, dtype=float)
    d = gammaln(k + 1.0) - L
    log_l = float(np.max(d[1:] / k[1:]))
    log_c = float(np.max(d - k * log_l))
    slopes["M.3"] = _tail_slopes(d)
    passed["M.3"] = _settles(slopes["M.3"])
    if not passed["M.3"]:
        first["M.3"] = _first_violation(d)
    s_first, s_last = slopes["M.3"]
    passed["M.3'"] = bool(s_last < s_first - 1e-6 * max(1.0, abs(s_first)))
    if not passed["M.3'"]:
        first["M.3'"] = _first_violation(d)
    grid = (1.0, 0.5, 0.1, 0.05, 0.01)
    c_grid = {l: math.exp(min(700.0, float(np.max(d - k * math.log(l)))))
              for l in grid}

    A = max(constants["M.1"][0], constants["M.2"][0])
    H = max(constants["M.1"][1], constants["M.2"][1])
    report = ConditionReport(
        passed=passed,
        A=A,
        H=H,
        l=math.exp(log_l),
        C_l=math.exp(min(700.0, log_c)),
        constants=constants,
        C_l_grid=c_grid,
        first_violation=first,
        horizon=K,
        variant=w.variant,
        slopes=slopes)
    log.debug(f"Komatsu conditions over k <= {K}: {passed}")
    return report


def fit_constants(w: WeightSequence, k_max: int = 20) -> WeightSequence:
    """Returns ``w`` with fitted ``(A, H)``; refuses rejected sequences."""
    report = verify_conditions(w, k_max)
    if not report.accepted:
        failing = [c for c, ok in report.passed.items() if not ok]
        raise ValueError(
            f"Weight sequence {w.describe()} fails {failing} over k <= "
            f"{report.horizon}, so no stability constants can be fitted."
            "\nFIX THIS by choosing a sequence satisfying the Komatsu "
            "conditions for the requested variant.")
    return replace(w, A=report.A, H=report.H)


class DoublingFit(NamedTuple):
    c: float
    log_A: float

    @property
    def A(self) -> float:
        return math.exp(self.log_A)


def doubling_constant_fit(w: WeightSequence,
                          nu: float = 1.0,
                          r_grid: Optional[Sequence[float]] = None,
                          tol: float = 0.5) -> DoublingFit:
    """Fits ``(c, A')`` with ``2 M(r) <= M(c r) + log A'`` on ``r_grid``.

    ``c`` is the first point of a ``2^(i/4)`` ladder for which the deficit
    ``2 M(r) - M(c r)`` stops rising across the grid.
    """
    r = np.asarray(
        r_grid if r_grid is not None else np.geomspace(1.0, 1e4, 41),
        dtype=float)
    twice = 2.0 * associated_function_array(w, nu, r)
    half = r.size // 2
    for i in range(1, 25):
        c = 2.0**(i / 4.0)
        try:
            deficit = twice - associated_function_array(w, nu, c * r)
        except DivergentSupremumError:
            break
        if deficit[half:].max() <= deficit[:half].max() + tol:
            fit = DoublingFit(c, max(0.0, float(deficit.max())))
            log.debug(f"Doubling constant fitted: c={c:.6g}, "
                      f"log A'={fit.log_A:.6g}")
            return fit
    raise ValueError(
        f"No doubling constant c <= 64 found for {w.describe()} on "
        f"r in [{r.min():.3g}, {r.max():.3g}].")
