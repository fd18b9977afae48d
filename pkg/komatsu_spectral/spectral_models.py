"""Closed-form spectral data for the circle, the flat 2-torus and the 2-sphere.

Measures: Lebesgue ``d theta`` on ``[0, 2 pi)`` for the circle, the product
measure on ``[0, 2 pi)^2`` for the torus and surface measure (total
``4 pi``) on the sphere. Eigenfunctions are real. Inside an eigenspace the
ordering is

* circle: ``cos``, ``sin``;
* torus: representatives ``(m1, m2)`` of each ``+-`` pair (``m1 > 0``, or
  ``m1 == 0`` and ``m2 > 0``) in lexicographic order, ``cos`` before ``sin``;
* sphere: ``m = 0``, then ``(cos, 1), (sin, 1), ..., (cos, l), (sin, l)``.
"""
import math
from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import gammaln, lpmv

from komatsu_spectral import _logger as log

MANIFOLDS = ("circle", "torus2", "sphere2")
GRAM_TOLERANCE = 1e-10

QuadratureSize = Union[int, Tuple[int, int]]


class QuadratureUnderresolvedError(ValueError):
    """The quadrature does not integrate the retained basis exactly."""


class BasisIndexError(IndexError):
    """An ``(j, k)`` pair outside the retained eigenspaces."""


class SampleLengthError(ValueError):
    """Samples do not match the quadrature nodes."""


class Mode(NamedTuple):
    """One real eigenfunction: frequencies plus its ``part``."""
    j: int
    k: int
    freq: Tuple[int, ...]
    part: str


@dataclass(frozen=True, eq=False)
class Quadrature:
    """Nodes and weights. ``nodes`` has one row per node.

    Columns are ``theta`` (circle), ``(x, y)`` (torus) or
    ``(colatitude, azimuth)`` (sphere).
    """
    nodes: np.ndarray
    weights: np.ndarray
    size: Tuple[int, ...]

    def __len__(self):
        return int(self.weights.size)


@dataclass(frozen=True, eq=False)
class SpectralModel:
    """Spectral data of one of the three model manifolds.

    ``quadrature`` is ``None`` for spectral-only models, which carry
    eigenvalues and multiplicities but cannot analyze samples. They serve
    the large-``J`` multiplicity and summability diagnostics.
    """
    manifold: str
    n: int
    nu: float
    J: int
    lambdas: np.ndarray
    mults: np.ndarray
    quadrature: Optional[Quadrature] = None
    basis: Optional[np.ndarray] = None
    _torus_reps: Optional[Tuple[Tuple[Tuple[int, int], ...], ...]] = None

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.mults)]).astype(np.int64)

    def dim(self, J: Optional[int] = None) -> int:
        """Total number of basis functions in the first ``J`` blocks."""
        J = self.J if J is None else J
        return int(self.offsets[J])

    @property
    def rho(self) -> np.ndarray:
        """``lambda_j^(1/nu)``."""
        return self.lambdas**(1.0 / self.nu)

    @property
    def has_quadrature(self) -> bool:
        return self.quadrature is not None

    @property
    def quadrature_size(self) -> Optional[Tuple[int, ...]]:
        return None if self.quadrature is None else self.quadrature.size

    def mode(self, j: int, k: int) -> Mode:
        """The eigenfunction ``e_j^k`` (``k`` is 1-based)."""
        if not 0 <= j < self.J:
            raise BasisIndexError(
                f"Block index j={j} outside 0 <= j < J={self.J}.")
        if not 1 <= k <= int(self.mults[j]):
            raise BasisIndexError(
                f"Entry index k={k} outside 1 <= k <= d_j={self.mults[j]}.")
        if j == 0:
            return Mode(0, 1, (0, ) if self.manifold == "circle" else (0, 0),
                        "const")
        if self.manifold == "circle":
            return Mode(j, k, (j, ), "cos" if k == 1 else "sin")
        if self.manifold == "sphere2":
            if k == 1:
                return Mode(j, k, (j, 0), "const")
            return Mode(j, k, (j, k // 2), "cos" if k % 2 == 0 else "sin")
        rep = self._torus_reps[j][(k - 1) // 2]
        return Mode(j, k, rep, "cos" if k % 2 == 1 else "sin")

    def modes(self, J: Optional[int] = None) -> List[Mode]:
        J = self.J if J is None else J
        return [
            self.mode(j, k) for j in range(J)
            for k in range(1, int(self.mults[j]) + 1)
        ]

    def basis_labels(self, J: Optional[int] = None) -> List[List[str]]:
        """Symbolic label of every retained eigenfunction, per block."""
        J = self.J if J is None else J
        labels = []
        for j in range(J):
            labels.append([
                _label(self.manifold, self.mode(j, k))
                for k in range(1, int(self.mults[j]) + 1)
            ])
        return labels

    def sample(self, fn) -> np.ndarray:
        """Evaluates ``fn`` on the quadrature nodes.

        ``fn`` receives one array per node coordinate: ``theta`` for the
        circle, ``(x, y)`` for the torus, ``(colatitude, azimuth)`` for the
        sphere.
        """
        quad = _require_quadrature(self)
        return np.asarray(fn(*quad.nodes.T), dtype=complex)

    def __repr__(self):
        return (f"SpectralModel(manifold={self.manifold!r}, J={self.J}, "
                f"quadrature_size={self.quadrature_size})")


def _label(manifold: str, mode: Mode) -> str:
    if mode.part == "const" and mode.j == 0:
        return "const"
    if manifold == "circle":
        return f"{mode.part}({mode.freq[0]}x)"
    if manifold == "torus2":
        m1, m2 = mode.freq
        return f"{mode.part}({m1}x{m2:+d}y)"
    l, m = mode.freq
    return f"Y({l},0)" if m == 0 else f"Y({l},{m},{mode.part})"


def _require_quadrature(model: SpectralModel) -> Quadrature:
    if model.quadrature is None:
        raise ValueError(
            f"{model!r} is spectral-only and holds no quadrature."
            "\nFIX THIS by passing quadrature_size to `build_model()`.")
    return model.quadrature


def torus_spectrum(J: int) -> Tuple[np.ndarray, np.ndarray, List[List[Tuple[
        int, int]]]]:
    """First ``J`` distinct values of ``m1^2 + m2^2`` with lattice counts.

    Returns ``(norms, counts, representatives)``. Distinctness is decided on
    integers.
    """
    radius = int(math.isqrt(max(J, 1))) + 2
    while True:
        m = np.arange(-radius, radius + 1)
        m1, m2 = np.meshgrid(m, m, indexing="ij")
        norm2 = (m1 * m1 + m2 * m2).ravel()
        inside = norm2 <= radius * radius
        values, counts = np.unique(norm2[inside], return_counts=True)
        if values.size >= J:
            break
        radius *= 2
    values, counts = values[:J], counts[:J]
    reps: List[List[Tuple[int, int]]] = [[] for _ in range(J)]
    where = {int(v): i for i, v in enumerate(values)}
    for a, b in zip(m1.ravel(), m2.ravel()):
        a, b = int(a), int(b)
        if a > 0 or (a == 0 and b > 0):
            i = where.get(a * a + b * b)
            if i is not None:
                reps[i].append((a, b))
    for r in reps:
        r.sort()
    return values.astype(np.int64), counts.astype(np.int64), reps


def default_quadrature_size(manifold: str, J: int) -> QuadratureSize:
    """A quadrature resolving products of the first ``J`` blocks with room
    for one extra multiplication by a first-order function."""
    if manifold == "circle":
        return max(8, 4 * J)
    if manifold == "torus2":
        top = int(math.isqrt(int(torus_spectrum(J)[0][-1])))
        return max(8, 4 * top + 4)
    if manifold == "sphere2":
        return (J + 2, 2 * J + 4)
    raise ValueError(f"Unknown manifold {manifold!r}.")


def _circle_quadrature(N: int) -> Quadrature:
    theta = 2.0 * np.pi * np.arange(N) / N
    return Quadrature(theta[:, None], np.full(N, 2.0 * np.pi / N), (N, ))


def _torus_quadrature(N: int) -> Quadrature:
    t = 2.0 * np.pi * np.arange(N) / N
    x, y = np.meshgrid(t, t, indexing="ij")
    nodes = np.stack([x.ravel(), y.ravel()], axis=1)
    return Quadrature(nodes, np.full(N * N, (2.0 * np.pi / N)**2), (N, N))


def _sphere_quadrature(n_theta: int, n_phi: int) -> Quadrature:
    z, wz = np.polynomial.legendre.leggauss(n_theta)
    theta = np.arccos(z)
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    weights = np.outer(wz, np.full(n_phi, 2.0 * np.pi / n_phi))
    return Quadrature(
        np.stack([tt.ravel(), pp.ravel()], axis=1), weights.ravel(),
        (n_theta, n_phi))


def _legendre_norm(l: int, m: int) -> float:
    return math.sqrt((2 * l + 1) / (4.0 * math.pi) *
                     math.exp(gammaln(l - m + 1) - gammaln(l + m + 1)))


def _evaluate_modes(manifold: str, modes: Sequence[Mode],
                    coords: np.ndarray) -> np.ndarray:
    """Rows are modes, columns are points; ``coords`` has one row per point."""
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    out = np.empty((len(modes), coords.shape[0]))
    if manifold == "circle":
        theta = coords[:, 0]
        for i, md in enumerate(modes):
            if md.part == "const":
                out[i] = 1.0 / math.sqrt(2.0 * math.pi)
            else:
                trig = np.cos if md.part == "cos" else np.sin
                out[i] = trig(md.freq[0] * theta) / math.sqrt(math.pi)
    elif manifold == "torus2":
        x, y = coords[:, 0], coords[:, 1]
        for i, md in enumerate(modes):
            if md.part == "const":
                out[i] = 1.0 / (2.0 * math.pi)
            else:
                trig = np.cos if md.part == "cos" else np.sin
                phase = md.freq[0] * x + md.freq[1] * y
                out[i] = trig(phase) / (math.pi * math.sqrt(2.0))
    else:
        cos_theta, phi = np.cos(coords[:, 0]), coords[:, 1]
        legendre: Dict[Tuple[int, int], np.ndarray] = {}
        for i, md in enumerate(modes):
            l, m = md.freq
            if (l, m) not in legendre:
                # lpmv carries the Condon-Shortley phase; drop it.
                legendre[(l, m)] = ((-1.0)**m * _legendre_norm(l, m) *
                                    lpmv(m, l, cos_theta))
            p = legendre[(l, m)]
            if m == 0:
                out[i] = p
            elif md.part == "cos":
                out[i] = math.sqrt(2.0) * p * np.cos(m * phi)
            else:
                out[i] = math.sqrt(2.0) * p * np.sin(m * phi)
    return out


def gram_residual(model: SpectralModel) -> float:
    """``max |G - I|`` for the Gram matrix of the retained basis."""
    quad = _require_quadrature(model)
    gram = (model.basis * quad.weights) @ model.basis.T
    return float(np.max(np.abs(gram - np.eye(gram.shape[0]))))


def build_model(manifold: str,
                J: int,
                quadrature_size: Optional[QuadratureSize] = None
                ) -> SpectralModel:
    """Builds the spectral model of ``manifold`` with ``J`` eigenvalues.

    Args:
        manifold (str): ``"circle"``, ``"torus2"`` or ``"sphere2"``.
        J (int): Number of distinct eigenvalues retained.
        quadrature_size: Number of nodes per periodic direction, or for the
            sphere either the Gauss node count (azimuth gets twice as many)
            or a ``(n_theta, n_phi)`` pair. ``None`` builds a spectral-only
            model.

    Raises:
        QuadratureUnderresolvedError: if the Gram matrix of the basis
            deviates from the identity by more than ``1e-10``.
    """
    if manifold not in MANIFOLDS:
        raise ValueError(f"Unknown manifold {manifold!r}, expected one of "
                         f"{MANIFOLDS}.")
    if J < 1:
        raise ValueError(f"J must be at least 1, got {J}.")
    reps = None
    j = np.arange(J, dtype=np.int64)
    if manifold == "circle":
        n, lambdas = 1, (j * j).astype(float)
        mults = np.where(j == 0, 1, 2)
    elif manifold == "sphere2":
        n, lambdas = 2, (j * (j + 1)).astype(float)
        mults = 2 * j + 1
    else:
        n = 2
        norms, mults, rep_lists = torus_spectrum(J)
        lambdas = norms.astype(float)
        reps = tuple(tuple(r) for r in rep_lists)
    lambdas.setflags(write=False)
    mults = np.asarray(mults, dtype=np.int64)
    mults.setflags(write=False)
    model = SpectralModel(manifold, n, 2.0, J, lambdas, mults, None, None,
                          reps)
    if quadrature_size is None:
        log.debug(f"Built spectral-only {model!r}")
        return model

    if manifold == "circle":
        quad = _circle_quadrature(int(_scalar_size(quadrature_size)))
    elif manifold == "torus2":
        quad = _torus_quadrature(int(_scalar_size(quadrature_size)))
    else:
        if isinstance(quadrature_size, (tuple, list)):
            n_theta, n_phi = (int(v) for v in quadrature_size)
        else:
            n_theta = int(quadrature_size)
            n_phi = 2 * n_theta
        quad = _sphere_quadrature(n_theta, n_phi)
    basis = _evaluate_modes(manifold, model.modes(), quad.nodes)
    basis.setflags(write=False)
    model = SpectralModel(manifold, n, 2.0, J, lambdas, mults, quad, basis,
                          reps)
    residual = gram_residual(model)
    if residual > GRAM_TOLERANCE:
        raise QuadratureUnderresolvedError(
            f"Orthonormality residual {residual:.3e} exceeds "
            f"{GRAM_TOLERANCE:g} for {model!r}; the quadrature is too "
            "coarse for the retained basis.")
    log.info(f"Built {model!r} with {model.dim()} basis functions "
             f"(Gram residual {residual:.2e})")
    return model


def _scalar_size(size: QuadratureSize) -> int:
    if isinstance(size, (tuple, list)):
        if len(set(size)) != 1:
            raise ValueError(
                f"Quadrature size {size} must be a single node count for a "
                "periodic grid.")
        return int(size[0])
    return int(size)


def _point_coords(model: SpectralModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    if model.manifold == "circle":
        if x.size != 1:
            raise ValueError(f"A circle point is one angle, got {x}.")
        return x[None, :]
    if model.manifold == "torus2":
        if x.size != 2:
            raise ValueError(f"A torus point is an angle pair, got {x}.")
        return x[None, :]
    if x.size == 3:
        radius = float(np.linalg.norm(x))
        if radius == 0.0:
            raise ValueError("A sphere point cannot be the zero vector.")
        theta = math.acos(max(-1.0, min(1.0, x[2] / radius)))
        return np.array([[theta, math.atan2(x[1], x[0])]])
    if x.size != 2:
        raise ValueError(
            f"A sphere point is (colatitude, azimuth) or a unit vector, got "
            f"{x}.")
    return x[None, :]


def eval_basis(model: SpectralModel, j: int, k: int, x) -> float:
    """Value of the real orthonormal eigenfunction ``e_j^k`` at ``x``."""
    md = model.mode(j, k)
    return float(_evaluate_modes(model.manifold, [md],
                                 _point_coords(model, x))[0, 0])


def eval_all(model: SpectralModel, x, J: Optional[int] = None) -> np.ndarray:
    """Values of every eigenfunction of the first ``J`` blocks at ``x``."""
    return _evaluate_modes(model.manifold, model.modes(J),
                           _point_coords(model, x))[:, 0]


def weyl_ratios(model: SpectralModel) -> np.ndarray:
    return model.mults / (1.0 + model.lambdas)**(model.n / model.nu)


def running_sup(values: Sequence[float]) -> np.ndarray:
    return np.maximum.accumulate(np.asarray(values, dtype=float))


def weyl_multiplicity_check(model: SpectralModel) -> float:
    """``sup_j d_j / (1 + lambda_j)^(n/nu)`` over the retained blocks."""
    return float(np.max(weyl_ratios(model)))


@dataclass
class SummabilityReport:
    partial_sums: np.ndarray
    verdict: str
    block_ratio: Optional[float]
    q: float

    @property
    def converged(self) -> bool:
        return self.verdict == "converged"

    @property
    def total(self) -> float:
        return float(self.partial_sums[-1])


def summability_probe(model: SpectralModel, q: float,
                      J: Optional[int] = None) -> SummabilityReport:
    """Partial sums of ``d_j (1 + lambda_j)^(-q)`` with a tail verdict.

    Converged when the last-quarter increment is below ``1e-6`` of the sum,
    or when increments over dyadic index blocks shrink by a factor below
    ``0.95`` per block (a term decay faster than ``j^(-1.07)``). Otherwise
    diverging; inconclusive below 16 blocks.
    """
    if not q > 0:
        raise ValueError(f"q must be positive, got {q}.")
    J = model.J if J is None else J
    if not 1 <= J <= model.J:
        raise ValueError(f"J={J} outside 1 <= J <= {model.J}.")
    terms = model.mults[:J] / (1.0 + model.lambdas[:J])**q
    sums = np.cumsum(terms)
    if J < 16:
        return SummabilityReport(sums, "inconclusive", None, q)
    if sums[-1] - sums[(3 * J) // 4 - 1] < 1e-6 * sums[-1]:
        return SummabilityReport(sums, "converged", 0.0, q)
    top = int(math.floor(math.log2(J - 1)))
    blocks = np.array([
        sums[2**(m + 1) - 1] - sums[2**m - 1]
        for m in range(max(0, top - 4), top)
    ])
    m = np.arange(blocks.size, dtype=float)
    slope = float(np.polyfit(m, np.log2(blocks), 1)[0])
    ratio = 2.0**slope
    verdict = "converged" if ratio < 0.95 else "diverging"
    log.debug(f"Summability q={q}: dyadic ratio {ratio:.4f} -> {verdict}")
    return SummabilityReport(sums, verdict, ratio, q)


def supnorm_ratios(model: SpectralModel) -> np.ndarray:
    """Per block ``l >= 1``: ``max_k ||e_l^k||_inf / lambda_l^((n-1)/(2 nu))``.

    The sup norm is estimated on the quadrature grid.
    """
    _require_quadrature(model)
    peaks = np.max(np.abs(model.basis), axis=1)
    offs = model.offsets
    exponent = (model.n - 1) / (2.0 * model.nu)
    return np.array([
        peaks[offs[l]:offs[l + 1]].max() / model.lambdas[l]**exponent
        for l in range(1, model.J)
    ])


def supnorm_ratio_check(model: SpectralModel) -> float:
    ratios = supnorm_ratios(model)
    return float(ratios.max()) if ratios.size else 0.0


def inner_product(model: SpectralModel, f_samples, g_samples) -> complex:
    """``sum_nodes w f conj(g)``, the quadrature ``L^2`` product."""
    quad = _require_quadrature(model)
    f = np.asarray(f_samples).ravel()
    g = np.asarray(g_samples).ravel()
    if f.size != len(quad) or g.size != len(quad):
        raise SampleLengthError(
            f"Expected {len(quad)} samples, got {f.size} and {g.size}.")
    return complex(np.sum(quad.weights * f * np.conj(g)))


def model_descriptor(model: SpectralModel, labels: bool = True) -> Dict:
    out = {
        "manifold": model.manifold,
        "J": model.J,
        "n": model.n,
        "nu": model.nu,
        "lambdas": [float(v) for v in model.lambdas],
        "mults": [int(v) for v in model.mults],
        "quadrature_size": (None if model.quadrature_size is None else list(
            model.quadrature_size)),
    }
    if labels:
        out["basis_labels"] = model.basis_labels()
    return out


def model_from_descriptor(desc: Dict) -> SpectralModel:
    size = desc.get("quadrature_size")
    if isinstance(size, list):
        size = tuple(size)
        if desc["manifold"] != "sphere2":
            size = _scalar_size(size)
    model = build_model(desc["manifold"], int(desc["J"]), size)
    if "mults" in desc and list(desc["mults"]) != [int(v) for v in
                                                   model.mults]:
        raise ValueError("Descriptor multiplicities disagree with the "
                         "model rebuilt from it.")
    return model


def same_spectrum(a: SpectralModel, b: SpectralModel) -> bool:
    """True when ``a`` and ``b`` describe the same basis on the same nodes."""
    if a is b:
        return True
    if a.manifold != b.manifold or a.quadrature_size != b.quadrature_size:
        return False
    J = min(a.J, b.J)
    return bool(np.array_equal(a.mults[:J], b.mults[:J]))
