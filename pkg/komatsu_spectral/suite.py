"""Invariant suite run by ``komatsu verify``.

Each check is a module-level function of the :class:`RunConfig`, so the
suite can be spread over a :class:`RayPool`. A check returns
``(passed, detail)``; exceptions are caught and reported as failures.
"""
import math
import traceback
import warnings
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from komatsu_spectral import _logger as log
from komatsu_spectral.catalog import family_coeffs, operator
from komatsu_spectral.coeff_space import (
    CoeffArray, analyze, bidual_membership, classify, default_L_grid,
    duality_equivalence_probe, norm_inequality_check, pairing,
    plancherel_residual, synthesize)
from komatsu_spectral.config import RunConfig
from komatsu_spectral.parallel import RayPool, map_items
from komatsu_spectral.spectral_models import (
    SpectralModel, build_model, default_quadrature_size, gram_residual,
    summability_probe, supnorm_ratios, torus_spectrum, weyl_ratios)
from komatsu_spectral.tensor_ops import (
    AliasingWarning, TensorRep, adjointness_residual, apply,
    from_basis_action, multiplier_extract)
from komatsu_spectral.weights import (
    WeightSequence, associated_function, associated_function_array,
    doubling_constant_fit, verify_conditions)

CheckOutcome = Tuple[bool, Dict[str, Any]]


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: Dict[str, Any] = field(default_factory=dict)


@dataclass
class SuiteResult:
    checks: List[CheckResult]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> List[str]:
        return [c.name for c in self.checks if not c.passed]


def _config_model(config: RunConfig) -> SpectralModel:
    size = config.quadrature_size
    if size is None:
        size = default_quadrature_size(config.manifold, config.J)
    return build_model(config.manifold, config.J, size)


def _tensor_model(config: RunConfig) -> Tuple[SpectralModel, int]:
    t = config.truncation.J
    J = 2 * t + 2
    return build_model(config.manifold, J,
                       default_quadrature_size(config.manifold, J)), t


def check_orthonormality(config: RunConfig) -> CheckOutcome:
    model = _config_model(config)
    residual = gram_residual(model)
    return residual < 1e-10, {"gram_residual": residual}


def check_plancherel(config: RunConfig) -> CheckOutcome:
    model = _config_model(config)
    rng = np.random.default_rng(config.seed)
    band = max(1, config.J // 2)
    worst_planch, worst_round = 0.0, 0.0
    for _ in range(20):
        dim = model.dim(band)
        flat = np.zeros(model.dim(), dtype=complex)
        flat[:dim] = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
        u = CoeffArray.from_flat(model, flat)
        f = synthesize(model, u)
        worst_planch = max(worst_planch, plancherel_residual(model, f))
        back = analyze(model, f).flat()
        worst_round = max(worst_round, float(np.max(np.abs(back - flat))))
    return worst_planch < 1e-8 and worst_round < 1e-10, {
        "plancherel_residual": worst_planch,
        "round_trip": worst_round
    }


LATTICE_MAX_NORM = 400


def lattice_counts(max_norm: int) -> Dict[int, int]:
    counts: Dict[int, int] = {}
    bound = math.isqrt(max_norm)
    for a in range(-bound, bound + 1):
        for b in range(-bound, bound + 1):
            n = a * a + b * b
            if n <= max_norm:
                counts[n] = counts.get(n, 0) + 1
    return counts


def check_multiplicities(config: RunConfig) -> CheckOutcome:
    model = build_model(config.manifold, config.J)
    j = np.arange(config.J)
    lam, d = model.lambdas, model.mults
    ok = lam[0] == 0 and d[0] == 1 and bool(np.all(np.diff(lam) > 0))
    if config.manifold == "circle":
        ok = ok and bool(np.all(d[1:] == 2))
    elif config.manifold == "sphere2":
        ok = ok and bool(np.all(d == 2 * j + 1))
    else:
        oracle = lattice_counts(int(lam[-1]))
        expected = [oracle[n] for n in sorted(oracle)][:config.J]
        ok = ok and [int(v) for v in d] == expected
    # Torus multiplicities for every eigenvalue up to 400, independent of J.
    oracle = lattice_counts(LATTICE_MAX_NORM)
    norms, counts, _ = torus_spectrum(len(oracle))
    lattice_ok = ([int(n) for n in norms] == sorted(oracle)
                  and [int(c) for c in counts]
                  == [oracle[int(n)] for n in norms])
    return bool(ok and lattice_ok), {
        "lambdas_head": lam[:5],
        "mults_head": d[:5],
        "lattice_eigenvalues": len(oracle),
        "lattice_match": lattice_ok
    }


def check_weyl(config: RunConfig) -> CheckOutcome:
    model = build_model(config.manifold, max(config.J, 200))
    ratios = weyl_ratios(model)
    argmax = int(np.argmax(ratios))
    stable = argmax < max(1, ratios.size // 2)
    return stable, {"sup": float(ratios.max()), "argmax": argmax}


SUMMABILITY_J = {"circle": 100000, "torus2": 2000, "sphere2": 2000}


def check_summability(config: RunConfig) -> CheckOutcome:
    model = build_model(config.manifold, SUMMABILITY_J[config.manifold])
    threshold = model.n / model.nu
    above = summability_probe(model, threshold + 0.2)
    at = summability_probe(model, threshold)
    return above.converged and at.verdict == "diverging", {
        "threshold": threshold,
        "above": above.verdict,
        "at": at.verdict
    }


def check_supnorm(config: RunConfig) -> CheckOutcome:
    model = _config_model(config)
    ratios = supnorm_ratios(model)
    if ratios.size < 2:
        return True, {"skipped": "fewer than two blocks"}
    half = ratios.size // 2
    stable = ratios[half:].max() <= ratios[:half].max() + 1e-12
    return bool(stable), {"sup": float(ratios.max())}


def check_associated_function(config: RunConfig) -> CheckOutcome:
    value = associated_function(WeightSequence.gevrey(1.0), 1.0, math.e)
    r = np.geomspace(10.0, 1e6, 21)
    slopes = {}
    monotone = True
    for s in (1.0, 1.5, 2.0):
        M = associated_function_array(WeightSequence.gevrey(s), 1.0, r)
        monotone = monotone and bool(np.all(np.diff(M) >= 0))
        slopes[s] = float(np.polyfit(np.log(r), np.log(M), 1)[0])
    ok = (abs(value - (2.0 - math.log(2.0))) < 1e-9 and monotone
          and all(abs(slope - 1.0 / s) <= 0.05
                  for s, slope in slopes.items()))
    return ok, {"M(e)": value, "slopes": slopes}


def check_conditions(config: RunConfig) -> CheckOutcome:
    k_max = 20
    factorial = verify_conditions(WeightSequence.gevrey(1.0), k_max)
    gevrey2 = verify_conditions(WeightSequence.gevrey(2.0), k_max)
    constant = verify_conditions(WeightSequence.tabulated(np.zeros(21)), 10)
    configured = verify_conditions(config.build_weight(), k_max)
    ok = (factorial.accepted and gevrey2.passed["M.3'"]
          and not constant.passed["M.3"] and configured.accepted)
    return ok, {
        "factorial": factorial.passed,
        "configured": configured.passed,
        "A": configured.A,
        "H": configured.H
    }


def check_doubling(config: RunConfig) -> CheckOutcome:
    w = config.build_weight()
    fit = doubling_constant_fit(w, 1.0, np.geomspace(1.0, 1e3, 31))
    r = np.geomspace(1.0, 1e3, 97)
    lhs = 2.0 * associated_function_array(w, 1.0, r)
    rhs = associated_function_array(w, 1.0, fit.c * r) + fit.log_A
    return bool(np.all(lhs <= rhs + 1e-9)), {
        "c": fit.c,
        "log_A": fit.log_A
    }


def check_norm_inequalities(config: RunConfig) -> CheckOutcome:
    rng = np.random.default_rng(config.seed)
    worst, violations = math.inf, 0
    for p, q in ((1, 2), (1, math.inf), (2, math.inf)):
        report = norm_inequality_check(32, p, q, trials=1000, rng=rng)
        worst = min(worst, report.worst_slack)
        violations += report.violations
    return violations == 0, {"worst_slack": worst, "violations": violations}


def _circle(config: RunConfig) -> Optional[SpectralModel]:
    if config.J < 32:
        return None
    return build_model("circle", config.J)


def check_classifier_recovery(config: RunConfig) -> CheckOutcome:
    model = _circle(config)
    if model is None:
        return True, {"skipped": "horizon below 32 blocks"}
    w = WeightSequence.gevrey(1.0)
    grid = config.L_grid.build()
    fitted = {}
    ok = True
    for a in (0.3, 0.5, 1.0):
        env = classify(
            family_coeffs(model, "poisson", {"a": a}), w, "gevrey_roumieu",
            grid, config.tolerance)
        fitted[a] = env.L
        ok = ok and env.passed and abs(env.L - a) <= 0.1 * a
    return ok, {"fitted_L": fitted}


def check_classifier_separation(config: RunConfig) -> CheckOutcome:
    model = _circle(config)
    if model is None:
        return True, {"skipped": "horizon below 32 blocks"}
    w = WeightSequence.gevrey(1.0)
    grid = config.L_grid.build()
    crossings = []

    def verdict(u, target):
        return classify(u, w, target, None if target == "smooth" else grid,
                        config.tolerance).passed

    for c in (0.5, 1.0, 2.0):
        u = family_coeffs(model, "subgevrey", {"c": c})
        if not verdict(u, "smooth") or verdict(u, "gevrey_roumieu"):
            crossings.append(("subgevrey", c))
    for a in (0.3, 0.5, 1.0):
        u = family_coeffs(model, "poisson", {"a": a})
        if not verdict(u, "gevrey_roumieu"):
            crossings.append(("poisson", a))
    for b in (0.1, 0.2, 0.3):
        u = family_coeffs(model, "tempered_growth", {"b": b})
        if (not verdict(u, "alpha_dual_roumieu")
                or any(verdict(u, t)
                       for t in ("smooth", "analytic", "gevrey_roumieu"))):
            crossings.append(("tempered_growth", b))
    return not crossings, {"false_crossings": crossings}


def check_perfectness(config: RunConfig) -> CheckOutcome:
    model = _circle(config)
    if model is None:
        return True, {"skipped": "horizon below 32 blocks"}
    w = WeightSequence.gevrey(1.0)
    grid = default_L_grid(0.1, 100.0, 73)
    disagreements = []
    for L0 in np.geomspace(0.5, 50.0, 20):
        u = family_coeffs(model, "associated_decay", {"L0": float(L0)})
        env = classify(u, w, "gevrey_roumieu", grid, config.tolerance)
        bid = bidual_membership(u, w, grid, config.tolerance)
        agree = env.passed == (bid.found_L is not None)
        if agree and env.passed:
            steps = abs(
                int(np.searchsorted(grid, env.L)) -
                int(np.searchsorted(grid, bid.found_L)))
            agree = steps <= 1
        if not agree:
            disagreements.append(float(L0))
    return not disagreements, {"disagreements": disagreements}


def check_duality(config: RunConfig) -> CheckOutcome:
    model = _circle(config)
    if model is None:
        return True, {"skipped": "horizon below 32 blocks"}
    rng = np.random.default_rng(config.seed)
    rho, lam = model.rho, model.lambdas
    disagreements, slack = 0, math.inf
    for _ in range(50):
        a, b = rng.uniform(0.8, 2.0), rng.uniform(0.0, 0.3)
        v = CoeffArray.from_hs_norms(model, np.exp(-a * rho), rng)
        w = CoeffArray.from_hs_norms(model, (1.0 + lam)**b, rng)
        report = duality_equivalence_probe(v, w)
        disagreements += int(not report.agree)
        slack = min(slack, report.min_cs_slack)
    return disagreements == 0 and slack >= -1e-15, {
        "disagreements": disagreements,
        "min_cs_slack": slack
    }


def _catalog_names(manifold: str) -> List[Tuple[str, Dict]]:
    names = [("laplacian", {}), ("multiply", {"g": "cos"})]
    if manifold != "sphere2":
        names.append(("derivative", {}))
    return names


ADJOINTNESS_TRIALS = 100


def check_adjointness(config: RunConfig) -> CheckOutcome:
    model, t = _tensor_model(config)
    rng = np.random.default_rng(config.seed)
    D = model.dim(t)

    def unit(x):
        return x / np.linalg.norm(x)

    def gaussian(*shape):
        return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)

    random_worst = 0.0
    for _ in range(ADJOINTNESS_TRIALS):
        T = TensorRep(model, model, t, t, unit(gaussian(D, D)))
        u = CoeffArray.from_flat(model, unit(gaussian(D)), t)
        v = CoeffArray.from_flat(model, unit(gaussian(D)), t)
        random_worst = max(random_worst, adjointness_residual(T, u, v))
    catalog_worst = 0.0
    u = family_coeffs(model, "poisson", {"a": 1.0}, t)
    for name, params in _catalog_names(config.manifold):
        T = from_basis_action(operator(model, name, params), model, t, t)
        catalog_worst = max(catalog_worst, adjointness_residual(T, u, u))
    return max(random_worst, catalog_worst) < 1e-12, {
        "trials": ADJOINTNESS_TRIALS,
        "random_worst_residual": random_worst,
        "catalog_worst_residual": catalog_worst
    }


def check_oracle(config: RunConfig) -> CheckOutcome:
    model, t = _tensor_model(config)
    rng = np.random.default_rng(config.seed)
    band = max(1, t - 1)
    worst = 0.0
    for name, params in _catalog_names(config.manifold):
        op = operator(model, name, params)
        T = from_basis_action(op, model, t, t)
        dim = model.dim(band)
        flat = np.zeros(model.dim(t), dtype=complex)
        flat[:dim] = rng.standard_normal(dim)
        u = CoeffArray.from_flat(model, flat, t)
        lhs = apply(T, u).flat()
        f = synthesize(model, u)
        rhs = analyze(model, op(f), t).flat()
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst < 1e-8, {"worst_difference": worst}


def check_multipliers(config: RunConfig) -> CheckOutcome:
    model, t = _tensor_model(config)
    lap = multiplier_extract(
        from_basis_action(operator(model, "laplacian"), model, t, t))
    ok = lap.accepted and all(
        np.allclose(s, model.lambdas[l] * np.eye(model.mults[l]), atol=1e-10)
        for l, s in enumerate(lap.sigma))
    mult = multiplier_extract(
        from_basis_action(operator(model, "multiply", {"g": "cos"}), model,
                          t, t))
    ok = ok and not mult.accepted and mult.ratio > 0.9
    detail = {"laplacian_ratio": lap.ratio, "multiply_ratio": mult.ratio}
    if config.manifold != "sphere2":
        der = multiplier_extract(
            from_basis_action(operator(model, "derivative"), model, t, t))
        ok = ok and der.accepted
        detail["derivative_ratio"] = der.ratio
    rng = np.random.default_rng(config.seed)
    sigmas = [
        rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        for d in model.mults[:t]
    ]
    back = multiplier_extract(TensorRep.block_diagonal(model, sigmas))
    ok = ok and back.accepted and all(
        np.array_equal(a, b) for a, b in zip(sigmas, back.sigma))
    return bool(ok), detail


def check_beurling(config: RunConfig) -> CheckOutcome:
    model = _circle(config)
    if model is None:
        return True, {"skipped": "horizon below 32 blocks"}
    w = WeightSequence.gevrey(1.0)
    grid = config.L_grid.build()
    L0 = 1.0
    u = family_coeffs(model, "associated_decay", {"L0": L0})
    roumieu = classify(u, w, "gevrey_roumieu", grid, config.tolerance)
    beurling = classify(u, w, "gevrey_beurling", grid, config.tolerance)
    above = [ok for L, ok in beurling.l_verdicts.items() if L > 1.2 * L0]
    fast = classify(
        family_coeffs(model, "beurling_decay"), w, "gevrey_beurling",
        default_L_grid(0.01, 1.0, 49), config.tolerance)
    ok = (roumieu.passed and not beurling.passed and not any(above)
          and fast.passed)
    return ok, {"roumieu_L": roumieu.L, "fast_passes": fast.passed}


def check_pairing(config: RunConfig) -> CheckOutcome:
    model = build_model(config.manifold, config.J)
    rng = np.random.default_rng(config.seed)
    D = model.dim()

    def rand():
        return CoeffArray.from_flat(
            model,
            rng.standard_normal(D) + 1j * rng.standard_normal(D))

    u, u2, v = rand(), rand(), rand()
    alpha = complex(rng.standard_normal(), rng.standard_normal())
    lhs = pairing(alpha * u + u2, v).value
    rhs = alpha * pairing(u, v).value + pairing(u2, v).value
    err = abs(lhs - rhs)
    return err < 1e-10 * max(1.0, abs(lhs)), {"bilinearity_error": err}


CHECKS: List[Tuple[str, Callable[[RunConfig], CheckOutcome]]] = [
    ("orthonormality", check_orthonormality),
    ("plancherel", check_plancherel),
    ("multiplicities", check_multiplicities),
    ("weyl_bound", check_weyl),
    ("summability_threshold", check_summability),
    ("supnorm_ratio", check_supnorm),
    ("associated_function", check_associated_function),
    ("komatsu_conditions", check_conditions),
    ("doubling_inequality", check_doubling),
    ("norm_inequalities", check_norm_inequalities),
    ("classifier_recovery", check_classifier_recovery),
    ("classifier_separation", check_classifier_separation),
    ("perfectness", check_perfectness),
    ("duality_equivalence", check_duality),
    ("adjointness", check_adjointness),
    ("oracle_equality", check_oracle),
    ("multiplier_characterization", check_multipliers),
    ("pairing_bilinearity", check_pairing),
    ("beurling_variant", check_beurling),
]


class _RunCheck:
    def __init__(self, config: RunConfig):
        self.config = config

    def __call__(self, entry: Tuple[str, Callable]) -> CheckResult:
        name, fn = entry
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", AliasingWarning)
                passed, detail = fn(self.config)
        except Exception as e:
            return CheckResult(name, False, {
                "error": f"{type(e).__name__}: {e}",
                "traceback": traceback.format_exc(limit=3)
            })
        return CheckResult(name, bool(passed), detail)


def run_suite(config: RunConfig,
              pool: Optional[RayPool] = None,
              only: Optional[List[str]] = None) -> SuiteResult:
    """Runs every check (or those named in ``only``) at the config's scale."""
    entries = [e for e in CHECKS if only is None or e[0] in only]
    results = map_items(_RunCheck(config), entries, pool)
    for r in results:
        if r.passed:
            log.info(f"[pass] {r.name}")
        else:
            log.info(f"[FAIL] {r.name}: {r.detail}")
    return SuiteResult(results)
