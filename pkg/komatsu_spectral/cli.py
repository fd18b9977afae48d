"""``komatsu`` command-line front-end.

Subcommands ``spectra``, ``classify``, ``tensor`` and ``verify`` read a
:class:`RunConfig`, write JSON/CSV reports into the output directory and
return the documented exit code.
"""
import argparse
import logging
import os
import sys
import warnings
from typing import Dict, List, Optional

import numpy as np

from komatsu_spectral import _logger as log
from komatsu_spectral.catalog import family_coeffs, operator
from komatsu_spectral.coeff_space import (
    CRITERIA, DECAY_CURVE_HEADER, AlignmentError, CoeffArray, analyze,
    classify, coeffs_from_json, decay_curve_rows)
from komatsu_spectral.config import ConfigError, RunConfig, load_config
from komatsu_spectral.parallel import RayPool, pool_from_env
from komatsu_spectral.session import (get_config_hash, get_session,
                                      init_session, is_session_enabled,
                                      shutdown_session)
from komatsu_spectral.spectral_models import (
    build_model, default_quadrature_size, model_descriptor, running_sup,
    summability_probe, supnorm_ratios, torus_spectrum, weyl_ratios)
from komatsu_spectral.suite import SUMMABILITY_J, lattice_counts, run_suite
from komatsu_spectral.tensor_ops import (
    BLOCK_NORM_HEADER, AliasingWarning, adjointness_report, block_norm_rows,
    from_basis_action, multiplier_extract, sequentiality_probe,
    tensor_to_json)
from komatsu_spectral.util import makedirs, read_json, write_csv, write_json

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_SPECTRA_FAILED = 2
EXIT_INPUT_UNRESOLVED = 3
EXIT_ALIASED = 4

# Largest model whose basis is sampled for the sup-norm report.
SUPNORM_MAX_J = 60


# Identifiers of the diagnostic criteria behind the spectra and tensor
# reports.
DIAGNOSTIC_CRITERIA = {
    "weyl_bound": "d_j <= C (1 + lambda_j)^(n/nu)",
    "summability_threshold":
    "sum_j d_j (1 + lambda_j)^(-q) < inf if and only if q > n/nu",
    "supnorm_ratio": "||e_j^k||_inf <= C lambda_j^((n-1)/(2 nu))",
    "transpose_adjoint": "<f(u), v> = <u, f^t(v)>",
    "multiplier": "f commutes with E if and only if f_kj = 0 for k != j",
    "sequentiality": "sum_j sum_l |f_kjli| |u(j,l)| < inf for every (k, i)",
}


def _report(config: RunConfig, criteria: List[str], **body) -> Dict:
    if is_session_enabled():
        digest, seed = get_config_hash(), get_session().get_seed()
    else:
        digest, seed = config.hash(), config.seed
    known = {**CRITERIA, **DIAGNOSTIC_CRITERIA}
    return {
        "config_hash": digest,
        "seed": seed,
        "criteria": {name: known.get(name, name)
                     for name in criteria},
        **body
    }


def _path(config: RunConfig, name: str) -> str:
    return os.path.join(config.out, name)


def _violation(config: RunConfig, command: str, reason: str,
               detail: Optional[Dict] = None) -> None:
    write_json(
        _path(config, "violations.json"),
        _report(config, [], command=command, reason=reason,
                detail=detail or {}))
    log.error(f"{command}: {reason}")


def cmd_spectra(config: RunConfig) -> int:
    """Model descriptor plus Weyl, summability and sup-norm diagnostics."""
    model = build_model(config.manifold, config.J)
    violations = {}
    lam, d = model.lambdas, model.mults
    if config.manifold == "torus2":
        oracle = lattice_counts(int(lam[-1]))
        expected = [oracle[k] for k in sorted(oracle)][:config.J]
        if [int(v) for v in d] != expected:
            violations["multiplicities"] = {"expected": expected, "got": d}
        _, counts, _ = torus_spectrum(config.J)
        if not np.array_equal(counts, d):
            violations["torus_spectrum"] = {"counts": counts}
    if not (lam[0] == 0 and np.all(np.diff(lam) > 0)):
        violations["eigenvalues"] = {"lambdas_head": lam[:5]}

    ratios = weyl_ratios(model)
    sup = running_sup(ratios)
    threshold = model.n / model.nu
    long = build_model(config.manifold,
                       max(config.J, SUMMABILITY_J[config.manifold]))
    above = summability_probe(long, threshold + 0.2)

    size = default_quadrature_size(config.manifold,
                                   min(config.J, SUPNORM_MAX_J))
    capped = build_model(config.manifold, min(config.J, SUPNORM_MAX_J), size)
    sup_ratios = supnorm_ratios(capped)
    if above.verdict == "diverging":
        violations["summability"] = {"q": above.q}

    write_json(_path(config, "model.json"), model_descriptor(model))
    report = _report(
        config, ["weyl_bound", "summability_threshold", "supnorm_ratio"],
        weyl={
            "ratios": ratios,
            "running_sup": sup,
            "sup": float(sup[-1]),
            "argmax": int(np.argmax(ratios))
        },
        summability={
            "threshold": threshold,
            "J": long.J,
            "above": {
                "q": above.q,
                "verdict": above.verdict,
                "total": above.total
            },
        },
        supnorm={
            "J": capped.J,
            "ratios": sup_ratios,
            "sup": float(sup_ratios.max()) if sup_ratios.size else 0.0
        })
    write_json(_path(config, "spectra.json"), report)
    log.info(f"weyl sup {sup[-1]:.6g}; summability above n/nu: "
             f"{above.verdict}")
    if violations:
        _violation(config, "spectra", "spectral invariant failed",
                   violations)
        return EXIT_SPECTRA_FAILED
    return EXIT_OK


def _read_samples(path: str) -> np.ndarray:
    data = read_json(path)
    if isinstance(data, dict):
        data = data["samples"]
    arr = np.asarray(data, dtype=float)
    if arr.ndim == 2 and arr.shape[1] == 2:
        return arr[:, 0] + 1j * arr[:, 1]
    return arr.ravel()


def resolve_input(config: RunConfig) -> Optional[CoeffArray]:
    """Coefficients from a coefficient file, a sample file or a builtin.

    Returns ``None`` when the configured input cannot be resolved.
    """
    source = config.input
    try:
        if source.coefficient_file is not None:
            u = coeffs_from_json(read_json(source.coefficient_file))
            if u.model.manifold != config.manifold:
                raise AlignmentError(
                    f"Coefficient file is on {u.model.manifold}, the config "
                    f"asks for {config.manifold}.")
            return u
        if source.sample_file is not None:
            size = config.quadrature_size or default_quadrature_size(
                config.manifold, config.J)
            model = build_model(config.manifold, config.J, size)
            return analyze(model, _read_samples(source.sample_file))
        if source.builtin is not None:
            model = build_model(config.manifold, config.J)
            return family_coeffs(model, source.builtin, source.params)
    except (OSError, KeyError, TypeError, ValueError) as e:
        log.error(f"Could not resolve the classify input: {e}")
        return None
    return None


def cmd_classify(config: RunConfig) -> int:
    u = resolve_input(config)
    if u is None:
        _violation(config, "classify", "input unresolved",
                   {"input": config.input})
        return EXIT_INPUT_UNRESOLVED
    w = config.build_weight()
    grid = config.L_grid.build()
    envelopes = {}
    for target in config.classes:
        env = classify(u, w, target, None if target == "smooth" else grid,
                       config.tolerance)
        envelopes[target] = env
        write_csv(
            _path(config, f"decay_curve_{target}.csv"), DECAY_CURVE_HEADER,
            decay_curve_rows(u, w, env))
        log.info(f"{target}: {env.cls} (L={env.L})")
    write_json(
        _path(config, "classify.json"),
        _report(
            config,
            list(config.classes),
            model=model_descriptor(u.model, labels=False),
            weight=w.describe(),
            envelopes=envelopes))
    return EXIT_OK


def cmd_tensor(config: RunConfig,
               allow_alias: bool = False,
               pool: Optional[RayPool] = None) -> int:
    K, J = config.truncation.K, config.truncation.J
    model = build_model(
        config.manifold, 2 * max(K, J) + 2,
        default_quadrature_size(config.manifold, 2 * max(K, J) + 2))
    op = operator(model, config.operator.name, config.operator.params)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", AliasingWarning)
        T = from_basis_action(op, model, K, J, pool=pool)
    aliased = any(issubclass(c.category, AliasingWarning) for c in caught)
    if aliased and not allow_alias:
        _violation(config, "tensor", "aliasing guard tripped",
                   {"operator": config.operator})
        return EXIT_ALIASED

    u = family_coeffs(model, "poisson", {"a": 1.0})
    adjoint = adjointness_report(T, u, u)
    multiplier = multiplier_extract(T) if K == J else None
    seq = sequentiality_probe(T, u, u)
    write_json(_path(config, "tensor.json"), tensor_to_json(T))
    write_csv(
        _path(config, "block_norms.csv"), BLOCK_NORM_HEADER,
        block_norm_rows(T))
    write_json(
        _path(config, "tensor_report.json"),
        _report(
            config, ["transpose_adjoint", "multiplier", "sequentiality"],
            operator=config.operator,
            K=K,
            J=J,
            aliased=T.aliased,
            adjointness=adjoint,
            truncation_dominated=adjoint.truncation_dominated,
            multiplier=None if multiplier is None else {
                "accepted": multiplier.accepted,
                "ratio": multiplier.ratio,
                "sigma": multiplier.sigma
            },
            sequentiality={
                "f1_sums": seq.f1_sums,
                "f1_flag": seq.f1_flag,
                "f2_total": seq.f2_partial_sums[-1],
                "f2_stable": seq.f2_stable
            }))
    log.info(f"Tensor {config.operator.name}: adjointness residual "
             f"{adjoint.residual:.3g}")
    return EXIT_OK


def cmd_verify(config: RunConfig, pool: Optional[RayPool] = None) -> int:
    result = run_suite(config, pool=pool)
    write_json(
        _path(config, "verify.json"),
        _report(
            config,
            list(CRITERIA) + list(DIAGNOSTIC_CRITERIA),
            passed=result.passed,
            failures=result.failures,
            checks=result.checks))
    n = len(result.checks)
    print(f"{n - len(result.failures)}/{n} checks passed")
    for name in result.failures:
        print(f"  FAILED: {name}")
    return EXIT_OK if result.passed else EXIT_VERIFY_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="komatsu",
        description="Eigenfunction-expansion diagnostics on compact "
        "manifolds.")
    parser.add_argument(
        "command", choices=["spectra", "classify", "tensor", "verify"])
    parser.add_argument(
        "--config", type=str, default=None, help="JSON config file.")
    parser.add_argument(
        "--out", type=str, default=None, help="Output directory.")
    parser.add_argument("--seed", type=int, default=None, help="RNG seed.")
    parser.add_argument(
        "--allow-alias",
        action="store_true",
        help="Keep tensors that trip the aliasing guard.")
    parser.add_argument(
        "-v", "--verbose", action="store_true", help="Debug logging.")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config)
    except ConfigError as e:
        print(str(e), file=sys.stderr)
        return EXIT_INPUT_UNRESOLVED if args.command == "classify" else 2
    if args.out is not None:
        config.out = args.out
    if args.seed is not None:
        config.seed = args.seed
    makedirs(config.out)

    init_session(seed=config.seed, config_hash=config.hash())
    pool = pool_from_env() if args.command in ("tensor", "verify") else None
    try:
        if args.command == "spectra":
            return cmd_spectra(config)
        if args.command == "classify":
            return cmd_classify(config)
        if args.command == "tensor":
            return cmd_tensor(config, args.allow_alias, pool)
        return cmd_verify(config, pool)
    finally:
        if pool is not None:
            pool.shutdown()
        shutdown_session()


if __name__ == "__main__":
    sys.exit(main())
