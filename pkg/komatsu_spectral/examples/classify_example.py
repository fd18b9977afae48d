"""Example: recovering the Gevrey decay rate of Poisson-kernel coefficients.

Builds the Poisson family ``exp(-a * sqrt(lambda))`` on a manifold, classifies
it against the factorial weights and compares the fitted ``L`` to ``a``.
"""
import numpy as np

from komatsu_spectral import WeightSequence, build_model, classify
from komatsu_spectral.catalog import family_coeffs
from komatsu_spectral.coeff_space import bidual_membership
from komatsu_spectral.parallel import RayPool, map_items


def classify_rate(a, manifold="circle", J=60):
    model = build_model(manifold, J)
    u = family_coeffs(model, "poisson", {"a": a})
    w = WeightSequence.gevrey(1.0)
    envelope = classify(u, w, "gevrey_roumieu")
    bidual = bidual_membership(u, w)
    return a, envelope.cls, envelope.L, bidual.found_L


def sweep(rates, manifold="circle", J=60, num_workers=1):
    def job(a):
        return classify_rate(a, manifold, J)

    if num_workers > 1:
        with RayPool(num_workers=num_workers) as pool:
            rows = map_items(job, rates, pool)
    else:
        rows = map_items(job, rates)
    for a, cls, L, found in rows:
        print(f"a={a:.3f}  class={cls:<15}  L={L}  bidual L={found}")
    return rows


if __name__ == "__main__":
    import argparse

    import ray

    parser = argparse.ArgumentParser()
    parser.add_argument(
        "--num-workers",
        type=int,
        help="Number of Ray workers to use.",
        default=1)
    parser.add_argument(
        "--manifold",
        type=str,
        default="circle",
        choices=["circle", "torus2", "sphere2"])
    parser.add_argument(
        "--num-rates", type=int, default=12, help="Number of rates to try.")
    parser.add_argument(
        "--smoke-test", action="store_true", help="Finish quickly for testing")
    parser.add_argument(
        "--address",
        required=False,
        type=str,
        help="the address to use for Ray")
    args, _ = parser.parse_known_args()

    num_rates = 3 if args.smoke_test else args.num_rates
    num_workers = 1 if args.smoke_test else args.num_workers

    if num_workers > 1:
        ray.init(address=args.address)

    sweep(
        np.geomspace(0.2, 2.0, num_rates),
        manifold=args.manifold,
        num_workers=num_workers)
