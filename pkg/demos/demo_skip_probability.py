"""Exact layer-skip probabilities and their analytic bounds.

For the near-critical family r_n ~ (1/3)(1/n + 1/(n loglog n)), print the
probability that layer {2k, 2k+1} contains a permanently skipped site, the
analytic sandwich around it, and the decorrelation of distant layers.
"""
import numpy as np

from skipwalk import (
    ChainParams,
    PerturbationSpec,
    build_d_table,
    compute_tails,
    joint_skip_prob,
    k0_epsilon,
    skip_prob,
    skip_prob_bounds,
)


def main() -> None:
    chain = ChainParams(PerturbationSpec(family="theorem2", beta=1.0))
    tails = compute_tails(chain, 1, 20000)
    dtab = build_d_table(tails, m_lo=0, tol=1e-4)

    k0 = k0_epsilon(chain, tails, dtab, eps=0.05, k_max=2000)
    print(f"bounds certified for k >= k0(0.05) = {k0}\n")

    print(f"{'k':>6} {'P(skip in layer k)':>20} {'lower':>12} {'upper':>12}")
    for k in (k0, 30, 100, 300, 1000, 3000):
        lo, hi = skip_prob_bounds(chain, dtab, k)
        v = skip_prob(chain, tails, dtab, k).value
        print(f"{k:>6} {v:>20.6e} {lo:>12.3e} {hi:>12.3e}")

    print("\njoint skips factorize as layers separate:")
    j = 50
    for k in (60, 100, 400, 2000):
        joint = joint_skip_prob(chain, tails, dtab, j, k).value
        prod = skip_prob(chain, tails, dtab, j).value * skip_prob(chain, tails, dtab, k).value
        print(f"  j={j}, k={k}: joint/product = {joint / prod:.4f}")


if __name__ == "__main__":
    main()
