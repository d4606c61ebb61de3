"""Exercise the two iteration lemmas behind the decay machinery.

The slow lemma: a_n = omega0^{l2/m2} (1+n)^{-eps} survives the damped
recursion for the closed-form eps.  The fast lemma: starting at the
critical threshold, A_{i+1} = c b^i A_i^{1+alpha} decays geometrically,
and 1.5x the threshold blows up.

Usage: python3 demos/algebraic_lemmas.py
"""

import argparse

import numpy as np

from nlstefan import analysis


def main(argv=None) -> int:
    argparse.ArgumentParser(description=__doc__).parse_args(argv)

    print("slow iteration: closed-form admissible exponents")
    print("  m2  n2  l2   epsilon       min margin over n<=1e5")
    for m2, n2, l2 in ((4, 4, 4), (4, 8, 4), (8, 8, 8), (16, 16, 16)):
        v = analysis.lemma_iter_verify(m2, n2, l2, omega0=2.0)
        print(f"  {m2:>2}  {n2:>2}  {l2:>2}   {v.epsilon:.8f}   {v.min_margin:.3e}  "
              f"{'ok' if v.passed else 'VIOLATED'}")

    print("\nfast iteration: threshold start vs 1.5x the threshold (c=2, b=2, alpha=0.5)")
    c, b, alpha = 2.0, 2.0, 0.5
    a0 = c ** (-1.0 / alpha) * b ** (-1.0 / alpha ** 2)
    good = analysis.geometric_convergence(c, b, alpha, a0, n_max=40)
    bad = analysis.geometric_convergence(c, b, alpha, 1.5 * a0, n_max=40)
    idx = np.arange(good.values.size)
    cert = a0 * b ** (-idx / alpha)
    print(f"  threshold A0 = {a0:.6f}")
    print("  i    certified bound   at-threshold run   1.5x run")
    for i in (0, 5, 10, 20, 40):
        over = bad.values[i] if i < bad.values.size else float("inf")
        print(f"  {i:>2}   {cert[i]:.6e}     {good.values[i]:.6e}      {over:.3e}")
    print(f"  certificate holds: {good.within_certificate}; "
          f"inflated start diverges: {bad.diverged}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
