"""Watch iterated resolvents converge to the heat semigroup at rate O(1/m).

For a real-valued map the resolvent is a linear solve and the semigroup is a
matrix exponential, so the error of ``J_{t/m}^m u0`` can be measured
exactly.  Doubling ``m`` should roughly halve it.
"""
import numpy as np

from cat0flow import Euclidean, MapState, build_domain, crandall_liggett
from cat0flow.scenario import euclidean_heat_oracle


def main():
    rng = np.random.default_rng(0)
    dom = build_domain("interval-dirichlet", 33, 32.0)
    u0 = MapState(dom, Euclidean(1), rng.uniform(-1, 1, (33, 1)))
    exact = euclidean_heat_oracle(u0, 1.0)
    prev = None
    print(f"{'m':>4} {'max error':>12} {'ratio':>7}")
    for m in (4, 8, 16, 32, 64, 128):
        err = np.abs(crandall_liggett(u0, 1.0, m, tol=1e-13).values - exact).max()
        ratio = f"{prev / err:7.3f}" if prev else ""
        print(f"{m:4d} {err:12.4e} {ratio}")
        prev = err


if __name__ == "__main__":
    main()
