"""Inf-convolution of a linear field and its small-eps limit.

For ``u(x) = x`` on a fine interval the Hamilton-Jacobi field
``f_{eps,p}`` equals ``-eps/q`` exactly, with ``q`` the conjugate exponent
of ``p``.  Rescaled by ``1/eps`` it recovers ``-lip(u)^q / q``.
"""
import numpy as np

from cat0flow import Euclidean, MapState, build_domain, flow_run
from cat0flow.regularity import hj_flow


def main():
    dom = build_domain("interval-dirichlet", 257, 1.0)
    u0 = MapState(dom, Euclidean(1), dom.coords[:, :1].copy())
    tr = flow_run(u0, [0.0, 1e-3], tol=1e-13)
    for p in (2, 3, 4):
        q = p / (p - 1)
        for cells in (4, 8, 16):
            eps = cells * dom.spacing
            hj = hj_flow(tr, eps, p, 0.0, M0=0.5, R=1.0)
            f = hj.values[-1, hj.admissible]
            print(f"p={p} eps={eps:.5f}: f/eps in [{f.min() / eps:+.12f}, {f.max() / eps:+.12f}]"
                  f"  expected {-1 / q:+.12f}")


if __name__ == "__main__":
    main()
