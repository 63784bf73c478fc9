"""Compare Jacobi fields with finite geodesic variations of shrinking size.

For a random quadratic system the deviation ``|(q_delta - q)/delta - u|``
should halve with delta; the printed ratios approach 2.
"""

import argparse

import numpy as np

from geoflow import IntegratorConfig, integrate_geodesic, integrate_jacobi, linear_from_quadratic
from geoflow.dynamics import DynamicEquationField

CFG = IntegratorConfig(method="dop853", atol=1e-12, rtol=1e-12)


def system(rng, n):
    f = [f"-{rng.uniform(0.5, 2):.4f}*q{i + 1} + {rng.uniform(-0.3, 0.3):.4f}*sin(q{(i + 1) % n + 1} + t)" for i in range(n)]
    b = [[f"{rng.uniform(-0.3, 0.3):.4f}*q{j + 1}" for j in range(n)] for _ in range(n)]
    return linear_from_quadratic(DynamicEquationField.from_quadratic(n, b=b, f=f))


def deviation(K, init, u0, w0, delta, span):
    geo = integrate_geodesic(K, init, span, CFG)
    jac = integrate_jacobi(K, geo, u0, w0, CFG)
    x0, xd0 = geo(span[0])
    M = np.einsum("mab,m->ab", K.components_at(x0), xd0)[1:, 1:]
    moved = integrate_geodesic(K, (init[0] + delta * u0, init[1] + delta * (w0 + M @ u0)), span, CFG)
    ts = np.linspace(*span, 201)
    u = np.array([jac(t)[0][1:] for t in ts])
    return float(np.max(np.abs((moved.state(ts)[0] - geo.state(ts)[0]).T / delta - u)))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dim", type=int, default=2)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--span", type=float, default=3.0)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    K = system(rng, args.dim)
    init = (rng.uniform(-0.5, 0.5, args.dim), rng.uniform(-0.5, 0.5, args.dim))
    u0, w0 = rng.uniform(-1, 1, args.dim), rng.uniform(-1, 1, args.dim)
    prev = None
    print("delta,deviation,ratio")
    for delta in 1e-2 * 0.5 ** np.arange(6):
        dev = deviation(K, init, u0, w0, delta, (0.0, args.span))
        print(f"{delta:.3e},{dev:.6e},{'' if prev is None else f'{prev / dev:.4f}'}")
        prev = dev


if __name__ == "__main__":
    main()
