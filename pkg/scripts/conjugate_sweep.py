"""First conjugate point of q'' = -k q across a range of stiffnesses.

Writes CSV rows ``k,first_conjugate,closed_form,rel_error`` to stdout.
"""

import argparse
import math
import sys

import numpy as np

from geoflow import DynamicEquationField, IntegratorConfig, find_conjugate_points, linear_from_quadratic


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--kmin", type=float, default=0.25)
    ap.add_argument("--kmax", type=float, default=16.0)
    ap.add_argument("--count", type=int, default=12)
    ap.add_argument("--method", default="rk45", choices=["rk45", "dop853", "rk4"])
    args = ap.parse_args(argv)

    cfg = IntegratorConfig(method=args.method)
    out = sys.stdout
    out.write("k,first_conjugate,closed_form,rel_error\n")
    for k in np.geomspace(args.kmin, args.kmax, args.count):
        K = linear_from_quadratic(DynamicEquationField.from_quadratic(1, f=[f"-{float(k)!r}*q1"]))
        expect = math.pi / math.sqrt(k)
        pts = find_conjugate_points(K, ([1.0], [0.0]), (0.0, 1.5 * expect), cfg)
        first = pts[0] if pts else float("nan")
        out.write(f"{k:.6e},{first:.12e},{expect:.12e},{abs(first - expect) / expect:.3e}\n")


if __name__ == "__main__":
    main()
