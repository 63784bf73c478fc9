"""Max curvature of free motion seen from rotating frames, against the
oscillator for contrast."""

import argparse

import numpy as np

from geoflow import DynamicEquationField, connection_from_gamma, free_motion_equation, linear_from_quadratic, rotation_frame
from geoflow.core_tensor import lattice
from geoflow.tangent_connection import max_curvature


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--points", type=int, default=5)
    args = ap.parse_args(argv)

    box = lattice([-1, -1, -1], [1, 1, 1], args.points)
    print("system,omega,max_abs_R")
    for w in (0.1, 0.5, 1.0, 2.0, 5.0):
        _, gamma = free_motion_equation(rotation_frame(w))
        print(f"rotating_free,{w},{max_curvature(connection_from_gamma(gamma), box):.3e}")
    K = linear_from_quadratic(DynamicEquationField.from_quadratic(2, f=["-q1", "-q2"]))
    print(f"oscillator,,{max_curvature(K, box):.3e}")


if __name__ == "__main__":
    main()
