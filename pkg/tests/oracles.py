"""Independent reference computations used to check the library.

Nothing here imports the connection, curvature or integration code under
test; oracles work from closed forms, plain loops or raw finite differences.
"""

from __future__ import annotations

import math

import numpy as np

# frozen closed-form values
INDEX_FORM_PARABOLA = 0.13476940059055842  # pi^3/3 - pi^5/30, u = t (pi - t), k = 1


def oscillator_conjugate(k: float) -> float:
    return math.pi / math.sqrt(k)


def naive_contract(a: np.ndarray, b: np.ndarray, i: int, j: int) -> np.ndarray:
    """Contract slot i of a with slot j of b using explicit loops."""
    ra, rb = a.ndim, b.ndim
    keep_a = [s for s in range(ra) if s != i]
    keep_b = [s for s in range(rb) if s != j]
    shape = [a.shape[s] for s in keep_a] + [b.shape[s] for s in keep_b]
    out = np.zeros(shape)
    for idx in np.ndindex(*shape) if shape else [()]:
        ia, ib = idx[: len(keep_a)], idx[len(keep_a) :]
        total = 0.0
        for m in range(a.shape[i]):
            fa = list(ia)
            fa.insert(i, m)
            fb = list(ib)
            fb.insert(j, m)
            total += a[tuple(fa)] * b[tuple(fb)]
        out[idx] = total
    return out


def fd_curvature(comps, x, h: float = 1e-4) -> np.ndarray:
    """Curvature of linear components ``comps(x) -> K[l, a, b]`` from
    fourth-order central differences and explicit index loops."""
    x = np.asarray(x, dtype=float)
    K = comps(x)
    d = K.shape[0]
    dK = np.zeros((d,) + K.shape)
    for s in range(d):
        e = np.zeros(d)
        e[s] = h
        dK[s] = (-comps(x + 2 * e) + 8 * comps(x + e) - 8 * comps(x - e) + comps(x - 2 * e)) / (12 * h)
    R = np.zeros((d, d, d, d))
    for l in range(d):
        for m in range(d):
            for a in range(d):
                for b in range(d):
                    val = dK[l, m, a, b] - dK[m, l, a, b]
                    for g in range(d):
                        val += K[l, g, b] * K[m, a, g] - K[m, g, b] * K[l, a, g]
                    R[l, m, a, b] = val
    return R


def rk4(f, y0, a: float, b: float, steps: int) -> tuple[np.ndarray, np.ndarray]:
    """Classical fixed-step Runge-Kutta; returns (times, states)."""
    h = (b - a) / steps
    ts = a + h * np.arange(steps + 1)
    ys = np.empty((steps + 1, len(y0)))
    y = np.asarray(y0, dtype=float)
    ys[0] = y
    for s in range(steps):
        t = ts[s]
        k1 = f(t, y)
        k2 = f(t + h / 2, y + h / 2 * k1)
        k3 = f(t + h / 2, y + h / 2 * k2)
        k4 = f(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        ys[s + 1] = y
    return ts, ys


def euler_lagrange_acceleration(dL_dv, d2L_dvdv, d2L_dvdq, d2L_dvdt, dL_dq, t, q, v) -> np.ndarray:
    """Solve ``H qdd = dL/dq - d2L/dv dt - d2L/dv dq . v`` for qdd.

    Arguments are callables of (t, q, v) giving the derivative arrays of the
    Lagrangian; ``dL_dv`` is unused but kept for symmetry of call sites.
    """
    H = d2L_dvdv(t, q, v)
    rhs = dL_dq(t, q, v) - d2L_dvdt(t, q, v) - d2L_dvdq(t, q, v) @ v
    return np.linalg.solve(H, rhs)


def rotating_free_particle(omega: float, qbar0, vbar0, t: float) -> np.ndarray:
    """Straight line ``qbar0 + vbar0 t`` seen through ``q = R(omega t) qbar``."""
    c, s = math.cos(omega * t), math.sin(omega * t)
    p = np.asarray(qbar0) + np.asarray(vbar0) * t
    return np.array([c * p[0] - s * p[1], s * p[0] + c * p[1]])


def random_quadratic_strings(rng, n: int, linear_only: bool = False):
    """Random symmetric quadratic coefficients as expression strings.

    Returns dicts ``a[(i, j, k)]``, ``b[(i, j)]``, ``f[(i,)]`` (0-based) of
    smooth, bounded position fields.
    """

    def term():
        c = rng.uniform(-0.5, 0.5)
        kind = rng.integers(0, 4)
        var = f"q{rng.integers(1, n + 1)}"
        if kind == 0 or linear_only:
            return f"{c:.6f}"
        if kind == 1:
            return f"{c:.6f}*{var}"
        if kind == 2:
            return f"{c:.6f}*sin({var} + t)"
        return f"{c:.6f}*cos({var})"

    a, b, f = {}, {}, {}
    for i in range(n):
        f[(i,)] = f"-{rng.uniform(0.5, 2.0):.6f}*q{i + 1} + {term()}"
        for j in range(n):
            b[(i, j)] = term()
            for k in range(j, n):
                a[(i, j, k)] = a[(i, k, j)] = term()
    return a, b, f


def random_mass_strings(rng, n: int):
    """Position-dependent, uniformly positive definite mass metric strings."""
    m = {}
    for i in range(n):
        m[(i, i)] = f"{rng.uniform(1.0, 2.0):.6f} + {rng.uniform(0.0, 0.3):.6f}*sin(q{(i + 1) % n + 1})^2"
        for j in range(i + 1, n):
            m[(i, j)] = m[(j, i)] = f"{rng.uniform(-0.15, 0.15):.6f}*cos(q{i + 1})"
    return m
