"""Geodesics, Jacobi fields, conjugate points and the index form.

Time is a parameter, not an unknown: every trajectory has ``q^0 = t`` and
``qdot^0 = 1`` by construction, and Jacobi fields have zero temporal
component.

Jacobi fields are integrated in first order form with ``w = Du`` the
covariant derivative along the geodesic.  With the sign convention where
geodesics read ``qdd = +K qdot qdot``::

    udot = w + M u,        wdot = R(u, qdot) qdot + M w,
    M[a, b] = K[m, a, b] qdot^m,
    R(u, qdot) qdot = R[l, m, a, b] u^l qdot^m qdot^b.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy import integrate, optimize
from scipy.interpolate import CubicHermiteSpline

from .core_tensor import TangentVector, auto_step, coords_of
from .dynamics import DynamicEquationField
from .errors import ContractError, EvaluationError, IntegrationError, NumericError
from .newtonian import TangentMetric
from .tangent_connection import TangentConnectionField, riemann

DEGENERATE_DET = 1e-12
BISECT_XTOL = 1e-9


@dataclass(frozen=True)
class IntegratorConfig:
    """``method`` is ``"rk45"`` (adaptive, default), ``"dop853"`` (adaptive,
    8th order) or ``"rk4"`` (fixed step ``step``)."""

    method: str = "rk45"
    atol: float = 1e-10
    rtol: float = 1e-10
    max_step: float = math.inf
    step: float = 1e-2
    dense: bool = True

    def __post_init__(self):
        if self.method not in ("rk45", "dop853", "rk4"):
            raise ValueError(f"unknown integration method {self.method!r}")
        if not (self.atol > 0 and self.rtol > 0 and self.step > 0 and self.max_step > 0):
            raise ValueError("tolerances and step sizes must be positive")


class _Solution:
    """Step grid plus dense interpolant of an ODE state."""

    def __init__(self, t, y, interp, nfev):
        self.t = t
        self.y = y
        self.interp = interp
        self.nfev = nfev

    def __call__(self, t):
        return self.interp(t)


def _solve(rhs, span, y0, cfg: IntegratorConfig) -> _Solution:
    a, b = float(span[0]), float(span[1])
    if not (math.isfinite(a) and math.isfinite(b)) or a == b:
        raise ValueError(f"degenerate integration span {span}")
    y0 = np.asarray(y0, dtype=float)
    if not np.all(np.isfinite(y0)):
        raise ValueError("non-finite initial state")
    last = {"state": (a, y0.copy())}

    def f(t, y):
        try:
            dy = rhs(t, y)
        except EvaluationError as exc:
            raise IntegrationError(f"field evaluation failed: {exc}", last["state"]) from exc
        if not np.all(np.isfinite(dy)):
            raise IntegrationError(f"non-finite derivative at t={t}", last["state"])
        last["state"] = (t, y.copy())
        return dy

    if cfg.method == "rk4":
        return _rk4(f, a, b, y0, cfg.step)
    res = integrate.solve_ivp(
        f,
        (a, b),
        y0,
        method="RK45" if cfg.method == "rk45" else "DOP853",
        rtol=cfg.rtol,
        atol=cfg.atol,
        max_step=cfg.max_step,
        dense_output=True,
    )
    if res.status != 0:
        raise IntegrationError(f"integration failed: {res.message}", (res.t[-1], res.y[:, -1]))
    if not np.all(np.isfinite(res.y)):
        raise IntegrationError("non-finite state", (res.t[-1], res.y[:, -1]))
    return _Solution(res.t, res.y, res.sol, res.nfev)


def _rk4(f, a, b, y0, step):
    steps = max(1, int(math.ceil(abs(b - a) / step - 1e-12)))
    h = (b - a) / steps
    ts = a + h * np.arange(steps + 1)
    ts[-1] = b
    ys = np.empty((steps + 1, y0.size))
    fs = np.empty_like(ys)
    y = y0.copy()
    ys[0] = y
    for k in range(steps):
        t = ts[k]
        k1 = f(t, y)
        fs[k] = k1
        k2 = f(t + h / 2, y + h / 2 * k1)
        k3 = f(t + h / 2, y + h / 2 * k2)
        k4 = f(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise IntegrationError(f"non-finite state at t={ts[k + 1]}", (t, ys[k]))
        ys[k + 1] = y
    fs[-1] = f(ts[-1], y)
    order = np.argsort(ts)
    spline = CubicHermiteSpline(ts[order], ys[order], fs[order], axis=0)
    return _Solution(ts, ys.T, lambda t: spline(t).T, 4 * steps + 1)


# ---------------------------------------------------------------------------
# geodesics


def _geodesic_rhs(source, n):
    if isinstance(source, TangentConnectionField):
        if not source.tilde:
            raise ContractError(
                "geodesic integration needs vanishing temporal components; "
                "project with xi_from_connection first"
            )

        def acc(t, q, v):
            x = np.concatenate(([t], q))
            xd = np.concatenate(([1.0], v))
            return source.acceleration(x, xd)[1:]

    elif isinstance(source, DynamicEquationField):

        def acc(t, q, v):
            return source(np.concatenate(([t], q)), v)

    else:
        raise TypeError(f"cannot integrate geodesics of {type(source).__name__}")
    return acc


@dataclass
class GeodesicTrajectory:
    """Dense solution of a geodesic / dynamic equation on ``span``."""

    n: int
    span: tuple
    solution: _Solution = field(repr=False)
    source: object = field(repr=False)
    config: IntegratorConfig

    @property
    def steps(self) -> np.ndarray:
        return self.solution.t

    def state(self, t):
        """Spatial ``(q, v)`` at ``t`` (scalar or array)."""
        y = self.solution(t)
        return y[: self.n], y[self.n : 2 * self.n]

    def __call__(self, t):
        """``(x, xdot)`` with ``x[0] = t`` and ``xdot[0] = 1`` exactly."""
        q, v = self.state(t)
        if np.ndim(t) == 0:
            return np.concatenate(([t], q)), np.concatenate(([1.0], v))
        t = np.asarray(t, dtype=float)
        return np.column_stack([t, q.T]), np.column_stack([np.ones_like(t), v.T])

    def sample(self, num: int = 1001):
        ts = np.linspace(self.span[0], self.span[1], num)
        x, xd = self(ts)
        return ts, x, xd


def integrate_geodesic(source, init, span, cfg: IntegratorConfig | None = None) -> GeodesicTrajectory:
    """Integrate ``qdd^i = K[l, i, b] qdot^l qdot^b`` (or ``K^i_l qdot^l``, or
    ``xi^i(t, q, qdot)``) from spatial ``init = (q0, v0)`` over ``span``."""
    cfg = cfg or IntegratorConfig()
    n = source.n
    q0, v0 = (np.atleast_1d(np.asarray(a, dtype=float)) for a in init)
    if q0.size != n or v0.size != n:
        raise ValueError(f"initial data must have {n} components")
    acc = _geodesic_rhs(source, n)

    def rhs(t, y):
        return np.concatenate((y[n:], acc(t, y[:n], y[n:])))

    sol = _solve(rhs, span, np.concatenate((q0, v0)), cfg)
    return GeodesicTrajectory(n, (float(span[0]), float(span[1])), sol, source, cfg)


# ---------------------------------------------------------------------------
# Jacobi fields


def _jacobi_terms(K: TangentConnectionField, t, q, v):
    x = np.concatenate(([t], q))
    xd = np.concatenate(([1.0], v))
    Kc = K.components_at(x)
    R = riemann(Kc, K.gradient_at(x))
    acc = np.einsum("lab,l,b->a", Kc, xd, xd)
    M = np.einsum("mab,m->ab", Kc, xd)
    Rqq = np.einsum("lmab,m,b->al", R, xd, xd)  # u -> R(u, qdot) qdot
    return acc, M, Rqq


def _check_jacobi_inputs(K):
    if not isinstance(K, TangentConnectionField) or not K.is_linear:
        raise ContractError("Jacobi fields need a linear connection")
    if not K.tilde:
        raise ContractError("Jacobi fields need vanishing temporal components")


def _check_same_source(K, geo):
    if geo.source is K:
        return
    src = geo.source
    for t in np.linspace(geo.span[0], geo.span[1], 5):
        x, xd = geo(t)
        a = K.acceleration(x, xd)[1:]
        if isinstance(src, TangentConnectionField):
            b = src.acceleration(x, xd)[1:]
        else:
            b = src(x, xd[1:])
        if np.max(np.abs(a - b)) > 1e-8 * max(1.0, float(np.max(np.abs(b)))):
            raise ContractError("geodesic was not produced by this connection")


@dataclass
class JacobiTrajectory:
    """Jacobi field ``u`` and ``w = Du`` along a geodesic (full n+1 slots)."""

    n: int
    span: tuple
    solution: _Solution = field(repr=False)
    geodesic: GeodesicTrajectory = field(repr=False)

    def geodesic_at(self, t):
        y = self.solution(t)
        n = self.n
        q, v = y[:n], y[n : 2 * n]
        return np.concatenate(([t], q)), np.concatenate(([1.0], v))

    def __call__(self, t):
        """``(u, w)`` at scalar ``t``; temporal components are exactly 0."""
        y = self.solution(t)
        n = self.n
        u = np.concatenate(([0.0], y[2 * n : 3 * n]))
        w = np.concatenate(([0.0], y[3 * n : 4 * n]))
        return u, w

    def sample(self, num: int = 1001):
        ts = np.linspace(self.span[0], self.span[1], num)
        y = self.solution(ts)
        n = self.n
        zeros = np.zeros((1, ts.size))
        x = np.vstack([ts[None, :], y[:n]]).T
        xd = np.vstack([np.ones((1, ts.size)), y[n : 2 * n]]).T
        u = np.vstack([zeros, y[2 * n : 3 * n]]).T
        w = np.vstack([zeros, y[3 * n : 4 * n]]).T
        return ts, x, xd, u, w


def integrate_jacobi(K: TangentConnectionField, geo: GeodesicTrajectory, u0, w0, cfg: IntegratorConfig | None = None) -> JacobiTrajectory:
    """Jacobi field along ``geo`` with spatial initial data ``u(a) = u0``,
    ``Du(a) = w0``; the geodesic is re-integrated alongside the field."""
    _check_jacobi_inputs(K)
    _check_same_source(K, geo)
    cfg = cfg or geo.config
    n = K.n
    u0 = np.atleast_1d(np.asarray(u0, dtype=float))
    w0 = np.atleast_1d(np.asarray(w0, dtype=float))
    if u0.size != n or w0.size != n:
        raise ValueError(f"Jacobi initial data must have {n} components")
    a = geo.span[0]
    q0, v0 = geo.state(a)

    def rhs(t, y):
        q, v, u, w = y[:n], y[n : 2 * n], y[2 * n : 3 * n], y[3 * n :]
        acc, M, Rqq = _jacobi_terms(K, t, q, v)
        uf = np.concatenate(([0.0], u))
        wf = np.concatenate(([0.0], w))
        du = wf + M @ uf
        dw = Rqq @ uf + M @ wf
        return np.concatenate((v, acc[1:], du[1:], dw[1:]))

    sol = _solve(rhs, geo.span, np.concatenate((q0, v0, u0, w0)), cfg)
    return JacobiTrajectory(n, geo.span, sol, geo)


# ---------------------------------------------------------------------------
# conjugate points


class ConjugatePoint(NamedTuple):
    t: float
    degenerate: bool  # det U touches zero without changing sign


def _jacobi_matrix_solution(K, init, span, cfg):
    n = K.n
    q0, v0 = (np.atleast_1d(np.asarray(a, dtype=float)) for a in init)
    U0 = np.zeros((n, n))
    W0 = np.eye(n)

    def rhs(t, y):
        q, v = y[:n], y[n : 2 * n]
        U = y[2 * n : 2 * n + n * n].reshape(n, n)
        W = y[2 * n + n * n :].reshape(n, n)
        acc, M, Rqq = _jacobi_terms(K, t, q, v)
        Ms = M[1:, 1:]
        dU = W + Ms @ U
        dW = Rqq[1:, 1:] @ U + Ms @ W
        return np.concatenate((v, acc[1:], dU.ravel(), dW.ravel()))

    y0 = np.concatenate((q0, v0, U0.ravel(), W0.ravel()))
    return _solve(rhs, span, y0, cfg)


def scan_conjugate_points(K: TangentConnectionField, init, span, cfg: IntegratorConfig | None = None, refine: int = 8):
    """Zeros of ``det U(t)`` for the Jacobi matrix with ``U(a) = 0``, ``W(a) = I``.

    Sign changes are bracketed on the dense output and bisected; touching
    zeros are found by minimising ``|det U|`` near local minima and reported
    as degenerate when the minimum is below ``1e-12``.
    """
    _check_jacobi_inputs(K)
    cfg = cfg or IntegratorConfig()
    n = K.n
    sol = _jacobi_matrix_solution(K, init, span, cfg)
    a, b = float(span[0]), float(span[1])

    def det(t):
        y = sol(t)
        return float(np.linalg.det(y[2 * n : 2 * n + n * n].reshape(n, n)))

    steps = np.asarray(sol.t, dtype=float)
    grid = [steps[0]]
    for lo, hi in zip(steps[:-1], steps[1:]):
        grid.extend(np.linspace(lo, hi, refine + 1)[1:])
    grid = np.array(grid[1:])  # det U(a) = 0 trivially
    vals = np.array([det(t) for t in grid])
    found = []
    for k in range(len(grid) - 1):
        d0, d1 = vals[k], vals[k + 1]
        if d0 == 0.0:
            if k > 0:
                found.append(ConjugatePoint(float(grid[k]), bool(np.sign(vals[k - 1]) == np.sign(d1))))
            continue
        if np.sign(d0) != np.sign(d1) and d1 != 0.0:
            lo, hi = sorted((grid[k], grid[k + 1]))
            root = optimize.brentq(det, lo, hi, xtol=BISECT_XTOL * 1e-3, rtol=4 * np.finfo(float).eps)
            found.append(ConjugatePoint(float(root), False))
    absv = np.abs(vals)
    for k in range(1, len(grid) - 1):
        if absv[k] <= absv[k - 1] and absv[k] <= absv[k + 1] and np.sign(vals[k - 1]) == np.sign(vals[k + 1]) != 0:
            if np.sign(vals[k]) != np.sign(vals[k - 1]):
                continue
            lo, hi = sorted((grid[k - 1], grid[k + 1]))
            res = optimize.minimize_scalar(lambda t: abs(det(t)), bounds=(lo, hi), method="bounded", options={"xatol": BISECT_XTOL * 1e-3})
            if res.fun < DEGENERATE_DET:
                found.append(ConjugatePoint(float(res.x), True))
    found.sort(key=lambda c: c.t if b > a else -c.t)
    return found


def find_conjugate_points(K: TangentConnectionField, init, span, cfg: IntegratorConfig | None = None) -> list[float]:
    """Times conjugate to ``span[0]`` along the geodesic from ``init``."""
    return [c.t for c in scan_conjugate_points(K, init, span, cfg)]


# ---------------------------------------------------------------------------
# index form and sectional curvature


def index_form(
    K: TangentConnectionField,
    gbar: TangentMetric,
    geo: GeodesicTrajectory,
    u,
    interval=None,
    du: Callable | None = None,
    boundary: bool = True,
) -> float:
    """``int_a^b [gbar(Du, Du) + gbar(u, R(u, qdot) qdot)] dt`` plus the
    boundary terms ``gbar(Du, u)|_a - gbar(Du, u)|_b``.

    ``u`` is a JacobiTrajectory (``Du`` taken from it) or a callable returning
    the spatial (or full) field at ``t``; then ``Du = udot - M u`` with
    ``udot`` from ``du`` or central differences.  The value vanishes for Jacobi
    fields when the metric is parallel along the geodesic for spatial
    vectors, which holds for Newtonian systems.
    """
    _check_jacobi_inputs(K)
    n = K.n
    a, b = interval if interval is not None else geo.span

    if isinstance(u, JacobiTrajectory):
        jac = u

        def field_at(t):
            uf, wf = jac(t)
            return uf, wf

    else:

        def full(vec):
            vec = np.atleast_1d(np.asarray(vec, dtype=float))
            return vec if vec.size == n + 1 else np.concatenate(([0.0], vec))

        def field_at(t):
            uf = full(u(t))
            if du is not None:
                ud = full(du(t))
            else:
                h = auto_step(t)
                ud = (full(u(t + h)) - full(u(t - h))) / (2 * h)
            x, xd = geo(t)
            M = np.einsum("mab,m->ab", K.components_at(x), xd)
            return uf, ud - M @ uf

    def integrand(t):
        x, xd = geo(t)
        uf, wf = field_at(t)
        g = gbar(x)
        R = riemann(K.components_at(x), K.gradient_at(x))
        Ru = np.einsum("lmab,l,m,b->a", R, uf, xd, xd)
        return float(wf @ g @ wf + uf @ g @ Ru)

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(integrand, a, b, epsabs=1e-12, epsrel=1e-10, limit=500)
        except integrate.IntegrationWarning as exc:
            raise NumericError(f"index form quadrature did not converge: {exc}") from None
    if boundary:
        for t, sign in ((a, 1.0), (b, -1.0)):
            x, _ = geo(t)
            uf, wf = field_at(t)
            val += sign * float(wf @ gbar(x) @ uf)
    return val


def _vec(v):
    if isinstance(v, TangentVector):
        return v.dot
    return np.asarray(v, dtype=float)


def sectional_scalar(K: TangentConnectionField, gbar: TangentMetric, p, u, v) -> float:
    """``gbar(u, R(u, v) v) = gbar[a, s] R[l, m, s, b] u^l v^m v^b u^a``.

    For the oscillator with ``u = d_1``, ``v = d_0`` this is ``-k``.
    """
    K._need_linear()
    x = coords_of(p.base if isinstance(p, TangentVector) else p)
    uu, vv = _vec(u), _vec(v)
    R = riemann(K.components_at(x), K.gradient_at(x))
    return float(uu @ gbar(x) @ np.einsum("lmsb,l,m,b->s", R, uu, vv, vv))


def curvature_bounds(K: TangentConnectionField, gbar: TangentMetric, geo: GeodesicTrajectory, samples: int = 201):
    """Extremes along ``geo`` of ``gbar(u, R(u, qdot) qdot)`` over spatial
    ``gbar``-unit ``u``.

    Returns ``(lowest, highest)``.  A positive ``lowest`` predicts no conjugate
    points; a negative ``highest = -c`` bounds the spacing of consecutive
    conjugate points by ``pi / sqrt(c)``.
    """
    lowest, highest = np.inf, -np.inf
    for t in np.linspace(geo.span[0], geo.span[1], samples):
        x, xd = geo(t)
        R = riemann(K.components_at(x), K.gradient_at(x))
        g = gbar(x)[1:, 1:]
        Q = g @ np.einsum("lmab,m,b->al", R, xd, xd)[1:, 1:]
        Q = 0.5 * (Q + Q.T)
        L = np.linalg.cholesky(g)
        Li = np.linalg.inv(L)
        ev = np.linalg.eigvalsh(Li @ Q @ Li.T)
        lowest = min(lowest, float(ev[0]))
        highest = max(highest, float(ev[-1]))
    return lowest, highest


def conjugate_spacing_bound(highest: float) -> float | None:
    """``pi / sqrt(-highest)`` when the curvature scalar stays negative."""
    return math.pi / math.sqrt(-highest) if highest < 0 else None
