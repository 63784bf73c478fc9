"""Quadratic Lagrangians, their Christoffel symbols, and Newtonian systems."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core_tensor import DOWN, FieldArray, ScalarField, Tensor, as_field
from .dynamics import DynamicEquationField, QuadraticCoefficients, _symmetric_pairs, gamma_from_xi, split_jet
from .errors import ContractError, MetricError
from .tangent_connection import CallableArray, TangentConnectionField

COND_LIMIT = 1e12


@dataclass
class LagrangianCoefficients:
    """``L = 1/2 m_ij q_t^i q_t^j + k_i q_t^i + f`` with position fields."""

    n: int
    m: FieldArray
    k: FieldArray
    f: ScalarField

    def __post_init__(self):
        n = self.n
        if not isinstance(self.m, FieldArray):
            self.m = FieldArray(n, np.asarray(self.m, dtype=object))
        if not isinstance(self.k, FieldArray):
            self.k = FieldArray(n, np.asarray(self.k, dtype=object))
        self.f = as_field(n, self.f)
        if self.m.shape != (n, n) or self.k.shape != (n,):
            raise ValueError("mass metric must be n x n and k a length-n vector")
        if self.m.velocity or self.k.velocity or self.f.velocity:
            raise ContractError("Lagrangian coefficients must not depend on velocities")
        if not _symmetric_pairs(self.m, [((i, j), (j, i)) for i in range(n) for j in range(i + 1, n)]):
            raise MetricError("mass metric is not symmetric")

    @classmethod
    def parse(cls, n, m, k=None, f="0", constants=None):
        def p(s):
            return ScalarField.parse(s, n, constants)

        m = np.array([[p(s) for s in row] for row in m], dtype=object)
        k = np.array([p(s) for s in (k if k is not None else ["0"] * n)], dtype=object)
        return cls(n, FieldArray(n, m), FieldArray(n, k), p(f))

    def check_positive(self, points) -> float:
        """Smallest mass-metric eigenvalue over ``points``; MetricError if not positive."""
        lowest = np.inf
        for x in np.atleast_2d(points):
            lowest = min(lowest, float(np.linalg.eigvalsh(self.m(x))[0]))
        if not lowest > 0:
            raise MetricError(f"mass metric not positive definite (min eigenvalue {lowest:.3e})")
        return lowest


@dataclass
class TangentMetric:
    """Fibre metric ``g[alpha, mu]`` on TQ; ``frame`` tags frame-dependent metrics."""

    n: int
    g: FieldArray
    degenerate: bool = True
    frame: str | None = None

    def __call__(self, x) -> np.ndarray:
        return self.g(x)


def metric_from_lagrangian(L: LagrangianCoefficients) -> TangentMetric:
    """``g00 = 2f``, ``g0i = k_i``, ``gij = m_ij``."""
    n = L.n
    g = np.empty((n + 1, n + 1), dtype=object)
    g[0, 0] = 2.0 * L.f
    for i in range(n):
        g[0, i + 1] = g[i + 1, 0] = L.k[i]
        for j in range(n):
            g[i + 1, j + 1] = L.m[i, j]
    return TangentMetric(n, FieldArray(n, g), degenerate=True)


def extend_mass_metric(m, frame: str = "default", n: int | None = None) -> TangentMetric:
    """Riemannian metric ``diag(1, m)`` on Q, tied to the frame it was built in."""
    if isinstance(m, LagrangianCoefficients):
        m = m.m
    if not isinstance(m, FieldArray):
        arr = np.asarray(m, dtype=object)
        m = FieldArray(n or arr.shape[0], arr)
    n = m.n
    g = np.full((n + 1, n + 1), 0.0, dtype=object)
    g[0, 0] = 1.0
    for i in range(n):
        for j in range(n):
            g[i + 1, j + 1] = m[i, j]
    return TangentMetric(n, FieldArray(n, g), degenerate=False, frame=frame)


def christoffel(g: TangentMetric, p) -> Tensor:
    """All-lower symbols ``-1/2 (d_l g_mn + d_n g_ml - d_m g_ln)``, indexed ``[l, m, n]``."""
    dg = g.g.position_gradient_at(p)  # [sigma, a, b]
    chr_ = -0.5 * (dg + np.transpose(dg, (2, 1, 0)) - np.transpose(dg, (1, 0, 2)))
    return Tensor(chr_, (DOWN, DOWN, DOWN))


def _mass_inverse(m: np.ndarray, x) -> np.ndarray:
    if not np.all(np.isfinite(m)) or np.linalg.cond(m) > COND_LIMIT:
        raise MetricError(f"singular mass metric at {tuple(np.round(np.asarray(x, dtype=float), 12))}")
    return np.linalg.inv(m)


def lagrangian_connection(L: LagrangianCoefficients) -> TangentConnectionField:
    """Linear tilde connection ``K[l, i, n] = (m^-1)^{ik} chr[l, k, n]``."""
    n = L.n
    g = metric_from_lagrangian(L)

    def comps(x):
        minv = _mass_inverse(L.m(x), x)
        chr_ = christoffel(g, x).data
        K = np.zeros((n + 1,) * 3)
        K[:, 1:, :] = np.einsum("ik,lkn->lin", minv, chr_[:, 1:, :])
        return K

    return TangentConnectionField(n, CallableArray(n, (n + 1,) * 3, comps), tilde=True)


def lagrange_equation(L: LagrangianCoefficients) -> DynamicEquationField:
    """Lagrange equation ``q_tt^i = (m^-1)^{ik} chr[l, k, n] qdot^l qdot^n``
    with ``qdot^0 = 1``, evaluated pointwise from the metric.

    The result is declared quadratic; its coefficients are the blocks of the
    contraction ``C[i, l, n] = (m^-1)^{ik} chr[l, k, n]``.
    """
    n = L.n
    g = metric_from_lagrangian(L)
    memo = {}

    def blocks(x):
        key = tuple(np.asarray(x, dtype=float))
        if key not in memo:
            if len(memo) > 64:
                memo.clear()
            minv = _mass_inverse(L.m(x), x)
            chr_ = christoffel(g, x).data
            memo[key] = np.einsum("ik,lkn->iln", minv, chr_[:, 1:, :])
        return memo[key]

    def rhs(x, v):
        xdot = np.concatenate(([1.0], v))
        return np.einsum("iln,l,n->i", blocks(x), xdot, xdot)

    def coeff(select):
        def f(x, v):
            return select(blocks(x))

        return ScalarField(n, func=f, velocity=False)

    a = np.empty((n, n, n), dtype=object)
    b = np.empty((n, n), dtype=object)
    f = np.empty((n,), dtype=object)
    for i in range(n):
        f[i] = coeff(lambda C, i=i: C[i, 0, 0])
        for j in range(n):
            b[i, j] = coeff(lambda C, i=i, j=j: C[i, 0, j + 1] + C[i, j + 1, 0])
            for k in range(n):
                a[i, j, k] = coeff(lambda C, i=i, j=j, k=k: C[i, j + 1, k + 1])
    quad = QuadraticCoefficients(n, FieldArray(n, a), FieldArray(n, b), FieldArray(n, f))
    xi = [ScalarField(n, func=_pick(rhs, i)) for i in range(n)]
    return DynamicEquationField(n, xi, quadratic=quad)


def _pick(fn, i):
    def f(x, v):
        return fn(x, v)[i]

    f.__name__ = f"lagrange{i + 1}"
    return f


def compatibility_residual(xi: DynamicEquationField, m, probes) -> float:
    """Max over probes of ``|d_t m_ij + q_t^k d_k m_ij + m_ik gamma^k_j + m_jk gamma^k_i|``
    with ``gamma`` the symmetric dynamic connection of ``xi``.

    Zero certifies that ``(xi, m)`` is a Newtonian system.
    """
    if isinstance(m, LagrangianCoefficients):
        m = m.m
    if not isinstance(m, FieldArray):
        m = FieldArray(xi.n, np.asarray(m, dtype=object))
    if m.velocity:
        raise ContractError("only velocity-independent mass metrics are supported")
    n = xi.n
    gamma = gamma_from_xi(xi)
    worst = 0.0
    for row in np.atleast_2d(probes):
        x, v = split_jet(row, n)
        mm = m(x)
        dm = m.position_gradient_at(x)  # [sigma, i, j]
        along = dm[0] + np.einsum("k,kij->ij", v, dm[1:])
        g = gamma(x, v)[:, 1:]  # [k, j]
        mg = mm @ g
        worst = max(worst, float(np.max(np.abs(along + mg + mg.T))))
    return worst
