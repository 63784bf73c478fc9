"""Dynamic equations, dynamic connections and reference frames.

A dynamic equation is the force law ``q_tt^i = xi^i(t, q, q_t)``.  A dynamic
connection has coefficients ``gamma^i_lambda(t, q, q_t)`` with lambda = 0
the time slot; it produces the equation ``xi^i = gamma^i_0 + q_t^j gamma^i_j``
and every equation comes from exactly one *symmetric* connection.

Jet points are rows ``[t, q1..qn, dq1..dqn]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import scalar_expr as sx
from .core_tensor import FieldArray, ScalarField, as_field, lattice
from .errors import ContractError

SYMMETRY_TOL = 1e-9


def split_jet(row, n: int):
    row = np.asarray(row, dtype=float)
    return row[: n + 1], row[n + 1 : 2 * n + 1]


def jet_lattice(n: int, lo=-1.0, hi=1.0, points: int = 5) -> np.ndarray:
    """``points**(2n+1)`` jet points over a box (scalars broadcast)."""
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (2 * n + 1,))
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (2 * n + 1,))
    return lattice(lo, hi, points)


def random_jets(n: int, count: int, rng, scale: float = 1.0) -> np.ndarray:
    return rng.uniform(-scale, scale, size=(count, 2 * n + 1))


def _dq(n, j):
    return ScalarField.variable(n, f"dq{j}")


def _fields(n, shape, values):
    if isinstance(values, FieldArray):
        if values.shape != shape:
            raise ValueError(f"expected shape {shape}, got {values.shape}")
        return values
    arr = FieldArray(n, values)
    if arr.shape != shape:
        raise ValueError(f"expected shape {shape}, got {arr.shape}")
    return arr


# ---------------------------------------------------------------------------
# quadratic coefficients


@dataclass
class QuadraticCoefficients:
    """``xi^i = a^i_jk q_t^j q_t^k + b^i_j q_t^j + f^i`` with position-only
    coefficients (0-based arrays: ``a[i, j, k]``, ``b[i, j]``, ``f[i]``)."""

    n: int
    a: FieldArray
    b: FieldArray
    f: FieldArray

    def __post_init__(self):
        n = self.n
        self.a = _fields(n, (n, n, n), self.a)
        self.b = _fields(n, (n, n), self.b)
        self.f = _fields(n, (n,), self.f)
        for arr in (self.a, self.b, self.f):
            if arr.velocity:
                raise ValueError("quadratic coefficients must not depend on velocities")
        if not _symmetric_pairs(self.a, [((i, j, k), (i, k, j)) for i in range(n) for j in range(n) for k in range(j + 1, n)]):
            raise ValueError("a^i_jk must be symmetric in j, k")

    @classmethod
    def zeros(cls, n):
        return cls(n, FieldArray.zeros(n, (n, n, n)), FieldArray.zeros(n, (n, n)), FieldArray.zeros(n, (n,)))

    @classmethod
    def from_arrays(cls, n, a=None, b=None, f=None):
        """Build from numeric or string nested arrays; missing parts are zero."""
        a = np.zeros((n, n, n), dtype=object) if a is None else np.asarray(a, dtype=object)
        b = np.zeros((n, n), dtype=object) if b is None else np.asarray(b, dtype=object)
        f = np.zeros((n,), dtype=object) if f is None else np.asarray(f, dtype=object)
        return cls(n, FieldArray(n, a), FieldArray(n, b), FieldArray(n, f))

    def xi_fields(self) -> list[ScalarField]:
        n = self.n
        out = []
        for i in range(n):
            acc = self.f[i]
            for j in range(n):
                acc = acc + self.b[i, j] * _dq(n, j + 1)
                for k in range(n):
                    acc = acc + self.a[i, j, k] * _dq(n, j + 1) * _dq(n, k + 1)
            out.append(acc)
        return out

    def evaluate(self, x, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        return np.einsum("ijk,j,k->i", self.a(x), v, v) + self.b(x) @ v + self.f(x)


def _probe_points(n, count=8, seed=7):
    rng = np.random.default_rng(seed)
    return rng.uniform(-1.0, 1.0, size=(count, n + 1))


def _symmetric_pairs(arr: FieldArray, pairs) -> bool:
    """Symmetry of position-only fields: structural equality, else probing."""
    pending = []
    for p, q in pairs:
        fp, fq = arr[p], arr[q]
        if fp.expr is not None and fq.expr is not None and fp.expr == fq.expr:
            continue
        pending.append((p, q))
    if not pending:
        return True
    for x in _probe_points(arr.n):
        try:
            vals = arr(x)
        except Exception:
            continue
        for p, q in pending:
            if abs(vals[p] - vals[q]) > SYMMETRY_TOL * max(1.0, abs(vals[p])):
                return False
    return True


# ---------------------------------------------------------------------------
# dynamic equations


class DynamicEquationField:
    """A second order dynamic equation ``q_tt = xi(t, q, q_t)``.

    Either general (``xi`` fields) or quadratic (``quadratic`` coefficients,
    from which the general form is derived).  Quadraticity is declared by the
    caller, never inferred.
    """

    def __init__(self, n: int, xi=None, *, quadratic: QuadraticCoefficients | None = None, conservative: bool = False):
        if xi is None and quadratic is None:
            raise ValueError("need xi fields or quadratic coefficients")
        self.n = n
        self.quadratic = quadratic
        if xi is None:
            xi = quadratic.xi_fields()
        self.xi = _fields(n, (n,), [as_field(n, f) for f in xi] if not isinstance(xi, FieldArray) else xi)
        self.conservative = conservative

    @classmethod
    def parse(cls, texts: Sequence[str], n: int, constants=None):
        return cls(n, [ScalarField.parse(s, n, constants) for s in texts])

    @classmethod
    def from_quadratic(cls, n, a=None, b=None, f=None):
        return cls(n, quadratic=QuadraticCoefficients.from_arrays(n, a, b, f))

    @property
    def symbolic(self) -> bool:
        return self.xi.symbolic

    def __call__(self, x, v) -> np.ndarray:
        return self.xi(x, v)

    def velocity_jacobian(self, x, v) -> np.ndarray:
        """``[i, j] = d xi^i / d q_t^j``."""
        return np.stack([self.xi.partial(f"dq{j}")(x, v) for j in range(1, self.n + 1)], axis=-1)

    def quadratic_residual(self, probes) -> float:
        """Max gap between the closed quadratic form and the general evaluator."""
        if self.quadratic is None:
            return 0.0
        worst = 0.0
        for row in probes:
            x, v = split_jet(row, self.n)
            worst = max(worst, float(np.max(np.abs(self.quadratic.evaluate(x, v) - self(x, v)))))
        return worst


class ReferenceFrameField:
    """A reference frame: the velocity field ``d_t + Gamma^i d_i`` of an observer."""

    def __init__(self, n: int, gamma):
        self.n = n
        self.gamma = _fields(n, (n,), [as_field(n, g) for g in gamma] if not isinstance(gamma, FieldArray) else gamma)
        if self.gamma.velocity:
            raise ValueError("a reference frame must not depend on velocities")

    @classmethod
    def parse(cls, texts, n, constants=None):
        return cls(n, [ScalarField.parse(s, n, constants) for s in texts])

    @classmethod
    def rest(cls, n):
        return cls(n, FieldArray.zeros(n, (n,)))

    def __call__(self, x) -> np.ndarray:
        return self.gamma(x)


def covariant_differential(frame: ReferenceFrameField, x, v) -> np.ndarray:
    """Velocity relative to the observer, ``q_t^i - Gamma^i``."""
    return np.asarray(v, dtype=float) - frame(x)


# ---------------------------------------------------------------------------
# dynamic connections


class DynamicConnectionField:
    """Coefficients ``gamma[i, lam]`` (i spatial, 0-based; lam = 0 is time).

    The affine form ``affine[i, lam, mu]`` gives
    ``gamma^i_lam = affine[i, lam, 0] + affine[i, lam, j] q_t^j``.
    """

    def __init__(self, n: int, gamma=None, *, affine=None):
        if gamma is None and affine is None:
            raise ValueError("need gamma fields or an affine form")
        self.n = n
        self.affine = None if affine is None else _fields(n, (n, n + 1, n + 1), affine)
        if self.affine is not None and self.affine.velocity:
            raise ValueError("affine coefficients must not depend on velocities")
        if gamma is None:
            g = np.empty((n, n + 1), dtype=object)
            for i in range(n):
                for lam in range(n + 1):
                    acc = self.affine[i, lam, 0]
                    for j in range(1, n + 1):
                        acc = acc + self.affine[i, lam, j] * _dq(n, j)
                    g[i, lam] = acc
            gamma = FieldArray(n, g)
        self.gamma = _fields(n, (n, n + 1), gamma)

    @property
    def is_affine(self) -> bool:
        return self.affine is not None

    def __call__(self, x, v) -> np.ndarray:
        return self.gamma(x, v)

    def velocity_jacobian(self, x, v) -> np.ndarray:
        """``[i, lam, j] = d gamma^i_lam / d q_t^j``."""
        return np.stack([self.gamma.partial(f"dq{j}")(x, v) for j in range(1, self.n + 1)], axis=-1)


def gamma_from_xi(xi: DynamicEquationField) -> DynamicConnectionField:
    """The symmetric dynamic connection of a dynamic equation.

    ``gamma^i_j = 1/2 d xi^i / d q_t^j`` and
    ``gamma^i_0 = xi^i - 1/2 q_t^j d xi^i / d q_t^j``.
    """
    n = xi.n
    if xi.quadratic is not None:
        # exact affine form; avoids differentiating host-callable coefficients
        q = xi.quadratic
        affine = np.empty((n, n + 1, n + 1), dtype=object)
        for i in range(n):
            affine[i, 0, 0] = q.f[i]
            for j in range(n):
                affine[i, 0, j + 1] = 0.5 * q.b[i, j]
                affine[i, j + 1, 0] = 0.5 * q.b[i, j]
                for k in range(n):
                    affine[i, j + 1, k + 1] = q.a[i, j, k]
        return DynamicConnectionField(n, affine=FieldArray(n, affine))
    g = np.empty((n, n + 1), dtype=object)
    for i in range(n):
        f = xi.xi[i]
        half = [0.5 * f.partial(f"dq{j}") for j in range(1, n + 1)]
        acc = f
        for j in range(n):
            g[i, j + 1] = half[j]
            acc = acc - _dq(n, j + 1) * half[j]
        g[i, 0] = acc
    return DynamicConnectionField(n, FieldArray(n, g))


def xi_from_gamma(gamma: DynamicConnectionField) -> DynamicEquationField:
    """The dynamic equation ``xi^i = gamma^i_0 + q_t^j gamma^i_j``."""
    n = gamma.n
    quad = None
    if gamma.affine is not None:
        G = gamma.affine
        a = np.empty((n, n, n), dtype=object)
        b = np.empty((n, n), dtype=object)
        f = np.empty((n,), dtype=object)
        for i in range(n):
            f[i] = G[i, 0, 0]
            for j in range(n):
                b[i, j] = G[i, 0, j + 1] + G[i, j + 1, 0]
                for k in range(n):
                    a[i, j, k] = _half_sum(G[i, j + 1, k + 1], G[i, k + 1, j + 1])
        quad = QuadraticCoefficients(n, FieldArray(n, a), FieldArray(n, b), FieldArray(n, f))
        return DynamicEquationField(n, quadratic=quad)
    xi = []
    for i in range(n):
        acc = gamma.gamma[i, 0]
        for j in range(1, n + 1):
            acc = acc + _dq(n, j) * gamma.gamma[i, j]
        xi.append(acc)
    return DynamicEquationField(n, xi)


def _half_sum(p: ScalarField, q: ScalarField) -> ScalarField:
    if p.expr is not None and p.expr == q.expr:
        return p
    return 0.5 * (p + q)


def is_symmetric(gamma: DynamicConnectionField, probes=None, tol: float = SYMMETRY_TOL) -> bool:
    """Symmetry of a dynamic connection at the given jet points.

    Affine connections compare ``affine[i, lam, mu]`` against
    ``affine[i, mu, lam]``.  General ones test the defining identity
    ``gamma^k_i = d_i gamma^k_0 + q_t^j d_i gamma^k_j`` (velocity partials),
    which carries the relation ``d_j gamma^k_i = d_i gamma^k_j``.
    """
    n = gamma.n
    if probes is None:
        probes = jet_lattice(n)
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    if gamma.affine is not None:
        for row in probes:
            x, _ = split_jet(row, n)
            G = gamma.affine(x)
            if np.any(np.abs(G - np.swapaxes(G, 1, 2)) > tol * np.maximum(1.0, np.abs(G))):
                return False
        return True
    for row in probes:
        x, v = split_jet(row, n)
        g = gamma(x, v)
        dg = gamma.velocity_jacobian(x, v)  # [k, lam, i]
        rhs = dg[:, 0, :] + np.einsum("j,kji->ki", v, dg[:, 1:, :])
        if np.any(np.abs(g[:, 1:] - rhs) > tol * np.maximum(1.0, np.abs(rhs))):
            return False
        rel = dg[:, 1:, :]
        if np.any(np.abs(rel - np.swapaxes(rel, 1, 2)) > tol * np.maximum(1.0, np.abs(rel))):
            return False
    return True


def lift_conservative(fields, n: int | None = None) -> DynamicEquationField:
    """Treat an autonomous second order equation on the fibre as a dynamic
    equation on ``R x M``; time dependence is rejected."""
    fields = list(fields)
    if n is None:
        n = fields[0].n if isinstance(fields[0], ScalarField) else len(fields)
    fields = [as_field(n, f) for f in fields]
    for f in fields:
        if f.expr is not None:
            if "t" in sx.free_vars(f.expr):
                raise ContractError(f"conservative equation depends on t: {f!r}")
        else:
            rng = np.random.default_rng(0)
            for _ in range(4):
                row = rng.uniform(-1, 1, 2 * n + 1)
                x, v = split_jet(row, n)
                y = x.copy()
                y[0] += 1.0
                if abs(f(x, v) - f(y, v)) > 1e-12 * max(1.0, abs(f(x, v))):
                    raise ContractError("conservative equation depends on t")
    return DynamicEquationField(n, fields, conservative=True)
