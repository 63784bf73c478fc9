"""Connections on the tangent bundle TQ -> Q.

Linear connections carry components ``K[lam, alpha, beta]`` (upper index
in the middle) and have geodesics ``qdd^alpha = K[lam, alpha, beta]
qdot^lam qdot^beta``.  General connections carry ``K^alpha_lam(q, qdot)`` and
have geodesics ``qdd^alpha = K^alpha_lam qdot^lam``.  A connection is *tilde*
when every temporal component ``K^0`` vanishes, so ``qdot^0 = 1`` is preserved.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core_tensor import FieldArray, FrameMap, ScalarField, as_field, auto_step, coords_of, lattice
from .dynamics import (
    DynamicConnectionField,
    DynamicEquationField,
    QuadraticCoefficients,
    ReferenceFrameField,
    xi_from_gamma,
)
from .errors import ContractError, FrameError

FLAT_TOL = 1e-8


class FrameConsistencyWarning(UserWarning):
    """Declared inverse map disagrees with the inverted forward Jacobian."""


class CallableArray:
    """Array-valued position field given by a host callable ``func(x)``."""

    symbolic = False
    velocity = False

    def __init__(self, n: int, shape, func: Callable[[np.ndarray], np.ndarray]):
        self.n = n
        self.shape = tuple(shape)
        self.func = func

    def __call__(self, x, v=None) -> np.ndarray:
        return np.asarray(self.func(np.asarray(coords_of(x), dtype=float)), dtype=float).reshape(self.shape)

    def position_gradient_at(self, x, v=None) -> np.ndarray:
        x = np.array(coords_of(x), dtype=float)
        out = np.empty((self.n + 1,) + self.shape)
        for s in range(self.n + 1):
            h = auto_step(x[s])
            xp, xm = x.copy(), x.copy()
            xp[s] += h
            xm[s] -= h
            out[s] = (self(xp) - self(xm)) / (2 * h)
        return out


class TangentConnectionField:
    """A LINEAR or GENERAL connection on TQ -> Q."""

    LINEAR = "linear"
    GENERAL = "general"

    def __init__(self, n: int, components=None, *, general=None, tilde: bool | None = None):
        if (components is None) == (general is None):
            raise ValueError("give exactly one of components (linear) / general")
        self.n = n
        if components is not None:
            self.kind = self.LINEAR
            if not isinstance(components, (FieldArray, CallableArray)):
                components = FieldArray(n, components)
            if components.shape != (n + 1,) * 3:
                raise ValueError(f"linear components need shape {(n + 1,) * 3}, got {components.shape}")
            if components.velocity:
                raise ValueError("linear connection components must not depend on velocities")
            self.components = components
            self.general = None
            if tilde is None:
                tilde = self._infer_tilde()
        else:
            self.kind = self.GENERAL
            self.components = None
            self.general = general
            if tilde is None:
                raise ValueError("declare tilde=True/False for a general connection")
        self.tilde = bool(tilde)

    def _infer_tilde(self) -> bool:
        c = self.components
        if isinstance(c, FieldArray) and c.symbolic:
            return all(c[l, 0, b].is_zero() for l in range(self.n + 1) for b in range(self.n + 1))
        rng = np.random.default_rng(3)
        for _ in range(4):
            if np.any(c(rng.uniform(-1, 1, self.n + 1))[:, 0, :] != 0.0):
                return False
        return True

    @property
    def is_linear(self) -> bool:
        return self.kind == self.LINEAR

    @classmethod
    def zero(cls, n):
        return cls(n, FieldArray.zeros(n, (n + 1,) * 3), tilde=True)

    def components_at(self, x) -> np.ndarray:
        self._need_linear()
        return self.components(x)

    def gradient_at(self, x) -> np.ndarray:
        """``[sigma, lam, alpha, beta]`` position partials of the components."""
        self._need_linear()
        return self.components.position_gradient_at(x)

    def coefficients(self, x, xdot) -> np.ndarray:
        """``[alpha, lam] = K^alpha_lam(x, xdot)``."""
        xdot = np.asarray(xdot, dtype=float)
        if self.is_linear:
            return np.einsum("lab,b->al", self.components(x), xdot)
        return np.asarray(self.general(np.asarray(coords_of(x), dtype=float), xdot), dtype=float)

    def acceleration(self, x, xdot) -> np.ndarray:
        """Geodesic acceleration ``K^alpha_lam qdot^lam`` (all n+1 slots)."""
        return self.coefficients(x, xdot) @ np.asarray(xdot, dtype=float)

    def is_symmetric_at(self, x, tol: float = 1e-12) -> bool:
        K = self.components_at(x)
        return bool(np.all(np.abs(K - np.swapaxes(K, 0, 2)) <= tol * np.maximum(1.0, np.abs(K))))

    def _need_linear(self):
        if not self.is_linear:
            raise ContractError("operation needs a linear connection")


@dataclass
class SolderingForm:
    """Deformation data ``s`` and ``h[i, lam]`` (position fields)."""

    n: int
    s: ScalarField
    h: FieldArray

    def __post_init__(self):
        self.s = as_field(self.n, self.s)
        if not isinstance(self.h, FieldArray):
            self.h = FieldArray(self.n, self.h)
        if self.h.shape != (self.n, self.n + 1):
            raise ValueError(f"h needs shape {(self.n, self.n + 1)}")
        if self.s.velocity or self.h.velocity:
            raise ValueError("soldering data must not depend on velocities")

    def components(self, x, xdot) -> np.ndarray:
        """``sigma[alpha, lam]``; the temporal row is zero."""
        n = self.n
        s = self.s(x)
        h = self.h(x)
        xdot = np.asarray(xdot, dtype=float)
        sig = np.zeros((n + 1, n + 1))
        sig[1:, 1:] = h[:, 1:] + (s - 1.0) * h[:, 1:] * xdot[0]
        sig[1:, 0] = -s * h[:, 1:] @ xdot[1:] - h[:, 0] * xdot[0] + h[:, 0]
        return sig


class CurvatureField:
    """``R[lam, mu, alpha, beta]`` of a linear connection."""

    def __init__(self, connection: TangentConnectionField):
        connection._need_linear()
        self.connection = connection
        self.n = connection.n

    def __call__(self, x) -> np.ndarray:
        return riemann(self.connection.components_at(x), self.connection.gradient_at(x))


def riemann(K: np.ndarray, dK: np.ndarray) -> np.ndarray:
    """Curvature from components ``K[l, a, b]`` and partials ``dK[s, l, a, b]``."""
    R = dK - np.swapaxes(dK, 0, 1)
    R += np.einsum("lgb,mag->lmab", K, K)
    R -= np.einsum("mgb,lag->lmab", K, K)
    return R


# ---------------------------------------------------------------------------
# constructions


def linear_from_quadratic(coeffs: QuadraticCoefficients) -> TangentConnectionField:
    """Symmetric linear tilde connection of a quadratic dynamic equation.

    ``K[0,i,0] = f^i``, ``K[0,i,j] = K[j,i,0] = b^i_j / 2``,
    ``K[j,i,k] = a^i_jk``; the temporal row is zero.
    """
    if isinstance(coeffs, DynamicEquationField):
        if coeffs.quadratic is None:
            raise ContractError("dynamic equation was not declared quadratic")
        coeffs = coeffs.quadratic
    n = coeffs.n
    K = np.full((n + 1,) * 3, 0.0, dtype=object)
    for i in range(n):
        K[0, i + 1, 0] = coeffs.f[i]
        for j in range(n):
            K[0, i + 1, j + 1] = 0.5 * coeffs.b[i, j]
            K[j + 1, i + 1, 0] = 0.5 * coeffs.b[i, j]
            for k in range(n):
                K[j + 1, i + 1, k + 1] = coeffs.a[i, j, k]
    return TangentConnectionField(n, FieldArray(n, K), tilde=True)


def xi_from_connection(K: TangentConnectionField, frame: ReferenceFrameField | None = None) -> DynamicEquationField:
    """Dynamic equation ``xi^i = (K^i_lam - Gamma^i K^0_lam) qdot^lam`` on
    the slice ``qdot^0 = 1, qdot^i = q_t^i``.

    For a tilde connection the frame drops out.
    """
    n = K.n
    if frame is None:
        frame = ReferenceFrameField.rest(n)
    if K.is_linear and isinstance(K.components, FieldArray):
        C = K.components
        Kt = np.empty((n + 1, n, n + 1), dtype=object)  # [lam, i, beta]
        for lam in range(n + 1):
            for i in range(n):
                for b in range(n + 1):
                    c = C[lam, i + 1, b]
                    if not K.tilde:
                        c = c - frame.gamma[i] * C[lam, 0, b]
                    Kt[lam, i, b] = c
        a = np.empty((n, n, n), dtype=object)
        bq = np.empty((n, n), dtype=object)
        f = np.empty((n,), dtype=object)
        for i in range(n):
            f[i] = Kt[0, i, 0]
            for j in range(n):
                bq[i, j] = Kt[0, i, j + 1] + Kt[j + 1, i, 0]
                for k in range(n):
                    p, q = Kt[j + 1, i, k + 1], Kt[k + 1, i, j + 1]
                    a[i, j, k] = p if (p.expr is not None and p.expr == q.expr) else 0.5 * (p + q)
        return DynamicEquationField(n, quadratic=QuadraticCoefficients(n, FieldArray(n, a), FieldArray(n, bq), FieldArray(n, f)))

    def xi_vec(x, v):
        xdot = np.concatenate(([1.0], v))
        coef = K.coefficients(x, xdot)  # [alpha, lam]
        proj = coef[1:] - np.outer(frame(x), coef[0]) if not K.tilde else coef[1:]
        return proj @ xdot

    fields = [ScalarField(n, func=_component(xi_vec, i)) for i in range(n)]
    return DynamicEquationField(n, fields)


def _component(vec_fn, i):
    def f(x, v):
        return vec_fn(x, v)[i]

    f.__name__ = f"xi{i + 1}"
    return f


def connection_from_gamma(gamma: DynamicConnectionField) -> TangentConnectionField:
    """Linear tilde connection of an affine dynamic connection,
    ``K[mu, i, lam] = gamma^i_{mu lam}``.

    Non-affine dynamic connections are refused: their extension off the
    jet slice exists but is not unique.
    """
    if gamma.affine is None:
        raise ContractError("only affine dynamic connections determine a unique linear connection")
    n = gamma.n
    K = np.full((n + 1,) * 3, 0.0, dtype=object)
    for i in range(n):
        for mu in range(n + 1):
            for lam in range(n + 1):
                K[mu, i + 1, lam] = gamma.affine[i, mu, lam]
    return TangentConnectionField(n, FieldArray(n, K), tilde=True)


def apply_soldering(K: TangentConnectionField, sigma: SolderingForm) -> TangentConnectionField:
    """General connection ``K + sigma``; its geodesics on ``qdot^0 = 1`` are
    those of ``K``."""
    if not K.tilde:
        raise ContractError("soldering deformation needs a tilde connection")

    def general(x, xdot):
        return K.coefficients(x, xdot) + sigma.components(x, xdot)

    return TangentConnectionField(K.n, general=general, tilde=True)


def transform_connection(K: TangentConnectionField, F: FrameMap) -> TangentConnectionField:
    """Components of ``K`` in the chart ``x' = F.forward(x)``.

    ``K'[lam, alpha, beta] = (J[alpha, g] K[mu, g, nu] + H[alpha, mu, nu])
    A[mu, lam] A[nu, beta]`` with ``J`` the forward Jacobian, ``H`` its
    Hessian (zero temporal row) and ``A`` the Jacobian of the declared inverse.
    """
    if F.n != K.n:
        raise ValueError("frame map and connection differ in dimension")
    n = K.n
    state = {"warned": False}

    def pieces(xp):
        q = F.apply_inverse(xp)
        A = F.inverse_jacobian(xp)
        J = F.jacobian(q)
        _check(A, xp)
        gap = float(np.max(np.abs(A @ J - np.eye(n + 1))))
        if gap > 1e-7 and not state["warned"]:
            state["warned"] = True
            warnings.warn(
                f"declared inverse disagrees with inverted forward Jacobian by {gap:.2e}",
                FrameConsistencyWarning,
                stacklevel=3,
            )
        H = np.zeros((n + 1,) * 3)
        H[1:] = F.hessian(q)
        return q, A, J, H

    if K.is_linear:

        def comps(xp):
            q, A, J, H = pieces(xp)
            inner = np.einsum("ag,mgn->amn", J, K.components_at(q)) + H
            return np.einsum("amn,ml,nb->lab", inner, A, A)

        return TangentConnectionField(n, CallableArray(n, (n + 1,) * 3, comps), tilde=K.tilde)

    def general(xp, xpdot):
        q, A, J, H = pieces(xp)
        qdot = A @ xpdot
        coef = K.coefficients(q, qdot)  # [gamma, mu]
        inner = J @ coef + np.einsum("amn,n->am", H, qdot)
        return inner @ A

    return TangentConnectionField(n, general=general, tilde=K.tilde)


def _check(A, x):
    S = A[1:, 1:]
    if not np.all(np.isfinite(S)) or np.linalg.cond(S) > 1e12:
        raise FrameError(f"singular inverse Jacobian at {tuple(x)}")


def curvature(K: TangentConnectionField) -> CurvatureField:
    """``R[l,m,a,b] = d_l K[m,a,b] - d_m K[l,a,b] + K[l,g,b] K[m,a,g] - K[m,g,b] K[l,a,g]``."""
    return CurvatureField(K)


def max_curvature(K: TangentConnectionField, points) -> float:
    R = curvature(K)
    return max(float(np.max(np.abs(R(x)))) for x in np.atleast_2d(points))


def is_flat(K: TangentConnectionField, region=None, tol: float = FLAT_TOL, points: int = 5) -> bool:
    """``max |R| < tol`` over a ``points**(n+1)`` lattice on ``region = (lo, hi)``."""
    n = K.n
    lo, hi = region if region is not None else (-1.0, 1.0)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (n + 1,))
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (n + 1,))
    return max_curvature(K, lattice(lo, hi, points)) < tol


def free_motion_equation(F: FrameMap):
    """Inertial-force equation and its affine dynamic connection in the chart
    ``q = F.forward(t, qbar)``, where ``qbar_tt = 0``.

    Returns ``(xi, gamma)``.  ``xi`` is assembled from the observer field
    ``Gamma^i = d_t q^i`` and the second derivatives of the inverse map;
    ``gamma`` carries the matching affine form.
    """
    n = F.n
    inv = F.inverse
    Gam = [f.partial("t").compose(inv) for f in F.forward]
    dGam = [[g.partial(f"q{k}") for k in range(1, n + 1)] for g in Gam]
    dtGam = [g.partial("t") for g in Gam]
    Jf = [[f.partial(f"q{m}").compose(inv) for m in range(1, n + 1)] for f in F.forward]
    Hinv = [[[g.partial(f"q{j}").partial(f"q{k}") for k in range(1, n + 1)] for j in range(1, n + 1)] for g in inv]
    C = np.empty((n, n, n), dtype=object)
    for i in range(n):
        for j in range(n):
            for k in range(n):
                acc = ScalarField.constant(n, 0.0)
                for m in range(n):
                    acc = _acc(acc, Jf[i][m], Hinv[m][j][k])
                C[i, j, k] = acc
    G = np.full((n, n + 1, n + 1), 0.0, dtype=object)
    for i in range(n):
        g00 = dtGam[i]
        for k in range(n):
            g00 = _acc(g00, Gam[k], -dGam[i][k])
            for j in range(n):
                g00 = _acc(g00, C[i, j, k], -(Gam[j] * Gam[k]))
        G[i, 0, 0] = g00
        for k in range(n):
            gk0 = dGam[i][k]
            g0k = dGam[i][k]
            for j in range(n):
                gk0 = _acc(gk0, C[i, j, k], Gam[j])
                g0k = _acc(g0k, C[i, k, j], Gam[j])
                G[i, k + 1, j + 1] = -C[i, j, k]
            G[i, k + 1, 0] = gk0
            G[i, 0, k + 1] = g0k
    gamma = DynamicConnectionField(n, affine=FieldArray(n, G))

    # inertial force: d_t Gamma + d_j Gamma (q_t - Gamma) - C (q_t - Gamma)(q_t - Gamma)
    rel = [ScalarField.variable(n, f"dq{j + 1}") - Gam[j] for j in range(n)]
    xi = []
    for i in range(n):
        acc = dtGam[i]
        for j in range(n):
            acc = _acc(acc, ScalarField.variable(n, f"dq{j + 1}"), dGam[i][j])
            acc = _acc(acc, dGam[i][j], rel[j])
            for k in range(n):
                acc = _acc(acc, -C[i, j, k], rel[j] * rel[k])
        xi.append(acc)
    quad = xi_from_gamma(gamma).quadratic
    return DynamicEquationField(n, xi, quadratic=quad), gamma


def _acc(acc: ScalarField, a: ScalarField, b: ScalarField) -> ScalarField:
    if a.is_zero() or b.is_zero():
        return acc
    return acc + a * b
