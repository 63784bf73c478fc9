"""Chart points, scalar fields, small tensors with variance tags, frame maps.

Index 0 is always time; spatial indices run 1..n.  Every component array is
sized ``n+1`` per slot even when its temporal row is identically zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import scalar_expr as sx
from .errors import EvaluationError, FrameError, VarianceError

EPS = np.finfo(float).eps
MAX_DIM = 16


def auto_step(x: float) -> float:
    return np.cbrt(EPS) * max(1.0, abs(x))


# ---------------------------------------------------------------------------
# points


@dataclass(frozen=True)
class ChartPoint:
    """Coordinates ``(t, q1..qn)``."""

    coords: np.ndarray

    def __post_init__(self):
        c = np.array(self.coords, dtype=float)
        if c.ndim != 1 or c.size < 2 or c.size > MAX_DIM + 1:
            raise ValueError(f"a chart point needs 2..{MAX_DIM + 1} coordinates, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError(f"non-finite chart point {c}")
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)

    @property
    def n(self) -> int:
        return self.coords.size - 1

    @property
    def t(self) -> float:
        return float(self.coords[0])

    @property
    def q(self) -> np.ndarray:
        return self.coords[1:]


@dataclass(frozen=True)
class TangentVector:
    base: ChartPoint
    dot: np.ndarray

    def __post_init__(self):
        d = np.array(self.dot, dtype=float)
        if d.shape != self.base.coords.shape:
            raise ValueError("tangent vector and base point differ in dimension")
        if not np.all(np.isfinite(d)):
            raise ValueError(f"non-finite tangent vector {d}")
        d.setflags(write=False)
        object.__setattr__(self, "dot", d)


def coords_of(p) -> np.ndarray:
    return p.coords if isinstance(p, ChartPoint) else np.asarray(p, dtype=float)


# ---------------------------------------------------------------------------
# scalar fields


class ScalarField:
    """A scalar function of ``(t, q1..qn)`` and optionally ``(dq1..dqn)``.

    Backed either by an expression tree (exact derivatives) or by a host
    callable ``func(x, v)`` with ``x = [t, q1..qn]`` and ``v = [dq1..dqn]``
    (central-difference derivatives).
    """

    __slots__ = ("n", "expr", "func", "velocity", "step", "_compiled")

    def __init__(self, n: int, expr=None, func=None, *, velocity=None, step=None):
        if (expr is None) == (func is None):
            raise ValueError("give exactly one of expr / func")
        self.n = n
        self.expr = expr
        self.func = func
        self.step = step
        self._compiled = None
        if expr is not None:
            sx.check_dimension(expr, n)
            self.velocity = sx.mentions_velocity(expr)
        else:
            self.velocity = True if velocity is None else bool(velocity)

    # construction -----------------------------------------------------
    @classmethod
    def parse(cls, text, n, constants=None):
        return cls(n, sx.parse(text, n, constants))

    @classmethod
    def constant(cls, n, value):
        return cls(n, sx.Const(float(value)))

    @classmethod
    def variable(cls, n, name):
        return cls(n, sx.Var(name))

    @property
    def symbolic(self) -> bool:
        return self.expr is not None

    def is_zero(self) -> bool:
        return self.expr is not None and isinstance(self.expr, sx.Const) and self.expr.value == 0.0

    def depends_on(self, name: str) -> bool:
        if self.expr is not None:
            return name in sx.free_vars(self.expr)
        if name.startswith("dq"):
            return self.velocity
        return True

    def __repr__(self):
        if self.expr is not None:
            return f"ScalarField({sx.to_string(self.expr)!r})"
        return f"ScalarField(<callable {getattr(self.func, '__name__', '?')}>)"

    # evaluation -------------------------------------------------------
    def __call__(self, x, v=None) -> float:
        x = coords_of(x)
        xs = [float(c) for c in x]
        vs = [0.0] * self.n if v is None else [float(c) for c in v]
        try:
            if self.expr is not None:
                if self._compiled is None:
                    self._compiled = sx.compile_exprs([self.expr])
                val = self._compiled(xs, vs)[0]
            else:
                val = float(self.func(np.array(xs), np.array(vs)))
        except (ValueError, ZeroDivisionError, OverflowError) as exc:
            raise EvaluationError(f"{type(exc).__name__}: {exc}", _point(xs, vs)) from None
        if not math.isfinite(val):
            raise EvaluationError("non-finite field value", _point(xs, vs))
        return val

    # calculus ---------------------------------------------------------
    def partial(self, name: str) -> "ScalarField":
        """Partial derivative with respect to ``t``, ``qi`` or ``dqi``."""
        kind, idx = sx.split_var(name)
        if self.expr is not None:
            return ScalarField(self.n, sx.differentiate(self.expr, name))
        if kind == "dq" and not self.velocity:
            return ScalarField.constant(self.n, 0.0)
        base = self

        def d(x, v):
            if kind == "q":
                return _central(lambda s: base._shift(x, v, idx, None, s), x[idx], base.step)
            return _central(lambda s: base._shift(x, v, None, idx - 1, s), v[idx - 1], base.step)

        d.__name__ = f"d_{name}"
        return ScalarField(self.n, func=d, velocity=self.velocity, step=self.step)

    def _shift(self, x, v, xi, vi, s):
        x = np.array(x, dtype=float)
        v = np.array(v, dtype=float)
        if xi is not None:
            x[xi] += s
        else:
            v[vi] += s
        return self(x, v)

    # algebra ------------------------------------------------------------
    def _combine(self, other, op, build):
        if not isinstance(other, ScalarField):
            other = ScalarField.constant(self.n, other)
        if self.expr is not None and other.expr is not None:
            return ScalarField(self.n, build(self.expr, other.expr))
        a, b = self, other

        def f(x, v):
            return op(a(x, v), b(x, v))

        return ScalarField(self.n, func=f, velocity=a.velocity or b.velocity, step=self.step or other.step)

    def __add__(self, other):
        return self._combine(other, lambda a, b: a + b, sx.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, lambda a, b: a - b, sx.sub)

    def __rsub__(self, other):
        return ScalarField.constant(self.n, other) - self

    def __mul__(self, other):
        return self._combine(other, lambda a, b: a * b, sx.mul)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._combine(other, lambda a, b: a / b, sx.div)

    def __neg__(self):
        return self * -1.0 if self.expr is None else ScalarField(self.n, sx.neg(self.expr))

    def compose(self, spatial: Sequence["ScalarField"]) -> "ScalarField":
        """Substitute ``qi -> spatial[i-1]`` (time and velocities untouched)."""
        if self.expr is not None and all(s.expr is not None for s in spatial):
            mapping = {f"q{i + 1}": s.expr for i, s in enumerate(spatial)}
            return ScalarField(self.n, sx.substitute(self.expr, mapping))
        outer, inner = self, list(spatial)

        def f(x, v):
            y = np.array([x[0]] + [s(x, v) for s in inner])
            return outer(y, v)

        return ScalarField(
            self.n, func=f, velocity=self.velocity or any(s.velocity for s in inner), step=self.step
        )


def _point(xs, vs):
    return {"x": tuple(xs), "v": tuple(vs)}


def _central(g: Callable[[float], float], at: float, h=None) -> float:
    h = auto_step(at) if h is None else h
    return (g(h) - g(-h)) / (2.0 * h)


def as_field(n: int, value) -> ScalarField:
    if isinstance(value, ScalarField):
        return value
    if isinstance(value, (int, float)):
        return ScalarField.constant(n, value)
    if isinstance(value, str):
        return ScalarField.parse(value, n)
    if callable(value):
        return ScalarField(n, func=value)
    return ScalarField(n, value)


def fd_partial(f: ScalarField, p, index: int, h: float | None = None, v=None) -> float:
    """Central-difference estimate of the position partial ``d f / d x^index``.

    The default step follows the cube-root rule ``cbrt(eps) * max(1, |x|)``.
    """
    x = np.array(coords_of(p), dtype=float)
    if h is None:
        h = f.step if isinstance(f, ScalarField) and f.step else auto_step(x[index])

    def at(s):
        y = x.copy()
        y[index] += s
        val = f(y, v) if isinstance(f, ScalarField) else f(y)
        if not math.isfinite(val):
            raise EvaluationError("non-finite value during differencing", tuple(y))
        return val

    return (at(h) - at(-h)) / (2.0 * h)


class FieldArray:
    """A dense array of ScalarFields evaluated together.

    When every entry is expression-backed the whole array is compiled into a
    single function.
    """

    def __init__(self, n: int, fields):
        self.n = n
        arr = np.empty(np.shape(fields), dtype=object) if not isinstance(fields, np.ndarray) else None
        if arr is not None:
            for idx in np.ndindex(arr.shape):
                arr[idx] = as_field(n, _index(fields, idx))
        else:
            arr = np.empty(fields.shape, dtype=object)
            for idx in np.ndindex(fields.shape):
                arr[idx] = as_field(n, fields[idx])
        self.fields = arr
        self.shape = arr.shape
        self.symbolic = all(f.expr is not None for f in arr.flat)
        self.velocity = any(f.velocity for f in arr.flat)
        self._compiled = None
        self._partials = {}

    @classmethod
    def zeros(cls, n, shape):
        return cls(n, np.full(shape, 0.0, dtype=object))

    def __getitem__(self, idx):
        return self.fields[idx]

    def __call__(self, x, v=None) -> np.ndarray:
        x = coords_of(x)
        xs = [float(c) for c in x]
        vs = [0.0] * self.n if v is None else [float(c) for c in v]
        if self.symbolic:
            if self._compiled is None:
                self._compiled = sx.compile_exprs([f.expr for f in self.fields.flat])
            try:
                vals = self._compiled(xs, vs)
            except (ValueError, ZeroDivisionError, OverflowError) as exc:
                raise EvaluationError(f"{type(exc).__name__}: {exc}", _point(xs, vs)) from None
            out = np.array(vals, dtype=float).reshape(self.shape)
            if not np.all(np.isfinite(out)):
                raise EvaluationError("non-finite field value", _point(xs, vs))
            return out
        out = np.empty(self.shape)
        for idx in np.ndindex(self.shape):
            out[idx] = self.fields[idx](xs, vs)
        return out

    def partial(self, name: str) -> "FieldArray":
        if name not in self._partials:
            p = np.empty(self.shape, dtype=object)
            for idx in np.ndindex(self.shape):
                p[idx] = self.fields[idx].partial(name)
            self._partials[name] = FieldArray(self.n, p)
        return self._partials[name]

    def gradient(self) -> "FieldArray":
        """Position gradient with the derivative index first: ``[sigma, ...]``."""
        if "grad" not in self._partials:
            parts = [self.partial(sx.var_name("q", s)).fields for s in range(self.n + 1)]
            self._partials["grad"] = FieldArray(self.n, np.stack(parts))
        return self._partials["grad"]

    def position_gradient_at(self, x, v=None) -> np.ndarray:
        """``[sigma, ...]`` array of position partials at ``x``.

        Symbolic arrays differentiate exactly; callable-backed ones difference
        the whole array at once.
        """
        if self.symbolic:
            return self.gradient()(x, v)
        x = np.array(coords_of(x), dtype=float)
        out = np.empty((self.n + 1,) + self.shape)
        for s in range(self.n + 1):
            h = auto_step(x[s])
            xp, xm = x.copy(), x.copy()
            xp[s] += h
            xm[s] -= h
            out[s] = (self(xp, v) - self(xm, v)) / (2 * h)
        return out

    def map(self, fn) -> "FieldArray":
        out = np.empty(self.shape, dtype=object)
        for idx in np.ndindex(self.shape):
            out[idx] = fn(self.fields[idx])
        return FieldArray(self.n, out)


def _index(nested, idx):
    for i in idx:
        nested = nested[i]
    return nested


# ---------------------------------------------------------------------------
# tensors


UP, DOWN = "up", "down"


@dataclass(frozen=True)
class Tensor:
    """Dense component array with a variance tag per slot."""

    data: np.ndarray
    variance: tuple

    def __post_init__(self):
        d = np.array(self.data, dtype=float)
        var = tuple(self.variance)
        if d.ndim != len(var):
            raise ValueError(f"rank {d.ndim} array with {len(var)} variance tags")
        if any(v not in (UP, DOWN) for v in var):
            raise ValueError(f"variance tags must be 'up' or 'down', got {var}")
        if d.ndim and len(set(d.shape)) != 1:
            raise ValueError(f"tensor slots must share one dimension, got shape {d.shape}")
        d.setflags(write=False)
        object.__setattr__(self, "data", d)
        object.__setattr__(self, "variance", var)

    @property
    def rank(self) -> int:
        return self.data.ndim


def contract(a: Tensor, b: Tensor, slots: tuple[int, int]) -> Tensor:
    """Contract slot ``slots[0]`` of ``a`` against slot ``slots[1]`` of ``b``.

    The two slots must have opposite variance.  Remaining slots keep their
    order: those of ``a`` first, then those of ``b``.
    """
    i, j = slots
    if a.variance[i] == b.variance[j]:
        raise VarianceError(
            f"cannot contract two {a.variance[i]} slots (a[{i}], b[{j}])"
        )
    if a.data.shape[i] != b.data.shape[j]:
        raise ValueError("contracted slots differ in dimension")
    data = np.tensordot(a.data, b.data, axes=([i], [j]))
    var = a.variance[:i] + a.variance[i + 1 :] + b.variance[:j] + b.variance[j + 1 :]
    return Tensor(data, var)


# ---------------------------------------------------------------------------
# frame maps


@dataclass
class FrameMap:
    """Time-preserving change of bundle coordinates ``q' = forward(t, q)``.

    ``inverse`` expresses ``q`` through ``(t, q')``; both are lists of n
    velocity-independent ScalarFields.
    """

    forward: list
    inverse: list
    n: int = field(init=False)

    def __post_init__(self):
        self.n = len(self.forward)
        if len(self.inverse) != self.n or self.n < 1:
            raise FrameError("forward and inverse maps must both have n >= 1 components")
        self.forward = [as_field(self.n, f) for f in self.forward]
        self.inverse = [as_field(self.n, f) for f in self.inverse]
        if any(f.velocity for f in self.forward + self.inverse):
            raise FrameError("frame maps must not depend on velocities")
        self._fwd = FieldArray(self.n, np.array(self.forward, dtype=object))
        self._inv = FieldArray(self.n, np.array(self.inverse, dtype=object))

    @classmethod
    def parse(cls, forward, inverse, n, constants=None):
        return cls(
            [ScalarField.parse(s, n, constants) for s in forward],
            [ScalarField.parse(s, n, constants) for s in inverse],
        )

    @classmethod
    def identity(cls, n):
        ids = [ScalarField.variable(n, f"q{i}") for i in range(1, n + 1)]
        return cls(ids, list(ids))

    def inverted(self) -> "FrameMap":
        return FrameMap(list(self.inverse), list(self.forward))

    @staticmethod
    def _apply(arr, x):
        x = coords_of(x)
        return np.concatenate(([x[0]], arr(x)))

    def apply(self, x) -> np.ndarray:
        return self._apply(self._fwd, x)

    def apply_inverse(self, x) -> np.ndarray:
        return self._apply(self._inv, x)

    @staticmethod
    def _jac(arr, x):
        n = arr.n
        g = arr.position_gradient_at(x)  # [mu, i]
        J = np.zeros((n + 1, n + 1))
        J[0, 0] = 1.0
        J[1:, :] = g.T
        return J

    def jacobian(self, x) -> np.ndarray:
        """``J[alpha, mu] = d x'^alpha / d x^mu`` including the time row."""
        return self._jac(self._fwd, x)

    def inverse_jacobian(self, xp) -> np.ndarray:
        return self._jac(self._inv, xp)

    @staticmethod
    def _hess(arr, x):
        if arr.symbolic:
            return np.moveaxis(arr.gradient().gradient()(x), -1, 0)  # [i, mu, nu]
        g = arr.gradient()
        return np.moveaxis(g.position_gradient_at(x), -1, 0)

    def hessian(self, x) -> np.ndarray:
        """``H[i, mu, nu] = d^2 x'^i / d x^mu d x^nu`` (spatial i, 0-based)."""
        H = self._hess(self._fwd, x)
        return 0.5 * (H + np.swapaxes(H, 1, 2))

    def inverse_hessian(self, xp) -> np.ndarray:
        H = self._hess(self._inv, xp)
        return 0.5 * (H + np.swapaxes(H, 1, 2))

    def check_inverse(self, points, tol: float = 1e-9) -> float:
        """Max round-trip error over ``points``; raises FrameError above ``tol``
        or where the spatial Jacobian is singular."""
        worst = 0.0
        for p in points:
            x = np.asarray(coords_of(p), dtype=float)
            _check_jacobian(self.jacobian(x), x)
            back = self.apply_inverse(self.apply(x))
            worst = max(worst, float(np.max(np.abs(back - x))))
        if worst > tol:
            raise FrameError(f"forward/inverse round trip error {worst:.3e} exceeds {tol:g}")
        return worst


def _check_jacobian(J, x):
    S = J[1:, 1:]
    if not np.all(np.isfinite(S)) or np.linalg.cond(S) > 1e12:
        raise FrameError(f"singular spatial Jacobian at {tuple(np.round(x, 12))}")


def rotation_frame(omega: float) -> FrameMap:
    """``q = R(omega t) qbar`` in the plane; forward maps qbar to q."""
    n = 2
    w = repr(float(omega))
    fwd = [f"cos({w}*t)*q1 - sin({w}*t)*q2", f"sin({w}*t)*q1 + cos({w}*t)*q2"]
    inv = [f"cos({w}*t)*q1 + sin({w}*t)*q2", f"-sin({w}*t)*q1 + cos({w}*t)*q2"]
    return FrameMap.parse(fwd, inv, n)


def boost_frame(velocity, n: int | None = None) -> FrameMap:
    """Uniform boost ``q = qbar + velocity * t``."""
    vel = np.atleast_1d(np.asarray(velocity, dtype=float))
    n = vel.size if n is None else n
    fwd = [f"q{i + 1} + ({float(vel[i])!r})*t" for i in range(n)]
    inv = [f"q{i + 1} - ({float(vel[i])!r})*t" for i in range(n)]
    return FrameMap.parse(fwd, inv, n)


def push_vector(F: FrameMap, v: TangentVector) -> TangentVector:
    """Tangent lift of a frame map: ``dot'^i = d_j q'^i dot^j + d_t q'^i dot^0``."""
    x = v.base.coords
    J = F.jacobian(x)
    _check_jacobian(J, x)
    return TangentVector(ChartPoint(F.apply(x)), J @ v.dot)


def lattice(lo, hi, points: int = 5) -> np.ndarray:
    """Regular grid over a box, one row per point."""
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    axes = [np.linspace(a, b, points) for a, b in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)
