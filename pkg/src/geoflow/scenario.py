"""Scenario files: YAML documents declaring one system and the tasks to run.

Component keys are flat and 1-based, e.g. ``xi1``, ``f2``, ``b1_2``,
``a1_1_2``, ``m1_1``, ``forward1``; any component left out is zero (or the
mirror entry for the symmetric ``a`` and ``m`` arrays).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .core_tensor import FrameMap, ScalarField
from .dynamics import DynamicEquationField, QuadraticCoefficients, ReferenceFrameField
from .errors import ParseError, ValidationError
from .geodesic_flow import IntegratorConfig
from .newtonian import LagrangianCoefficients, extend_mass_metric, lagrange_equation, lagrangian_connection
from .tangent_connection import connection_from_gamma, free_motion_equation, linear_from_quadratic

SYSTEM_KINDS = ("quadratic", "general", "lagrangian", "free_motion")
TASKS = ("convert", "geodesic", "jacobi", "conjugate", "curvature", "check")
CHECKS = ("flat", "symmetric", "newtonian", "roundtrip")
LINEAR_TASKS = ("jacobi", "conjugate", "curvature", "check:flat")
TOP_KEYS = {"name", "dimension", "constants", "system", "frame", "initial", "span", "integrator", "output", "probe", "jacobi", "tasks"}

_COMPONENT_KEYS = {
    "quadratic": [("a", 3), ("b", 2), ("f", 1)],
    "general": [("xi", 1)],
    "lagrangian": [("m", 2), ("k", 1)],
    "free_motion": [("forward", 1), ("inverse", 1)],
}


@dataclass
class System:
    """Built objects for one scenario system."""

    kind: str
    xi: DynamicEquationField
    connection: object = None  # linear TangentConnectionField when available
    gamma: object = None  # affine dynamic connection when available
    lagrangian: LagrangianCoefficients | None = None
    frame_map: FrameMap | None = None
    mass: object = None  # mass metric FieldArray for Newtonian checks / gbar


@dataclass
class Scenario:
    path: str
    name: str
    n: int
    constants: dict
    system: System
    frame: ReferenceFrameField | None
    q0: np.ndarray
    v0: np.ndarray
    span: tuple
    integrator: IntegratorConfig
    samples: int
    probe_point: np.ndarray
    box: tuple
    box_points: int
    u0: np.ndarray
    w0: np.ndarray
    tasks: list = field(default_factory=list)
    raw: dict = field(default_factory=dict, repr=False)

    def gbar(self):
        n = self.n
        mass = self.system.mass if self.system.mass is not None else np.eye(n).astype(object)
        return extend_mass_metric(mass, frame="scenario", n=n)


def _line_of(text: str, key: str) -> int | None:
    for no, line in enumerate(text.splitlines(), 1):
        if re.match(rf"^\s*{re.escape(key)}\s*:", line):
            return no
    return None


class _Ctx:
    def __init__(self, path, text):
        self.path = path
        self.text = text

    def expr(self, n, value, key, constants):
        try:
            return ScalarField.parse(value, n, constants)
        except ParseError as exc:
            line = _line_of(self.text, key.split(".")[-1])
            where = f"{self.path}:{line}" if line else str(self.path)
            err = ValidationError(f"{where}: {key}: {exc}")
            err.key = key
            err.parse_error = exc
            raise err from None
        except ValueError as exc:
            raise ValidationError(str(exc), key) from None


def _number_list(value, length, key):
    if not isinstance(value, (list, tuple)) or len(value) != length:
        raise ValidationError(f"expected a list of {length} numbers", key)
    try:
        out = np.array([float(v) for v in value])
    except (TypeError, ValueError):
        raise ValidationError("entries must be numbers", key) from None
    if not np.all(np.isfinite(out)):
        raise ValidationError("entries must be finite", key)
    return out


def _parse_component_key(key, prefixes):
    for prefix, rank in prefixes:
        m = re.fullmatch(rf"{prefix}((?:[0-9]+_){{{rank - 1}}}[0-9]+)", key)
        if m:
            return prefix, tuple(int(i) for i in m.group(1).split("_"))
    return None, None


def _components(ctx, sysdef, kind, n, constants):
    prefixes = _COMPONENT_KEYS[kind]
    found = {p: {} for p, _ in prefixes}
    scalars = {}
    for key, value in sysdef.items():
        if key == "kind":
            continue
        if kind == "lagrangian" and key == "f":
            scalars["f"] = ctx.expr(n, value, f"system.{key}", constants)
            continue
        prefix, idx = _parse_component_key(key, prefixes)
        if prefix is None:
            raise ValidationError(f"unknown key for a {kind} system", f"system.{key}")
        if any(i < 1 or i > n for i in idx):
            raise ValidationError(f"component index out of range for dimension {n}", f"system.{key}")
        found[prefix][tuple(i - 1 for i in idx)] = ctx.expr(n, value, f"system.{key}", constants)
    return found, scalars


def _array(n, rank, entries, mirror=False):
    shape = (n,) * rank
    arr = np.empty(shape, dtype=object)
    for idx in np.ndindex(shape):
        if idx in entries:
            arr[idx] = entries[idx]
        elif mirror:
            alt = idx[:-2] + (idx[-1], idx[-2])
            arr[idx] = entries.get(alt, ScalarField.constant(n, 0.0))
        else:
            arr[idx] = ScalarField.constant(n, 0.0)
    return arr


def _build_system(ctx, sysdef, n, constants) -> System:
    if not isinstance(sysdef, dict):
        raise ValidationError("expected a mapping", "system")
    kind = sysdef.get("kind")
    if kind not in SYSTEM_KINDS:
        raise ValidationError(f"kind must be one of {', '.join(SYSTEM_KINDS)}", "system.kind")
    found, scalars = _components(ctx, sysdef, kind, n, constants)
    try:
        if kind == "quadratic":
            coeffs = QuadraticCoefficients.from_arrays(
                n, _array(n, 3, found["a"], mirror=True), _array(n, 2, found["b"]), _array(n, 1, found["f"])
            )
            xi = DynamicEquationField(n, quadratic=coeffs)
            return System(kind, xi, connection=linear_from_quadratic(coeffs))
        if kind == "general":
            xi = DynamicEquationField(n, list(_array(n, 1, found["xi"])))
            return System(kind, xi)
        if kind == "lagrangian":
            if len(found["m"]) == 0:
                raise ValidationError("a Lagrangian system needs mass metric entries m<i>_<j>", "system")
            L = LagrangianCoefficients(
                n,
                _array(n, 2, found["m"], mirror=True),
                _array(n, 1, found["k"]),
                scalars.get("f", ScalarField.constant(n, 0.0)),
            )
            return System(kind, lagrange_equation(L), connection=lagrangian_connection(L), lagrangian=L, mass=L.m)
        missing = [f"{p}{i + 1}" for p in ("forward", "inverse") for i in range(n) if (i,) not in found[p]]
        if missing:
            raise ValidationError(f"missing frame map components {', '.join(missing)}", "system")
        F = FrameMap(list(_array(n, 1, found["forward"])), list(_array(n, 1, found["inverse"])))
        xi, gamma = free_motion_equation(F)
        return System(kind, xi, connection=connection_from_gamma(gamma), gamma=gamma, frame_map=F)
    except ValidationError:
        raise
    except ValueError as exc:
        raise ValidationError(str(exc), "system") from None


def _tasks(value):
    if not isinstance(value, list) or not value:
        raise ValidationError("expected a non-empty list", "tasks")
    out = []
    for item in value:
        if not isinstance(item, str):
            raise ValidationError(f"task entries must be strings, got {item!r}", "tasks")
        base, _, arg = item.partition(":")
        if base not in TASKS:
            raise ValidationError(f"unknown task {item!r}", "tasks")
        if base == "check" and arg and arg not in CHECKS:
            raise ValidationError(f"unknown check {arg!r}", "tasks")
        if base != "check" and arg:
            raise ValidationError(f"task {base!r} takes no argument", "tasks")
        out.append(item)
    return out


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot read scenario: {exc}", str(path)) from None
    return parse_scenario(text, str(path))


def parse_scenario(text: str, path: str = "<scenario>") -> Scenario:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{path}:{mark.line + 1}:{mark.column + 1}" if mark else path
        raise ValidationError(f"{where}: YAML syntax error: {getattr(exc, 'problem', exc)}") from None
    if not isinstance(raw, dict):
        raise ValidationError(f"{path}: scenario must be a mapping")
    ctx = _Ctx(path, text)
    unknown = sorted(set(raw) - TOP_KEYS)
    if unknown:
        raise ValidationError("unknown top-level key", unknown[0])

    n = raw.get("dimension")
    if not isinstance(n, int) or isinstance(n, bool) or not 1 <= n <= 16:
        raise ValidationError("must be an integer in 1..16", "dimension")
    constants = raw.get("constants") or {}
    if not isinstance(constants, dict) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in constants.values()):
        raise ValidationError("expected a mapping of names to numbers", "constants")
    constants = {str(k): float(v) for k, v in constants.items()}

    if "system" not in raw:
        raise ValidationError("exactly one system declaration is required", "system")
    system = _build_system(ctx, raw["system"], n, constants)

    frame = None
    if raw.get("frame") is not None:
        fdef = raw["frame"]
        if not isinstance(fdef, dict):
            raise ValidationError("expected a mapping", "frame")
        entries = {}
        for key, value in fdef.items():
            prefix, idx = _parse_component_key(key, [("gamma", 1)])
            if prefix is None or not 1 <= idx[0] <= n:
                raise ValidationError("expected keys gamma1..gamma<n>", f"frame.{key}")
            entries[(idx[0] - 1,)] = ctx.expr(n, value, f"frame.{key}", constants)
        try:
            frame = ReferenceFrameField(n, list(_array(n, 1, entries)))
        except ValueError as exc:
            raise ValidationError(str(exc), "frame") from None

    init = raw.get("initial") or {}
    if not isinstance(init, dict):
        raise ValidationError("expected a mapping", "initial")
    q0 = _number_list(init.get("q", [0.0] * n), n, "initial.q")
    v0 = _number_list(init.get("dq", [0.0] * n), n, "initial.dq")

    span = _number_list(raw.get("span", [0.0, 10.0]), 2, "span")
    if span[0] == span[1]:
        raise ValidationError("span must have distinct endpoints", "span")

    icfg = raw.get("integrator") or {}
    if not isinstance(icfg, dict):
        raise ValidationError("expected a mapping", "integrator")
    allowed = {"method", "atol", "rtol", "max_step", "step"}
    bad = sorted(set(icfg) - allowed)
    if bad:
        raise ValidationError("unknown integrator option", f"integrator.{bad[0]}")
    try:
        kwargs = {k: (str(v) if k == "method" else float(v)) for k, v in icfg.items()}
        integrator = IntegratorConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ValidationError(str(exc), "integrator") from None

    out = raw.get("output") or {}
    samples = out.get("samples", 1001) if isinstance(out, dict) else None
    if not isinstance(samples, int) or isinstance(samples, bool) or samples < 2:
        raise ValidationError("must be an integer >= 2", "output.samples")

    probe = raw.get("probe") or {}
    if not isinstance(probe, dict):
        raise ValidationError("expected a mapping", "probe")
    point = _number_list(probe.get("point", [0.0] * (2 * n + 1)), 2 * n + 1, "probe.point")
    lo = _number_list(probe.get("lo", [-1.0] * (n + 1)), n + 1, "probe.lo")
    hi = _number_list(probe.get("hi", [1.0] * (n + 1)), n + 1, "probe.hi")
    points = probe.get("points", 5)
    if not isinstance(points, int) or points < 2:
        raise ValidationError("must be an integer >= 2", "probe.points")

    jac = raw.get("jacobi") or {}
    if not isinstance(jac, dict):
        raise ValidationError("expected a mapping", "jacobi")
    u0 = _number_list(jac.get("u0", [0.0] * n), n, "jacobi.u0")
    w0 = _number_list(jac.get("w0", [1.0] * n), n, "jacobi.w0")

    tasks = _tasks(raw.get("tasks"))
    if system.connection is None:
        for t in tasks:
            if t in LINEAR_TASKS:
                raise ValidationError(f"task {t!r} needs a linear connection; a general system has none", "tasks")
    if "check:newtonian" in tasks and system.mass is None:
        raise ValidationError("check:newtonian needs a lagrangian system (mass metric)", "tasks")

    return Scenario(
        path=path,
        name=str(raw.get("name", Path(path).stem)),
        n=n,
        constants=constants,
        system=system,
        frame=frame,
        q0=q0,
        v0=v0,
        span=(float(span[0]), float(span[1])),
        integrator=integrator,
        samples=samples,
        probe_point=point,
        box=(lo, hi),
        box_points=points,
        u0=u0,
        w0=w0,
        tasks=tasks,
        raw=raw,
    )


def fmt_number(x: float, digits: int = 12) -> str:
    """Scientific notation with an unpadded exponent: ``1.000000000000e0``."""
    x = float(x)
    if not math.isfinite(x):
        return repr(x)
    mant, _, exp = f"{x:.{digits}e}".partition("e")
    return f"{mant}e{int(exp)}"
