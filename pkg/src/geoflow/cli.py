"""Command line front end: ``geoflow run|validate|convert|version``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import covariant_differential, gamma_from_xi, is_symmetric, xi_from_gamma
from .errors import GeoflowError, ValidationError
from .geodesic_flow import (
    JacobiTrajectory,
    conjugate_spacing_bound,
    curvature_bounds,
    integrate_geodesic,
    integrate_jacobi,
    scan_conjugate_points,
)
from .newtonian import compatibility_residual
from .scenario import Scenario, fmt_number, load_scenario
from .tangent_connection import FLAT_TOL, max_curvature, riemann
from .core_tensor import lattice

log = logging.getLogger("geoflow")

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3
ROUNDTRIP_TOL = 1e-10
NEWTONIAN_TOL = 1e-10


@dataclass
class TaskResult:
    name: str
    ok: bool
    lines: list = field(default_factory=list)
    residual: float | None = None


@dataclass
class RunReport:
    scenario: str
    tasks: list = field(default_factory=list)
    conjugate_points: list = field(default_factory=list)
    files: list = field(default_factory=list)
    exit_status: int = EXIT_OK

    @property
    def residuals(self) -> dict:
        return {t.name: t.residual for t in self.tasks if t.residual is not None}

    def render(self) -> str:
        out = [f"scenario: {self.scenario}"]
        for t in self.tasks:
            out.append(f"[{t.name}] {'ok' if t.ok else 'FAILED'}")
            out.extend(f"  {line}" for line in t.lines)
        out.append("files: " + (", ".join(self.files) if self.files else "none"))
        out.append(f"exit: {self.exit_status}")
        return "\n".join(out) + "\n"


def emit_csv(traj, path, num: int = 1001) -> Path:
    """Uniform samples of a geodesic or Jacobi trajectory as CSV."""
    path = Path(path)
    if isinstance(traj, JacobiTrajectory):
        ts, x, xd, u, w = traj.sample(num)
        cols = [x[:, 1:], xd[:, 1:], u[:, 1:], w[:, 1:]]
        names = ["q", "dq", "u", "w"]
    else:
        ts, x, xd = traj.sample(num)
        cols = [x[:, 1:], xd[:, 1:]]
        names = ["q", "dq"]
    n = traj.n
    header = ["t"] + [f"{p}{i + 1}" for p in names for i in range(n)]
    data = np.column_stack([ts] + cols)
    lines = [",".join(header)]
    lines.extend(",".join(fmt_number(v) for v in row) for row in data)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def _components(label, arr, tol=0.0):
    lines = []
    for idx in np.ndindex(arr.shape):
        if abs(arr[idx]) > tol:
            lines.append(f"{label}[{','.join(str(i) for i in idx)}] = {fmt_number(arr[idx])}")
    return lines or [f"{label} = 0"]


def convert_lines(sc: Scenario) -> list[str]:
    """Dynamic and tangent connection components at the probe point."""
    n = sc.n
    row = sc.probe_point
    x, v = row[: n + 1], row[n + 1 :]
    lines = [f"probe: {', '.join(fmt_number(c) for c in row)}"]
    lines += _components("xi", np.asarray(sc.system.xi(x, v), dtype=float))
    gamma = sc.system.gamma or gamma_from_xi(sc.system.xi)
    lines += _components("gamma", gamma(x, v))
    if sc.system.connection is not None:
        lines += _components("K", sc.system.connection.components_at(x))
    if sc.frame is not None:
        lines += _components("D_frame", covariant_differential(sc.frame, x, v))
    return lines


def _region(sc: Scenario):
    lo, hi = sc.box
    return lattice(lo, hi, sc.box_points)


def _jets(sc: Scenario):
    lo, hi = sc.box
    pts = lattice(lo, hi, sc.box_points)
    rng = np.random.default_rng(0)
    vel = rng.uniform(-1.0, 1.0, size=(len(pts), sc.n))
    return np.column_stack([pts, vel])


def _task(sc: Scenario, name: str, out_dir: Path, report: RunReport) -> TaskResult:
    n = sc.n
    sysm = sc.system
    init = (sc.q0, sc.v0)
    base, _, arg = name.partition(":")
    if base == "convert":
        return TaskResult(name, True, convert_lines(sc))
    if base == "geodesic":
        geo = integrate_geodesic(sysm.connection or sysm.xi, init, sc.span, sc.integrator)
        path = emit_csv(geo, out_dir / "geodesic.csv", sc.samples)
        report.files.append(path.name)
        return TaskResult(name, True, [f"wrote {path.name} ({sc.samples} rows)"])
    if base == "jacobi":
        geo = integrate_geodesic(sysm.connection, init, sc.span, sc.integrator)
        jac = integrate_jacobi(sysm.connection, geo, sc.u0, sc.w0, sc.integrator)
        path = emit_csv(jac, out_dir / "jacobi.csv", sc.samples)
        report.files.append(path.name)
        return TaskResult(name, True, [f"wrote {path.name} ({sc.samples} rows)"])
    if base == "conjugate":
        points = scan_conjugate_points(sysm.connection, init, sc.span, sc.integrator)
        report.conjugate_points = [c.t for c in points]
        listed = ", ".join(fmt_number(c.t, 6) + (" (degenerate)" if c.degenerate else "") for c in points)
        lines = [f"conjugate points: {listed or 'none'}"]
        geo = integrate_geodesic(sysm.connection, init, sc.span, sc.integrator)
        lowest, highest = curvature_bounds(sysm.connection, sc.gbar(), geo)
        lines.append(f"curvature scalar range: [{fmt_number(lowest, 6)}, {fmt_number(highest, 6)}]")
        if lowest > 0:
            lines.append("positive curvature scalar: no conjugate points expected")
        bound = conjugate_spacing_bound(highest)
        if bound is not None:
            lines.append(f"conjugate spacing bound: {fmt_number(bound, 6)}")
        return TaskResult(name, True, lines)
    if base == "curvature":
        x = sc.probe_point[: n + 1]
        K = sysm.connection
        R = riemann(K.components_at(x), K.gradient_at(x))
        worst = max_curvature(K, _region(sc))
        lines = [f"max|R| over probe box: {fmt_number(worst, 6)}"]
        lines += _components("R", R, tol=FLAT_TOL)
        return TaskResult(name, True, lines, residual=worst)
    if base == "check":
        checks = [arg] if arg else _default_checks(sc)
        lines, ok, worst = [], True, 0.0
        for c in checks:
            good, text, value = _CHECKS[c](sc)
            ok &= good
            worst = max(worst, value)
            lines.append(text)
        return TaskResult(name, ok, lines, residual=worst)
    raise ValidationError(f"unknown task {name!r}", "tasks")


def _default_checks(sc: Scenario):
    out = ["symmetric", "roundtrip"]
    if sc.system.mass is not None:
        out.append("newtonian")
    return out


def _check_flat(sc):
    worst = max_curvature(sc.system.connection, _region(sc))
    flat = worst < FLAT_TOL
    text = f"flat: {'true' if flat else 'false'}, max|R| {'<' if flat else '>='} 1e-8 ({fmt_number(worst, 6)})"
    return flat, text, worst


def _check_symmetric(sc):
    gamma = sc.system.gamma or gamma_from_xi(sc.system.xi)
    ok = is_symmetric(gamma, _jets(sc))
    return ok, f"symmetric: {'true' if ok else 'false'}", 0.0


def _check_roundtrip(sc):
    xi = sc.system.xi
    back = xi_from_gamma(gamma_from_xi(xi))
    worst = 0.0
    for row in _jets(sc):
        x, v = row[: sc.n + 1], row[sc.n + 1 :]
        worst = max(worst, float(np.max(np.abs(np.asarray(back(x, v)) - np.asarray(xi(x, v))))))
    ok = worst < ROUNDTRIP_TOL
    return ok, f"roundtrip: max error {fmt_number(worst, 6)} ({'<' if ok else '>='} 1e-10)", worst


def _check_newtonian(sc):
    worst = compatibility_residual(sc.system.xi, sc.system.mass, _jets(sc))
    ok = worst < NEWTONIAN_TOL
    return ok, f"newtonian: residual {fmt_number(worst, 6)} ({'<' if ok else '>='} 1e-10)", worst


_CHECKS = {
    "flat": _check_flat,
    "symmetric": _check_symmetric,
    "roundtrip": _check_roundtrip,
    "newtonian": _check_newtonian,
}


def run_scenario(path, out_dir) -> RunReport:
    """Run every task of the scenario at ``path``, writing into ``out_dir``.

    Validation problems raise ValidationError before anything is written.
    Numeric failures are recorded per task and set exit status 3.
    """
    sc = load_scenario(path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = RunReport(sc.name)
    for name in sc.tasks:
        try:
            result = _task(sc, name, out_dir, report)
        except ValidationError:
            raise
        except (GeoflowError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            log.warning("task %s failed: %s", name, exc)
            result = TaskResult(name, False, [f"error: {type(exc).__name__}: {exc}"])
            report.exit_status = EXIT_NUMERIC
        report.tasks.append(result)
        if not result.ok and report.exit_status == EXIT_OK:
            report.exit_status = EXIT_NUMERIC
    report.files.append("report.txt")
    (out_dir / "report.txt").write_text(report.render(), encoding="utf-8", newline="\n")
    return report


def _build_parser():
    parser = argparse.ArgumentParser(prog="geoflow", description="Dynamic equations as geodesic flows.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)
    run = sub.add_parser("run", help="run a scenario and write CSV files plus report.txt")
    run.add_argument("scenario")
    run.add_argument("-o", "--out", default="out", help="output directory")
    val = sub.add_parser("validate", help="parse and check a scenario without running it")
    val.add_argument("scenario")
    conv = sub.add_parser("convert", help="print connection components at the probe point")
    conv.add_argument("scenario")
    sub.add_parser("version", help="print the package version")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.verb == "version":
        print(f"geoflow {__version__}")
        return EXIT_OK
    try:
        if args.verb == "validate":
            sc = load_scenario(args.scenario)
            print(f"{args.scenario}: ok ({sc.system.kind}, n={sc.n}, tasks: {', '.join(sc.tasks)})")
            return EXIT_OK
        if args.verb == "convert":
            sc = load_scenario(args.scenario)
            print("\n".join(convert_lines(sc)))
            return EXIT_OK
        report = run_scenario(args.scenario, args.out)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except GeoflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    sys.stdout.write(report.render())
    return report.exit_status


if __name__ == "__main__":
    sys.exit(main())
