"""Scenario orchestration: initial data, runs, reports and the artifact manifest."""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import barriers, snapshot
from . import group as grp
from .config import ScenarioConfig
from .fields import Grid, ScalarField
from .flow import Trajectory, max_principle_violation, run_flow, vanishing_viscosity_run
from .levelset import extract_zero_level, measure_radius, right_gauge_separation
from .viscosity import data_jet_family, viscosity_residual_check

MANIFEST = "manifest.json"
SUMMARY = "summary.json"


# ------------------------------------------------------------ initial data

def cylinder_datum(grid: Grid, g: grp.GroupSpec, R0: float) -> ScalarField:
    """psi(|x_H|^2/2) - psi(R0^2/2): zero on |x_H| = R0, constant for |x_H| >= 2."""
    level = float(barriers.psi(0.5 * R0 * R0))
    pts = grid.points()
    s = 0.5 * np.sum(pts[..., :g.m] ** 2, axis=-1)
    return ScalarField(grid, barriers.psi(s) - level, -level)


def blob_datum(grid: Grid, center, radius: float) -> ScalarField:
    """Same profile in Euclidean distance to ``center``: zero at ``radius``, constant beyond 2 radius."""
    level = float(barriers.psi(0.5))
    d2 = np.sum((grid.points() - np.asarray(center, dtype=float)) ** 2, axis=-1)
    return ScalarField(grid, barriers.psi(0.5 * d2 / (radius * radius)) - level, -level)


def graph_datum(grid: Grid, expr: str, amplitude: float, width: float) -> ScalarField:
    pts = grid.points()
    if expr == "linear":
        return ScalarField(grid, amplitude * pts[..., 0], None)
    if expr == "gaussian":
        r2 = np.sum(pts * pts, axis=-1)
        return ScalarField(grid, amplitude * np.exp(-0.5 * r2 / (width * width)), 0.0)
    if expr == "ridge":
        return ScalarField(grid, amplitude * np.exp(-0.5 * pts[..., 0] ** 2 / (width * width)), None)
    raise ValueError(f"unknown graph expression {expr!r}")


def initial_field(cfg: ScenarioConfig) -> ScalarField:
    p = cfg.initial.params
    kind = cfg.initial.kind
    if kind == "cylinder":
        return cylinder_datum(cfg.grid, cfg.group, p.get("R0", 1.0))
    if kind == "plane":
        return ScalarField(cfg.grid, cfg.grid.points()[..., p["k"] - 1], None)
    if kind == "blob":
        return blob_datum(cfg.grid, p.get("center", (0.0,) * cfg.group.n), p.get("radius", 0.5))
    if kind == "graph":
        return graph_datum(cfg.grid, p.get("expr", "gaussian"), p.get("amplitude", 0.1), p.get("width", 0.5))
    if kind == "snapshot":
        path = Path(p["path"])
        if not path.is_absolute():
            path = cfg.base_dir / path
        f = snapshot.read(path)
        if f.grid != cfg.grid:
            raise ValueError(f"snapshot {path} lives on a different grid than the config")
        return f
    raise ValueError(f"unknown initial kind {kind!r}")


# -------------------------------------------------------------- reporting

@dataclass
class Check:
    name: str
    value: float
    limit: float
    passed: bool


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out: Path) -> dict:
    files = {}
    for path in sorted(out.rglob("*")):
        if path.is_file() and path.name != MANIFEST:
            files[path.relative_to(out).as_posix()] = _sha256(path)
    manifest = {"files": files}
    (out / MANIFEST).write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return manifest


def verify_manifest(out: Path) -> list[str]:
    """Paths whose content no longer matches the manifest (missing files included)."""
    manifest = json.loads((Path(out) / MANIFEST).read_text())
    bad = []
    for rel, digest in manifest["files"].items():
        path = Path(out) / rel
        if not path.is_file() or _sha256(path) != digest:
            bad.append(rel)
    return bad


def _write_rows(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _write_trajectory(out: Path, traj: Trajectory, cfg: ScenarioConfig, checks: list, label: str = ""):
    out.mkdir(parents=True, exist_ok=True)
    traj.write_metrics(out / "metrics.csv")
    if cfg.write_snapshots:
        (out / "snapshots").mkdir(exist_ok=True)
        for i, s in enumerate(traj.snapshots):
            snapshot.write(out / "snapshots" / f"snap_{i:04d}.cmcf", s)
    extracts = [extract_zero_level(s) for s in traj.snapshots]
    if cfg.write_extracts:
        (out / "extracts").mkdir(exist_ok=True)
        for i, e in enumerate(extracts):
            e.write(out / "extracts" / f"extract_{i:04d}.csv")
    g = cfg.group
    if cfg.metrics.get("radius", cfg.initial.kind == "cylinder"):
        rows = []
        R0 = cfg.initial.params.get("R0", 1.0)
        for e in extracts:
            r = measure_radius(e, g)
            exact = barriers.cylinder_radius(R0, g.m, e.time) if cfg.initial.kind == "cylinder" and g.m >= 2 else float("nan")
            if r is None:
                rows.append([e.time, "", "", 0, exact, "extinct"])
            else:
                rows.append([e.time, r.median, r.mean, r.count, exact, "ok"])
        _write_rows(out / "radius.csv", ["t", "radius_median", "radius_mean", "crossings", "radius_exact", "status"], rows)
    if cfg.metrics.get("drift", cfg.initial.kind == "plane"):
        rows = [[s.time, plane_drift(traj.snapshots[0], s, g)] for s in traj.snapshots]
        _write_rows(out / "drift.csv", ["t", "drift"], rows)
    initial = traj.snapshots[0]
    if initial.far_field is not None:
        tol = cfg.metrics.get("max_principle_tol", 1e-12)
        v = max_principle_violation(traj, initial)
        checks.append(Check(f"max_principle{label}", v, tol, v <= tol))
    return extracts


def plane_drift(initial: ScalarField, current: ScalarField, g: grp.GroupSpec, tau_factor: float = 2.0) -> float:
    """sup |u(t) - u(0)| over interior nodes where |grad_0 u(0)| >= tau_factor * h."""
    from .fields import horizontal_gradient

    grad = horizontal_gradient(initial, g)
    keep = np.sqrt(np.sum(grad * grad, axis=0)) >= tau_factor * initial.grid.hmax
    core = np.zeros(initial.grid.shape, dtype=bool)
    core[initial.grid.interior(1)] = True
    keep &= core
    if not np.any(keep):
        return 0.0
    return float(np.max(np.abs(current.values - initial.values)[keep]))


def viscosity_family(cfg: ScenarioConfig, traj: Trajectory, side: str):
    """Data-jet quadratic tests per the [viscosity] section."""
    v = cfg.viscosity
    grid = cfg.grid
    times = traj.times
    t0s = v.t0 or tuple(times[1:-1])
    centers = v.centers
    if not centers:
        pts = grid.points()
        stride = tuple(slice(2, c - 2, max(1, (c - 4) // 3)) for c in grid.counts)
        centers = [tuple(p) for p in pts[stride].reshape(-1, grid.ndim)]
    return data_jet_family(traj.snapshots, centers, t0s, v.kappa, v.c_t, side)


def _viscosity_checks(cfg, traj, out, checks):
    v = cfg.viscosity
    h = cfg.grid.hmax
    dts = [r["dt"] for r in traj.metrics if r["dt"] > 0]
    dt = max(dts) if dts else 0.0
    tau = v.tau if v.tau is not None else h
    tol = v.tol if v.tol is not None else h + dt + cfg.flow.delta
    for side in v.sides:
        rep = viscosity_residual_check(traj.snapshots, cfg.group, viscosity_family(cfg, traj, side), tau, side, tol)
        rep.write(out / f"viscosity_{side}.csv")
        checks.append(Check(f"viscosity_{side}", rep.worst, tol, rep.passed))


def run_experiment(cfg: ScenarioConfig, out: Path | None = None) -> Path:
    """Runs the scenario and writes every artifact plus ``manifest.json``."""
    out = Path(cfg.output_dir if out is None else out)
    out.mkdir(parents=True, exist_ok=True)
    f = initial_field(cfg)
    checks: list[Check] = []
    if cfg.schedule:
        trajs, report = vanishing_viscosity_run(f, cfg.group, cfg.schedule, cfg.flow)
        for k, traj in enumerate(trajs, start=1):
            _write_trajectory(out / f"k{k}", traj, cfg, checks, f"[k{k}]")
        report.write(out / "cauchy_report.csv")
        d = report.d
        dec = all(b < a for a, b in zip(d, d[1:]))
        checks.append(Check("cauchy_decreasing", float(len(d)), 0.0, dec))
        traj = trajs[-1]
    else:
        traj = run_flow(f, cfg.group, cfg.flow, graph=cfg.graph)
        _write_trajectory(out, traj, cfg, checks)
    if cfg.viscosity is not None:
        _viscosity_checks(cfg, traj, out, checks)
    summary = {
        "group": cfg.group.name,
        "grid": {"counts": list(cfg.grid.counts), "spacing": list(cfg.grid.spacing), "origin": list(cfg.grid.origin)},
        "checks": [{"name": c.name, "value": c.value, "limit": c.limit, "passed": bool(c.passed)} for c in checks],
        "passed": all(c.passed for c in checks),
    }
    (out / SUMMARY).write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    write_manifest(out)
    return out


# ------------------------------------------------------------- comparisons

@dataclass
class SeparationRow:
    t: float
    contained: bool
    separation: float


def _is_cylindric(f: ScalarField, g: grp.GroupSpec) -> bool:
    v = f.values
    for ax in range(g.m, g.n):
        if not np.allclose(v, v.take([0], axis=ax)):
            return False
    return True


def separation_report(cfg_a: ScenarioConfig, cfg_b: ScenarioConfig):
    """Evolves M_0 (a) and the larger M^_0 (b); reports containment of {u < 0} and
    the right-gauge distance between the zero extracts (an approximation of
    the right-invariant CC distance)."""
    if cfg_a.grid != cfg_b.grid:
        raise ValueError("separation_report needs both scenarios on the same grid")
    if cfg_a.group != cfg_b.group:
        raise ValueError("separation_report needs both scenarios on the same group")
    if cfg_a.flow != cfg_b.flow:
        raise ValueError("separation_report needs identical flow parameters")
    fa, fb = initial_field(cfg_a), initial_field(cfg_b)
    ta = run_flow(fa, cfg_a.group, cfg_a.flow)
    tb = run_flow(fb, cfg_b.group, cfg_b.flow)
    rows = []
    for sa in ta.snapshots:
        sb = tb.nearest(sa.time)
        contained = not bool(np.any((sa.values < 0) & (sb.values > 0)))
        sep = right_gauge_separation(extract_zero_level(sa), extract_zero_level(sb), cfg_a.group)
        rows.append(SeparationRow(sa.time, contained, sep))
    return rows, _is_cylindric(fb, cfg_b.group)


def write_separation(path: Path, rows, cylindric: bool):
    with open(path, "w", newline="") as fh:
        fh.write(f"# separation is the right-gauge proxy (approximate); outer set cylindric: {cylindric}\n")
        w = csv.writer(fh)
        w.writerow(["t", "contained", "separation_right_gauge_approx"])
        for r in rows:
            w.writerow([repr(r.t), int(r.contained), repr(r.separation)])


def verify_barriers(cfg: ScenarioConfig) -> barriers.BarrierReport:
    b = cfg.barrier
    if b is None:
        raise ValueError("config has no [barrier] section")
    g = cfg.group
    grid = Grid.from_extent((-b.extent,) * g.n, (b.extent,) * g.n, b.h)
    kind = barriers.Barrier(b.kind, g, b.k)
    C0 = b.C0 if b.C0 is not None else barriers.calibrate_c0(g, kind, b.delta, b.eps, grid, b.t)
    return barriers.barrier_subsolution_residual(g, kind, b.delta, b.eps, C0, grid, b.t)


def cylinder_radius_errors(traj: Trajectory, g: grp.GroupSpec, R0: float, times) -> dict:
    """|r(t)^2 - (R0^2 - 2 (m-1) t)| at the snapshots nearest each time."""
    out = {}
    for t in times:
        snap = traj.nearest(t)
        r = measure_radius(extract_zero_level(snap), g)
        law = R0 * R0 - 2.0 * (g.m - 1) * snap.time
        out[t] = math.inf if r is None else abs(r.median ** 2 - law)
    return out
