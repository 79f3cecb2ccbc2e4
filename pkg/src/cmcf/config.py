"""Sectioned key=value scenario files.

    file    = *line
    line    = blank / comment / header / entry
    header  = "[" name "]"
    entry   = key "=" value
    comment = ("#" / ";") *char

Lists are comma separated; point lists separate points with ";" and a
schedule is written ``eps:delta, eps:delta, ...``. Coordinate indices
(``k``) are 1-based here, matching the x_1..x_n naming; the library API is
0-based.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from pathlib import Path

from . import group as grp
from .barriers import Barrier, BarrierError
from .fields import Grid
from .flow import FlowParams, ScheduleError, check_schedule

REQUIRED = ("group", "grid", "initial", "flow", "output")
INITIAL_KINDS = ("cylinder", "plane", "graph", "blob", "snapshot")
GRAPH_EXPRESSIONS = ("linear", "gaussian", "ridge")


class ConfigError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _float(v):
    return float(v)


def _int(v):
    return int(v)


def _bool(v):
    s = v.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _str(v):
    return v.strip()


def _floats(v):
    return tuple(float(x) for x in v.split(",") if x.strip())


def _strs(v):
    return tuple(x.strip() for x in v.split(",") if x.strip())


def _points(v):
    return tuple(_floats(p) for p in v.split(";") if p.strip())


def _schedule(v):
    out = []
    for item in v.split(","):
        if not item.strip():
            continue
        e, sep, d = item.partition(":")
        if not sep:
            raise ValueError(f"schedule entries are eps:delta, got {item.strip()!r}")
        out.append((float(e), float(d)))
    return tuple(out)


SCHEMA = {
    "group": {"preset": _str},
    "grid": {"lo": _floats, "hi": _floats, "h": _floats, "extent": _float},
    "initial": {"kind": _str, "R0": _float, "k": _int, "center": _floats, "radius": _float,
                "expr": _str, "amplitude": _float, "width": _float, "path": _str},
    "flow": {"eps": _float, "delta": _float, "sigma": _float, "cfl": _float, "t_end": _float,
             "snapshot_every": _int, "snapshot_times": _floats, "schedule": _schedule,
             "graph": _bool},
    "output": {"dir": _str, "snapshots": _bool, "extracts": _bool},
    "metrics": {"radius": _bool, "max_principle_tol": _float, "drift": _bool},
    "viscosity": {"sides": _strs, "tau": _float, "tol": _float, "kappa": _floats, "c_t": _float,
                  "t0": _floats, "centers": _points},
    "barrier": {"kind": _str, "k": _int, "delta": _float, "eps": _float, "C0": _float,
                "h": _float, "extent": _float, "t": _float},
}


@dataclass
class InitialSpec:
    kind: str
    params: dict


@dataclass
class ViscositySpec:
    sides: tuple = ("sub", "super")
    tau: float | None = None
    tol: float | None = None
    kappa: tuple = (1.0,)
    c_t: float = 20.0
    t0: tuple = ()
    centers: tuple = ()


@dataclass
class BarrierSpec:
    kind: str
    k: int | None
    delta: float
    eps: float
    C0: float | None
    h: float
    extent: float
    t: float = 0.0


@dataclass
class ScenarioConfig:
    group: grp.GroupSpec
    grid: Grid
    initial: InitialSpec
    flow: FlowParams
    schedule: tuple = ()
    graph: bool = False
    output_dir: Path = Path("out")
    write_snapshots: bool = True
    write_extracts: bool = True
    metrics: dict = dc_field(default_factory=dict)
    viscosity: ViscositySpec | None = None
    barrier: BarrierSpec | None = None
    base_dir: Path = Path(".")


def _tokenize(text):
    sections: dict[str, dict] = {}
    lines: dict[tuple, int] = {}
    header_line: dict[str, int] = {}
    current = None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {line!r}", no)
            current = line[1:-1].strip()
            if current not in SCHEMA:
                raise ConfigError(f"unknown section [{current}]", no)
            if current in sections:
                raise ConfigError(f"section [{current}] appears twice", no)
            sections[current] = {}
            header_line[current] = no
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"expected key = value, got {line!r}", no)
        key = key.strip()
        if current is None:
            raise ConfigError(f"entry {key!r} outside any section", no)
        parser = SCHEMA[current].get(key)
        if parser is None:
            raise ConfigError(f"unknown key {key!r} in [{current}]", no)
        if key in sections[current]:
            raise ConfigError(f"duplicate key {key!r} in [{current}]", no)
        try:
            sections[current][key] = parser(value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {current}.{key}: {exc}", no) from None
        lines[current, key] = no
    return sections, lines, header_line


def parse_config(text: str, base_dir=".") -> ScenarioConfig:
    """Parse and validate; the first problem raises ConfigError with its line."""
    sec, lines, headers = _tokenize(text)
    for name in REQUIRED:
        if name not in sec:
            raise ConfigError(f"missing required section [{name}]")

    def need(s, key):
        if key not in sec[s]:
            raise ConfigError(f"[{s}] needs '{key}'", headers[s])
        return sec[s][key]

    def where(s, key):
        return lines.get((s, key), headers.get(s))

    try:
        g = grp.preset(need("group", "preset"))
    except (KeyError, ValueError) as exc:
        raise ConfigError(str(exc), where("group", "preset")) from None

    gs = sec["grid"]
    if "extent" in gs:
        if "lo" in gs or "hi" in gs:
            raise ConfigError("give either extent or lo/hi", where("grid", "extent"))
        lo = (-gs["extent"],) * g.n
        hi = (gs["extent"],) * g.n
    else:
        lo, hi = need("grid", "lo"), need("grid", "hi")
    h = need("grid", "h")
    for name, vals in (("lo", lo), ("hi", hi)):
        if len(vals) != g.n:
            raise ConfigError(f"grid.{name} has {len(vals)} entries, group dimension is {g.n}", where("grid", name))
    if len(h) not in (1, g.n):
        raise ConfigError(f"grid.h needs 1 or {g.n} entries", where("grid", "h"))
    try:
        grid = Grid.from_extent(lo, hi, h if len(h) > 1 else h[0])
    except ValueError as exc:
        raise ConfigError(str(exc), where("grid", "h")) from None

    ini = dict(sec["initial"])
    kind = ini.pop("kind", None)
    if kind not in INITIAL_KINDS:
        raise ConfigError(f"initial.kind must be one of {INITIAL_KINDS}", where("initial", "kind"))
    _validate_initial(kind, ini, g, lambda key: where("initial", key), headers["initial"])
    initial = InitialSpec(kind, ini)

    fs = sec["flow"]
    schedule = fs.get("schedule", ())
    try:
        flow = FlowParams(eps=fs.get("eps", 0.0), delta=fs.get("delta", 1e-6), sigma=fs.get("sigma", 0.0),
                          cfl_factor=fs.get("cfl", 0.25), t_end=need("flow", "t_end"),
                          snapshot_every=fs.get("snapshot_every", 10),
                          snapshot_times=fs.get("snapshot_times", ()))
    except ValueError as exc:
        field = str(exc).split(" ", 1)[0]
        key = {"cfl_factor": "cfl"}.get(field, field)
        raise ConfigError(str(exc), where("flow", key)) from None
    if schedule:
        try:
            check_schedule(schedule)
        except ScheduleError as exc:
            raise ConfigError(str(exc), where("flow", "schedule")) from None

    out = sec["output"]
    cfg = ScenarioConfig(
        group=g, grid=grid, initial=initial, flow=flow, schedule=tuple(schedule),
        graph=fs.get("graph", False),
        output_dir=Path(need("output", "dir")),
        write_snapshots=out.get("snapshots", True), write_extracts=out.get("extracts", True),
        metrics=dict(sec.get("metrics", {})), base_dir=Path(base_dir))

    if "viscosity" in sec:
        v = sec["viscosity"]
        spec = ViscositySpec(**v)
        for side in spec.sides:
            if side not in ("sub", "super"):
                raise ConfigError(f"viscosity side {side!r} is not sub or super", where("viscosity", "sides"))
        for p in spec.centers:
            if len(p) != g.n:
                raise ConfigError(f"viscosity center {p} has the wrong dimension", where("viscosity", "centers"))
            try:
                grid.index_of(p)
            except ValueError as exc:
                raise ConfigError(str(exc), where("viscosity", "centers")) from None
        if not spec.kappa or min(spec.kappa) <= 0:
            raise ConfigError("viscosity.kappa needs positive entries", where("viscosity", "kappa"))
        cfg.viscosity = spec

    if "barrier" in sec:
        b = sec["barrier"]
        if "kind" not in b:
            raise ConfigError("[barrier] needs 'kind'", headers["barrier"])
        k = b.get("k")
        try:
            Barrier(b["kind"], g, None if k is None else k - 1)
        except BarrierError as exc:
            raise ConfigError(str(exc), where("barrier", "kind")) from None
        cfg.barrier = BarrierSpec(b["kind"], None if k is None else k - 1, b.get("delta", 0.1),
                                  b.get("eps", 1e-3), b.get("C0"), b.get("h", grid.hmax),
                                  b.get("extent", 3.0), b.get("t", 0.0))
    return cfg


def _validate_initial(kind, ini, g, where, header):
    if kind == "cylinder":
        R0 = ini.get("R0", 1.0)
        if g.m < 2:
            raise ConfigError("cylinder initial data needs at least two horizontal directions", header)
        if not 0 < R0 < 2:
            raise ConfigError("cylinder R0 must lie in (0, 2) so the cut-off datum has the right zero set",
                              where("R0"))
    elif kind == "plane":
        if "k" not in ini:
            raise ConfigError("plane initial data needs 'k'", header)
        try:
            Barrier("plane", g, ini["k"] - 1)
        except BarrierError as exc:
            raise ConfigError(str(exc), where("k")) from None
    elif kind == "graph":
        expr = ini.get("expr", "gaussian")
        if expr not in GRAPH_EXPRESSIONS:
            raise ConfigError(f"graph expr must be one of {GRAPH_EXPRESSIONS}", where("expr"))
    elif kind == "blob":
        c = ini.get("center", (0.0,) * g.n)
        if len(c) != g.n:
            raise ConfigError(f"blob center needs {g.n} entries", where("center"))
        if not ini.get("radius", 0.5) > 0:
            raise ConfigError("blob radius must be positive", where("radius"))
    elif kind == "snapshot":
        if "path" not in ini:
            raise ConfigError("snapshot initial data needs 'path'", header)


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, base_dir=path.parent)
