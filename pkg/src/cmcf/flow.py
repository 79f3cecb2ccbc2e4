"""Explicit time stepping of the regularised level-set flow and the graph flow.

The update is

    u <- u + dt * [ (1 + sigma) tr M - xi^T M xi / (|xi|^2 + rho) ]

with xi the eps-gradient, M the symmetrised eps-Hessian and rho = delta
(rho = 1, eps = 0, sigma = 0 for the graph flow). Writing
M = a H a^T + S.grad in coordinate derivatives, the two contractions are
evaluated as

    tr M        = sum_kl B_kl H_kl + sum_k s_k D_k u,     B = a^T a
    xi^T M xi   = zeta^T H zeta + sum_k (xi^T S_k xi) D_k u,  zeta = a^T xi

so only coordinate differences of u are taken each step.
"""
from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field, replace

import numpy as np

from . import group as grp
from .fields import FrameTables, Grid, ScalarField, _is_one, frame_tables, frame_weights

SCHEMES = ("monotone", "central")
METRIC_COLUMNS = ("step", "t", "dt", "sup", "inf", "lip_right", "mask_fraction")


class FlowError(RuntimeError):
    pass


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class FlowParams:
    eps: float = 0.0
    delta: float = 1e-6
    sigma: float = 0.0
    cfl_factor: float = 0.25
    t_end: float = 1.0
    snapshot_every: int = 10
    # extra times at which a snapshot is forced; dt is clipped to land on them
    snapshot_times: tuple[float, ...] = ()
    scheme: str = "monotone"
    # stencil reach of the monotone scheme in cells; None picks ceil(sqrt(n))
    reach: int | None = None

    def __post_init__(self):
        if self.eps < 0:
            raise ValueError(f"eps must be >= 0, got {self.eps}")
        if not self.delta > 0:
            raise ValueError(f"delta must be > 0, got {self.delta}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if not 0 < self.cfl_factor <= 0.5:
            raise ValueError(f"cfl_factor must lie in (0, 0.5], got {self.cfl_factor}")
        if not self.t_end > 0:
            raise ValueError(f"t_end must be > 0, got {self.t_end}")
        if int(self.snapshot_every) != self.snapshot_every or self.snapshot_every < 1:
            raise ValueError(f"snapshot_every must be a positive integer, got {self.snapshot_every}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.reach is not None and (int(self.reach) != self.reach or self.reach < 1):
            raise ValueError(f"reach must be a positive integer, got {self.reach}")
        object.__setattr__(self, "snapshot_times", tuple(sorted(float(t) for t in self.snapshot_times)))


@dataclass
class Trajectory:
    snapshots: list = dc_field(default_factory=list)
    metrics: list = dc_field(default_factory=list)

    @property
    def times(self) -> list[float]:
        return [s.time for s in self.snapshots]

    @property
    def final(self) -> ScalarField:
        return self.snapshots[-1]

    def nearest(self, t: float) -> ScalarField:
        times = np.asarray(self.times)
        return self.snapshots[int(np.argmin(np.abs(times - t)))]

    def write_metrics(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(METRIC_COLUMNS)
            for row in self.metrics:
                w.writerow([row["step"]] + [repr(float(row[c])) for c in METRIC_COLUMNS[1:]])


# ------------------------------------------------------------------ operator

class _Differ:
    """Coordinate differences of a field using a reusable padded buffer."""

    def __init__(self, grid: Grid, far_field):
        self.grid, self.far = grid, far_field
        self.buf = np.empty(tuple(c + 2 for c in grid.shape))
        n = grid.ndim
        self.core = tuple(slice(1, -1) for _ in range(n))

    def _fill(self, u):
        b = self.buf
        b[self.core] = u
        n = u.ndim
        for ax in range(n):
            lo = [slice(None)] * n
            hi = [slice(None)] * n
            lo[ax], hi[ax] = 0, -1
            if self.far is None:
                # odd reflection: linear extrapolation through the edge node
                e1 = [slice(None)] * n
                e2 = [slice(None)] * n
                m1 = [slice(None)] * n
                m2 = [slice(None)] * n
                e1[ax], e2[ax], m1[ax], m2[ax] = 1, 2, -2, -3
                b[tuple(lo)] = 2.0 * b[tuple(e1)] - b[tuple(e2)]
                b[tuple(hi)] = 2.0 * b[tuple(m1)] - b[tuple(m2)]
            else:
                b[tuple(lo)] = self.far
                b[tuple(hi)] = self.far

    def _shift(self, offsets):
        b = self.buf
        return b[tuple(slice(1 + o, b.shape[a] - 1 + o) for a, o in enumerate(offsets))]

    def derivatives(self, u):
        self._fill(u)
        n = self.grid.ndim
        h = self.grid.spacing
        grad = [None] * n
        hess = [[None] * n for _ in range(n)]
        e = [0] * n
        for k in range(n):
            e[k] = 1
            plus = self._shift(e)
            e[k] = -1
            minus = self._shift(e)
            e[k] = 0
            grad[k] = (plus - minus) * (0.5 / h[k])
            d = plus + minus
            d -= 2.0 * u
            d *= 1.0 / (h[k] * h[k])
            hess[k][k] = d
        for k in range(n):
            for l in range(k + 1, n):
                e[k], e[l] = 1, 1
                d = self._shift(e).copy()
                e[l] = -1
                d -= self._shift(e)
                e[k] = -1
                d += self._shift(e)
                e[l] = 1
                d -= self._shift(e)
                e[k] = e[l] = 0
                d *= 1.0 / (4.0 * h[k] * h[l])
                hess[k][l] = hess[l][k] = d
        return grad, hess


class FlowOperator:
    """Right-hand side of the explicit scheme on a fixed grid."""

    def __init__(self, grid: Grid, g: grp.GroupSpec, eps: float, rho: float, sigma: float,
                 far_field, rows=None):
        self.grid, self.group = grid, g
        self.rho, self.sigma = float(rho), float(sigma)
        t: FrameTables = frame_tables(grid, g, float(eps), "left")
        self.tables = t
        self.rows = list(t.rows if rows is None else rows)
        n = g.n
        self.n = n
        a = t.a
        # B = a^T a restricted to rows, kept sparse in (k, l)
        self.B = {}
        for k in range(n):
            for l in range(k, n):
                acc = None
                for i in self.rows:
                    if a[i][k] is not None and a[i][l] is not None:
                        term = a[i][k] * a[i][l]
                        acc = term if acc is None else acc + term
                if acc is not None:
                    self.B[k, l] = acc
        self.s = {}
        self.S = {}
        if t.has_sym:
            for k in range(n):
                acc = None
                for i in self.rows:
                    c = t.sym[i][i][k]
                    if c is not None:
                        acc = c if acc is None else acc + c
                if acc is not None:
                    self.s[k] = acc
                for i in self.rows:
                    for j in self.rows:
                        c = t.sym[i][j][k]
                        if c is not None:
                            self.S[i, j, k] = c
        self.differ = _Differ(grid, far_field)

    def gradient(self, grad):
        return {i: self.tables.apply(i, grad) for i in self.rows}

    def evaluate(self, u):
        """Returns (F, |xi|^2, coordinate gradient) for node values ``u``."""
        grad, hess = self.differ.derivatives(u)
        xi = self.gradient(grad)
        n = self.n
        tmp = np.empty(u.shape)
        norm2 = np.zeros(u.shape)
        for x in xi.values():
            np.multiply(x, x, out=tmp)
            norm2 += tmp
        a = self.tables.a
        zeta = []
        for k in range(n):
            acc = None
            for i in self.rows:
                c = a[i][k]
                if c is None:
                    continue
                term = xi[i] if _is_one(c) else c * xi[i]
                if acc is None:
                    acc = term.copy() if term is xi[i] else term
                else:
                    acc += term
            zeta.append(acc)

        trace = np.zeros(u.shape)
        for (k, l), b in self.B.items():
            if _is_one(b) and k == l:
                trace += hess[k][l]
            else:
                np.multiply(b if k == l else 2.0 * b, hess[k][l], out=tmp)
                trace += tmp
        for k, c in self.s.items():
            np.multiply(c, grad[k], out=tmp)
            trace += tmp

        quad = np.zeros(u.shape)
        for k in range(n):
            zk = zeta[k]
            if zk is None:
                continue
            # zeta_k * (H zeta)_k over l >= k, off-diagonal doubled
            row = np.multiply(zk, hess[k][k])
            for l in range(k + 1, n):
                if zeta[l] is not None:
                    np.multiply(zeta[l], hess[k][l], out=tmp)
                    tmp *= 2.0
                    row += tmp
            row *= zk
            quad += row
        for (i, j, k), c in self.S.items():
            np.multiply(xi[i], xi[j], out=tmp)
            tmp *= grad[k]
            tmp *= c
            quad += tmp

        if self.sigma:
            trace *= 1.0 + self.sigma
        norm2_rho = norm2 + self.rho
        quad /= norm2_rho
        trace -= quad
        return trace, norm2, grad


class MonotoneOperator:
    """Positive-coefficient form of the same right-hand side.

    P = (1 + sigma) sum_i w_i w_i^T + (1 + sigma - theta) nu nu^T with
    w_i = e_i - nu_i nu, nu = xi/|xi| and theta = |xi|^2/(|xi|^2 + rho).
    Each direction w is mapped to coordinates, c = a^T w, and D_c^2 u is a
    second difference reaching ``reach`` cells along the dominant axis of c,
    with multilinear interpolation off the grid. First-order terms are
    upwinded. Under the CFL bound every update is a convex combination of
    old values, so the discrete maximum principle holds exactly.
    """

    def __init__(self, grid: Grid, g: grp.GroupSpec, eps: float, rho: float, sigma: float,
                 far_field, rows=None, reach=None):
        self.grid, self.group = grid, g
        self.rho, self.sigma, self.far = float(rho), float(sigma), far_field
        self.reach = int(reach) if reach is not None else max(1, math.ceil(math.sqrt(g.n)))
        w = frame_weights(g, eps)
        self.rows = [i for i in range(g.n) if w[i] != 0] if rows is None else list(rows)
        pts = grid.points().reshape(-1, g.n)
        a = grp.left_frame(g, pts) * w[:, None]
        self.a = np.ascontiguousarray(a[:, self.rows, :])
        self.has_sym = g.step > 2
        if self.has_sym:
            t = grp.frame_second_order(g, pts) * (w[:, None] * w[None, :])[..., None]
            t = t[:, self.rows][:, :, self.rows]
            self.S = np.ascontiguousarray(0.5 * (t + t.transpose(0, 2, 1, 3)))
        else:
            self.S = np.zeros((1, 1, 1, 1))
        self.ar = np.ascontiguousarray(grp.right_frame(g, pts)[:, :g.m, :])
        self.shape = np.asarray(grid.shape, dtype=np.int64)
        self.h = np.asarray(grid.spacing, dtype=float)
        padded = tuple(c + 2 * self.reach for c in grid.shape)
        st = np.ones(g.n, dtype=np.int64)
        for k in range(g.n - 2, -1, -1):
            st[k] = st[k + 1] * padded[k + 1]
        self.pstr = st
        self._buf = None

    def _pad(self, u, buf=None):
        if self.far is None:
            return np.pad(u, self.reach, mode="reflect", reflect_type="odd")
        if buf is None:
            return np.pad(u, self.reach, mode="constant", constant_values=self.far)
        # the halo of a reused buffer already holds the far field
        buf[(slice(self.reach, -self.reach),) * u.ndim] = u
        return buf

    def _run(self, u, frozen, dt, keep, tau):
        from . import _kernels

        if self._buf is None and self.far is not None:
            self._buf = np.full(tuple(c + 2 * self.reach for c in u.shape), self.far)
        up = self._pad(u, self._buf).reshape(-1)
        if frozen is None:
            uc = up
        elif isinstance(frozen, ScalarField) and frozen.far_field is not None:
            uc = np.pad(frozen.values, self.reach, mode="constant", constant_values=frozen.far_field).reshape(-1)
        else:
            uc = self._pad(getattr(frozen, "values", frozen)).reshape(-1)
        out = np.empty(u.size)
        kern = _kernels.level_set_kernel(self.group.n, self.a.shape[1], self.ar.shape[1], self.has_sym)
        lip2, nmask, lo, hi, bad = kern(up, uc, self.shape, self.pstr, self.reach, self.h, self.a, self.S,
                                        self.rho, self.sigma, float(self.reach), self.ar, float(dt),
                                        float(keep), float(tau) ** 2, out)
        stats = {"sup": float(hi), "inf": float(lo), "lip_right": float(np.sqrt(lip2)),
                 "mask_fraction": nmask / u.size}
        return out.reshape(u.shape), stats, bad == 0

    def evaluate(self, u, frozen=None):
        """F at every node.

        With ``frozen`` (an array, or a ScalarField carrying its own far
        field) the directions and weights come from that field instead of
        ``u``, so the map u -> u + dt F is linear with non-negative weights.
        """
        return self._run(u, frozen, 1.0, 0.0, 0.0)[0]

    def step(self, u, dt, tau):
        """(u + dt F, metrics of u, whether u + dt F is finite)."""
        return self._run(u, None, dt, 1.0, tau)

    def min_diagonal(self, u, dt) -> float:
        """Smallest weight of u(x) in u + dt F; non-negative means a monotone step."""
        from . import _kernels

        grad, _ = _Differ(self.grid, self.far).derivatives(u)
        G = np.ascontiguousarray(np.stack([gk.reshape(-1) for gk in grad], axis=-1))
        return float(_kernels.diagonal_weight(self.shape, self.h, self.a, self.S, self.has_sym,
                                              self.rho, self.sigma, float(self.reach), dt, G))


@dataclass
class _Engine:
    op: object
    right: FrameTables | None
    tau: float

    def step(self, u, dt):
        """(u + dt F, metrics of u, whether u + dt F is finite)."""
        if isinstance(self.op, MonotoneOperator):
            return self.op.step(u, dt, self.tau)
        rhs, norm2, grad = self.op.evaluate(u)
        lip2 = np.zeros(u.shape)
        for i in range(self.op.group.m):
            x = self.right.apply(i, grad)
            lip2 += x * x
        new = u + dt * rhs
        stats = {"sup": float(u.max()), "inf": float(u.min()), "lip_right": float(np.sqrt(lip2.max())),
                 "mask_fraction": float(np.mean(norm2 < self.tau * self.tau))}
        return new, stats, bool(np.all(np.isfinite(new)))


def _engine(grid, g, params: FlowParams, far_field, graph=False, tau=None):
    if graph:
        eps, rho, sigma, rows = 0.0, 1.0, 0.0, list(range(g.m))
    else:
        eps, rho, sigma, rows = params.eps, params.delta, params.sigma, None
    if params.scheme == "monotone":
        op, right = MonotoneOperator(grid, g, eps, rho, sigma, far_field, rows=rows, reach=params.reach), None
    else:
        op = FlowOperator(grid, g, eps, rho, sigma, far_field, rows=rows)
        right = frame_tables(grid, g, 1.0, "right")
    return _Engine(op, right, grid.hmax if tau is None else tau)


# ---------------------------------------------------------------- public API

def cfl_dt(grid: Grid, g: grp.GroupSpec, params: FlowParams, field: ScalarField | None = None) -> float:
    """cfl_factor * min h^2 / (n L^2 (1 + sigma)), L = max |a^eps_ik| over the box."""
    if grid.size == 0:
        raise ValueError("empty grid")
    if field is not None and not np.all(np.isfinite(field.values)):
        raise FlowError("field has non-finite values")
    tables = frame_tables(grid, g, float(params.eps), "left")
    L = max(tables.coeff_bound, 1.0)
    return params.cfl_factor * grid.hmin ** 2 / (g.n * L * L * (1.0 + params.sigma))


def _advance(field: ScalarField, eng: _Engine, dt: float, step: int | None):
    new, stats, finite = eng.step(field.values, dt)
    if not finite:
        where = "" if step is None else f" at step {step}"
        raise FlowError(f"non-finite values{where} (t = {field.time!r})")
    return ScalarField._trusted(field.grid, new, field.far_field, field.time + dt), stats


def step_level_set(field: ScalarField, g: grp.GroupSpec, params: FlowParams,
                   dt: float | None = None, step: int | None = None) -> ScalarField:
    """One explicit Euler step of the eps/delta (and sigma) regularised flow."""
    dt = cfl_dt(field.grid, g, params, field) if dt is None else dt
    eng = _engine(field.grid, g, params, field.far_field)
    return _advance(field, eng, dt, step)[0]


def step_graph_flow(field: ScalarField, g: grp.GroupSpec, params: FlowParams,
                    dt: float | None = None, step: int | None = None) -> ScalarField:
    """One explicit step of dU/dt = sum_ij (delta_ij - X_iU X_jU/(1+|grad_0 U|^2)) X_iX_jU."""
    graph_params = replace(params, eps=0.0, sigma=0.0)
    dt = cfl_dt(field.grid, g, graph_params, field) if dt is None else dt
    eng = _engine(field.grid, g, params, field.far_field, graph=True)
    return _advance(field, eng, dt, step)[0]


def lipschitz_seminorm(field: ScalarField, g: grp.GroupSpec, frame: str = "right") -> float:
    """max over nodes of |(X~_1 u, ..., X~_m u)| by central differences."""
    if frame != "right":
        raise ValueError("only the right frame is supported")
    grad, _ = _Differ(field.grid, field.far_field).derivatives(field.values)
    tables = frame_tables(field.grid, g, 1.0, "right")
    norm2 = np.zeros(field.grid.shape)
    for i in range(g.m):
        x = tables.apply(i, grad)
        norm2 += x * x
    return float(np.sqrt(norm2.max()))


def _metrics_row(step, field, dt, stats):
    return {"step": step, "t": field.time, "dt": dt, **stats}


def run_flow(initial: ScalarField, g: grp.GroupSpec, params: FlowParams,
             graph: bool = False, tau: float | None = None, stop_when_extinct: bool = False) -> Trajectory:
    """Evolve ``initial`` to ``params.t_end``.

    Snapshots are kept at t = 0, every ``snapshot_every`` steps, at each of
    ``snapshot_times`` and at ``t_end``. One metrics row is recorded per step
    (for the field entering the step) plus one for the final field.

    With ``stop_when_extinct`` the run ends at the first step after which u
    has no sign change (empty zero level set). Under the monotone scheme each
    step is a convex combination of old values, so min and max are monotone
    and the level set cannot reappear.
    """
    if stop_when_extinct and params.scheme != "monotone":
        raise ValueError("stop_when_extinct relies on the monotone scheme")
    if graph:
        params = replace(params, eps=0.0, sigma=0.0)
    eng = _engine(initial.grid, g, params, initial.far_field, graph=graph, tau=tau)
    dt0 = cfl_dt(initial.grid, g, params, initial)
    targets = [t for t in params.snapshot_times if initial.time < t < params.t_end] + [params.t_end]
    traj = Trajectory([initial], [])
    u = initial
    step = 0
    ti = 0
    while ti < len(targets):
        target = targets[ti]
        dt = dt0
        forced = False
        if u.time + dt >= target - 1e-12 * max(1.0, target):
            dt = target - u.time
            forced = True
        new, stats = _advance(u, eng, dt, step)
        traj.metrics.append(_metrics_row(step, u, dt, stats))
        step += 1
        if forced:
            new.time = target
            ti += 1
        u = new
        extinct = stop_when_extinct and (u.values.min() >= 0.0 or u.values.max() < 0.0)
        if forced or extinct or step % params.snapshot_every == 0:
            traj.snapshots.append(u)
        if extinct:
            break
    traj.metrics.append(_metrics_row(step, u, 0.0, eng.step(u.values, 0.0)[1]))
    return traj


# --------------------------------------------------------- schedules, checks

@dataclass
class CauchyReport:
    rows: list = dc_field(default_factory=list)  # dicts k, eps, delta, t, d

    @property
    def d(self) -> list[float]:
        """d_k = max over compared times of the interior sup difference."""
        out = {}
        for r in self.rows:
            out[r["k"]] = max(out.get(r["k"], 0.0), r["d"])
        return [out[k] for k in sorted(out)]

    def write(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "eps", "delta", "t", "d"])
            for r in self.rows:
                w.writerow([r["k"], repr(r["eps"]), repr(r["delta"]), repr(r["t"]), repr(r["d"])])


def check_schedule(schedule) -> None:
    sched = [(float(e), float(d)) for e, d in schedule]
    if not sched:
        raise ScheduleError("empty schedule")
    for e, d in sched:
        if e < 0 or not d > 0:
            raise ScheduleError(f"bad schedule entry (eps={e}, delta={d})")
    ratios = [e / d for e, d in sched]
    for k in range(1, len(sched)):
        r0, r1 = ratios[k - 1], ratios[k]
        # a flat zero ratio is allowed: eps = 0 throughout
        if not (r1 < r0 or r0 == r1 == 0.0):
            raise ScheduleError(f"eps_k/delta_k must decrease strictly; entry {k} has {r1!r} after {r0!r}")
        if not sched[k][1] < sched[k - 1][1]:
            raise ScheduleError(f"delta_k must decrease strictly; entry {k}")


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("CMCF_THREADS", "1")))
    except ValueError:
        return 1


def vanishing_viscosity_run(initial: ScalarField, g: grp.GroupSpec, schedule, base: FlowParams,
                            interior: int = 2):
    """Runs u^{eps_k, delta_k} for each schedule entry and compares neighbours.

    Differences are taken at the coarser run's snapshot times against the
    finer run's nearest snapshot, over nodes at least ``interior`` away
    from the boundary. Runs execute on ``CMCF_THREADS`` threads.
    """
    check_schedule(schedule)
    params = [replace(base, eps=float(e), delta=float(d)) for e, d in schedule]
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        trajs = list(pool.map(lambda p: run_flow(initial, g, p), params))
    core = initial.grid.interior(interior)
    report = CauchyReport()
    for k in range(len(trajs) - 1):
        for snap in trajs[k].snapshots:
            other = trajs[k + 1].nearest(snap.time)
            d = float(np.max(np.abs(snap.values[core] - other.values[core])))
            report.rows.append({"k": k + 1, "eps": params[k].eps, "delta": params[k].delta,
                                "t": snap.time, "d": d})
    return trajs, report


@dataclass
class ComparisonReport:
    violation: float
    at_step: int
    steps: int
    initial_gap: float


def comparison_check(f: ScalarField, g_data: ScalarField, g: grp.GroupSpec, params: FlowParams,
                     graph: bool = False, frozen: bool = False) -> ComparisonReport:
    """Evolves both data with identical steps; reports max(u_f - u_g, 0) over all steps.

    With ``frozen`` the second solution is stepped with the coefficients of
    the first (monotone scheme only), which isolates the positivity of the
    stencil from the dependence of the coefficients on the solution.
    """
    if f.grid != g_data.grid:
        raise ValueError("f and g must share a grid")
    if frozen and params.scheme != "monotone":
        raise ValueError("frozen comparison needs the monotone scheme")
    if graph:
        params = replace(params, eps=0.0, sigma=0.0)
    ef = _engine(f.grid, g, params, f.far_field, graph=graph)
    eg = _engine(g_data.grid, g, params, g_data.far_field, graph=graph)
    dt0 = cfl_dt(f.grid, g, params, f)
    gap = float(np.max(f.values - g_data.values))
    worst, at = 0.0, 0
    uf, ug = f, g_data
    step = 0
    while uf.time < params.t_end - 1e-12 * max(1.0, params.t_end):
        dt = min(dt0, params.t_end - uf.time)
        if frozen:
            rhs = eg.op.evaluate(ug.values, frozen=uf)
            ug = ScalarField(ug.grid, ug.values + dt * rhs, ug.far_field, ug.time + dt)
        else:
            ug = _advance(ug, eg, dt, step)[0]
        uf = _advance(uf, ef, dt, step)[0]
        step += 1
        v = float(np.max(uf.values - ug.values))
        if v > worst:
            worst, at = v, step
    return ComparisonReport(max(worst, 0.0), at, step, gap)


def max_principle_violation(traj: Trajectory, initial: ScalarField) -> float:
    """Largest excursion of any recorded step outside [min f, max f]."""
    lo, hi = float(initial.values.min()), float(initial.values.max())
    if initial.far_field is not None:
        lo, hi = min(lo, initial.far_field), max(hi, initial.far_field)
    worst = 0.0
    for row in traj.metrics:
        worst = max(worst, row["sup"] - hi, lo - row["inf"])
    return worst
