"""Zero level sets of grid fields by edge interpolation."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import group as grp
from .fields import ScalarField


@dataclass
class LevelSetExtract:
    """Crossings of {u = 0} along grid edges.

    Row r is the edge from node ``cells[r]`` to its neighbour along
    ``axes[r]``; ``fractions[r]`` is the interpolated position on that edge
    and ``points[r]`` the crossing itself.
    """

    time: float
    cells: np.ndarray
    axes: np.ndarray
    fractions: np.ndarray
    points: np.ndarray

    def __len__(self) -> int:
        return int(self.axes.size)

    @property
    def empty(self) -> bool:
        return len(self) == 0

    def write(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            n = self.points.shape[1] if self.points.ndim == 2 else 0
            w.writerow(["cell", "axis", "fraction"] + [f"x{k + 1}" for k in range(n)])
            for c, a, f, p in zip(self.cells, self.axes, self.fractions, self.points):
                w.writerow([" ".join(str(int(v)) for v in c), int(a), repr(float(f))]
                           + [repr(float(v)) for v in p])


def extract_zero_level(field: ScalarField) -> LevelSetExtract:
    """Edges whose endpoints differ in the sign test u >= 0, linearly interpolated."""
    grid = field.grid
    u = field.values
    n = grid.ndim
    cells, axes, fracs, pts = [], [], [], []
    for k in range(n):
        lo = [slice(None)] * n
        hi = [slice(None)] * n
        lo[k], hi[k] = slice(0, -1), slice(1, None)
        ua, ub = u[tuple(lo)], u[tuple(hi)]
        hit = (ua >= 0) != (ub >= 0)
        idx = np.argwhere(hit)
        if idx.size == 0:
            continue
        a = ua[hit]
        b = ub[hit]
        theta = a / (a - b)
        x = np.asarray(grid.origin) + idx * np.asarray(grid.spacing)
        x[:, k] += theta * grid.spacing[k]
        cells.append(idx)
        axes.append(np.full(len(idx), k))
        fracs.append(theta)
        pts.append(x)
    if not cells:
        return LevelSetExtract(field.time, np.zeros((0, n), dtype=int), np.zeros(0, dtype=int),
                               np.zeros(0), np.zeros((0, n)))
    return LevelSetExtract(field.time, np.concatenate(cells), np.concatenate(axes),
                           np.concatenate(fracs), np.concatenate(pts))


@dataclass
class RadiusEstimate:
    time: float
    median: float
    mean: float
    count: int


def measure_radius(extract: LevelSetExtract, g: grp.GroupSpec) -> RadiusEstimate | None:
    """Median |x_H| over the crossings; None signals an empty (extinct) level set."""
    if extract.empty:
        return None
    r = np.linalg.norm(extract.points[:, :g.m], axis=1)
    return RadiusEstimate(extract.time, float(np.median(r)), float(np.mean(r)), int(r.size))


def right_gauge_separation(a: LevelSetExtract, b: LevelSetExtract, g: grp.GroupSpec,
                           max_points: int = 2000) -> float:
    """min over crossings x of a, y of b of |x y^{-1}|, on evenly thinned point sets."""
    if a.empty or b.empty:
        return float("nan")

    def thin(p):
        step = max(1, int(np.ceil(len(p) / max_points)))
        return p[::step]

    pa, pb = thin(a.points), thin(b.points)
    best = np.inf
    for x in pa:
        best = min(best, float(np.min(grp.right_distance(g, x, pb))))
    return best
