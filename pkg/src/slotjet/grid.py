"""Uniform finite-difference grid over the truncated domain.

Values live on nodes ``values[j, i]`` at ``(x0 + i*dx, y0 + j*dx)``.  The
origin is chosen so that the leading edge ``A = (0, 0)`` is a node.  Oblique
walls are represented by a one-cell-thick digital line of Dirichlet nodes.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import geometry
from .errors import GridError
from .geometry import BoundaryRole, DomainSpec


@dataclass(frozen=True)
class Grid:
    dx: float
    x0: float
    y0: float
    nx: int
    ny: int

    @property
    def xs(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.nx)

    @property
    def ys(self) -> np.ndarray:
        return self.y0 + self.dx * np.arange(self.ny)

    def mesh(self):
        return np.meshgrid(self.xs, self.ys)

    def column(self, x: float) -> int:
        return int(round((x - self.x0) / self.dx))

    def row(self, y: float) -> int:
        return int(round((y - self.y0) / self.dx))


@dataclass
class GridField:
    """Stream-function samples with node roles, box bounds and edge weights.

    ``wh``/``wv`` are the quadrature weights of horizontal/vertical edges (0
    where an end node is outside, 1/2 on the natural outflow column) and
    ``iv`` is the fraction of each vertical edge's dual cell lying in x > 0.
    """

    grid: Grid
    spec: DomainSpec
    values: np.ndarray
    roles: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    wh: np.ndarray = field(repr=False)
    wv: np.ndarray = field(repr=False)
    iv: np.ndarray = field(repr=False)

    @property
    def mask(self) -> np.ndarray:
        """Free (interior) nodes."""
        return self.roles == BoundaryRole.Interior

    @property
    def active(self) -> np.ndarray:
        return self.roles != BoundaryRole.Outside

    @property
    def dirichlet(self) -> np.ndarray:
        return self.roles < BoundaryRole.Interior

    @property
    def dx(self) -> float:
        return self.grid.dx

    def copy(self) -> "GridField":
        return GridField(self.grid, self.spec, self.values.copy(), self.roles, self.lo,
                         self.hi, self.wh, self.wv, self.iv)

    def project(self) -> None:
        """Clip free values to their box; part of every mutation."""
        free = self.mask
        self.values[free] = np.clip(self.values[free], self.lo[free], self.hi[free])

    def box_ok(self, atol: float = 0.0) -> bool:
        act = self.active
        v = self.values[act]
        return bool(np.all(v >= self.lo[act] - atol) and np.all(v <= self.hi[act] + atol))


def _layout(spec: DomainSpec, dx: float) -> Grid:
    i0 = math.ceil(-spec.x_left / dx - 1e-9) + 1
    i1 = math.floor(spec.x_out / dx + 1e-9)
    j0 = math.ceil(spec.mu / dx - 1e-9) + 1
    j1 = math.ceil(spec.L / dx - 1e-9) + 1
    return Grid(dx=dx, x0=-i0 * dx, y0=-j0 * dx, nx=i0 + i1 + 1, ny=j0 + j1 + 1)


def _seal(spec: DomainSpec, roles: np.ndarray, X: np.ndarray, Y: np.ndarray) -> None:
    """Turn outside nodes touching an interior node into Dirichlet nodes."""
    interior = roles == BoundaryRole.Interior
    touch = np.zeros_like(interior)
    touch[:, 1:] |= interior[:, :-1]
    touch[:, :-1] |= interior[:, 1:]
    touch[1:, :] |= interior[:-1, :]
    touch[:-1, :] |= interior[1:, :]
    leak = touch & (roles == BoundaryRole.Outside)
    if leak.any():
        codes, _ = geometry.nearest_wall(spec, X[leak], Y[leak])
        roles[leak] = codes


def asymptotic_init(spec: DomainSpec, h: float, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Upstream ``y`` for x < 0, downstream two-layer profile for x >= 0, slot
    profile below the blade."""
    Q, L, b = spec.Q, spec.L, spec.b
    down = np.where(Y < h, Q * (Y - h) / (h - b), L * (Y - h) / (L - h))
    psi = np.where(X < 0, Y, down)
    slot = Q * (Y * math.cos(spec.theta) - X * math.sin(spec.theta)) / spec.d2
    return np.where(Y < 0, np.clip(slot, -Q, 0.0), psi)


def build(spec: DomainSpec, dx: float, h: float | None = None) -> GridField:
    """Sample the admissible set on a uniform grid of spacing ``dx``.

    ``h`` is the interface height used by the initial guess; by default the
    height belonging to ``lambda = 0``.
    """
    geometry.validate(spec)
    if dx <= 0 or dx > spec.d2 / 8 * (1 + 1e-12):
        raise GridError("GRID_TOO_COARSE", f"dx={dx} must not exceed d2/8={spec.d2 / 8}")
    grid = _layout(spec, dx)
    X, Y = grid.mesh()
    roles = geometry.classify_array(spec, X, Y, tol=dx / 2)
    _seal(spec, roles, X, Y)

    Q, L = spec.Q, spec.L
    eps = 1e-9 * dx
    lo = np.full(X.shape, -Q)
    hi = np.full(X.shape, L)
    lo[(X < -eps) & (Y > eps)] = 0.0
    hi[(X < -eps) & (Y < -eps)] = 0.0

    if h is None:
        from .functional import solve_height
        h = solve_height(0.0, Q, spec.b, L)
    values = np.zeros(X.shape)
    free = roles == BoundaryRole.Interior
    values[free] = asymptotic_init(spec, h, X, Y)[free]
    wall = roles < BoundaryRole.Interior
    values[wall] = geometry.wall_values(spec, roles[wall], X[wall], Y[wall])

    active = roles != BoundaryRole.Outside
    wh = (active[:, 1:] & active[:, :-1]).astype(float)
    wv = (active[1:, :] & active[:-1, :]).astype(float)
    outflow = free[:, -1]
    wv[:, -1] *= np.where(outflow[1:] | outflow[:-1], 0.5, 1.0)
    xs = grid.xs
    ind = np.where(xs > eps, 1.0, np.where(xs > -eps, 0.5, 0.0))
    iv = np.broadcast_to(ind, wv.shape).copy()

    fld = GridField(grid, spec, values, roles, lo, hi, wh, wv, iv)
    fld.project()
    return fld


def transfer(src: GridField, dst: GridField) -> GridField:
    """Warm-start ``dst`` by bilinear interpolation of ``src`` at free nodes."""
    out = dst.copy()
    X, Y = dst.grid.mesh()
    free = dst.mask
    vals = _bilinear(src, X[free], Y[free])
    ok = np.isfinite(vals)
    target = out.values[free]
    target[ok] = vals[ok]
    out.values[free] = target
    out.project()
    return out


def _bilinear(fld: GridField, px, py) -> np.ndarray:
    g = fld.grid
    px = np.atleast_1d(np.asarray(px, dtype=float))
    py = np.atleast_1d(np.asarray(py, dtype=float))
    fx = (px - g.x0) / g.dx
    fy = (py - g.y0) / g.dx
    i = np.clip(np.floor(fx).astype(int), 0, g.nx - 2)
    j = np.clip(np.floor(fy).astype(int), 0, g.ny - 2)
    tx = fx - i
    ty = fy - j
    act = fld.active
    num = np.zeros(px.shape)
    den = np.zeros(px.shape)
    for di, dj, w in ((0, 0, (1 - tx) * (1 - ty)), (1, 0, tx * (1 - ty)),
                      (0, 1, (1 - tx) * ty), (1, 1, tx * ty)):
        a = act[j + dj, i + di]
        num += np.where(a, w * fld.values[j + dj, i + di], 0.0)
        den += np.where(a, w, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 1e-12, num / np.where(den > 0, den, 1.0), np.nan)


def interpolate(fld: GridField, point) -> float:
    """Bilinear interpolation; only active nodes contribute."""
    g = fld.grid
    x, y = point
    xmax = g.x0 + (g.nx - 1) * g.dx
    ymax = g.y0 + (g.ny - 1) * g.dx
    tol = 1e-12 * g.dx
    if not (g.x0 - tol <= x <= xmax + tol and g.y0 - tol <= y <= ymax + tol):
        raise GridError("OUT_OF_HULL", f"point {point} outside the grid")
    val = float(_bilinear(fld, x, y)[0])
    if not math.isfinite(val):
        raise GridError("OUT_OF_HULL", f"point {point} has no active neighbour")
    return val


class Gradient(NamedTuple):
    gx: float
    gy: float
    order: int


def gradient(fld: GridField, point, phase: str, radius: float = 3.0) -> Gradient:
    """One-sided gradient from nodes of one sign only.

    A least-squares quadratic (second order) is fitted through the active
    nodes within ``radius`` cells whose value has the sign of ``phase``
    ('plus' -> psi > 0, 'minus' -> psi < 0); a linear fit (first order) is
    used when the quadratic is under-determined.
    """
    if phase not in ("plus", "minus"):
        raise ValueError("phase must be 'plus' or 'minus'")
    g = fld.grid
    x, y = point
    r = radius * g.dx
    i0 = max(int(math.floor((x - r - g.x0) / g.dx)), 0)
    i1 = min(int(math.ceil((x + r - g.x0) / g.dx)), g.nx - 1)
    j0 = max(int(math.floor((y - r - g.y0) / g.dx)), 0)
    j1 = min(int(math.ceil((y + r - g.y0) / g.dx)), g.ny - 1)
    vals = fld.values[j0:j1 + 1, i0:i1 + 1]
    act = fld.active[j0:j1 + 1, i0:i1 + 1]
    xs = g.xs[i0:i1 + 1][None, :] - x
    ys = g.ys[j0:j1 + 1][:, None] - y
    xs, ys = np.broadcast_arrays(xs, ys)
    sel = act & ((vals > 0) if phase == "plus" else (vals < 0)) & (xs**2 + ys**2 <= r * r + 1e-12)
    px, py, pv = xs[sel] / g.dx, ys[sel] / g.dx, vals[sel]
    if len(np.unique(np.round(px, 9))) < 2 or len(np.unique(np.round(py, 9))) < 2:
        raise GridError("NO_STENCIL", f"too few {phase} nodes near {point}")
    one = np.ones_like(px)
    for order, cols in ((2, [one, px, py, px * px, px * py, py * py]), (1, [one, px, py])):
        M = np.stack(cols, axis=1)
        if M.shape[0] < M.shape[1] or np.linalg.matrix_rank(M) < M.shape[1]:
            continue
        coef, *_ = np.linalg.lstsq(M, pv, rcond=None)
        return Gradient(coef[1] / g.dx, coef[2] / g.dx, order)
    raise GridError("NO_STENCIL", f"degenerate {phase} stencil near {point}")


def dump_csv(fld: GridField, path) -> None:
    """Write ``x,y,psi,role`` rows (active nodes, row-major, 9 significant digits)."""
    X, Y = fld.grid.mesh()
    act = fld.active
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "psi", "role"])
        for j in range(fld.grid.ny):
            for i in range(fld.grid.nx):
                if act[j, i]:
                    w.writerow([f"{X[j, i]:.9g}", f"{Y[j, i]:.9g}", f"{fld.values[j, i]:.9g}",
                                BoundaryRole(fld.roles[j, i]).name])


def load_csv(path):
    """Read a field dump back as flat arrays ``(x, y, psi, role_names)``."""
    xs, ys, ps, rs = [], [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            xs.append(float(row["x"]))
            ys.append(float(row["y"]))
            ps.append(float(row["psi"]))
            rs.append(row["role"])
    return np.array(xs), np.array(ys), np.array(ps), rs
