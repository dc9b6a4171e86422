"""Free streamline extraction and diagnostics on a converged field."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import grid as _grid
from .closedform import asymptotic_profile_array
from .errors import GridError, SlotJetError
from .functional import Coefficients
from .geometry import DomainSpec, nearest_wall
from .grid import GridField


class ExtractError(SlotJetError):
    pass


@dataclass
class FreeBoundaryCurve:
    """Monotone graph ``y = k(x)`` sampled on the grid columns with x > 0."""

    x: np.ndarray
    k: np.ndarray
    dx: float
    theta: float = math.pi / 2

    @property
    def samples(self):
        return list(zip(self.x.tolist(), self.k.tolist()))

    @property
    def fit_point(self) -> float:
        return float(self.k[0])

    @property
    def downstream_height(self) -> float:
        n = max(1, int(math.ceil(0.1 * len(self.k))))
        return float(np.mean(self.k[-n:]))

    @property
    def detachment(self) -> float:
        return detachment_slope(self, 4)

    def monotone(self, atol: float = 1e-9) -> bool:
        return bool(np.all(np.diff(self.k) >= -atol))

    def normals(self) -> np.ndarray:
        """Unit normals pointing into {psi > 0}, from the local slope."""
        s = np.gradient(self.k, self.x) if len(self.k) > 1 else np.zeros(1)
        n = np.stack([-s, np.ones_like(s)], axis=1)
        return n / np.linalg.norm(n, axis=1)[:, None]


def _column_crossing(col, act, ys, strict=True):
    """Zero crossing of one column; None if there is none.

    Non-strict mode returns the uppermost crossing (the lower edge of the
    positive region attached to the lid).
    """
    idx = np.where(act)[0]
    v = col[idx]
    neg = v < 0
    if not neg.any() or neg.all():
        return None
    # sign changes between consecutive active nodes (zeros count as the plus side)
    flips = np.where(neg[:-1] != neg[1:])[0]
    if len(flips) != 1 or not neg[flips[0]]:
        if strict:
            raise ExtractError("MULTI_CROSSING", "psi changes sign more than once in a column")
        flips = flips[neg[flips]]
        if not len(flips):
            return None
    j0, j1 = idx[flips[-1]], idx[flips[-1] + 1]
    p0, p1 = col[j0], col[j1]
    return ys[j0] + (ys[j1] - ys[j0]) * (-p0) / (p1 - p0)


def extract(fld: GridField, strict: bool = True) -> FreeBoundaryCurve:
    """Level line {psi = 0} over the columns x > 0, one crossing per column.

    With ``strict=False`` columns with several sign changes contribute their
    uppermost crossing instead of raising MULTI_CROSSING.
    """
    g = fld.grid
    xs, ys = g.xs, g.ys
    cols = np.where(xs > 1e-9 * g.dx)[0]
    out_x, out_k = [], []
    for i in cols:
        k = _column_crossing(fld.values[:, i], fld.active[:, i], ys, strict)
        if k is None:
            raise ExtractError("NO_CROSSING", f"no sign change in the column x={xs[i]:.6g}")
        out_x.append(xs[i])
        out_k.append(k)
    if not out_x:
        raise ExtractError("NO_CROSSING", "no column with x > 0")
    return FreeBoundaryCurve(np.array(out_x), np.array(out_k), g.dx, fld.spec.theta)


def fit_residual(curve: FreeBoundaryCurve) -> float:
    """Signed height of the interface start above the leading edge.

    Linear extrapolation of the first two samples to x = 0; positive when the
    interface detaches above A.
    """
    if len(curve.k) < 2:
        return curve.fit_point
    x1, x2 = curve.x[0], curve.x[1]
    k1, k2 = curve.k[0], curve.k[1]
    return float(k1 - x1 * (k2 - k1) / (x2 - x1))


def detachment_slope(curve: FreeBoundaryCurve, m: int = 4) -> float:
    """Least-squares slope of the first ``m`` samples (m >= 3)."""
    if m < 3:
        raise ValueError("need m >= 3")
    m = min(m, len(curve.k))
    x, k = curve.x[:m], curve.k[:m]
    A = np.stack([np.ones(m), x], axis=1)
    coef, *_ = np.linalg.lstsq(A, k, rcond=None)
    return float(coef[1])


@dataclass
class JumpStats:
    median: float
    p90: float
    n: int
    skipped: int
    values: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))


def exclusion_ok(spec: DomainSpec, x, y, dx: float, band: float = 3.0, eps_b: float = 3.0):
    """True where a point is at least ``band`` cells from every wall and
    ``eps_b`` cells from the trailing edge."""
    _, dist = nearest_wall(spec, np.asarray(x, float), np.asarray(y, float))
    db = np.hypot(np.asarray(x) - spec.a, np.asarray(y) - spec.b)
    return (dist >= band * dx - 1e-12) & (db >= eps_b * dx - 1e-12)


def jump_residual(fld: GridField, curve: FreeBoundaryCurve, lam: float,
                  x_max: float | None = None, band: float = 3.0) -> JumpStats:
    """Statistics of ``| |grad psi-|^2 - |grad psi+|^2 - lam |`` at the curve samples.

    Samples closer than ``band`` cells to a wall or to the trailing edge, or
    beyond ``x_max``, are ignored; samples with no one-sided stencil are
    skipped and counted.
    """
    sel = exclusion_ok(fld.spec, curve.x, curve.k, fld.dx, band, band)
    if x_max is not None:
        sel &= curve.x <= x_max
    res, skipped = [], 0
    for x, k in zip(curve.x[sel], curve.k[sel]):
        try:
            gm = _grid.gradient(fld, (x, k), "minus")
            gp = _grid.gradient(fld, (x, k), "plus")
        except GridError:
            skipped += 1
            continue
        jump = gm.gx**2 + gm.gy**2 - gp.gx**2 - gp.gy**2
        res.append(abs(jump - lam))
    r = np.array(res)
    if len(r) == 0:
        return JumpStats(math.nan, math.nan, 0, skipped, r)
    return JumpStats(float(np.median(r)), float(np.percentile(r, 90)), len(r), skipped, r)


@dataclass
class SandwichStats:
    lower: float
    upper: float
    count: int
    checked: int

    @property
    def ok(self) -> bool:
        return self.count == 0


def check_zone(spec: DomainSpec, X, Y):
    """Nodes away from the truncation ramps (x, y > -mu/2)."""
    return (X > -spec.mu / 2) & (Y > -spec.mu / 2)


def sandwich_check(fld: GridField, c: Coefficients, tol: float | None = None) -> SandwichStats:
    """Violations of ``L(y-h)/(L-h) - tol <= psi+ <= y + tol`` on nodes with y > 0."""
    spec = fld.spec
    tol = 3 * fld.dx * c.lam2 if tol is None else tol
    X, Y = fld.grid.mesh()
    sel = fld.active & (Y > 0) & check_zone(spec, X, Y)
    psi_p = np.maximum(fld.values[sel], 0.0)
    y = Y[sel]
    low = spec.L * (y - c.h) / (spec.L - c.h) - tol - psi_p
    up = psi_p - y - tol
    lo_v = float(max(low.max(initial=0.0), 0.0))
    up_v = float(max(up.max(initial=0.0), 0.0))
    return SandwichStats(lo_v, up_v, int(np.sum((low > 0) | (up > 0))), int(sel.sum()))


@dataclass
class AsymptoticStats:
    downstream: float
    upstream: float
    slot: float

    def max(self) -> float:
        return max(self.downstream, self.upstream, self.slot)


def asymptotics_check(fld: GridField, c: Coefficients, spec: DomainSpec | None = None,
                      frac: float = 0.1) -> AsymptoticStats:
    """Sup deviations from the three far-field profiles on outer bands.

    Downstream: the last ``frac`` of the columns with x > a.  Upstream: the
    ``frac`` of the upstream extent nearest ``x = -mu/2``.  Slot: the same for
    the slot depth around ``y = -mu/2``.  The outer halves next to the
    truncation ramps are excluded.
    """
    spec = fld.spec if spec is None else spec
    X, Y = fld.grid.mesh()
    act = fld.active
    mu = spec.mu
    width = frac * mu
    xo = spec.x_out
    down = act & (X >= xo - frac * (xo - spec.a)) & (Y > spec.b)
    up = act & (X <= -mu / 2) & (X > -mu / 2 - width) & (Y > 0)
    slot = act & (Y <= -mu / 2) & (Y > -mu / 2 - width)

    def dev(sel, region):
        if not sel.any():
            return 0.0
        ref = asymptotic_profile_array(spec, c, region, X[sel], Y[sel])
        return float(np.max(np.abs(fld.values[sel] - ref)))

    return AsymptoticStats(dev(down, "downstream"), dev(up, "upstream"), dev(slot, "slot"))


def monotone_y_violations(fld: GridField, atol: float = 1e-9) -> int:
    """Interior vertical neighbour pairs with psi(x, y+dx) < psi(x, y) - atol."""
    v = fld.values
    m = fld.mask
    pair = (m[1:, :] | m[:-1, :]) & fld.active[1:, :] & fld.active[:-1, :]
    return int(np.sum(pair & (v[1:, :] < v[:-1, :] - atol)))


def monotone_x_violations(fld: GridField, atol: float = 1e-9) -> int:
    """Horizontal neighbour pairs in y > 0 with psi increasing in x."""
    v = fld.values
    m = fld.mask
    Y = fld.grid.mesh()[1]
    pair = (m[:, 1:] | m[:, :-1]) & fld.active[:, 1:] & fld.active[:, :-1] & (Y[:, 1:] > 0)
    return int(np.sum(pair & (v[:, 1:] > v[:, :-1] + atol)))


def dump_curve(curve: FreeBoundaryCurve, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "k"])
        for x, k in zip(curve.x, curve.k):
            w.writerow([f"{x:.9g}", f"{k:.9g}"])


def dump_diagnostics(rows, path) -> None:
    """``name,value`` table; floats with 9 significant digits."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["name", "value"])
        for name, value in rows:
            if isinstance(value, float):
                value = f"{value:.9g}"
            w.writerow([name, value])
