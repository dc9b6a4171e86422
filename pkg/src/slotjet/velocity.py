"""Velocity recovery from the stream function and the positivity check."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import grid as gr
from .errors import GridError
from .freeboundary import check_zone, exclusion_ok
from .geometry import DomainSpec
from .grid import GridField

PHASES = ("minus", "gamma", "plus")


@dataclass
class VelocityField:
    """Per-node velocity ``(u, v) = (psi_y, -psi_x) / sqrt(rho)``.

    ``phase`` is -1 where psi < 0 (injected fluid), +1 where psi > 0
    (mainstream) and 0 on the interface; ``valid`` marks nodes where a
    derivative could be formed.
    """

    x: np.ndarray
    y: np.ndarray
    u: np.ndarray
    v: np.ndarray
    phase: np.ndarray
    valid: np.ndarray
    rho_plus: float
    rho_minus: float


def _same_phase_block(sign, act, r):
    """Nodes whose (2r+1)^2 neighbourhood is active and of one sign."""
    ny, nx = sign.shape
    ok = act.copy()
    for dj in range(-r, r + 1):
        for di in range(-r, r + 1):
            sh = np.zeros_like(ok)
            src = (slice(max(dj, 0), ny + min(dj, 0)), slice(max(di, 0), nx + min(di, 0)))
            dst = (slice(max(-dj, 0), ny + min(-dj, 0)), slice(max(-di, 0), nx + min(-di, 0)))
            s_sh = np.zeros_like(sign)
            s_sh[dst] = sign[src]
            sh[dst] = act[src]
            ok &= sh & (s_sh == sign)
    return ok


def recover(fld: GridField, spec: DomainSpec | None = None) -> VelocityField:
    """Central differences two or more cells away from the interface,
    one-sided same-phase least squares next to it."""
    spec = fld.spec if spec is None else spec
    X, Y = fld.grid.mesh()
    psi = fld.values
    act = fld.active
    dx = fld.dx
    sign = np.sign(psi).astype(np.int8)
    u = np.full(psi.shape, np.nan)
    v = np.full(psi.shape, np.nan)
    central = _same_phase_block(sign, act, 2) & (sign != 0) & fld.mask
    gx = np.zeros(psi.shape)
    gy = np.zeros(psi.shape)
    gx[:, 1:-1] = (psi[:, 2:] - psi[:, :-2]) / (2 * dx)
    gy[1:-1, :] = (psi[2:, :] - psi[:-2, :]) / (2 * dx)
    rho = np.where(psi > 0, spec.rho_plus, spec.rho_minus)
    u[central] = gy[central] / np.sqrt(rho[central])
    v[central] = -gx[central] / np.sqrt(rho[central])
    for j, i in zip(*np.where(act & ~central & fld.mask)):
        phase = "plus" if psi[j, i] >= 0 else "minus"
        try:
            g = gr.gradient(fld, (X[j, i], Y[j, i]), phase, radius=2.5)
        except GridError:
            continue
        r = spec.rho_plus if phase == "plus" else spec.rho_minus
        u[j, i] = g.gy / math.sqrt(r)
        v[j, i] = -g.gx / math.sqrt(r)
    valid = np.isfinite(u) & np.isfinite(v)
    return VelocityField(X, Y, u, v, sign, valid, spec.rho_plus, spec.rho_minus)


@dataclass
class PositivityReport:
    u_bad: int
    v_bad: int
    u_checked: int
    v_checked: int
    u_min: float
    v_min: float

    @property
    def ok(self) -> bool:
        return self.u_bad == 0 and self.v_bad == 0


def positivity(vel: VelocityField, fld: GridField, band: float = 3.0,
               x_window: float | None = None) -> PositivityReport:
    """Count nodes with u <= 0 (anywhere checked) and v <= 0 (|x| <= x_window).

    Nodes within ``band`` cells of a wall or of the trailing edge, in the
    truncation zones (x or y below -mu/2) and in the downstream outflow band
    (last 10% of the columns past the trailing edge) are not checked.
    ``x_window`` defaults to 2a.
    """
    spec = fld.spec
    x_window = 2 * spec.a if x_window is None else x_window
    sel = vel.valid & fld.mask & check_zone(spec, vel.x, vel.y)
    sel &= vel.x < spec.x_out - 0.1 * (spec.x_out - spec.a)
    idx = np.where(sel)
    keep = exclusion_ok(spec, vel.x[idx], vel.y[idx], fld.dx, band, band)
    sel[idx] = keep
    sel_v = sel & (np.abs(vel.x) <= x_window)
    u, v = vel.u, vel.v
    return PositivityReport(int(np.sum(u[sel] <= 0)), int(np.sum(v[sel_v] <= 0)),
                            int(sel.sum()), int(sel_v.sum()),
                            float(u[sel].min(initial=math.inf)),
                            float(v[sel_v].min(initial=math.inf)))


def dump_csv(vel: VelocityField, path) -> None:
    """``x,y,u,v,phase`` rows for nodes with a velocity."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "u", "v", "phase"])
        ny, nx = vel.u.shape
        for j in range(ny):
            for i in range(nx):
                if vel.valid[j, i]:
                    w.writerow([f"{vel.x[j, i]:.9g}", f"{vel.y[j, i]:.9g}", f"{vel.u[j, i]:.9g}",
                                f"{vel.v[j, i]:.9g}", PHASES[int(vel.phase[j, i]) + 1]])
