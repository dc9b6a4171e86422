"""Truncated flow domain: blade walls, slot walls, lid and the admissible wall data.

The slot is bounded by the two parallel walls ``S1`` (through the leading
edge ``A = (0, 0)``) and ``S2`` (through the trailing edge ``B = (a, b)``),
both inclined at ``theta``.  The upstream blade ``N1`` lies on ``y = 0``,
``x <= 0`` and the downstream blade ``N2`` on ``y = b``, ``x >= a``.  The
domain is cut by the lid ``N_L`` at ``y = L``, the inflow side ``sigma`` at
``x = -mu`` and the slot bottom ``S_mu`` at ``y = -mu``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import IntEnum

import numpy as np

from .errors import GeometryError


class BoundaryRole(IntEnum):
    """Node/point roles; the numeric order is the corner precedence."""

    N1 = 0
    S1 = 1
    N2 = 2
    S2 = 3
    Smu = 4
    SigmaLmu = 5
    NL = 6
    Interior = 7
    Outside = 8

    @property
    def is_wall(self) -> bool:
        return self < BoundaryRole.Interior


WALLS = tuple(r for r in BoundaryRole if r.is_wall)


@dataclass(frozen=True)
class DomainSpec:
    """Geometry and physics of one truncated injection problem.

    ``Q`` is the scaled flux ``Q0 / sqrt(rho_minus)``.  ``downstream`` is the
    x-position of the artificial outflow column; it defaults to ``a + mu``.
    """

    a: float
    b: float
    theta: float
    Q: float
    L: float
    mu: float
    rho_plus: float = 1.0
    rho_minus: float = 1.0
    downstream: float | None = None

    @property
    def cot(self) -> float:
        if abs(self.theta - math.pi / 2) < 1e-15:
            return 0.0
        return math.cos(self.theta) / math.sin(self.theta)

    @property
    def d2(self) -> float:
        """Slot width measured normal to the slot walls."""
        return self.a * math.sin(self.theta) - self.b * math.cos(self.theta)

    @property
    def x_out(self) -> float:
        return self.a + self.mu if self.downstream is None else self.downstream

    @property
    def x_left(self) -> float:
        """Leftmost point of the closed domain (sigma or the slot bottom)."""
        return min(-self.mu, -self.mu * self.cot)

    def with_(self, **changes) -> "DomainSpec":
        return replace(self, **changes)


def validate(spec: DomainSpec) -> DomainSpec:
    """Return ``spec`` unchanged if every invariant holds, else raise GeometryError."""
    checks = [
        ("BAD_A", spec.a > 0, "a must be positive"),
        ("BAD_B", spec.b >= 0, "b must be non-negative"),
        ("BAD_THETA", 0 < spec.theta <= math.pi / 2 + 1e-15, "theta must lie in (0, pi/2]"),
        ("SLOT_DEGENERATE", spec.d2 > 0, "a*sin(theta) - b*cos(theta) must be positive"),
        ("BAD_Q", spec.Q > 0, "Q must be positive"),
        ("BAD_L", spec.L > spec.b, "L must exceed b"),
        ("BAD_MU", spec.mu > 1, "mu must exceed 1"),
        ("BAD_DENSITY", spec.rho_plus > 0 and spec.rho_minus > 0, "densities must be positive"),
        ("BAD_DOWNSTREAM", spec.x_out > spec.a, "outflow column must lie right of the trailing edge"),
    ]
    for code, ok, message in checks:
        if not ok:
            raise GeometryError(code, message)
    return spec


def inside(spec: DomainSpec, x, y):
    """Membership of the open truncated domain (no downstream cut)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    mu, cot = spec.mu, spec.cot
    s2_x = (y - spec.b) * cot + spec.a
    upper = (y > spec.b) & (x > -mu)
    middle = (y > 0) & (y <= spec.b) & (x > -mu) & (x < s2_x)
    slot = (y <= 0) & (x > y * cot) & (x < s2_x)
    return (y > -mu) & (y < spec.L) & (upper | middle | slot)


def _band(s, tol, scale):
    if tol > 0:
        return (s > -tol) & (s <= tol)
    return np.abs(s) <= 1e-12 * scale


def _on_wall(spec: DomainSpec, role: BoundaryRole, x, y, tol: float):
    mu, cot, a, b, L = spec.mu, spec.cot, spec.a, spec.b, spec.L
    scale = max(1.0, abs(a), abs(b), L, mu)
    e = tol if tol > 0 else 1e-12 * scale
    steep = spec.theta >= math.pi / 4
    if role is BoundaryRole.N1:
        return _band(y, tol, scale) & (x >= -mu - e) & (x <= e)
    if role in (BoundaryRole.S1, BoundaryRole.S2):
        x_ref = 0.0 if role is BoundaryRole.S1 else a
        y_ref = 0.0 if role is BoundaryRole.S1 else b
        if steep:
            s = x - ((y - y_ref) * cot + x_ref)
            return _band(s, tol, scale) & (y >= -mu - e) & (y <= y_ref + e)
        tan = 1.0 / cot
        s = y - ((x - x_ref) * tan + y_ref)
        return _band(s, tol, scale) & (x >= x_ref - (mu + y_ref) * cot - e) & (x <= x_ref + e)
    if role is BoundaryRole.N2:
        return _band(y - b, tol, scale) & (x >= a - e)
    if role is BoundaryRole.Smu:
        return _band(y + mu, tol, scale) & (x >= -mu * cot - e) & (x <= a - (mu + b) * cot + e)
    if role is BoundaryRole.SigmaLmu:
        return _band(x + mu, tol, scale) & (y >= -e) & (y <= L + e)
    if role is BoundaryRole.NL:
        return _band(y - L, tol, scale) & (x >= -mu - e)
    raise ValueError(f"{role!r} is not a wall")


def classify_array(spec: DomainSpec, x, y, tol: float = 0.0) -> np.ndarray:
    """Vectorised :func:`classify`; returns ``BoundaryRole`` codes as int8.

    With ``tol > 0`` every point whose axis-aligned offset from a wall lies in
    ``(-tol, tol]`` takes that wall's tag (a digital line one grid cell thick).
    """
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    roles = np.full(x.shape, BoundaryRole.Outside, dtype=np.int8)
    roles[inside(spec, x, y)] = BoundaryRole.Interior
    for role in reversed(WALLS):
        roles[_on_wall(spec, role, x, y, tol)] = role
    return roles


def classify(spec: DomainSpec, point, tol: float = 0.0) -> BoundaryRole:
    x, y = point
    return BoundaryRole(int(classify_array(spec, x, y, tol)))


def wall_values(spec: DomainSpec, roles, x, y) -> np.ndarray:
    """Admissible-set wall data for arrays of wall roles (NaN elsewhere)."""
    roles = np.asarray(roles)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    mu, Q, L = spec.mu, spec.Q, spec.L
    out = np.full(np.broadcast(roles, x, y).shape, np.nan)
    # ramps held at their corner values for digital wall nodes just past -mu
    n1 = np.clip(L - (x + mu) * L, 0.0, L)
    s1 = np.clip(-Q + (y + mu) * Q, -Q, 0.0)
    out = np.where(roles == BoundaryRole.N1, n1, out)
    out = np.where(roles == BoundaryRole.S1, s1, out)
    for role in (BoundaryRole.N2, BoundaryRole.S2, BoundaryRole.Smu):
        out = np.where(roles == role, -Q, out)
    for role in (BoundaryRole.NL, BoundaryRole.SigmaLmu):
        out = np.where(roles == role, L, out)
    return out


def dirichlet_value(spec: DomainSpec, role: BoundaryRole, point) -> float:
    role = BoundaryRole(role)
    if not role.is_wall:
        raise GeometryError("NOT_A_WALL", f"{role.name} carries no Dirichlet data")
    x, y = point
    return float(wall_values(spec, role, x, y))


def wall_segments(spec: DomainSpec) -> dict:
    """Endpoints of each wall piece; open-ended walls stop at the outflow column."""
    mu, cot, a, b, L = spec.mu, spec.cot, spec.a, spec.b, spec.L
    far = max(spec.x_out, a) + 1.0
    return {
        BoundaryRole.N1: ((-mu, 0.0), (0.0, 0.0)),
        BoundaryRole.S1: ((-mu * cot, -mu), (0.0, 0.0)),
        BoundaryRole.N2: ((a, b), (far, b)),
        BoundaryRole.S2: ((a - (mu + b) * cot, -mu), (a, b)),
        BoundaryRole.Smu: ((-mu * cot, -mu), (a - (mu + b) * cot, -mu)),
        BoundaryRole.SigmaLmu: ((-mu, 0.0), (-mu, L)),
        BoundaryRole.NL: ((-mu, L), (far, L)),
    }


def segment_distance(p0, p1, x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    (x0, y0), (x1, y1) = p0, p1
    dx, dy = x1 - x0, y1 - y0
    t = ((x - x0) * dx + (y - y0) * dy) / (dx * dx + dy * dy)
    t = np.clip(t, 0.0, 1.0)
    return np.hypot(x - (x0 + t * dx), y - (y0 + t * dy))


def nearest_wall(spec: DomainSpec, x, y):
    """Role code and distance of the closest wall segment."""
    segs = wall_segments(spec)
    dists = np.stack([segment_distance(*segs[r], x, y) for r in WALLS])
    idx = np.argmin(dists, axis=0)
    codes = np.asarray([int(r) for r in WALLS], dtype=np.int8)[idx]
    return codes, np.min(dists, axis=0)
