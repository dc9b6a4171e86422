"""Continuous fit by bisection on the jump constant, and the lambda(Q) curve."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field as dfield

import numpy as np

from . import freeboundary as fb
from . import functional as fn
from . import grid as gr
from .errors import BracketError, SlotJetError
from .geometry import DomainSpec, validate

log = logging.getLogger(__name__)


@dataclass
class Evaluation:
    lam: float
    residual: float
    sweeps: int
    energy: float


@dataclass
class SolveReport:
    lambda_star: float
    h: float
    fit_residual: float
    dx: float
    energy: float
    sweeps: int
    coeffs: fn.Coefficients
    field: gr.GridField = dfield(repr=False)
    curve: fb.FreeBoundaryCurve = dfield(repr=False)
    history: list = dfield(default_factory=list, repr=False)
    traces: list = dfield(default_factory=list, repr=False)
    bracket: tuple = (math.nan, math.nan)
    monotone_scan: bool = True

    @property
    def ok(self) -> bool:
        return abs(self.fit_residual) <= self.dx

    def jump(self, x_max=None) -> fb.JumpStats:
        return fb.jump_residual(self.field, self.curve, self.lambda_star, x_max=x_max)

    @property
    def angle(self) -> float:
        return fb.detachment_slope(self.curve, 4)


def default_bracket(spec: DomainSpec) -> tuple:
    """Outer limits for the bracket search: far inside the range of the height map."""
    return (-(10.0 * spec.L / (spec.L - spec.b)) ** 2, spec.Q**2 * 1e3)


class _Evaluator:
    """Minimise + extract at a given lambda.

    Each evaluation starts from the far-field initial guess built with the
    height belonging to that lambda, so the residual is a function of lambda
    alone.  The energy is nonconvex and warm starts from another lambda can
    settle in a different local minimum.
    """

    def __init__(self, spec, dx, tol=None, max_sweeps=None, omega=None,
                 smoothing=fn.DEFAULT_SMOOTHING):
        self.spec, self.dx = spec, dx
        self.tol, self.max_sweeps, self.omega = tol, max_sweeps, omega
        self.smoothing = smoothing
        self.history: list[Evaluation] = []
        self.states: dict = {}
        self.traces: list = []

    def __call__(self, lam: float):
        if lam in self.states:
            return next(e.residual for e in self.history if e.lam == lam)
        c = fn.coefficients(lam, self.spec.Q, self.spec.b, self.spec.L)
        fld = gr.build(self.spec, self.dx, h=c.h)
        rep = fn.minimize(fld, c, tol=self.tol, max_sweeps=self.max_sweeps, omega=self.omega,
                          smoothing=self.smoothing)
        self.traces.append((lam, rep))
        curve = fb.extract(fld, strict=False)
        r = fb.fit_residual(curve)
        ev = Evaluation(lam, r, rep.sweeps, rep.energies[-1])
        self.history.append(ev)
        self.states[lam] = (fld, curve, c)
        log.debug("lambda=%.9g residual=%.6g sweeps=%d", lam, r, rep.sweeps)
        return r


def _expand(ev, guess, step, limits):
    """Walk from ``guess`` until the residual changes sign; residual decreases in lambda."""
    lo_lim, hi_lim = limits
    lam = min(max(guess, lo_lim), hi_lim)
    r = ev(lam)
    if r == 0:
        return lam, lam, r, r
    direction = 1.0 if r > 0 else -1.0
    prev, rprev = lam, r
    while True:
        nxt = prev + direction * step
        nxt = min(max(nxt, lo_lim), hi_lim)
        if nxt == prev:
            raise BracketError("BRACKET_INVALID", f"no sign change of the fit residual in "
                               f"[{lo_lim:.6g}, {hi_lim:.6g}]")
        rn = ev(nxt)
        if (rn > 0) != (rprev > 0) or rn == 0:
            if direction > 0:
                return prev, nxt, rprev, rn
            return nxt, prev, rn, rprev
        prev, rprev = nxt, rn
        step *= 2.0


def fit_lambda(spec: DomainSpec, dx: float, bracket=None, tol: float = 1e-3,
               fit_tol: float = 0.0, guess: float = 0.0, step: float = 0.25,
               minimize_tol=None, max_sweeps=None, omega=None,
               smoothing=fn.DEFAULT_SMOOTHING) -> SolveReport:
    """Jump constant for which the interface leaves the leading edge.

    With an explicit ``bracket`` both ends are evaluated and must give
    residuals of opposite sign; otherwise the bracket is found by walking
    from ``guess`` in steps that double.  Bisection then runs until the
    bracket is narrower than ``tol * max(1, |lambda|)`` or the residual is at
    most ``fit_tol``.  The final bracket end with the smaller residual is
    returned.
    """
    validate(spec)
    ev = _Evaluator(spec, dx, tol=minimize_tol, max_sweeps=max_sweeps, omega=omega,
                    smoothing=smoothing)
    if bracket is not None:
        lo, hi = float(bracket[0]), float(bracket[1])
        if not lo < hi:
            raise BracketError("BRACKET_INVALID", "bracket must satisfy lo < hi")
        rlo, rhi = ev(lo), ev(hi)
        if (rlo > 0) == (rhi > 0) and rlo != 0 and rhi != 0:
            raise BracketError("BRACKET_INVALID", f"residuals {rlo:.3g}, {rhi:.3g} share a sign")
        if rlo < rhi:
            lo, hi, rlo, rhi = hi, lo, rhi, rlo
    else:
        lo, hi, rlo, rhi = _expand(ev, guess, step, default_bracket(spec))

    # invariant: residual(lo) >= 0 >= residual(hi)
    while abs(hi - lo) > tol * max(1.0, abs(lo), abs(hi)):
        if min(abs(rlo), abs(rhi)) <= fit_tol:
            break
        mid = 0.5 * (lo + hi)
        rm = ev(mid)
        if rm >= 0:
            lo, rlo = mid, rm
        else:
            hi, rhi = mid, rm

    # the sign change lies inside [lo, hi]; pick the end nearer to a zero residual
    ends = {e.lam: e for e in ev.history if e.lam in (lo, hi)}
    best = min(ends.values(), key=lambda e: (abs(e.residual), e.residual < 0))
    fld, curve, c = ev.states[best.lam]
    scan = sorted(ev.history, key=lambda e: e.lam)
    mono = all(b.residual <= a.residual + 1e-12 for a, b in zip(scan, scan[1:]))
    if not mono:
        log.warning("fit residual is not monotone over the evaluated lambdas")
    return SolveReport(lambda_star=best.lam, h=c.h, fit_residual=best.residual, dx=dx,
                       energy=best.energy, sweeps=sum(e.sweeps for e in ev.history),
                       coeffs=c, field=fld, curve=curve, history=list(ev.history),
                       traces=ev.traces, bracket=(min(lo, hi), max(lo, hi)), monotone_scan=mono)


def solve(spec: DomainSpec, dx: float, levels: int | None = None, tol: float = 1e-3,
          guess: float = 0.0, **kw) -> SolveReport:
    """Fit with coarse-to-fine continuation.

    Coarser grids (dx doubled up to ``levels`` times, never coarser than
    d2/8) supply the starting lambda and the initial step of each finer level.
    """
    validate(spec)
    if levels is None:
        levels = 0
        while dx * 2 ** (levels + 1) <= spec.d2 / 8 * (1 + 1e-12) and levels < 3:
            levels += 1
    rep = None
    step = 0.25
    for k in range(levels, -1, -1):
        # a coarse level only needs a rough lambda
        t = tol if k == 0 else max(tol, 0.02)
        rep = fit_lambda(spec, dx * 2**k, tol=t, guess=guess, step=step, **kw)
        guess = rep.lambda_star
        step = max(t * max(1.0, abs(guess)), 2 * tol)
    return rep


@dataclass
class LambdaQCurve:
    samples: list = dfield(default_factory=list)  # (Q, lambda, h, fit_residual, jump_median)
    reports: list = dfield(default_factory=list, repr=False)

    @property
    def Q(self) -> np.ndarray:
        return np.array([s[0] for s in self.samples])

    @property
    def lam(self) -> np.ndarray:
        return np.array([s[1] for s in self.samples])

    @property
    def h(self) -> np.ndarray:
        return np.array([s[2] for s in self.samples])

    @property
    def kappa_estimate(self) -> float:
        return float(self.lam[-1] / self.Q[-1] ** 2)

    @property
    def lambda_under_estimate(self) -> float:
        return float(self.lam[0])

    def strictly_increasing(self) -> bool:
        return bool(np.all(np.diff(self.lam) > 0))


class TraceError(SlotJetError):
    def __init__(self, code, message="", partial=None):
        super().__init__(code, message)
        self.partial = partial


def trace(spec_base: DomainSpec, Q_list, dx: float, jump=True, **kw) -> LambdaQCurve:
    """lambda*(Q) over increasing fluxes; each fit starts from the previous one."""
    Q_list = [float(q) for q in Q_list]
    if len(Q_list) < 2:
        raise TraceError("NEED_TWO_POINTS", "a trace needs at least two fluxes")
    if any(b <= a for a, b in zip(Q_list, Q_list[1:])):
        raise TraceError("Q_NOT_INCREASING", "fluxes must be strictly increasing")
    out = LambdaQCurve()
    guess = kw.pop("guess", 0.0)
    for q in Q_list:
        spec = spec_base.with_(Q=q)
        try:
            rep = solve(spec, dx, guess=guess, **kw)
        except SlotJetError as exc:
            raise TraceError(exc.code, f"Q={q:.6g}: {exc}", partial=out) from exc
        jm = rep.jump().median if jump else math.nan
        out.samples.append((q, rep.lambda_star, rep.h, rep.fit_residual, jm))
        out.reports.append(rep)
        guess = rep.lambda_star
    return out


@dataclass
class KappaEstimate:
    kappa: float
    identity_gap: float
    ratio_change: float
    lambda_under: float


def estimate_kappa(curve: LambdaQCurve, L: float | None = None, b: float | None = None) -> KappaEstimate:
    """lambda/Q^2 at the largest flux, plus two consistency diagnostics.

    ``identity_gap`` is the mismatch in ``lambda/Q^2 + L^2/((L-h)^2 Q^2) =
    1/(h-b)^2`` (needs L, b), ``ratio_change`` the relative change of
    lambda/Q^2 between the two largest fluxes.
    """
    Q = curve.Q
    if len(Q) < 3 or Q[-1] < 4 * Q[0]:
        raise SlotJetError("INSUFFICIENT_SPAN", "need >= 3 samples spanning a factor >= 4")
    lam = curve.lam
    k1 = lam[-1] / Q[-1] ** 2
    k0 = lam[-2] / Q[-2] ** 2
    gap = math.nan
    if L is not None and b is not None:
        h = curve.h[-1]
        gap = abs(k1 + L * L / ((L - h) ** 2 * Q[-1] ** 2) - 1.0 / (h - b) ** 2)
    return KappaEstimate(float(k1), float(gap), float(abs(k1 - k0) / abs(k1)), float(lam[0]))


def dump_curve(curve: LambdaQCurve, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["Q", "lambda", "h", "fit_residual", "jump_median"])
        for row in curve.samples:
            w.writerow([f"{v:.9g}" for v in row])
