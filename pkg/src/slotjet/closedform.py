"""Closed forms for the harmonic case (lambda = 0) and the far-field profiles."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError
from .geometry import DomainSpec, validate


@dataclass(frozen=True)
class HarmonicSolve:
    Q_star: float
    residual: float
    iterations: int
    exponent: float
    d2: float


def _bisect(f, lo, hi, max_iter=2000):
    """Root of a strictly decreasing ``f`` on (lo, hi); expands ``hi`` until f < 0."""
    it = 0
    while f(hi) > 0:
        hi *= 2.0
        it += 1
        if it > 200:
            raise ArithmeticError("no sign change")
    while f(lo) < 0 and lo > 1e-300:
        lo /= 2.0
        it += 1
    best = min((lo, hi), key=lambda t: abs(f(t)))
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        it += 1
        if mid <= lo or mid >= hi:
            break
        fm = f(mid)
        if abs(fm) < abs(f(best)):
            best = mid
        if fm == 0:
            break
        if fm > 0:
            lo = mid
        else:
            hi = mid
    return best, it


def _geom(a, b, theta):
    validate(DomainSpec(a=a, b=b, theta=theta, Q=1.0, L=b + 1.0, mu=2.0))
    return math.pi / theta, a * math.sin(theta) - b * math.cos(theta)


def truncated_relation(Q, a, b, theta, L):
    """``d2^p Q^(1-p) - L + (L-b)^p (L+Q)^(1-p)``, p = pi/theta; decreasing in Q."""
    p, d2 = _geom(a, b, theta)
    return d2**p * Q ** (1 - p) - L + (L - b) ** p * (L + Q) ** (1 - p)


def harmonic_flux_truncated(a: float, b: float, theta: float, L: float) -> HarmonicSolve:
    """Flux giving lambda = 0 in the domain truncated at height L."""
    if not L > b:
        raise GeometryError("BAD_L", "L must exceed b")
    p, d2 = _geom(a, b, theta)
    lp = p * math.log(d2)
    lq = p * math.log(L - b)

    # scaled by Q^(p-1) to keep the terms finite for large exponents
    def f(Q):
        return math.exp(lp) - L * Q ** (p - 1) + math.exp(lq) * (Q / (L + Q)) ** (p - 1)

    def g(Q):
        return truncated_relation(Q, a, b, theta, L)

    q, it = _bisect(f, min(d2, 1.0), max(d2, L, 1.0))
    return HarmonicSolve(q, abs(g(q)), it, p, d2)


def infinite_relation(Q, a, b, theta):
    """``(p-1) Q^p + b p Q^(p-1) - d2^p``, p = pi/theta; increasing in Q."""
    p, d2 = _geom(a, b, theta)
    return (p - 1) * Q**p + b * p * Q ** (p - 1) - d2**p


def harmonic_flux(a: float, b: float, theta: float) -> HarmonicSolve:
    """Flux giving lambda = 0 in the unbounded domain.

    Solves ``d2^p = (p-1) Q^p + b p Q^(p-1)``; for theta = pi (p = 1) the
    relation degenerates, which the geometry bounds exclude.
    """
    p, d2 = _geom(a, b, theta)

    def f(Q):
        return -infinite_relation(Q, a, b, theta)

    q, it = _bisect(f, 0.0 if p > 1 else 1e-12, max(d2, 1.0))
    return HarmonicSolve(q, abs(f(q)), it, p, d2)


REGIONS = ("downstream", "upstream", "slot")


def _profile(spec: DomainSpec, h: float, region: str, x, y):
    Q, L, b = spec.Q, spec.L, spec.b
    if region == "downstream":
        return np.where(y < h, Q * (y - h) / (h - b), L * (y - h) / (L - h))
    if region == "upstream":
        return np.asarray(y, dtype=float) + 0.0 * x
    if region == "slot":
        return Q * (y * math.cos(spec.theta) - x * math.sin(spec.theta)) / spec.d2
    raise ValueError(f"unknown region {region!r}")


def asymptotic_profile_array(spec: DomainSpec, coeffs, region: str, x, y) -> np.ndarray:
    """Vectorised far-field profile without band checks."""
    return _profile(spec, coeffs.h, region, np.asarray(x, float), np.asarray(y, float))


def asymptotic_profile(spec: DomainSpec, coeffs, region: str, point) -> float:
    """Far-field stream function in one of the three bands.

    downstream: ``Q(y-h)/(h-b)`` below h and ``L(y-h)/(L-h)`` above (needs
    x > a, b <= y <= L); upstream: ``y`` (x < 0, 0 <= y <= L); slot:
    ``Q(y cos - x sin)/d2`` (y < 0, between the slot walls).
    """
    x, y = point
    e = 1e-12 * max(1.0, spec.L, spec.mu)
    if region == "downstream":
        ok = x >= spec.a - e and spec.b - e <= y <= spec.L + e
    elif region == "upstream":
        ok = x <= e and -e <= y <= spec.L + e
    elif region == "slot":
        ok = (y <= e and x >= y * spec.cot - e
              and x <= (y - spec.b) * spec.cot + spec.a + e)
    else:
        raise ValueError(f"unknown region {region!r}")
    if not ok:
        raise GeometryError("REGION_MISMATCH", f"{point} is not in the {region} band")
    return float(_profile(spec, coeffs.h, region, x, y))
