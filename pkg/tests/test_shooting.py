import math

import numpy as np
import pytest

from slotjet import shooting as sh
from slotjet.errors import BracketError, SlotJetError
from slotjet.geometry import DomainSpec

SPEC = DomainSpec(a=1.0, b=0.0, theta=math.pi / 2, Q=(1 + math.sqrt(17)) / 4, L=2.0, mu=2.5)
DX = 1 / 8


@pytest.fixture(scope="module")
def fitted():
    return sh.fit_lambda(SPEC, DX, tol=1e-3)


def test_fit_brackets_sign_change(fitted):
    r = fitted
    lo, hi = r.bracket
    assert hi - lo <= 1e-3 * max(1, abs(lo), abs(hi)) + 1e-15
    assert r.lambda_star in (lo, hi)
    assert abs(r.fit_residual) <= r.dx
    assert r.ok
    assert r.monotone_scan
    ends = {e.lam: e.residual for e in r.history}
    assert ends[lo] >= 0 >= ends[hi]


def test_residual_nonincreasing(fitted):
    h = sorted(fitted.history, key=lambda e: e.lam)
    assert all(b.residual <= a.residual + 1e-12 for a, b in zip(h, h[1:]))


def test_far_below_detaches_high():
    ev = sh._Evaluator(SPEC, DX)
    assert ev(-0.9) > 0
    assert ev(3.0) < 0


def test_deterministic(fitted):
    again = sh.fit_lambda(SPEC, DX, tol=1e-3)
    assert again.lambda_star == fitted.lambda_star
    assert np.array_equal(again.field.values, fitted.field.values)


def test_explicit_bracket():
    with pytest.raises(BracketError) as e:
        sh.fit_lambda(SPEC, DX, bracket=(1.0, 2.0))
    assert e.value.code == "BRACKET_INVALID"
    with pytest.raises(BracketError):
        sh.fit_lambda(SPEC, DX, bracket=(0.5, 0.5))
    r = sh.fit_lambda(SPEC, DX, bracket=(-0.5, 0.5), tol=0.05)
    assert -0.5 <= r.lambda_star <= 0.5


def test_default_bracket_limits():
    lo, hi = sh.default_bracket(SPEC)
    assert lo == -(10 * SPEC.L / (SPEC.L - SPEC.b)) ** 2 and hi == SPEC.Q**2 * 1e3


def test_report_extras(fitted):
    st = fitted.jump()
    assert st.n > 0 and math.isfinite(st.median)
    assert math.isfinite(fitted.angle)
    assert fitted.coeffs.h == fitted.h


def test_trace_errors():
    with pytest.raises(sh.TraceError) as e:
        sh.trace(SPEC, [1.0], DX)
    assert e.value.code == "NEED_TWO_POINTS"
    with pytest.raises(sh.TraceError) as e:
        sh.trace(SPEC, [1.0, 1.0], DX)
    assert e.value.code == "Q_NOT_INCREASING"
    with pytest.raises(sh.TraceError) as e:
        sh.trace(SPEC, [1.0, 2.0], DX, max_sweeps=2)
    assert e.value.code == "NOT_CONVERGED"
    assert e.value.partial is not None and e.value.partial.samples == []


def test_kappa_synthetic():
    cu = sh.LambdaQCurve([(q, 2 * q * q, 0.5, 0.0, 0.0) for q in (1.0, 2.0, 4.0)])
    k = sh.estimate_kappa(cu)
    assert k.kappa == 2.0 and k.ratio_change == 0.0 and k.lambda_under == 2.0
    assert cu.strictly_increasing() and cu.kappa_estimate == 2.0
    with pytest.raises(SlotJetError) as e:
        sh.estimate_kappa(sh.LambdaQCurve(cu.samples[:2]))
    assert e.value.code == "INSUFFICIENT_SPAN"


def test_kappa_identity():
    from slotjet.functional import coefficients
    Q, b, L = 3.0, 1.0, 6.0
    samples = []
    for q in (Q, 2 * Q, 4 * Q):
        c = coefficients(0.03 * q * q, q, b, L)
        samples.append((q, c.lam, c.h, 0.0, 0.0))
    k = sh.estimate_kappa(sh.LambdaQCurve(samples), L=L, b=b)
    assert k.identity_gap <= 1e-10


def test_dump_curve(tmp_path):
    cu = sh.LambdaQCurve([(1.0, -0.5, 0.5, 0.0, 0.01), (2.0, 0.5, 0.6, 0.0, 0.02)])
    sh.dump_curve(cu, tmp_path / "l.csv")
    assert (tmp_path / "l.csv").read_text().splitlines()[0] == "Q,lambda,h,fit_residual,jump_median"
