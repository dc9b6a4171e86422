import math

import numpy as np
import pytest

from slotjet.geometry import BoundaryRole, DomainSpec
from slotjet.grid import Grid, GridField

ACCEPTANCE = []


def record(number, name, ok, detail):
    ACCEPTANCE.append((number, name, bool(ok), detail))


UNIT_MODULES = ("test_functional", "test_grid", "test_freeboundary", "test_closedform",
                "test_velocity", "test_geometry", "test_shooting")


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: full-solve acceptance checks (slow)")


def _unit_outcome(tr):
    """(passed, failed) counts of the unit and oracle modules in this session."""
    def mine(rep):
        return rep.when == "call" and any(f"/{m}.py" in "/" + rep.nodeid for m in UNIT_MODULES)
    passed = sum(mine(r) for r in tr.stats.get("passed", []))
    failed = sum(mine(r) for r in tr.stats.get("failed", []) + tr.stats.get("error", []))
    return passed, failed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    passed, failed = _unit_outcome(tr)
    for number, name, ok, detail in sorted(ACCEPTANCE):
        if number == 12:
            ok = ok and failed == 0 and passed > 0
            detail += f"; unit/oracle tests {passed} passed, {failed} failed"
        tr.write_line(f"[{'PASS' if ok else 'FAIL'}] {number:2d} {name}: {detail}")


def rectangle(values, iv=0.0, dx=0.1, x0=0.0, y0=0.0, free=None, spec=None):
    """Hand-made field on a rectangle; the outer ring is Dirichlet unless ``free`` says otherwise."""
    values = np.asarray(values, float)
    ny, nx = values.shape
    if free is None:
        free = np.zeros((ny, nx), bool)
        free[1:-1, 1:-1] = True
    roles = np.where(free, BoundaryRole.Interior, BoundaryRole.NL).astype(np.int8)
    spec = spec or DomainSpec(a=1.0, b=0.0, theta=math.pi / 2, Q=1.0, L=2.0, mu=2.0)
    lo = np.full(values.shape, -1e9)
    hi = np.full(values.shape, 1e9)
    wh = np.ones((ny, nx - 1))
    wv = np.ones((ny - 1, nx))
    ivs = np.broadcast_to(np.asarray(iv, float), (ny - 1, nx)).copy()
    return GridField(Grid(dx, x0, y0, nx, ny), spec, values.copy(), roles, lo, hi, wh, wv, ivs)


@pytest.fixture
def small_spec():
    return DomainSpec(a=1.0, b=0.2, theta=math.pi / 3, Q=0.6, L=2.0, mu=2.0)
