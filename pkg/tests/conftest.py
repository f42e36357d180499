"""Shared solver fixtures; each expensive solve runs once per session."""

from __future__ import annotations

import pytest

from fraclayer import FracOrder, HalfStripMesh, continuation_in_s, make_nonlinearity, solve_layer, solve_radial

REF = {"X": 60.0, "Y": 40.0, "nx": 512, "ny": 256}

_ACCEPTANCE: dict[int, str] = {}


def ref_mesh(order: FracOrder, **changes) -> HalfStripMesh:
    return HalfStripMesh.for_order(order, **{**REF, **changes})


@pytest.fixture(scope="session")
def sine_pi():
    return make_nonlinearity("sine_pi")


@pytest.fixture(scope="session")
def cubic():
    return make_nonlinearity("cubic")


@pytest.fixture(scope="session")
def arctan_layer(sine_pi):
    """sine_pi layer at s = 1/2 on the reference mesh; exact trace (2/pi) arctan x."""
    order = FracOrder(0.5)
    return solve_layer(sine_pi, order, ref_mesh(order))


@pytest.fixture(scope="session")
def cubic_layer(cubic):
    order = FracOrder(0.5)
    return solve_layer(cubic, order, ref_mesh(order))


@pytest.fixture(scope="session")
def cubic_sweep(cubic):
    return continuation_in_s(cubic, [0.7, 0.8, 0.9, 0.95], REF)


@pytest.fixture(scope="session")
def ground_state():
    return make_nonlinearity("ground_state", p=2)


@pytest.fixture(scope="session")
def radial_bump(ground_state):
    order = FracOrder(0.5, 2)
    mesh = HalfStripMesh.for_order(order, 30.0, 30.0, 512, 256, radial=True)
    return solve_radial(ground_state, order, 2, mesh)


@pytest.fixture
def criterion():
    """Record one verdict line per acceptance criterion; printed in the terminal summary."""

    def record(number: int, title: str, passed: bool, detail: str) -> bool:
        _ACCEPTANCE[number] = f"CRITERION {number:2d} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
        print(_ACCEPTANCE[number])
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[k])
