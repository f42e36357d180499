import math

import numpy as np
import pytest

from conftest import REF, ref_mesh
from fraclayer import (
    DomainError,
    FracOrder,
    HalfStripField,
    HalfStripMesh,
    continuation_in_s,
    hamiltonian_profile,
    make_nonlinearity,
    radial_hamiltonian,
    s_limit_split,
    solve_layer,
    verify_identity,
    verify_modica,
)
from fraclayer.grid import GridFunction
from fraclayer.profiles import LayerSolution, RadialSolution

GAP_SINE = 2 / math.pi**2  # G(0) - G(1) for sine_pi


def closed_form_arctan(mesh: HalfStripMesh) -> HalfStripField:
    """Harmonic extension of (2/pi) arctan x: (2/pi) arctan(x / (1 + y))."""
    return HalfStripField(mesh, (2 / math.pi) * np.arctan(mesh.x[:, None] / (1 + mesh.y[None, :])))


def truncated_arctan_H(x: np.ndarray, Y: float) -> np.ndarray:
    """1/2 int_0^Y (u_x^2 - u_y^2) for the closed-form field; the integrand is a y-derivative."""
    return (2 / math.pi**2) * (1 / (1 + x * x) - (1 + Y) / (x * x + (1 + Y) ** 2))


def constant_layer(s: float, value: float = 0.3) -> LayerSolution:
    order = FracOrder(s)
    mesh = ref_mesh(order, nx=64, ny=32)
    fld = HalfStripField(mesh, np.full(mesh.shape, value))
    trace = GridFunction(x0=mesh.x0, h=mesh.hx, values=fld.values[:, 0])
    return LayerSolution(trace, fld, order, False)


# ---------------------------------------------------------------- profile


def test_constant_field_has_zero_hamiltonian():
    order = FracOrder(0.4)
    mesh = ref_mesh(order, nx=64, ny=32)
    prof = hamiltonian_profile(HalfStripField(mesh, np.full(mesh.shape, 0.7)), order)
    # the x-stencil leaves round-off of order 1e-17, squared below
    assert np.max(np.abs(prof.partial)) <= 1e-30 and np.max(np.abs(prof.H)) <= 1e-30
    assert np.all(prof.y_part == 0) and np.max(prof.tail_bound) <= 1e-28


def test_closed_form_quadrature():
    order = FracOrder(0.5)
    mesh = ref_mesh(order)
    prof = hamiltonian_profile(closed_form_arctan(mesh), order)
    assert np.max(np.abs(prof.H - truncated_arctan_H(mesh.x, mesh.Y))) <= 1e-3
    # partial integrals along the column x = 0
    i = mesh.node_index(0.0)
    np.testing.assert_allclose(prof.partial[i], truncated_arctan_H(0.0, mesh.y), atol=1e-3)


def test_closed_form_identity_with_exact_tail():
    order = FracOrder(0.5)
    mesh = ref_mesh(order)
    prof = hamiltonian_profile(closed_form_arctan(mesh), order)
    x = mesh.x
    tail = (2 / math.pi**2) * (1 + mesh.Y) / (x * x + (1 + mesh.Y) ** 2)
    gap = make_nonlinearity("sine_pi").G((2 / math.pi) * np.arctan(x))
    assert np.max(np.abs(prof.H + tail - gap)) <= 1e-3
    # the reported bound covers the neglected part
    assert np.all(tail <= prof.tail_bound)


def test_profile_rejects_mismatched_order():
    order = FracOrder(0.5)
    mesh = ref_mesh(order, nx=16, ny=16)
    with pytest.raises(DomainError):
        hamiltonian_profile(HalfStripField(mesh, np.zeros(mesh.shape)), FracOrder(0.3))


def test_profile_parts_and_shapes(arctan_layer):
    prof = hamiltonian_profile(arctan_layer.field, arctan_layer.order)
    mesh = arctan_layer.mesh
    assert prof.partial.shape == mesh.shape
    np.testing.assert_array_equal(prof.partial[:, 0], 0.0)
    np.testing.assert_allclose(prof.H, prof.x_part - prof.y_part, atol=1e-15)
    assert np.all(np.isfinite(prof.tail_bound)) and np.all(prof.tail_bound >= 0)


# ---------------------------------------------------------------- identity


def test_arctan_layer_hamiltonian_vs_gap(arctan_layer, sine_pi):
    prof = hamiltonian_profile(arctan_layer.field, arctan_layer.order)
    gap = sine_pi.G(arctan_layer.trace.values) - sine_pi.g_ref
    assert np.max(np.abs(prof.H - gap)) <= 1e-3


def test_identity_arctan(arctan_layer, sine_pi):
    rep = verify_identity(arctan_layer, sine_pi)
    assert rep.gap_scale == pytest.approx(GAP_SINE, rel=1e-14)
    assert rep.relative <= 1e-2
    assert rep.g_asymmetry <= 1e-15


def test_identity_cubic(cubic_layer, cubic):
    rep = verify_identity(cubic_layer, cubic)
    assert rep.gap_scale == 0.25
    assert rep.relative <= 2e-2


@pytest.mark.parametrize("fixture", ["arctan_layer", "cubic_layer"])
def test_identity_holds_at_every_x(fixture, request):
    lay = request.getfixturevalue(fixture)
    nl = make_nonlinearity(lay.nonlinearity)
    rep = verify_identity(lay, nl)
    # residual nearly constant across x: its spread is well below the sup budget
    assert rep.spread <= 1e-3 * rep.gap_scale


@pytest.mark.parametrize("fixture", ["arctan_layer", "cubic_layer"])
def test_hamiltonian_even_for_odd_f(fixture, request):
    lay = request.getfixturevalue(fixture)
    H = hamiltonian_profile(lay.field, lay.order).H
    assert np.max(np.abs(H - H[::-1])) <= 1e-12


def test_far_field_vanishes(arctan_layer, sine_pi):
    prof = hamiltonian_profile(arctan_layer.field, arctan_layer.order)
    gap = sine_pi.G(arctan_layer.trace.values) - sine_pi.g_ref
    for k in (0, -1):
        assert abs(prof.H[k]) <= 5e-3 * GAP_SINE
        assert abs(gap[k]) <= 5e-3 * GAP_SINE


def test_tail_bound_is_honest(sine_pi, arctan_layer):
    order = FracOrder(0.5)
    tall = solve_layer(sine_pi, order, ref_mesh(order, Y=80.0, ny=512))
    short = hamiltonian_profile(arctan_layer.field, order)
    deep = hamiltonian_profile(tall.field, order)
    assert np.all(np.abs(deep.H - short.H) <= short.tail_bound)


# ---------------------------------------------------------------- Modica


def test_modica_bottom_row_is_gap(arctan_layer, sine_pi):
    rep = verify_modica(arctan_layer, sine_pi)
    gap = sine_pi.G(arctan_layer.trace.values) - sine_pi.g_ref
    np.testing.assert_array_equal(rep.margin[:, 0], gap)
    assert np.all(rep.margin[1:-1, 0] > 0)


def test_modica_arctan(arctan_layer, sine_pi):
    rep = verify_modica(arctan_layer, sine_pi)
    assert rep.passed()
    assert rep.min_margin >= -1e-3 * rep.gap_scale and rep.min_margin_core > 0


def test_modica_margin_at_the_lid_is_identity_residual(arctan_layer, sine_pi):
    rep = verify_modica(arctan_layer, sine_pi)
    ident = verify_identity(arctan_layer, sine_pi)
    np.testing.assert_allclose(rep.margin[:, -1], -ident.residual, atol=1e-15)
    assert np.max(np.abs(rep.margin[:, -1])) <= 1e-2 * rep.gap_scale


def test_modica_cubic_low_order(cubic):
    order = FracOrder(0.3)
    lay = solve_layer(cubic, order, ref_mesh(order))
    rep = verify_modica(lay, cubic)
    assert rep.passed() and rep.margin_min_y.shape == (lay.mesh.nx + 1,)


# ---------------------------------------------------------------- radial


def test_radial_bump_monotone(radial_bump, ground_state):
    rh = radial_hamiltonian(radial_bump, ground_state)
    assert rh.monotone_pass
    assert rh.slope_error <= 0.1
    assert np.all(rh.slope <= rh.tolerance)
    # the endpoint chain: G(0) >= G(v(0))
    assert rh.profile[0] - rh.profile[-1] >= 0
    v0 = radial_bump.profile.values[0]
    assert float(ground_state.G(np.array(0.0))) > float(ground_state.G(np.array(v0)))


def test_radial_zero_field_profile_is_constant():
    order = FracOrder(0.5, 2)
    mesh = HalfStripMesh.for_order(order, 10.0, 10.0, 32, 32, radial=True)
    fld = HalfStripField(mesh, np.zeros(mesh.shape))
    rad = RadialSolution(GridFunction(x0=0.0, h=mesh.hx, values=fld.values[:, 0]), fld, order, 2, "trivial")
    nl = make_nonlinearity("cubic")
    rh = radial_hamiltonian(rad, nl)
    np.testing.assert_array_equal(rh.profile, -0.25)
    assert rh.monotone_pass and rh.slope_error == 0.0


# ---------------------------------------------------------------- s -> 1 split


def test_split_cubic(cubic_sweep, cubic):
    rep = s_limit_split(cubic_sweep.layers, [0.0, 1.0], cubic)
    assert rep.passed and rep.y_decreasing and rep.x_close
    assert rep.target[0] == pytest.approx(0.25, abs=1e-12)
    assert rep.x_part[-1, 0] == pytest.approx(0.25, rel=0.2)
    # y-part vanishes at the symmetry point x = 0
    assert np.max(np.abs(rep.y_part[:, 0])) <= 1e-12
    assert rep.y_part[-1, 1] < rep.y_part[0, 1]


def test_split_sine_pi(sine_pi):
    sweep = continuation_in_s(sine_pi, [0.8, 0.9, 0.95], REF)
    rep = s_limit_split(sweep.layers, [0.0], sine_pi)
    assert rep.passed
    assert rep.x_part[-1, 0] == pytest.approx(GAP_SINE, rel=0.2)


def test_split_constant_field():
    layers = [constant_layer(s) for s in (0.7, 0.8, 0.9)]
    rep = s_limit_split(layers, [0.0, 2.0])
    assert np.max(rep.x_part) <= 1e-30 and np.all(rep.y_part == 0)
    assert rep.y_decreasing and not rep.passed  # no target without a nonlinearity


def test_split_errors(cubic_sweep):
    with pytest.raises(DomainError):
        s_limit_split(cubic_sweep.layers[:2], [0.0])
    with pytest.raises(DomainError):
        s_limit_split(cubic_sweep.layers[::-1], [0.0])
