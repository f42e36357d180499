"""The conserved Hamiltonian of layer solutions, the Modica-type bound and its radial analogue.

For a field on the graded mesh the per-cell integrals are

* ``int t^a u_y^2 = T_j (u_{j+1} - u_j)^2``, exact when ``u`` is affine in
  ``t^(1-a)`` across the cell (the boundary behaviour of solutions),
* ``int t^a u_x^2`` with ``u_x^2`` (centred differences at the nodes)
  interpolated linearly in ``t`` and integrated exactly against ``t^a``.

Cumulative sums give ``W(x, y_j) = (1+a) int_0^{y_j} t^a (u_x^2 - u_y^2) / 2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .extension import HalfStripField
from .kernels import FracOrder
from .mesh import HalfStripMesh

__all__ = [
    "HamiltonianProfile",
    "IdentityReport",
    "ModicaReport",
    "RadialHamiltonian",
    "SplitReport",
    "hamiltonian_profile",
    "verify_identity",
    "verify_modica",
    "radial_hamiltonian",
    "s_limit_split",
]


@dataclass(frozen=True, eq=False)
class HamiltonianProfile:
    xs: np.ndarray
    H: np.ndarray
    partial: np.ndarray  # W(x_i, y_j)
    tail_bound: np.ndarray
    x_part: np.ndarray  # (1+a) int 1/2 t^a u_x^2 over [0, Y]
    y_part: np.ndarray  # (1+a) int 1/2 t^a u_y^2 over [0, Y]


def _x_gradient(mesh: HalfStripMesh, U: np.ndarray) -> np.ndarray:
    """Fourth-order centred differences in x (second order in the two edge rows)."""
    g = np.gradient(U, mesh.x, axis=0, edge_order=2)
    if U.shape[0] >= 5:
        h = mesh.hx
        g[2:-2] = (U[:-4] - 8.0 * U[1:-3] + 8.0 * U[3:-1] - U[4:]) / (12.0 * h)
    return g


def _cell_moments(mesh: HalfStripMesh) -> tuple[np.ndarray, np.ndarray]:
    """``int t^a l_0`` and ``int t^a l_1`` over each y-cell for the linear hats ``l_0, l_1``."""
    a = mesh.a
    y = mesh.y
    y0, y1 = y[:-1], y[1:]
    m0 = (y1 ** (1 + a) - y0 ** (1 + a)) / (1 + a)
    m1 = (y1 ** (2 + a) - y0 ** (2 + a)) / (2 + a)
    dy = y1 - y0
    w_hi = (m1 - y0 * m0) / dy
    w_lo = m0 - w_hi
    return w_lo, w_hi


def hamiltonian_profile(u: HalfStripField, order: FracOrder) -> HamiltonianProfile:
    """``H(x) = (1+a) int_0^Y 1/2 t^a (u_x^2 - u_y^2) dt`` and its partial integrals.

    ``tail_bound`` bounds the neglected ``int_Y^inf`` using ``|grad u| <= C2/y``:
    ``(1+a) C2^2 Y^(a-1) / (1-a)`` with ``C2`` the largest ``y |grad u|``
    over the upper half of the strip.
    """
    mesh = u.mesh
    a = mesh.a
    if abs(a - order.a) > 1e-14:
        raise DomainError("field weight exponent does not match the order")
    U = u.values
    ux2 = _x_gradient(mesh, U) ** 2
    w_lo, w_hi = _cell_moments(mesh)
    xcell = ux2[:, :-1] * w_lo[None, :] + ux2[:, 1:] * w_hi[None, :]
    ycell = mesh.y_trans[None, :] * np.diff(U, axis=1) ** 2
    c = 0.5 * (1.0 + a)
    X = np.concatenate([np.zeros((U.shape[0], 1)), np.cumsum(xcell, axis=1)], axis=1) * c
    Yp = np.concatenate([np.zeros((U.shape[0], 1)), np.cumsum(ycell, axis=1)], axis=1) * c
    W = X - Yp
    # gradient magnitude for the decay constant; u_y from the node-interpolated face values
    uy = np.gradient(U, mesh.y, axis=1, edge_order=2)
    grad = np.sqrt(ux2 + uy**2)
    upper = mesh.y >= 0.5 * mesh.Y
    # one constant for the whole strip: the truncation couples every column
    C2 = float(np.max(mesh.y[None, upper] * grad[:, upper]))
    tail = np.full(U.shape[0], (1.0 + a) * C2**2 * mesh.Y ** (a - 1.0) / (1.0 - a))
    return HamiltonianProfile(mesh.x.copy(), W[:, -1].copy(), W, tail, X[:, -1].copy(), Yp[:, -1].copy())


@dataclass(frozen=True, eq=False)
class IdentityReport:
    max_residual: float
    g_asymmetry: float
    residual: np.ndarray
    spread: float  # sample standard deviation of the residual across x
    gap_scale: float  # G(0) - G(1)

    @property
    def relative(self) -> float:
        return self.max_residual / self.gap_scale


def _gap(nl, v) -> np.ndarray:
    return np.asarray(nl.G(v)) - nl.g_ref


def verify_identity(layer, nl) -> IdentityReport:
    """``sup_x |H(x) - (G(v(x)) - G(1))|`` for a converged layer, plus ``|G(1) - G(-1)|``."""
    prof = hamiltonian_profile(layer.field, layer.order)
    v = layer.field.values[:, 0]
    res = prof.H - _gap(nl, v)
    asym = abs(float(nl.G(np.array(1.0))) - float(nl.G(np.array(-1.0))))
    scale = float(_gap(nl, np.array(0.0)))
    return IdentityReport(float(np.max(np.abs(res))), asym, res, float(np.std(res, ddof=1)), scale)


@dataclass(frozen=True, eq=False)
class ModicaReport:
    min_margin: float
    min_margin_core: float  # over the interior sample set
    margin: np.ndarray  # (nx+1, ny+1)
    gap_scale: float
    core: float
    core_height: float

    @property
    def margin_min_y(self) -> np.ndarray:
        return self.margin.min(axis=1)

    def passed(self, rel_tol: float = 1e-3) -> bool:
        return self.min_margin >= -rel_tol * self.gap_scale and self.min_margin_core > 0


def verify_modica(layer, nl, *, core: float = 0.9, core_height: float = 0.5) -> ModicaReport:
    """Margins ``G(v(x)) - G(1) - W(x, y)`` at every node.

    Strict positivity is checked on the sample set ``|v(x)| <= core`` and
    ``y <= core_height * Y``.  Near the truncation height the partial
    integral equals the truncated Hamiltonian, so the margin there is the
    identity residual rather than the (small) infinite-strip tail.
    """
    prof = hamiltonian_profile(layer.field, layer.order)
    mesh = layer.field.mesh
    v = layer.field.values[:, 0]
    margin = _gap(nl, v)[:, None] - prof.partial
    rows = mesh.y <= core_height * mesh.Y
    sel = np.abs(v) <= core
    core_min = float(margin[np.ix_(sel, rows)].min()) if np.any(sel) else np.inf
    scale = float(_gap(nl, np.array(0.0)))
    return ModicaReport(float(margin.min()), core_min, margin, scale, core, core_height)


@dataclass(frozen=True, eq=False)
class RadialHamiltonian:
    r: np.ndarray
    profile: np.ndarray
    monotone_pass: bool
    slope: np.ndarray  # discrete derivative at cell midpoints
    predicted: np.ndarray  # -(1+a) (n-1)/r int t^a u_r^2 at cell midpoints
    slope_error: float  # max relative mismatch where meaningful
    tolerance: float


def radial_hamiltonian(rad, nl, *, tol: float | None = None, floor: float = 1e-6) -> RadialHamiltonian:
    """``(1+a) int 1/2 t^a (u_r^2 - u_y^2) dt - G(u(r,0))`` and its monotonicity.

    The discrete slope between neighbouring nodes is compared with
    ``-(1+a) (n-1)/r int t^a u_r^2`` (average of its two endpoint values)
    where the latter exceeds ``floor``.  ``tol`` defaults to a multiple of
    the Hamiltonian's discretisation scale.
    """
    fld = rad.field
    mesh = fld.mesh
    a = mesh.a
    n = rad.dimension
    prof = hamiltonian_profile(fld, FracOrder(rad.order.s, rad.order.n))
    v = fld.values[:, 0]
    Hr = prof.H - np.asarray(nl.G(v))
    r = mesh.x
    slope = np.diff(Hr) / np.diff(r)
    kin = 2.0 * prof.x_part / (1.0 + a)  # int t^a u_r^2
    with np.errstate(divide="ignore", invalid="ignore"):
        pred_nodes = -(1.0 + a) * (n - 1) / r * kin
    pred_nodes[0] = pred_nodes[1] if r.size > 1 else 0.0
    pred = 0.5 * (pred_nodes[1:] + pred_nodes[:-1])
    scale = max(float(np.max(np.abs(Hr))), 1e-300)
    if tol is None:
        tol = 1e-6 * scale
    mono = bool(np.all(np.diff(Hr) <= tol))
    meaningful = np.abs(pred) > floor
    meaningful[0] = False  # axis cell: r -> 0 singular weight
    if np.any(meaningful):
        err = float(np.max(np.abs(slope[meaningful] - pred[meaningful]) / np.abs(pred[meaningful])))
    else:
        err = 0.0
    return RadialHamiltonian(r, Hr, mono, slope, pred, err, float(tol))


@dataclass(frozen=True)
class SplitReport:
    s_values: tuple
    x_probe: tuple
    x_part: np.ndarray  # (len(s), len(x_probe))
    y_part: np.ndarray
    target: np.ndarray  # G(v_ode(x)) - G(1) at the probes
    y_decreasing: bool
    x_close: bool
    passed: bool


def s_limit_split(layers, x_probe, nl=None, *, rel_tol: float = 0.2) -> SplitReport:
    """x- and y-parts of the Hamiltonian along an ascending family of layers.

    PASS iff the y-part is nonincreasing along the family at every probe
    (strictly wherever it is above round-off), and at the
    largest ``s`` the x-part is within ``rel_tol`` of ``G(v_ode(x)) - G(1)``
    (the classical ``1/2 (v')^2``) and the y-part is below ``rel_tol`` times it.
    """
    layers = list(layers)
    if len(layers) < 3:
        raise DomainError("need at least three layers")
    svals = [L.order.s for L in layers]
    if any(b <= a for a, b in zip(svals, svals[1:])):
        raise DomainError("layers must be ordered by increasing s")
    xp = np.atleast_1d(np.asarray(x_probe, dtype=float))
    xs_parts, ys_parts = [], []
    for L in layers:
        prof = hamiltonian_profile(L.field, L.order)
        xs_parts.append(np.interp(xp, prof.xs, prof.x_part))
        ys_parts.append(np.interp(xp, prof.xs, prof.y_part))
    xs_parts = np.array(xs_parts)
    ys_parts = np.array(ys_parts)
    if nl is None:
        target = np.full(xp.shape, np.nan)
        x_close = False
    else:
        vv = _ode_at(nl, xp)
        target = np.asarray(nl.G(vv)) - nl.g_ref
        x_close = bool(np.all(np.abs(xs_parts[-1] - target) <= rel_tol * np.abs(target)))
        x_close = x_close and bool(np.all(ys_parts[-1] <= rel_tol * np.abs(target)))
    # at a symmetry point the y-part vanishes identically; compare above round-off
    floor = 1e-12 * max(1.0, float(np.max(np.abs(xs_parts))))
    d = np.diff(ys_parts, axis=0)
    y_dec = bool(np.all((d < 0) | ((np.abs(ys_parts[1:]) <= floor) & (np.abs(ys_parts[:-1]) <= floor))))
    return SplitReport(tuple(svals), tuple(xp), xs_parts, ys_parts, target, y_dec, x_close, y_dec and x_close)


def _ode_at(nl, xp: np.ndarray) -> np.ndarray:
    from .profiles import _ode_branches

    return _ode_branches(nl, xp)
