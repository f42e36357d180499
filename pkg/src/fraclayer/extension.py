"""The local realisation of (-Delta)^s: weighted extension on a truncated half-strip.

Discretisation
--------------
Finite volumes on the tensor mesh of :class:`~fraclayer.mesh.HalfStripMesh`.
The operator matrix ``A = Kx (x) My + Mx (x) Ky`` is the Hessian of the
discrete Dirichlet energy ``1/2 int y^a |grad u|^2``.  It is symmetric and
an M-matrix, so discrete comparison and maximum principles hold.

Because ``A`` is a sum of Kronecker products, every solve with Dirichlet data
on ``y = 0`` diagonalises in x: one generalised eigenproblem
``Kx phi = lambda Mx phi`` plus a tridiagonal solve in y per mode.  The same
factorisation gives the discrete Dirichlet-to-Neumann matrix in closed form,
which the nonlinear solvers use as a Schur complement on the trace.

Boundary fluxes
---------------
``flux_trace`` is the conservative discrete conormal derivative
``(A u)_{i,0} / Mx_i``, i.e. the flux through the bottom face of the first
half-cell.  It is the quantity the nonlinear boundary condition constrains
exactly.  ``fit_flux`` is the two-node estimate from
``u ~ u(x,0) + c(x) y^(1-a)``; the two differ by the x-flux through the
first half-cell, ``O(y_1^(1+a))``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import linalg, signal, special

from .errors import ConvergenceError, DomainError, GridError, PreconditionError, TailError
from .grid import GridFunction
from .kernels import FracOrder, extension_constant, poisson_normalizer
from .mesh import HalfStripMesh

__all__ = [
    "HalfStripField",
    "LinearSystemStats",
    "StripData",
    "MaxPrincipleReport",
    "extend_by_convolution",
    "solve_dirichlet",
    "dtn_apply",
    "dtn_matrix",
    "solve_neumann_nonlinear",
    "dual_conjugate",
    "duality_residual",
    "energy",
    "check_max_principle",
    "estimate_harnack",
    "harnack_ratio",
    "check_hopf",
    "hopf_barrier",
    "save_field",
    "load_field",
]


# --------------------------------------------------------------------------- types


@dataclass(frozen=True)
class LinearSystemStats:
    iterations: int
    residual_norm: float
    assembly_symmetric: bool
    converged: bool = True
    multiplier: float = 0.0
    history: tuple = ()  # residual norms (newton) or energies (gradient_flow)
    decrements: tuple = ()  # gradient_flow: accepted energy changes, each < 0
    interior_residual: float = 0.0  # max componentwise |A u| / (|A| |u|)

    def __post_init__(self) -> None:
        if not self.residual_norm >= 0:
            raise ValueError("residual_norm must be nonnegative")


@dataclass(frozen=True, eq=False)
class HalfStripField:
    """Nodal values ``u[i, j] = u(x_i, y_j)`` on a :class:`HalfStripMesh`."""

    mesh: HalfStripMesh
    values: np.ndarray
    left_asymptote: float | None = None
    right_asymptote: float | None = None
    meta: dict = field(default_factory=dict)
    # conservative boundary flux supplied by a solver that knows it without differencing
    boundary_flux: np.ndarray | None = None

    def __post_init__(self) -> None:
        u = np.array(self.values, dtype=float)
        if u.shape != self.mesh.shape:
            raise GridError(f"field shape {u.shape} does not match mesh {self.mesh.shape}")
        u.setflags(write=False)
        object.__setattr__(self, "values", u)
        if self.boundary_flux is not None:
            b = np.array(self.boundary_flux, dtype=float)
            if b.shape != (self.mesh.nx + 1,):
                raise GridError("boundary flux must have one value per x-node")
            b.setflags(write=False)
            object.__setattr__(self, "boundary_flux", b)

    @property
    def trace(self) -> GridFunction:
        m = self.mesh
        kw = {}
        if self.left_asymptote is not None and self.right_asymptote is not None:
            kw = dict(left_asymptote=self.left_asymptote, right_asymptote=self.right_asymptote)
        return GridFunction(x0=m.x0, h=m.hx, values=self.values[:, 0], asymptote_slack=np.inf, **kw)

    @property
    def flux_trace(self) -> np.ndarray:
        """Conservative ``-y^a u_y`` at ``y = 0``.

        Solver-produced fields carry the flux from the trace-space Schur
        complement; recomputing it from the nodal values loses about
        ``y_trans[0] * eps`` to cancellation on strongly graded meshes.
        """
        if self.boundary_flux is not None:
            return self.boundary_flux
        return self.flux_from_values()

    def flux_from_values(self) -> np.ndarray:
        """``(A u)_{i,0} / Mx_i`` evaluated from the nodal values."""
        return self.mesh.apply(self.values)[:, 0] / self.mesh.x_mass

    @property
    def fit_flux(self) -> np.ndarray:
        """``-(1-a) c(x)`` from ``u ~ u(x,0) + c(x) y^(1-a)`` on the first two rows."""
        m = self.mesh
        return -(1.0 - m.a) * (self.values[:, 1] - self.values[:, 0]) / m.y[1] ** (1.0 - m.a)

    def divergence_residual(self) -> np.ndarray:
        """``(A u)`` divided by the dual-cell measure at interior nodes (strong-form residual)."""
        m = self.mesh
        r = m.apply(self.values) / m.cell_measure()
        return r[1:-1, 1:-1]

    def relative_divergence_residual(self) -> np.ndarray:
        """Componentwise ``|A u| / (|A| |u|)`` at interior nodes (0 where ``u`` vanishes locally).

        On strongly graded meshes the first y-transmissibilities are huge and
        the absolute residual is dominated by round-off; this ratio is the
        backward error of the discrete equations.
        """
        m = self.mesh
        num = np.abs(m.apply(self.values))[1:-1, 1:-1]
        den = m.apply_abs(self.values)[1:-1, 1:-1]
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)

    def with_values(self, values, **changes) -> "HalfStripField":
        changes.setdefault("boundary_flux", None)
        return replace(self, values=values, **changes)


@dataclass(frozen=True)
class StripData:
    """Boundary data on the rectangle.  ``None`` means homogeneous weighted Neumann.

    ``bottom`` is indexed by x-nodes, ``left``/``right`` by y-nodes, ``top``
    by x-nodes; scalars broadcast.  For radial meshes ``left`` is the axis and
    must be ``None``.
    """

    bottom: np.ndarray | float | None = None
    left: np.ndarray | float | None = None
    right: np.ndarray | float | None = None
    top: np.ndarray | float | None = None


# --------------------------------------------------------------------- separable core


class _Separable:
    """Solver for ``A u = b`` on the free nodes with Dirichlet bottom row.

    Free x-nodes exclude Dirichlet sides, free y-nodes exclude ``j = 0`` and
    (if Dirichlet) ``j = ny``.  The free set is a tensor product, so
    ``A_FF = Kx_F (x) My_F + Mx_F (x) Ky_F``.
    """

    def __init__(self, mesh: HalfStripMesh, left_d: bool, right_d: bool, top_d: bool):
        self.mesh = mesh
        i0 = 1 if left_d else 0
        i1 = mesh.nx if right_d else mesh.nx + 1
        j1 = mesh.ny if top_d else mesh.ny + 1
        self.ix = slice(i0, i1)
        self.jy = slice(1, j1)
        self.j1 = j1
        kd, ko = mesh.x_stiffness
        mx = mesh.x_mass[i0:i1]
        d = kd[i0:i1] / mx
        e = ko[i0 : i1 - 1] / np.sqrt(mx[:-1] * mx[1:])
        lam, Q = linalg.eigh_tridiagonal(d, e)
        self.lam = np.clip(lam, 0.0, None)
        self.phi = Q / np.sqrt(mx)[:, None]  # Mx-orthonormal eigenvectors
        self.mx = mx
        self.my = mesh.y_mass[:j1]
        # T[j] couples free rows j and j+1; the last entry is the link to a
        # Dirichlet top (zero for a natural top)
        T = np.append(mesh.y_trans, 0.0)
        self.T = T[:j1]

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve on free nodes; ``rhs`` has shape (n_free_x, n_free_y)."""
        r = self.phi.T @ rhs
        c = self._thomas(r)
        return self.phi @ c

    def _thomas(self, r: np.ndarray) -> np.ndarray:
        # Pivots are written as den_j = T_j + g_j with g_j > 0 updated in
        # series-conductance form, avoiding the cancellation in
        # b_j - T_{j-1}^2 / den_{j-1} when the first cells are very thin.
        lam = self.lam
        my, T = self.my, self.T
        n = r.shape[1]
        cp = np.empty((lam.size, n))
        dp = np.empty_like(r)
        g = lam * my[1] + T[0]
        for k in range(n):
            j = k + 1
            den = g + T[j]
            cp[:, k] = T[j] / den
            prev = dp[:, k - 1] * T[j - 1] if k > 0 else 0.0
            dp[:, k] = (r[:, k] + prev) / den
            if k < n - 1:
                g = lam * my[j + 1] + T[j] * g / den
        out = np.empty_like(r)
        out[:, -1] = dp[:, -1]
        for k in range(n - 2, -1, -1):
            out[:, k] = dp[:, k] + cp[:, k] * out[:, k + 1]
        return out

    def schur_modes(self) -> np.ndarray:
        """Per-mode Schur complement of the 1D y-operator onto row 0."""
        lam = self.lam
        my, T = self.my, self.T
        last = self.j1 - 1
        e = lam * my[last] + T[last]
        for j in range(last - 1, -1, -1):
            e = lam * my[j] + T[j] * e / (T[j] + e)
        return e

    def dtn_matrix(self) -> np.ndarray:
        """``S`` with ``(A u)_{F,0} = S t + (data terms)`` for the harmonic field with trace t."""
        sig = self.schur_modes()
        B = self.mx[:, None] * self.phi
        return (B * sig[None, :]) @ B.T


_SOLVER_CACHE: dict = {}

INTERIOR_TOL = 1e-9


def _separable(mesh: HalfStripMesh, left_d: bool, right_d: bool, top_d: bool) -> _Separable:
    key = (mesh, left_d, right_d, top_d)
    op = _SOLVER_CACHE.get(key)
    if op is None:
        if len(_SOLVER_CACHE) > 8:
            _SOLVER_CACHE.clear()
        op = _Separable(mesh, left_d, right_d, top_d)
        _SOLVER_CACHE[key] = op
    return op


def _broadcast(value, size: int, what: str) -> np.ndarray:
    arr = np.broadcast_to(np.asarray(value, dtype=float), (size,)).copy()
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{what} data must be finite")
    return arr


def _dirichlet_array(mesh: HalfStripMesh, data: StripData) -> tuple[np.ndarray, tuple[bool, bool, bool]]:
    """Full array carrying the Dirichlet values (zero elsewhere) and the side flags."""
    if mesh.radial and data.left is not None:
        raise DomainError("radial meshes have a symmetry axis on the left: left data must be None")
    nx1, ny1 = mesh.shape
    ud = np.zeros(mesh.shape)
    flags = (data.left is not None, data.right is not None, data.top is not None)
    if data.top is not None:
        ud[:, -1] = _broadcast(data.top, nx1, "top")
    if data.left is not None:
        ud[0, :] = _broadcast(data.left, ny1, "left")
    if data.right is not None:
        ud[-1, :] = _broadcast(data.right, ny1, "right")
    if data.bottom is not None:
        bottom = _broadcast(data.bottom, nx1, "bottom")
        ud[:, 0] = bottom
    return ud, flags


def _solve_linear(mesh: HalfStripMesh, data: StripData) -> tuple[np.ndarray, float, float]:
    """Solve with Dirichlet bottom (and the given side/top data); returns (u, residual, rhs norm)."""
    ud, flags = _dirichlet_array(mesh, data)
    op = _separable(mesh, *flags)
    ix, jy = op.ix, op.jy
    rhs = -mesh.apply(ud)[ix, jy]
    u = ud.copy()
    u[ix, jy] = op.solve(rhs)
    # one step of iterative refinement removes the transform round-off
    res = -mesh.apply(u)[ix, jy]
    u[ix, jy] += op.solve(res)
    res = mesh.apply(u)[ix, jy]
    return u, float(np.linalg.norm(res)), float(np.linalg.norm(rhs))


_SYMMETRY_CACHE: dict = {}


def _assembly_symmetric(mesh: HalfStripMesh) -> bool:
    hit = _SYMMETRY_CACHE.get(mesh)
    if hit is None:
        A = mesh.assemble()
        hit = (A - A.T).count_nonzero() == 0
        _SYMMETRY_CACHE[mesh] = hit
    return hit


# ----------------------------------------------------------------- Poisson extension


_GL_X, _GL_W = np.polynomial.legendre.leggauss(12)


def _gauss(a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    half = 0.5 * (b - a)
    return a + half * (_GL_X + 1.0), half * _GL_W


def _cubic_cardinals(theta: np.ndarray) -> np.ndarray:
    """Lagrange cardinals of nodes -1, 0, 1, 2 evaluated at theta (rows l = 0..3)."""
    t = theta
    return np.stack(
        [
            -t * (t - 1) * (t - 2) / 6.0,
            (t + 1) * (t - 1) * (t - 2) / 2.0,
            -(t + 1) * t * (t - 2) / 2.0,
            (t + 1) * t * (t - 1) / 6.0,
        ]
    )


def _poisson_weights(order: FracOrder, h: float, y: float, M: int, near: int = 128) -> np.ndarray:
    """Weights ``W_m`` (m = -M..M) with ``int P(x_i - t, y) v(t) dt ~ sum_m W_m v_{i+m}``.

    Far from the kernel peak, or when ``y >= 6h``, the trapezoid rule is used
    (its aliasing error ~ exp(-2 pi y / h) is below round-off there).  Otherwise
    the cells within ``near`` spacings are integrated exactly against the
    local cubic interpolant, joined to the trapezoid sum by Gregory end
    weights.
    """
    s = order.s
    p = poisson_normalizer(1, s)
    beta = 0.5 + s
    m = np.arange(-M, M + 1)
    z = m * h
    P = lambda t: p * y ** (2 * s) * (t * t + y * y) ** (-beta)  # noqa: E731
    W = h * P(z)
    if y >= 6.0 * h:
        return W
    near = min(near, M - 4)
    # positive half: cells c = 0..near-1 on tau in [c h, (c+1) h]
    Wpos = np.zeros(near + 3)  # offsets -1 .. near+1
    for c in range(near):
        lo, hi = c * h, (c + 1) * h
        if c == 0 and y < h:
            cuts = [0.0]
            b = y / 16.0
            while b < h:
                cuts.append(b)
                b *= 2.0
            cuts.append(h)
            pieces = [_gauss(u, v) for u, v in zip(cuts[:-1], cuts[1:])]
            tau = np.concatenate([q[0] for q in pieces])
            wts = np.concatenate([q[1] for q in pieces])
        else:
            tau, wts = _gauss(lo, hi)
        card = _cubic_cardinals((tau - lo) / h)
        integ = card @ (wts * P(tau))
        Wpos[c : c + 4] += integ  # offsets c-1..c+2 stored at index offset+1
    # Gregory end correction joins the product rule at tau = near*h to the trapezoid tail
    greg = np.array([3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0])
    W_near = np.zeros_like(W)
    centre = M
    for k in range(near + 3):
        off = k - 1
        W_near[centre + off] += Wpos[k]
        W_near[centre - off] += Wpos[k]
    # trapezoid part on |tau| >= near*h with Gregory weights at the junction
    trap = np.zeros_like(W)
    absm = np.abs(m)
    mask = absm >= near
    trap[mask] = h * P(z[mask])
    for k, g in enumerate(greg):
        sel = absm == near + k
        trap[sel] *= g
    return W_near + trap


def _tail_mass(z0: np.ndarray, y: np.ndarray, s: float) -> np.ndarray:
    """``int_{z0}^inf P(tau, y) dtau`` for z0 >= 0."""
    return 0.5 * special.betainc(s, 0.5, y * y / (z0 * z0 + y * y))


def _decay_tail(
    xs: np.ndarray, ys: np.ndarray, s: float, T: float, c: float, d: float, p_dec: float, side: int
) -> np.ndarray:
    """``int_{|t-c| > T-c} P(x - t, y) (d/|t-c|)^p dt`` on one side (side=+1 right, -1 left)."""
    pn = poisson_normalizer(1, s)
    beta = p_dec + 2 * s - 1
    tq, wq = special.roots_jacobi(64, 0.0, beta)
    uq = 0.5 * (tq + 1.0)
    wq = wq * 0.5 ** (beta + 1)
    L = T - c
    t = c + side * L / uq  # nodes in t
    X = xs[:, None, None]
    Yy = ys[None, :, None]
    dist = t[None, None, :] - X
    P = pn * Yy ** (2 * s) * (dist * dist + Yy * Yy) ** (-(0.5 + s))
    # integrand in u: (d u / L)^p * P * L/u^2, written as u^beta * smooth
    smooth = (d / L) ** p_dec * L * uq ** (p_dec - 2 - beta) * P
    return (smooth * wq).sum(axis=-1)


def extend_by_convolution(
    v: GridFunction,
    order: FracOrder,
    mesh: HalfStripMesh,
    *,
    rows: Sequence[int] | None = None,
    extension_factor: int = 2,
) -> HalfStripField:
    """Poisson extension ``u(., y) = P_s(., y) * v`` on the mesh nodes.

    ``v`` must be sampled on the mesh x-nodes and declare its asymptotes.
    Outside the window ``v`` is modelled as ``L + delta (d/|t-c|)^p`` when
    ``decay_power = p`` is set (``delta`` matches the edge value), else as
    the constant ``L``.  The model is sampled on ``extension_factor`` extra
    windows each side and integrated analytically beyond.  Row ``y = 0`` is
    ``v`` itself.  ``rows`` restricts the computation to some y-rows (others
    are left as NaN).
    """
    if mesh.radial or order.n != 1:
        raise DomainError("Poisson extension is implemented for the planar strip only")
    if abs(mesh.a - order.a) > 1e-14:
        raise DomainError("mesh weight exponent does not match the order")
    if not v.has_asymptotes:
        raise TailError("Poisson extension needs declared asymptotes")
    if not mesh.matches(v):
        raise GridError("grid function must be sampled on the mesh x-nodes (use mesh.sample_trace)")
    s = order.s
    h = mesh.hx
    N = v.size
    K = extension_factor * (N - 1)
    xs = mesh.x
    c = 0.5 * (xs[0] + xs[-1])
    d = 0.5 * (xs[-1] - xs[0])
    Lm, Lp = v.left_asymptote, v.right_asymptote
    dm, dp = v.values[0] - Lm, v.values[-1] - Lp
    p_dec = v.decay_power
    t_left = xs[0] - h * np.arange(K, 0, -1)
    t_right = xs[-1] + h * np.arange(1, K + 1)

    def model(t, L, delta):
        if p_dec is None:
            return np.full_like(t, L)
        return L + delta * (d / np.abs(t - c)) ** p_dec

    ext = np.concatenate([model(t_left, Lm, dm), v.values, model(t_right, Lp, dp)])
    M = K + N - 1
    rows = range(1, mesh.ny + 1) if rows is None else [j for j in rows if j >= 1]
    rows = list(rows)
    u = np.full(mesh.shape, np.nan)
    u[:, 0] = v.values
    if not rows:
        return HalfStripField(mesh, u, Lm, Lp, meta={"source": "poisson"})
    ys = mesh.y[rows]
    Wmat = np.stack([_poisson_weights(order, h, y, M) for y in ys])
    full = signal.fftconvolve(ext[None, :], Wmat, mode="full", axes=1)
    body = full[:, K + M : K + M + N].T  # (N, len(rows))
    # beyond the extended grid (half a cell past the last node)
    Tr = t_right[-1] + 0.5 * h
    Tl = t_left[0] - 0.5 * h
    body = body + Lp * _tail_mass((Tr - xs)[:, None], ys[None, :], s)
    body = body + Lm * _tail_mass((xs - Tl)[:, None], ys[None, :], s)
    # the node sum is a composite midpoint rule ending at Tl, Tr: add its h^2/24 endpoint terms
    for T, L, delta, sign in ((Tr, Lp, dp, 1.0), (Tl, Lm, dm, -1.0)):
        g = model(np.array([T]), L, delta)[0]
        dg = 0.0 if p_dec is None else -p_dec * (g - L) / (T - c)
        z = T - xs[:, None]
        Pk = poisson_normalizer(1, s) * ys[None, :] ** (2 * s) * (z * z + ys[None, :] ** 2) ** (-(0.5 + s))
        dP = -(1 + 2 * s) * z / (z * z + ys[None, :] ** 2) * Pk
        body = body + sign * h * h / 24.0 * (dg * Pk + g * dP)
    if p_dec is not None:
        if dp != 0.0:
            body = body + dp * _decay_tail(xs, ys, s, Tr, c, d, p_dec, +1)
        if dm != 0.0:
            body = body + dm * _decay_tail(xs, ys, s, 2 * c - Tl, c, d, p_dec, -1)
    u[:, rows] = body
    return HalfStripField(mesh, u, Lm, Lp, meta={"source": "poisson"})


# --------------------------------------------------------------- linear Dirichlet solve


def solve_dirichlet(mesh: HalfStripMesh, boundary: StripData) -> tuple[HalfStripField, LinearSystemStats]:
    """Solve ``div(y^a grad u) = 0`` with Dirichlet bottom data.

    Sides and top are Dirichlet where data is given and homogeneous weighted
    Neumann where it is ``None``.
    """
    if boundary.bottom is None:
        raise DomainError("solve_dirichlet needs bottom (trace) data")
    u, res, rhs = _solve_linear(mesh, boundary)
    stats = LinearSystemStats(
        iterations=1,
        residual_norm=res,
        assembly_symmetric=_assembly_symmetric(mesh),
        converged=res <= 1e-10 * max(rhs, 1e-300) or res <= 1e-13,
        history=(("rhs_norm", rhs),),
    )
    return HalfStripField(mesh, u, meta={"source": "solve_dirichlet"}), stats


def _far_field(v: GridFunction, order: FracOrder, mesh: HalfStripMesh, far_field: str) -> StripData:
    if far_field == "poisson":
        ext = extend_by_convolution(v, order, mesh, rows=[mesh.ny])
        ext_sides = _poisson_sides(v, order, mesh)
        return StripData(bottom=v.values, left=ext_sides[0], right=ext_sides[1], top=ext.values[:, -1])
    if far_field == "truncated":
        left = v.left_asymptote if v.has_asymptotes else v.values[0]
        right = v.right_asymptote if v.has_asymptotes else v.values[-1]
        lcol = np.full(mesh.ny + 1, left)
        rcol = np.full(mesh.ny + 1, right)
        lcol[0], rcol[0] = v.values[0], v.values[-1]
        return StripData(bottom=v.values, left=lcol, right=rcol, top=None)
    raise ValueError(f"unknown far_field {far_field!r}")


def _poisson_sides(v: GridFunction, order: FracOrder, mesh: HalfStripMesh) -> tuple[np.ndarray, np.ndarray]:
    full = extend_by_convolution(v, order, mesh)
    return full.values[0, :], full.values[-1, :]


def dtn_apply(
    v: GridFunction,
    order: FracOrder,
    mesh: HalfStripMesh,
    *,
    far_field: str = "poisson",
    flux: str = "conservative",
) -> GridFunction:
    """Weighted conormal derivative ``-y^a u_y (., 0)`` of the discrete extension of ``v``.

    ``d_s`` times the result approximates ``(-Delta)^s v``.  With
    ``far_field="poisson"`` the sides and top carry the Poisson extension of
    ``v`` as Dirichlet data; ``"truncated"`` uses the asymptotes on the sides
    and a homogeneous Neumann top.
    """
    if not mesh.matches(v):
        raise GridError("grid function must be sampled on the mesh x-nodes")
    data = _far_field(v, order, mesh, far_field)
    u, _ = solve_dirichlet(mesh, data)
    out = u.flux_trace if flux == "conservative" else u.fit_flux
    return GridFunction(x0=v.x0, h=v.h, values=out, meta={"operator": "dtn", "far_field": far_field})


def dtn_matrix(mesh: HalfStripMesh, *, left_dirichlet: bool = True, right_dirichlet: bool = True,
               top_dirichlet: bool = False) -> tuple[np.ndarray, slice]:
    """Dense discrete DtN Schur complement on the free bottom nodes and their index range."""
    op = _separable(mesh, left_dirichlet and not mesh.radial, right_dirichlet, top_dirichlet)
    return op.dtn_matrix(), op.ix


# ----------------------------------------------------------------- nonlinear solve


class _TraceProblem:
    """Reduction of the nonlinear Neumann problem to its trace unknowns."""

    def __init__(self, mesh: HalfStripMesh, data: StripData):
        self.mesh = mesh
        self.data = data
        ud, flags = _dirichlet_array(mesh, replace(data, bottom=None))
        self.flags = flags
        self.op = _separable(mesh, *flags)
        ix = self.op.ix
        self.ix = ix
        # lift: zero trace on the free bottom nodes, Dirichlet corners carry side values
        lift, _, _ = _solve_linear(mesh, replace(data, bottom=ud[:, 0]))
        self.lift = lift
        self.r0 = mesh.apply(lift)[ix, 0]
        self.lift_energy = 0.5 * float(np.sum(lift * mesh.apply(lift)))
        self.S = self.op.dtn_matrix()
        self.mx = mesh.x_mass[ix]
        self.bottom_fixed = ud[:, 0]

    def full_trace(self, t: np.ndarray) -> np.ndarray:
        b = self.bottom_fixed.copy()
        b[self.ix] = t
        return b

    def field(self, t: np.ndarray) -> np.ndarray:
        u, _, _ = _solve_linear(self.mesh, replace(self.data, bottom=self.full_trace(t)))
        return u


def _resolve_init(init, mesh: HalfStripMesh) -> np.ndarray:
    if isinstance(init, HalfStripField):
        return np.array(init.values[:, 0])
    if isinstance(init, GridFunction):
        if not mesh.matches(init):
            return np.asarray(init(mesh.x))
        return np.array(init.values)
    if callable(init):
        return np.asarray(init(mesh.x), dtype=float)
    arr = np.asarray(init, dtype=float)
    if arr.shape == mesh.shape:
        return arr[:, 0].copy()
    if arr.shape != (mesh.nx + 1,):
        raise GridError("initial trace has the wrong length")
    return arr.copy()


def solve_neumann_nonlinear(
    nl,
    order: FracOrder,
    mesh: HalfStripMesh,
    init,
    strategy: str = "newton",
    *,
    left: np.ndarray | float | None = None,
    right: np.ndarray | float | None = None,
    top: np.ndarray | float | None = None,
    pin: float | None = None,
    tol: float = 1e-10,
    max_iter: int | None = None,
) -> tuple[HalfStripField, LinearSystemStats]:
    """Solve ``L_a u = 0``, ``(1+a) (-y^a u_y) = f(u)`` on ``y = 0``.

    Sides/top take Dirichlet data where given and homogeneous weighted
    Neumann otherwise.  The unknowns are the free trace values; the interior
    is eliminated exactly through the discrete DtN matrix ``S``, so the
    discrete equations read ``S t + r0 = Mx f(t) / (1+a)``.

    ``newton`` is damped Newton on these equations.  ``gradient_flow`` is
    preconditioned steepest descent with Armijo backtracking on the discrete
    energy ``1/2 int y^a |grad u|^2 + int G(u)/(1+a)``, which decreases
    monotonically.  ``pin`` fixes ``trace(pin) = 0`` through a Lagrange
    multiplier (its value is reported in the stats).  Convergence means
    ``max |(1+a) flux_trace - f(trace)| <= tol`` at every free node.
    """
    if abs(mesh.a - order.a) > 1e-14:
        raise DomainError("mesh weight exponent does not match the order")
    data = StripData(left=left, right=right, top=top)
    prob = _TraceProblem(mesh, data)
    t = _resolve_init(init, mesh)[prob.ix]
    ap1 = 1.0 + order.a
    pin_idx = None
    if pin is not None:
        pin_idx = mesh.node_index(pin) - prob.ix.start
        if not (0 <= pin_idx < t.size):
            raise GridError("pinned node is not a free trace node")
        t[pin_idx] = 0.0
    drops: list = []
    if strategy == "newton":
        t, mult, hist, it = _newton(nl, prob, t, ap1, pin_idx, tol, max_iter or 60)
    elif strategy == "gradient_flow":
        t, mult, (hist, drops), it = _gradient_flow(nl, prob, t, ap1, pin_idx, tol, max_iter or 20000)
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    u = prob.field(t)
    flux = HalfStripField(mesh, u).flux_from_values()
    flux[prob.ix] = (prob.S @ t + prob.r0) / prob.mx
    fld = HalfStripField(
        mesh,
        u,
        meta={"source": "solve_neumann_nonlinear", "strategy": strategy, "pin": pin},
        boundary_flux=flux,
    )
    bres = _boundary_residual(nl, fld, prob, ap1, pin_idx, mult)
    ires = float(np.max(fld.relative_divergence_residual(), initial=0.0))
    stats = LinearSystemStats(
        iterations=it,
        residual_norm=bres,
        assembly_symmetric=_assembly_symmetric(mesh),
        converged=bres <= tol and ires <= INTERIOR_TOL,
        multiplier=float(mult),
        history=tuple(hist),
        decrements=tuple(drops),
        interior_residual=ires,
    )
    if not stats.converged:
        raise ConvergenceError(
            f"{strategy} stopped after {it} iterations with boundary residual {bres:.3e}",
            info={"field": fld, "stats": stats},
        )
    return fld, stats


def _boundary_residual(nl, fld: HalfStripField, prob: _TraceProblem, ap1, pin_idx, mult) -> float:
    ix = prob.ix
    res = ap1 * fld.flux_trace[ix] - np.asarray(nl.f(fld.values[ix, 0]))
    if pin_idx is not None:
        # the pinned node carries the multiplier instead of the boundary condition
        res[pin_idx] += ap1 * mult / prob.mx[pin_idx]
    return float(np.max(np.abs(res)))


def _trace_residual(nl, prob: _TraceProblem, t, ap1):
    return prob.S @ t + prob.r0 - prob.mx * np.asarray(nl.f(t)) / ap1


def _scaled(prob: _TraceProblem, R, ap1) -> float:
    return float(np.max(np.abs(ap1 * R / prob.mx)))


def _newton(nl, prob, t, ap1, pin_idx, tol, max_iter):
    n = t.size
    mult = 0.0
    hist = []
    e = np.zeros(n)
    if pin_idx is not None:
        e[pin_idx] = 1.0

    def F(tt, mm):
        return _trace_residual(nl, prob, tt, ap1) + mm * e

    Fv = F(t, mult)
    norm = _scaled(prob, Fv, ap1)
    hist.append(norm)
    for it in range(1, max_iter + 1):
        if norm <= 0.05 * tol:
            return t, mult, hist, it - 1
        J = prob.S - np.diag(prob.mx * np.asarray(nl.fprime(t)) / ap1)
        if pin_idx is not None:
            B = np.zeros((n + 1, n + 1))
            B[:n, :n] = J
            B[:n, n] = e
            B[n, :n] = e
            rhs = np.concatenate([-Fv, [-t[pin_idx]]])
        else:
            B, rhs = J, -Fv
        try:
            step = linalg.solve(B, rhs, assume_a="sym")
        except linalg.LinAlgError as exc:  # pragma: no cover - singular Jacobian
            raise ConvergenceError("singular Newton Jacobian", info={"iteration": it}) from exc
        dt = step[:n]
        dm = step[n] if pin_idx is not None else 0.0
        lam = 1.0
        while True:
            t_new = t + lam * dt
            m_new = mult + lam * dm
            F_new = F(t_new, m_new)
            n_new = _scaled(prob, F_new, ap1)
            if n_new < (1 - 1e-4 * lam) * norm or lam < 1e-6:
                break
            lam *= 0.5
        if lam < 1e-6 and n_new >= norm:
            break
        t, mult, Fv, norm = t_new, m_new, F_new, n_new
        hist.append(norm)
    return t, mult, hist, len(hist) - 1


def _trace_energy(nl, prob: _TraceProblem, t, ap1) -> float:
    quad = 0.5 * t @ (prob.S @ t) + prob.r0 @ t
    pot = float(np.sum(prob.mx * np.asarray(nl.G(t)))) / ap1
    return float(quad + pot + prob.lift_energy)


def _gradient_flow(nl, prob, t, ap1, pin_idx, tol, max_iter):
    n = t.size
    free = np.ones(n, dtype=bool)
    if pin_idx is not None:
        free[pin_idx] = False
    grid = np.linspace(-1.5, 1.5, 301)
    cshift = max(1e-3, float(np.max(np.abs(nl.fprime(grid)))) / ap1)
    P = prob.S[np.ix_(free, free)] + np.diag(cshift * prob.mx[free])
    chol = linalg.cho_factor(P)
    E = _trace_energy(nl, prob, t, ap1)
    energies = [E]
    drops: list[float] = []
    mult = 0.0
    for it in range(1, max_iter + 1):
        g = _trace_residual(nl, prob, t, ap1)
        if pin_idx is not None:
            mult = -g[pin_idx]
        gf = g[free]
        norm = float(np.max(np.abs(ap1 * gf / prob.mx[free])))
        if norm <= 0.05 * tol:
            return t, mult, (energies, drops), it - 1
        d = np.zeros(n)
        d[free] = -linalg.cho_solve(chol, gf)
        slope = float(g @ d)
        lin = float((prob.S @ t + prob.r0) @ d)
        curv = float(d @ (prob.S @ d))
        G0 = np.asarray(nl.G(t))
        alpha = 1.0
        while True:
            t_new = t + alpha * d
            # energy change evaluated directly, free of the O(E) cancellation
            dE = alpha * lin + 0.5 * alpha**2 * curv
            dE += float(np.sum(prob.mx * (np.asarray(nl.G(t_new)) - G0))) / ap1
            if dE <= 1e-4 * alpha * slope:
                break
            alpha *= 0.5
            if alpha < 1e-12:
                return t, mult, (energies, drops), it
        if dE >= 0:
            # round-off floor: the step no longer lowers the energy
            return t, mult, (energies, drops), it
        t, E = t_new, E + dE
        energies.append(E)
        drops.append(dE)
    return t, mult, (energies, drops), max_iter


# ----------------------------------------------------------------------- duality


def dual_conjugate(u: HalfStripField) -> HalfStripField:
    """``w = -y^a u_y`` on the same nodes; ``w`` solves the equation with weight ``y^-a``.

    Face fluxes ``T_{j+1/2} (u_j - u_{j+1})`` are exact for ``y^(1-a)``
    profiles; they are interpolated linearly (in y) to the nodes.  Row 0 is
    the conservative boundary flux.  The returned field lives on the mesh
    with weight exponent ``-a`` (same nodes).
    """
    m = u.mesh
    U = u.values
    F = m.y_trans[None, :] * (U[:, :-1] - U[:, 1:])  # at faces y_{j+1/2}
    y = m.y
    ym = 0.5 * (y[1:] + y[:-1])
    w = np.empty_like(U)
    w[:, 0] = u.flux_trace
    theta = (y[1:-1] - ym[:-1]) / (ym[1:] - ym[:-1])
    w[:, 1:-1] = F[:, :-1] + theta[None, :] * (F[:, 1:] - F[:, :-1])
    slope = (F[:, -1] - F[:, -2]) / (ym[-1] - ym[-2])
    w[:, -1] = F[:, -1] + slope * (y[-1] - ym[-1])
    dual_mesh = replace(m, weight_exponent=-m.a)
    return HalfStripField(dual_mesh, w, meta={"source": "dual_conjugate"})


def duality_residual(w: HalfStripField, *, margin: float | None = None) -> float:
    """Max strong-form residual of ``div(y^-a grad w)`` at interior nodes.

    Residuals are scaled by the dual cell measure.  Only nodes at distance
    ``>= margin`` (default ``min(X, Y) / 8``) from the bottom, the sides and
    the top are used: the nodal interpolation of face fluxes is first order
    in the interior but the scaled residual of an O(dy) interpolation error
    is unbounded as the cells shrink towards ``y = 0``.
    """
    m = w.mesh
    if margin is None:
        margin = min(m.X, m.Y) / 8.0
    r = w.divergence_residual()
    x, y = m.x[1:-1], m.y[1:-1]
    xlo = m.x0 + margin
    sx = (x >= xlo - 1e-12) & (x <= m.X - margin + 1e-12)
    sy = (y >= margin - 1e-12) & (y <= m.Y - margin + 1e-12)
    if not (np.any(sx) and np.any(sy)):
        raise GridError("duality margin leaves no interior nodes")
    return float(np.max(np.abs(r[np.ix_(sx, sy)])))


# ----------------------------------------------------------------------- energy


def energy(u: HalfStripField, nl, R: float) -> float:
    """``int_{B_R^+} 1/2 y^a |grad u|^2 + int_{|x|<R} G(u)/(1+a)`` by the finite-volume quadrature.

    Edge contributions ``1/2 T_e (u_p - u_q)^2`` are kept when the edge
    midpoint lies in the half-ball.  A half-ball leaving the strip is clipped
    to it; for ``R`` covering the strip this is the discrete energy whose
    critical points the nonlinear solver computes.
    """
    m = u.mesh
    if not R > 0:
        raise DomainError("energy needs a positive radius")
    U = u.values
    x, y = m.x, m.y
    xm = 0.5 * (x[1:] + x[:-1])
    ym = 0.5 * (y[1:] + y[:-1])
    ex = 0.5 * m.x_trans[:, None] * m.y_mass[None, :] * (U[1:] - U[:-1]) ** 2
    inx = xm[:, None] ** 2 + y[None, :] ** 2 <= R * R
    ey = 0.5 * m.x_mass[:, None] * m.y_trans[None, :] * (U[:, 1:] - U[:, :-1]) ** 2
    iny = x[:, None] ** 2 + ym[None, :] ** 2 <= R * R
    inb = np.abs(x) <= R
    pot = np.sum(m.x_mass[inb] * np.asarray(nl.G(U[inb, 0]))) / (1.0 + m.a)
    return float(ex[inx].sum() + ey[iny].sum() + pot)


# ----------------------------------------------------------------- maximum principle


@dataclass(frozen=True)
class MaxPrincipleReport:
    min_interior: float
    min_boundary: float
    passed: bool
    tolerance: float


def check_max_principle(u: HalfStripField, *, tol: float = 1e-12) -> MaxPrincipleReport:
    """Most negative interior value of a field with nonnegative boundary data."""
    U = u.values
    interior = U[1:-1, 1:-1]
    boundary = np.concatenate([U[0], U[-1], U[:, 0], U[:, -1]])
    mi = float(interior.min()) if interior.size else 0.0
    return MaxPrincipleReport(mi, float(boundary.min()), mi >= -tol, tol)


# ----------------------------------------------------------------------- Harnack


def _random_smooth(rng: np.random.Generator, t: np.ndarray, modes: int = 6) -> np.ndarray:
    """Smooth random function on [0, 1] with unit-ish amplitude."""
    k = np.arange(1, modes + 1)
    amp = rng.normal(size=modes) / k
    ph = rng.uniform(0, 2 * np.pi, size=modes)
    return (amp[None, :] * np.sin(np.pi * k[None, :] * t[:, None] + ph[None, :])).sum(axis=1)


def harnack_ratio(
    order: FracOrder,
    rng: np.random.Generator,
    *,
    d_bound: float = 1.0,
    resolution: int = 16,
    radius: float = 1.0,
    spread: float = 1.0,
) -> float | None:
    """One Harnack trial on ``[-4R, 4R] x [0, 4R]`` (R = radius); ``None`` if not positive.

    Random positive Dirichlet data on the sides and top, a random Robin
    coefficient ``|d| <= d_bound`` on the bottom (``-y^a u_y + d u = 0``),
    and the ratio ``sup / inf`` over the nodes of the half-ball ``B_R^+``.
    """
    R4 = 4.0 * radius
    mesh = HalfStripMesh(R4, R4, 2 * 4 * resolution, 4 * resolution, order.a)
    x, y = mesh.x, mesh.y
    L = x[-1] - x[0]
    perim = np.concatenate([y / R4, 1 + (x - x[0]) / L, 2 + y[::-1] / R4]) / 3.0
    g = np.exp(spread * _random_smooth(rng, perim))
    ny1, nx1 = y.size, x.size
    left, top, right = g[:ny1], g[ny1 : ny1 + nx1], g[ny1 + nx1 :][::-1]
    top = top.copy()
    top[0], top[-1] = left[-1], right[-1]
    dvals = d_bound * np.clip(_random_smooth(rng, (x - x[0]) / L), -1, 1)
    data = StripData(left=left, right=right, top=top)
    prob = _TraceProblem(mesh, data)
    ix = prob.ix
    Sd = prob.S + np.diag(prob.mx * dvals[ix])
    t = linalg.solve(Sd, -prob.r0)
    u = prob.field(t)
    if np.min(u) <= 0:
        return None
    ball = x[:, None] ** 2 + y[None, :] ** 2 <= radius**2 * (1 + 1e-12)
    vals = u[ball]
    return float(vals.max() / vals.min())


def estimate_harnack(
    order: FracOrder,
    trials: int,
    *,
    seed: int = 0,
    d_bound: float = 1.0,
    resolution: int = 16,
    spread: float = 1.0,
    max_attempts: int | None = None,
) -> float:
    """Largest ``sup/inf`` over ``B_1^+`` among ``trials`` random positive solutions."""
    if trials < 1:
        raise DomainError("need at least one trial")
    rng = np.random.default_rng(seed)
    worst = 0.0
    done = 0
    attempts = 0
    limit = max_attempts or 20 * trials
    while done < trials:
        attempts += 1
        if attempts > limit:
            raise ConvergenceError("too many non-positive Harnack trials", info={"done": done})
        r = harnack_ratio(order, rng, d_bound=d_bound, resolution=resolution, spread=spread)
        if r is None:
            continue
        worst = max(worst, r)
        done += 1
    return worst


# ------------------------------------------------------------------------- Hopf


def hopf_barrier(mesh: HalfStripMesh, A: float = -0.25, R: float | None = None) -> HalfStripField:
    """``w_A = y^-a (y + A y^2) cos(pi x / (2R))``, a nonnegative field vanishing on ``y = 0``.

    For ``A <= 0`` and ``y <= 1`` it satisfies ``div(y^a grad w_A) <= 0``.
    """
    R = mesh.X if R is None else R
    x, y = mesh.x, mesh.y
    phi = np.cos(np.pi * x / (2 * R))
    prof = y ** (1 - mesh.a) * (1 + A * y)
    return HalfStripField(mesh, phi[:, None] * prof[None, :], meta={"source": "hopf_barrier", "A": A})


def check_hopf(u: HalfStripField, boundary_point_index: int, *, tol: float = 1e-9,
               super_tol: float = 1e-8, region_height: float | None = None) -> float:
    """Weighted one-sided flux ``-y^a u_y`` at a boundary zero of a nonnegative supersolution.

    Preconditions (checked, ``PreconditionError`` otherwise): ``u >= 0``,
    ``u > 0`` at interior nodes, ``u = 0`` at the named bottom node, and the
    discrete ``div(y^a grad u) <= 0`` (i.e. ``A u >= 0``) at interior nodes
    with ``y <= region_height``.  Returns the fit flux at the node; the Hopf
    property is ``flux < 0``.
    """
    m = u.mesh
    U = u.values
    i = int(boundary_point_index)
    if not (0 < i < m.nx):
        raise PreconditionError("boundary point must be an interior x-node")
    scale = float(np.max(np.abs(U)))
    if scale == 0.0:
        raise PreconditionError("u vanishes identically")
    if np.min(U) < -tol * scale:
        raise PreconditionError("u takes negative values")
    if np.min(U[1:-1, 1:-1]) <= 0.0:
        raise PreconditionError("u is not positive in the interior")
    if abs(U[i, 0]) > tol * scale:
        raise PreconditionError("u does not vanish at the boundary point")
    # componentwise: A u >= -super_tol |A| |u| (round-off safe on graded meshes)
    Au = (m.apply(U) / np.maximum(m.apply_abs(U), np.finfo(float).tiny))[1:-1, 1:-1]
    if region_height is not None:
        Au = Au[:, m.y[1:-1] <= region_height]
    if np.min(Au) < -super_tol:
        raise PreconditionError(f"not a supersolution: min A u / |A||u| = {np.min(Au):.3e}")
    return float(u.fit_flux[i])


# ------------------------------------------------------------------ serialisation


def save_field(u: HalfStripField, path: str | Path) -> Path:
    """``.npy`` array plus ``<path>.json`` with mesh and metadata."""
    path = Path(path)
    if path.suffix != ".npy":
        path = path.with_suffix(".npy")
    np.save(path, np.asarray(u.values))
    meta = {
        "mesh": u.mesh.to_dict(),
        "left_asymptote": u.left_asymptote,
        "right_asymptote": u.right_asymptote,
        "meta": _jsonable(u.meta),
    }
    path.with_suffix(".npy.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def load_field(path: str | Path) -> HalfStripField:
    path = Path(path)
    values = np.load(path)
    meta = json.loads(path.with_suffix(".npy.json").read_text())
    mesh = HalfStripMesh(**meta["mesh"])
    return HalfStripField(mesh, values, meta["left_asymptote"], meta["right_asymptote"], meta.get("meta", {}))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, (str, int, float, bool)) or obj is None:
        return obj
    return repr(obj)


def extension_scale(order: FracOrder) -> float:
    """``d_s``: multiply the conormal derivative by this to get ``(-Delta)^s``."""
    return extension_constant(order.s)
