"""Nonlinearities, layer and radial solution drivers, and the necessary-condition checker."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .errors import ConvergenceError, DomainError, GridError
from .extension import HalfStripField, LinearSystemStats, solve_neumann_nonlinear
from .grid import GridFunction
from .kernels import FracOrder
from .mesh import HalfStripMesh

__all__ = [
    "Nonlinearity",
    "NecessaryConditions",
    "LayerSolution",
    "RadialSolution",
    "ContinuationResult",
    "make_bistable",
    "make_nonlinearity",
    "check_necessary_conditions",
    "solve_layer",
    "solve_ode_layer",
    "continuation_in_s",
    "solve_radial",
]

_CHECK_GRID = np.linspace(-1.5, 1.5, 61)


@dataclass(frozen=True)
class Nonlinearity:
    """``f``, ``f'`` and a potential ``G`` with ``G' = -f``; ``g_ref = G(1)``."""

    name: str
    f: Callable[[np.ndarray], np.ndarray]
    fprime: Callable[[np.ndarray], np.ndarray]
    G: Callable[[np.ndarray], np.ndarray]
    g_ref: float
    params: dict = field(default_factory=dict)

    def consistency_errors(self, grid: np.ndarray = _CHECK_GRID, step: float = 1e-5) -> tuple[float, float]:
        """Relative errors of ``G' = -f`` and ``f' = fprime`` by central differences."""
        v = np.asarray(grid, dtype=float)
        dG = (np.asarray(self.G(v + step)) - np.asarray(self.G(v - step))) / (2 * step)
        df = (np.asarray(self.f(v + step)) - np.asarray(self.f(v - step))) / (2 * step)
        fv = np.asarray(self.f(v))
        fp = np.asarray(self.fprime(v))
        eg = np.max(np.abs(dG + fv) / (1.0 + np.abs(fv)))
        ef = np.max(np.abs(df - fp) / (1.0 + np.abs(fp)))
        return float(eg), float(ef)

    def scaled(self, c: float) -> "Nonlinearity":
        """``c f`` with potential ``c G``."""
        f, fp, G = self.f, self.fprime, self.G
        return Nonlinearity(
            f"{self.name}*{c:.6g}",
            lambda v: c * np.asarray(f(v)),
            lambda v: c * np.asarray(fp(v)),
            lambda v: c * np.asarray(G(v)),
            c * self.g_ref,
            {**self.params, "scale": c},
        )

    def well_curvature(self) -> float:
        """Largest ``G'' = -f'`` at the wells ``v = +-1``."""
        return float(max(-np.asarray(self.fprime(np.array([-1.0, 1.0])))))


def _vec(fn):
    return lambda v: np.asarray(fn(np.asarray(v, dtype=float)), dtype=float)


def make_bistable(name: str, **params) -> Nonlinearity:
    """``cubic``, ``sine_pi`` or ``custom`` (needs ``f``, ``fprime``, ``G``; optional ``g_ref``).

    Custom callbacks are rejected when ``G' != -f`` or ``f' != fprime``
    beyond ``tol`` (default 1e-6, relative) on ``[-1.5, 1.5]``.
    """
    if name == "cubic":
        return Nonlinearity(
            "cubic",
            lambda v: v - v**3,
            lambda v: 1.0 - 3.0 * v**2,
            lambda v: 0.25 * (1.0 - v**2) ** 2,
            0.0,
        )
    if name == "sine_pi":
        pi = math.pi
        return Nonlinearity(
            "sine_pi",
            lambda v: np.sin(pi * v) / pi,
            lambda v: np.cos(pi * v),
            lambda v: (1.0 + np.cos(pi * v)) / pi**2,
            0.0,
        )
    if name == "custom":
        try:
            f, fp, G = params.pop("f"), params.pop("fprime"), params.pop("G")
        except KeyError as exc:
            raise DomainError("custom nonlinearity needs f, fprime and G") from exc
        tol = params.pop("tol", 1e-6)
        label = params.pop("label", "custom")
        g_ref = params.pop("g_ref", None)
        nl = Nonlinearity(label, _vec(f), _vec(fp), _vec(G), 0.0, params)
        eg, ef = nl.consistency_errors()
        if eg > tol:
            raise DomainError(f"custom potential violates G' = -f (relative error {eg:.2e})")
        if ef > tol:
            raise DomainError(f"custom derivative violates f' = fprime (relative error {ef:.2e})")
        g1 = float(nl.G(np.array(1.0))) if g_ref is None else float(g_ref)
        return Nonlinearity(label, nl.f, nl.fprime, nl.G, g1, params)
    raise DomainError(f"unknown bistable nonlinearity {name!r}")


def make_nonlinearity(name: str, **params) -> Nonlinearity:
    """Named instances: the bistable ones plus ``zero`` and ``ground_state`` (``f = -v + v^p``)."""
    if name in ("cubic", "sine_pi", "custom"):
        return make_bistable(name, **params)
    if name == "zero":
        return Nonlinearity("zero", lambda v: 0.0 * v, lambda v: 0.0 * v, lambda v: 0.0 * v, 0.0)
    if name == "ground_state":
        p = float(params.get("p", 2.0))
        if p <= 1:
            raise DomainError("ground_state needs p > 1")
        return Nonlinearity(
            "ground_state",
            lambda v: -v + np.abs(v) ** (p - 1) * v,
            lambda v: -1.0 + p * np.abs(v) ** (p - 1),
            lambda v: 0.5 * v**2 - np.abs(v) ** (p + 1) / (p + 1),
            0.5 - 1.0 / (p + 1),
            {"p": p},
        )
    if name == "shifted_cubic":
        c = float(params.get("shift", 0.1))
        return make_bistable(
            "custom",
            f=lambda v: v - v**3 + c,
            fprime=lambda v: 1.0 - 3.0 * v**2,
            G=lambda v: 0.25 * (1.0 - v**2) ** 2 - c * v,
            label="shifted_cubic",
            shift=c,
        )
    if name == "linear_potential":
        return make_bistable(
            "custom",
            f=lambda v: -np.ones_like(v),
            fprime=lambda v: np.zeros_like(v),
            G=lambda v: v,
            label="linear_potential",
        )
    raise DomainError(f"unknown nonlinearity {name!r}")


# --------------------------------------------------------------- necessary conditions


@dataclass(frozen=True)
class NecessaryConditions:
    nec1_pass: bool
    nec2_pass: bool
    integral_f: float
    f_at_plus1: float
    f_at_minus1: float
    min_gap: float
    g_asymmetry: float

    @property
    def failing(self) -> tuple[str, ...]:
        return tuple(n for n, ok in (("nec1", self.nec1_pass), ("nec2", self.nec2_pass)) if not ok)


def check_necessary_conditions(nl: Nonlinearity, samples: int = 1000, *, tol: float = 1e-10) -> NecessaryConditions:
    """Zeros of ``f`` at ``+-1`` (nec1) and the balanced double well (nec2)."""
    if samples < 100:
        raise DomainError("need at least 100 samples")
    fp = float(nl.f(np.array(1.0)))
    fm = float(nl.f(np.array(-1.0)))
    g1 = float(nl.G(np.array(1.0)))
    gm1 = float(nl.G(np.array(-1.0)))
    v = np.linspace(-1.0, 1.0, samples + 2)[1:-1]
    gap = np.asarray(nl.G(v)) - g1
    asym = abs(g1 - gm1)
    integral, _ = integrate.quad(lambda t: float(nl.f(np.array(t))), -1.0, 1.0, epsabs=1e-13, limit=200)
    return NecessaryConditions(
        nec1_pass=abs(fp) <= tol and abs(fm) <= tol,
        nec2_pass=bool(gap.min() > 0) and asym <= tol,
        integral_f=float(integral),
        f_at_plus1=fp,
        f_at_minus1=fm,
        min_gap=float(gap.min()),
        g_asymmetry=asym,
    )


# ------------------------------------------------------------------------ layers


@dataclass(frozen=True, eq=False)
class LayerSolution:
    trace: GridFunction
    field: HalfStripField
    order: FracOrder
    pinned_at_zero: bool
    nonlinearity: str = ""
    stats: LinearSystemStats | None = None
    f_scale: float = 1.0

    @property
    def mesh(self) -> HalfStripMesh:
        return self.field.mesh

    def is_monotone(self) -> bool:
        return bool(np.all(np.diff(self.trace.values) > 0))

    def end_values(self) -> tuple[float, float]:
        return float(self.trace.values[0]), float(self.trace.values[-1])

    def field_monotone(self) -> bool:
        """``u_x > 0`` at every pair of neighbouring nodes."""
        return bool(np.all(np.diff(self.field.values, axis=0) > 0))


def layer_initial_guess(nl: Nonlinearity) -> Callable[[np.ndarray], np.ndarray]:
    """``tanh(x / w)`` with ``w = sqrt(2 / G''(+-1))``."""
    curv = nl.well_curvature()
    w = math.sqrt(2.0 / curv) if curv > 0 else 1.0
    return lambda x: np.tanh(np.asarray(x) / w)


def solve_layer(
    nl: Nonlinearity,
    order: FracOrder,
    mesh: HalfStripMesh,
    *,
    init=None,
    sides: str = "neumann",
    strategy: str = "newton",
    pin: bool = True,
    tol: float = 1e-10,
) -> LayerSolution:
    """Increasing layer of the extension problem with limits ``-1`` and ``+1``.

    ``sides="neumann"`` truncates with homogeneous weighted Neumann data on
    ``x = +-X``; ``"dirichlet"`` imposes ``u = -1`` and ``u = +1`` there.  The
    top ``y = Y`` is always homogeneous Neumann.  Monotonicity is verified,
    not enforced: a non-monotone converged trace raises ``ConvergenceError``.
    """
    if mesh.radial:
        raise GridError("layers live on the planar strip")
    nec = check_necessary_conditions(nl)
    if init is None:
        init = layer_initial_guess(nl)
    if sides == "dirichlet":
        kw = dict(left=-1.0, right=1.0)
    elif sides == "neumann":
        kw = {}
    else:
        raise ValueError(f"unknown side condition {sides!r}")
    fld, stats = solve_neumann_nonlinear(
        nl, order, mesh, init, strategy, pin=0.0 if pin else None, tol=tol, **kw
    )
    fld = replace(
        fld,
        left_asymptote=-1.0,
        right_asymptote=1.0,
        meta={**fld.meta, "sides": sides, "nec1": nec.nec1_pass, "nec2": nec.nec2_pass},
    )
    trace = GridFunction(
        x0=mesh.x0, h=mesh.hx, values=fld.values[:, 0], left_asymptote=-1.0, right_asymptote=1.0,
        asymptote_slack=math.inf, meta={"nonlinearity": nl.name, "s": order.s},
    )
    sol = LayerSolution(trace, fld, order, pin, nl.name, stats)
    if not sol.is_monotone():
        raise ConvergenceError("converged trace is not monotone", info={"solution": sol})
    return sol


def solve_ode_layer(nl: Nonlinearity, xs) -> GridFunction:
    """Classical layer of ``-v'' = f(v)`` with ``v(0) = 0``.

    Integrates the first-order identity ``v' = sqrt(2 (G(v) - G(1)))``
    outward from ``x = 0`` with an eighth-order Runge-Kutta scheme on the
    requested nodes.  The slope is clamped to zero once ``v`` reaches a well,
    so degenerate wells (``G''(+-1) = 0``) need no special treatment; such
    inputs are flagged in ``meta``.
    """
    nec = check_necessary_conditions(nl)
    if not (nec.nec1_pass and nec.nec2_pass):
        raise DomainError(f"ODE layer needs nec1 and nec2; failing: {nec.failing}")
    xs = np.asarray(xs, dtype=float)
    out = _ode_branches(nl, xs)
    out[xs == 0] = 0.0
    curv = -np.asarray(nl.fprime(np.array([-1.0, 1.0])))
    h = float(xs[1] - xs[0]) if xs.size > 1 else 1.0
    return GridFunction(
        x0=float(xs[0]), h=h, values=out, left_asymptote=-1.0, right_asymptote=1.0,
        asymptote_slack=math.inf, meta={"ode_layer": nl.name, "degenerate_wells": bool(np.any(curv <= 0))},
    )


def _ode_branches(nl: Nonlinearity, xs: np.ndarray) -> np.ndarray:
    """Integrate each half-line separately (G need not be even)."""
    g1 = nl.g_ref
    out = np.zeros_like(xs)
    for sign in (1.0, -1.0):
        sel = xs * sign > 0
        pts = np.sort(np.abs(xs[sel]))
        if pts.size == 0:
            continue

        def rhs(_x, v):
            w = float(np.clip(sign * v[0], -1.0, 1.0))
            gap = float(nl.G(w)) - g1
            return [math.sqrt(2.0 * gap) if gap > 0 and abs(w) < 1.0 else 0.0]

        sol = integrate.solve_ivp(rhs, (0.0, float(pts[-1])), [0.0], method="DOP853",
                                  t_eval=pts, rtol=1e-13, atol=1e-14)
        if not sol.success:
            raise ConvergenceError(f"ODE layer integration failed: {sol.message}")
        out[sel] = sign * np.interp(np.abs(xs[sel]), sol.t, sol.y[0])
    return out


@dataclass(frozen=True)
class ContinuationResult:
    s_values: tuple
    layers: tuple
    errors: tuple
    complete: bool
    failure: str | None = None
    window: float = 5.0

    def nonincreasing(self, s_min: float = 0.7, slack: float = 0.1) -> bool:
        """Errors for ``s >= s_min`` never grow by more than ``slack`` (relative)."""
        errs = [e for s, e in zip(self.s_values, self.errors) if s >= s_min]
        return all(b <= (1 + slack) * a for a, b in zip(errs, errs[1:]))

    def strictly_decreasing(self, s_min: float = 0.7) -> bool:
        errs = [e for s, e in zip(self.s_values, self.errors) if s >= s_min]
        return all(b < a for a, b in zip(errs, errs[1:]))


def continuation_in_s(
    nl: Nonlinearity,
    s_list: Sequence[float],
    mesh_policy: Callable[[FracOrder], HalfStripMesh] | dict | None = None,
    *,
    window: float = 5.0,
    sides: str = "neumann",
    strategy: str = "newton",
) -> ContinuationResult:
    """Layers along ascending ``s``, each warm-started from the previous trace.

    Records ``max_{|x| <= window} |v_s - v_ode|`` against the classical layer.
    A failure at some ``s`` stops the sweep and returns the partial results.
    """
    s_list = [float(s) for s in s_list]
    if any(b <= a for a, b in zip(s_list, s_list[1:])):
        raise DomainError("s_list must be strictly ascending")
    policy = _mesh_policy(mesh_policy)
    layers, errors, done = [], [], []
    init = None
    for s in s_list:
        order = FracOrder(s)
        try:
            mesh = policy(order)
            sol = solve_layer(nl, order, mesh, init=init, sides=sides, strategy=strategy)
        except (ConvergenceError, DomainError) as exc:
            return ContinuationResult(tuple(done), tuple(layers), tuple(errors), False, f"s={s}: {exc}", window)
        ode = solve_ode_layer(nl, mesh.x)
        sel = np.abs(mesh.x) <= window
        errors.append(float(np.max(np.abs(sol.trace.values - ode.values)[sel])))
        layers.append(sol)
        done.append(s)
        init = sol.trace
    return ContinuationResult(tuple(done), tuple(layers), tuple(errors), True, None, window)


def _mesh_policy(policy) -> Callable[[FracOrder], HalfStripMesh]:
    if callable(policy):
        return policy
    opts = {"X": 60.0, "Y": 40.0, "nx": 512, "ny": 256}
    if policy:
        opts.update(policy)
    return lambda order: HalfStripMesh.for_order(order, **opts)


# ------------------------------------------------------------------------ radial


@dataclass(frozen=True, eq=False)
class RadialSolution:
    profile: GridFunction
    field: HalfStripField
    order: FracOrder
    dimension: int
    status: str  # "nonconstant" or "trivial"
    stats: LinearSystemStats | None = None
    nonlinearity: str = ""

    @property
    def nonconstant(self) -> bool:
        return self.status == "nonconstant"

    def is_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.profile.values) <= 0))


def _bump(amplitude: float, width: float):
    return lambda r: amplitude * np.exp(-((np.asarray(r) / width) ** 2))


def solve_radial(
    nl: Nonlinearity,
    order: FracOrder,
    n: int,
    mesh: HalfStripMesh,
    *,
    init=None,
    amplitude: float = 2.5,
    width: float = 2.0,
    tol: float = 1e-10,
    zero_tol: float = 1e-8,
) -> RadialSolution:
    """Radial solution of the extension problem in ``R^n x (0, inf)``.

    The mesh must be radial with ``dimension == n``.  The axis ``r = 0``
    carries the symmetry condition, ``r = X`` the decay condition ``u = 0``
    and the top a homogeneous Neumann condition.  Without ``init`` Newton
    starts from a Gaussian bump (``amplitude``, ``width``) and, if that
    diverges, from two narrower and taller bumps.  A
    converged trace with ``max |v| <= zero_tol`` is returned with status
    ``"trivial"``.
    """
    if n < 2 or int(n) != n:
        raise DomainError("radial problems need an integer dimension n >= 2")
    if mesh.dimension != n:
        raise GridError(f"mesh dimension {mesh.dimension} does not match n = {n}")
    if abs(float(nl.f(np.array(0.0)))) > 1e-12:
        raise DomainError("radial solutions decaying to 0 need f(0) = 0")
    order_n = FracOrder(order.s, n)
    if init is not None:
        starts = [init]
    else:
        shapes = [(amplitude, width), (amplitude, 0.5 * width), (2.0 * amplitude, 0.25 * width)]
        starts = [_bump(A, w) for A, w in shapes]
    for k, start in enumerate(starts):
        try:
            fld, stats = solve_neumann_nonlinear(nl, order_n, mesh, start, "newton", right=0.0, tol=tol)
            break
        except ConvergenceError:
            if k == len(starts) - 1:
                raise
    trace = fld.values[:, 0]
    status = "trivial" if np.max(np.abs(trace)) <= zero_tol else "nonconstant"
    prof = GridFunction(x0=0.0, h=mesh.hx, values=trace, meta={"dimension": n, "s": order.s, "status": status})
    return RadialSolution(prof, fld, order_n, n, status, stats, nl.name)
