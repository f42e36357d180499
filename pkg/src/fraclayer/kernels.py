"""Constants and closed-form kernels of the weighted extension problem.

Everything here is a pure function of ``(n, s)``.  Gamma ratios come from
:func:`math.gamma`, which is accurate to a few ulp on the range used here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from .errors import DomainError

__all__ = [
    "FracOrder",
    "KernelConstants",
    "pv_constant",
    "pv_constant_forms",
    "extension_constant",
    "poisson_normalizer",
    "poisson_kernel",
    "poisson_profile",
    "fundamental_constant",
    "fundamental_solution",
    "neumann_flux",
    "kernel_constants",
    "sphere_area",
]


def _check_s(s: float) -> float:
    s = float(s)
    if not (0.0 < s < 1.0) or math.isnan(s):
        raise DomainError(f"fraction s must lie in (0, 1), got {s!r}")
    return s


def _check_n(n: int) -> int:
    if int(n) != n or n < 1:
        raise DomainError(f"dimension n must be a positive integer, got {n!r}")
    return int(n)


@dataclass(frozen=True)
class FracOrder:
    """Fraction ``s`` of the operator, ambient dimension ``n`` and weight exponent ``a = 1 - 2s``."""

    s: float
    n: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "s", _check_s(self.s))
        object.__setattr__(self, "n", _check_n(self.n))

    @property
    def a(self) -> float:
        return 1.0 - 2.0 * self.s

    @property
    def boundary_scale(self) -> float:
        """``d_s / (1 + a)``: the trace of a solution with ``(1+a) du/dnu = f(u)``
        solves ``(-Delta)^s v = boundary_scale * f(v)``."""
        return extension_constant(self.s) / (1.0 + self.a)

    def constants(self) -> "KernelConstants":
        return kernel_constants(self.n, self.s)


@dataclass(frozen=True)
class KernelConstants:
    c_ns: float
    d_s: float
    p_ns: float
    # None where the Neumann fundamental solution is not a decaying power (n <= 2s)
    e_ns: float | None


def sphere_area(n: int) -> float:
    """Surface measure of the unit sphere S^{n-1} in R^n."""
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


def pv_constant_forms(n: int, s: float) -> tuple[float, float, float]:
    """The three algebraically equivalent gamma expressions for C_{n,s}."""
    n = _check_n(n)
    s = _check_s(s)
    base = math.pi ** (-n / 2) * 2.0 ** (2 * s) * math.gamma((n + 2 * s) / 2)
    return (
        base / -math.gamma(-s),
        base * s / math.gamma(1 - s),
        base * s * (1 - s) / math.gamma(2 - s),
    )


def pv_constant(n: int, s: float) -> float:
    """Normalisation C_{n,s} of the singular-integral form of (-Delta)^s."""
    return pv_constant_forms(n, s)[2]


def extension_constant(s: float) -> float:
    """d_s with (-Delta)^s v = -d_s lim y^a u_y for the L_a-harmonic extension u of v."""
    s = _check_s(s)
    return 2.0 ** (2 * s - 1) * math.gamma(s) / math.gamma(1 - s)


def poisson_normalizer(n: int, s: float) -> float:
    """p_{n,s} such that p_{n,s} * int_{R^n} (1+|xi|^2)^{-(n+2s)/2} dxi = 1."""
    n = _check_n(n)
    s = _check_s(s)
    return math.gamma((n + 2 * s) / 2) / (math.pi ** (n / 2) * math.gamma(s))


def _radius(order: FracOrder, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if order.n == 1:
        return np.abs(x)
    if x.shape[-1] != order.n:
        raise DomainError(f"points must have trailing dimension {order.n}, got shape {x.shape}")
    return np.linalg.norm(x, axis=-1)


def poisson_profile(order: FracOrder, xi) -> np.ndarray:
    """H_s(xi) = p_{n,s} (1+|xi|^2)^{-(n+2s)/2}; P_s(x, y) = y^{-n} H_s(x/y)."""
    r = _radius(order, xi)
    p = poisson_normalizer(order.n, order.s)
    return p * (1.0 + r * r) ** (-(order.n + 2 * order.s) / 2)


def poisson_kernel(order: FracOrder, x, y) -> np.ndarray | float:
    """P_s(x, y) = p_{n,s} y^{2s} / (|x|^2 + y^2)^{(n+2s)/2} for y > 0."""
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise DomainError("Poisson kernel needs y > 0")
    r = _radius(order, x)
    p = poisson_normalizer(order.n, order.s)
    out = p * y ** (2 * order.s) / (r * r + y * y) ** ((order.n + 2 * order.s) / 2)
    return float(out) if np.ndim(out) == 0 else out


@lru_cache(maxsize=256)
def _hemisphere_flux(n: int, s: float) -> float:
    """Outward flux of y^a grad(rho^{1-a-n}) through the unit upper half-sphere, by quadrature."""
    a = 1.0 - 2.0 * s
    # y = cos(theta), theta measured from the y axis; dS = |S^{n-1}| sin^{n-1}(theta) dtheta
    radial = 1.0 - a - n
    half_pi = math.pi / 2

    def smooth_part(t: float) -> float:
        # cos(t)^a / (pi/2 - t)^a is analytic on [0, pi/2]; the algebraic factor goes to the weight
        gap = half_pi - t
        ratio = math.sin(gap) / gap if gap > 0 else 1.0
        return ratio**a * math.sin(t) ** (n - 1)

    weight, _ = integrate.quad(
        smooth_part, 0.0, half_pi, weight="alg", wvar=(0.0, a), epsabs=0.0, epsrel=1e-13, limit=200
    )
    return radial * weight * sphere_area(n)


def fundamental_constant(n: int, s: float) -> float:
    """e_{n,s} calibrated so that -y^a d_y Gamma_s carries unit mass on {y = 0}.

    The flux of y^a grad Gamma_s through every half-sphere is the same; the
    divergence theorem makes it equal to minus the boundary mass, which
    fixes the constant.  Defined only when the power 2s - n is negative.
    """
    n = _check_n(n)
    s = _check_s(s)
    if n <= 2 * s:
        raise DomainError(f"no decaying Neumann fundamental solution for n={n}, s={s}")
    return -1.0 / _hemisphere_flux(n, s)


def fundamental_solution(order: FracOrder, x, y) -> np.ndarray | float:
    """Gamma_s(x, y) = e_{n,s} |(x, y)|^{2s-n}."""
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise DomainError("fundamental solution lives on y >= 0")
    r = _radius(order, x)
    rho = np.sqrt(r * r + y * y)
    if np.any(rho == 0):
        raise DomainError("fundamental solution is singular at the origin")
    e = fundamental_constant(order.n, order.s)
    out = e * rho ** (2 * order.s - order.n)
    return float(out) if np.ndim(out) == 0 else out


def neumann_flux(order: FracOrder, x, y) -> np.ndarray | float:
    """-y^a d_y Gamma_s(x, y), computed in closed form for y > 0."""
    y = np.asarray(y, dtype=float)
    r = _radius(order, x)
    rho2 = r * r + y * y
    e = fundamental_constant(order.n, order.s)
    p = 2 * order.s - order.n
    out = -(y ** order.a) * e * p * rho2 ** (p / 2 - 1) * y
    return float(out) if np.ndim(out) == 0 else out


def kernel_constants(n: int, s: float) -> KernelConstants:
    n = _check_n(n)
    s = _check_s(s)
    e = fundamental_constant(n, s) if n > 2 * s else None
    return KernelConstants(
        c_ns=pv_constant(n, s),
        d_s=extension_constant(s),
        p_ns=poisson_normalizer(n, s),
        e_ns=e,
    )
