"""Graded tensor meshes of the truncated half-strip and their finite-volume weights."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from functools import cached_property

import numpy as np
from scipy import sparse

from .errors import GridError
from .grid import GridFunction
from .kernels import FracOrder

__all__ = ["HalfStripMesh", "default_grading"]


def default_grading(a: float) -> float:
    """``2/(1+a)`` clipped to ``[1, 4]``."""
    return float(min(4.0, max(1.0, 2.0 / (1.0 + a))))


@dataclass(frozen=True)
class HalfStripMesh:
    """Nodes ``x_i`` (uniform) times ``y_j = Y (j/ny)^grading`` on ``[.., X] x [0, Y]``.

    ``dimension == 1`` is the planar strip ``[-X, X] x [0, Y]``.  For
    ``dimension = n > 1`` the first coordinate is the radius ``r in [0, X]``
    of a radially symmetric problem in ``R^n`` and every x-integral carries
    the weight ``r^(n-1)``.

    Finite-volume weights (node-centred dual cells):

    * ``y_mass[j]``  exact ``int y^a`` over the dual y-cell,
    * ``y_trans[j]`` ``1 / int_{y_j}^{y_{j+1}} y^-a``, exact for ``y^(1-a)`` profiles,
    * ``x_mass[i]``  dual-cell length (or ``int r^(n-1)``),
    * ``x_trans[i]`` edge transmissibility ``1/h`` (or ``int r^(n-1) / h^2``).
    """

    X: float
    Y: float
    nx: int
    ny: int
    weight_exponent: float
    grading: float | None = None
    dimension: int = 1

    def __post_init__(self) -> None:
        a = float(self.weight_exponent)
        if not (-1.0 < a < 1.0):
            raise GridError(f"weight exponent must lie in (-1, 1), got {a}")
        if not (self.X > 0 and self.Y > 0):
            raise GridError("X and Y must be positive")
        if int(self.nx) != self.nx or int(self.ny) != self.ny or self.nx < 8 or self.ny < 8:
            raise GridError(f"need integer nx, ny >= 8, got {self.nx}, {self.ny}")
        if int(self.dimension) != self.dimension or self.dimension < 1:
            raise GridError("dimension must be a positive integer")
        g = default_grading(a) if self.grading is None else float(self.grading)
        if not (g >= 1.0 and math.isfinite(g)):
            raise GridError(f"grading must be >= 1, got {g}")
        object.__setattr__(self, "weight_exponent", a)
        object.__setattr__(self, "grading", g)
        object.__setattr__(self, "nx", int(self.nx))
        object.__setattr__(self, "ny", int(self.ny))
        object.__setattr__(self, "dimension", int(self.dimension))

    @classmethod
    def for_order(
        cls,
        order: FracOrder,
        X: float = 60.0,
        Y: float = 40.0,
        nx: int = 512,
        ny: int = 256,
        grading: float | None = None,
        radial: bool = False,
    ) -> "HalfStripMesh":
        return cls(X, Y, nx, ny, order.a, grading, order.n if radial else 1)

    @property
    def a(self) -> float:
        return self.weight_exponent

    @property
    def radial(self) -> bool:
        return self.dimension > 1

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx + 1, self.ny + 1)

    @property
    def hx(self) -> float:
        return (self.X if self.radial else 2.0 * self.X) / self.nx

    @property
    def x0(self) -> float:
        return 0.0 if self.radial else -self.X

    @cached_property
    def x(self) -> np.ndarray:
        x = self.x0 + self.hx * np.arange(self.nx + 1)
        x[-1] = self.X
        return x

    @cached_property
    def y(self) -> np.ndarray:
        y = self.Y * (np.arange(self.ny + 1) / self.ny) ** self.grading
        y[0], y[-1] = 0.0, self.Y
        if np.any(np.diff(y) <= 0):
            raise GridError("y-nodes are not strictly increasing (grading too strong for ny)")
        return y

    # ---- one-dimensional finite-volume factors ---------------------------------

    @cached_property
    def x_mass(self) -> np.ndarray:
        x = self.x
        edges = np.concatenate([[x[0]], 0.5 * (x[1:] + x[:-1]), [x[-1]]])
        if not self.radial:
            return np.diff(edges)
        n = self.dimension
        return np.diff(edges**n) / n

    @cached_property
    def x_trans(self) -> np.ndarray:
        """Transmissibility of the edge (x_i, x_{i+1}), length nx."""
        h = self.hx
        if not self.radial:
            return np.full(self.nx, 1.0 / h)
        n = self.dimension
        x = self.x
        return (x[1:] ** n - x[:-1] ** n) / n / h**2

    @cached_property
    def y_mass(self) -> np.ndarray:
        y = self.y
        p = 1.0 + self.a
        edges = np.concatenate([[0.0], 0.5 * (y[1:] + y[:-1]), [y[-1]]])
        return np.diff(edges**p) / p

    @cached_property
    def y_trans(self) -> np.ndarray:
        q = 1.0 - self.a
        yq = self.y**q
        return q / np.diff(yq)

    @staticmethod
    def _tridiag(trans: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        diag = np.zeros(trans.size + 1)
        diag[:-1] += trans
        diag[1:] += trans
        return diag, -trans

    @cached_property
    def x_stiffness(self) -> tuple[np.ndarray, np.ndarray]:
        return self._tridiag(self.x_trans)

    @cached_property
    def y_stiffness(self) -> tuple[np.ndarray, np.ndarray]:
        return self._tridiag(self.y_trans)

    # ---- operators -------------------------------------------------------------

    def apply(self, u: np.ndarray) -> np.ndarray:
        """``A u`` with ``A = Kx (x) My + Mx (x) Ky`` (all natural boundary conditions).

        ``A`` is the Hessian of ``1/2 int y^a |grad u|^2`` so ``-A u`` is the
        integrated weighted divergence over each dual cell.
        """
        u = np.asarray(u, dtype=float)
        kd, ko = self.x_stiffness
        Kxu = kd[:, None] * u
        Kxu[:-1] += ko[:, None] * u[1:]
        Kxu[1:] += ko[:, None] * u[:-1]
        ld, lo = self.y_stiffness
        Kyu = ld[None, :] * u
        Kyu[:, :-1] += lo[None, :] * u[:, 1:]
        Kyu[:, 1:] += lo[None, :] * u[:, :-1]
        return Kxu * self.y_mass[None, :] + self.x_mass[:, None] * Kyu

    def apply_abs(self, u: np.ndarray) -> np.ndarray:
        """``|A| |u|``: the scale against which round-off in :meth:`apply` is measured."""
        u = np.abs(np.asarray(u, dtype=float))
        kd, ko = self.x_stiffness
        Kxu = kd[:, None] * u
        Kxu[:-1] -= ko[:, None] * u[1:]
        Kxu[1:] -= ko[:, None] * u[:-1]
        ld, lo = self.y_stiffness
        Kyu = ld[None, :] * u
        Kyu[:, :-1] -= lo[None, :] * u[:, 1:]
        Kyu[:, 1:] -= lo[None, :] * u[:, :-1]
        return Kxu * self.y_mass[None, :] + self.x_mass[:, None] * Kyu

    def assemble(self) -> sparse.csr_matrix:
        """Sparse matrix of :meth:`apply`; node ``(i, j)`` has index ``i*(ny+1) + j``."""
        kd, ko = self.x_stiffness
        ld, lo = self.y_stiffness
        Kx = sparse.diags([ko, kd, ko], [-1, 0, 1])
        Ky = sparse.diags([lo, ld, lo], [-1, 0, 1])
        A = sparse.kron(Kx, sparse.diags(self.y_mass)) + sparse.kron(sparse.diags(self.x_mass), Ky)
        return A.tocsr()

    def cell_measure(self) -> np.ndarray:
        """``int r^(n-1) y^a`` over each dual cell."""
        return self.x_mass[:, None] * self.y_mass[None, :]

    # ---- convenience -----------------------------------------------------------

    def refined(self, factor: int = 2) -> "HalfStripMesh":
        return replace(self, nx=self.nx * factor, ny=self.ny * factor)

    def sample_trace(self, func, **kwargs) -> GridFunction:
        """Sample ``func`` at the x-nodes as a :class:`GridFunction`."""
        return GridFunction(x0=self.x0, h=self.hx, values=func(self.x), **kwargs)

    def node_index(self, x: float) -> int:
        i = int(round((x - self.x0) / self.hx))
        if not (0 <= i <= self.nx) or abs(self.x[i] - x) > 1e-9 * max(1.0, self.X):
            raise GridError(f"x = {x} is not a mesh node")
        return i

    def matches(self, v: GridFunction) -> bool:
        return (
            v.size == self.nx + 1
            and abs(v.x0 - self.x0) <= 1e-12 * max(1.0, self.X)
            and abs(v.h - self.hx) <= 1e-12 * self.hx
        )

    def to_dict(self) -> dict:
        return asdict(self)
