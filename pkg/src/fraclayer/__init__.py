"""Fractional Laplacian layer solutions through the weighted local extension.

Modules:

* :mod:`fraclayer.kernels`     normalising constants, Poisson kernel, fundamental solution
* :mod:`fraclayer.fraclap`     direct nonlocal evaluation (principal value and Fourier)
* :mod:`fraclayer.mesh`        graded half-strip meshes and finite-volume weights
* :mod:`fraclayer.extension`   extension solver, Dirichlet-to-Neumann map, property checks
* :mod:`fraclayer.profiles`    nonlinearities, layer and radial solvers, continuation in s
* :mod:`fraclayer.hamiltonian` Hamiltonian identity, Modica margins, radial monotonicity
* :mod:`fraclayer.cli`         command-line drivers
"""

from .errors import ConfigError, ConvergenceError, DomainError, GridError, PreconditionError, TailError
from .extension import (
    HalfStripField,
    LinearSystemStats,
    StripData,
    check_hopf,
    check_max_principle,
    dtn_apply,
    dual_conjugate,
    duality_residual,
    energy,
    estimate_harnack,
    extend_by_convolution,
    hopf_barrier,
    solve_dirichlet,
    solve_neumann_nonlinear,
)
from .fraclap import OperatorReport, fraclap_fourier, fraclap_pv, nonlocal_residual
from .grid import GridFunction, read_grid_csv, write_grid_csv
from .hamiltonian import (
    hamiltonian_profile,
    radial_hamiltonian,
    s_limit_split,
    verify_identity,
    verify_modica,
)
from .kernels import FracOrder, extension_constant, kernel_constants, pv_constant
from .mesh import HalfStripMesh
from .profiles import (
    check_necessary_conditions,
    continuation_in_s,
    make_bistable,
    make_nonlinearity,
    solve_layer,
    solve_ode_layer,
    solve_radial,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ConvergenceError",
    "DomainError",
    "GridError",
    "PreconditionError",
    "TailError",
    "FracOrder",
    "GridFunction",
    "HalfStripMesh",
    "HalfStripField",
    "LinearSystemStats",
    "OperatorReport",
    "StripData",
    "check_hopf",
    "check_max_principle",
    "check_necessary_conditions",
    "continuation_in_s",
    "dtn_apply",
    "dual_conjugate",
    "duality_residual",
    "energy",
    "estimate_harnack",
    "extend_by_convolution",
    "extension_constant",
    "fraclap_fourier",
    "fraclap_pv",
    "hamiltonian_profile",
    "hopf_barrier",
    "kernel_constants",
    "make_bistable",
    "make_nonlinearity",
    "nonlocal_residual",
    "pv_constant",
    "radial_hamiltonian",
    "read_grid_csv",
    "s_limit_split",
    "solve_dirichlet",
    "solve_layer",
    "solve_neumann_nonlinear",
    "solve_ode_layer",
    "solve_radial",
    "verify_identity",
    "verify_modica",
    "write_grid_csv",
]
