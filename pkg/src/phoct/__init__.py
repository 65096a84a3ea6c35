"""Energy-optimal control and subspace turnpikes of linear port-Hamiltonian systems."""

from .builtins import builtin_system
from .core import (
    PHSystem,
    ValidationReport,
    energy_balance_residual,
    hamiltonian,
    output,
    to_spherical,
    validate_system,
)
from .errors import (
    ConstraintError,
    DecompositionError,
    NumericError,
    PHError,
    PreconditionError,
    StructureError,
)
from .ocp import OCPProblem, OCPSolution, solve_ocp, solve_regularized, solve_time_optimal, transcribe
from .pmp import (
    integrate_adjoint,
    is_normal,
    pmp_consistency,
    singular_control,
    solve_steady_state,
    verify_steady_kkt,
)
from .sim import Trajectory, cost_supplied_energy, cost_via_balance, discretize_zoh, simulate
from .spectral import (
    KernelGeometry,
    SubspaceDecomposition,
    decay_envelope,
    decompose,
    dist_to_kernel,
    kernel_geometry,
    reachable_bound,
)
from .turnpike import available_storage, dissipation_check, horizon_sweep, turnpike_measure

__version__ = "0.1.0"
