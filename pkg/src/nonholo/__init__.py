"""Energy-preserving discrete-gradient integrators for nonholonomic mechanical systems.

Two routes to the same skew-gradient form zeta' = Pi(zeta) grad H(zeta):
hand-reduced systems (``SkewGradientSystem``) and canonical descriptions
(``MechanicalSystem``) reduced on the fly with a differentiated Householder QR.
"""
from .canonical import gonzalez_f_step, gonzalez_r_fd_step, gonzalez_r_step, integrate_canonical, reduced_quantities
from .discrete_gradients import (
    AVF,
    GONZALEZ,
    ITOH_ABE,
    DiscreteGradientKind,
    ScalarField,
    avf_gradient,
    discrete_gradient,
    gonzalez_gradient,
    itoh_abe_gradient,
    verify_discrete_gradient,
)
from .dla import DLAState, dla_energy_variance_experiment, dla_integrate, dla_step
from .errors import (
    DimensionError,
    IncompatibleMethod,
    NonholoError,
    RankDeficient,
    SingularJacobian,
    SingularReducedMetric,
    SolverDiverged,
)
from .qrdiff import basis_from_constraints, fd_basis_derivative, householder_qr, qr_diff
from .reduced import SkewGradientSystem, StepConfig, Trajectory, dg_step, integrate, rhs, solve_implicit
from .sampling import SeededSampler, sample_initial_state
from .state import (
    CanonicalState,
    MechanicalSystem,
    ReducedBasis,
    ReducedState,
    constraint_residual,
    p_from_rho,
    rho_from_p,
)
from .systems import CATALOG, get_system

__version__ = "0.1.0"
