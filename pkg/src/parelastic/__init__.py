"""Modeling, simulation, identification, and certified regulation of planar
soft-rigid robots with intrinsically elastically coupled degrees of freedom.
"""

from importlib import resources

from .coupling import (
    COORDINATE_FAMILIES,
    FAMILIES,
    SEGMENT_FAMILIES,
    CouplingSpec,
    ElasticAssembly,
    assemble_total_elastic,
    coupling_energy,
    coupling_force,
    coupling_stiffness,
    total_elastic_energy,
    total_elastic_force,
)
from .control import (
    ForcePidConfig,
    ForcePidController,
    GainCertificate,
    Regulator,
    RegulatorConfig,
    WallContact,
    certify_gains,
    elastic_force_at,
    equilibrium_solve,
    estimate_tip_force,
    force_pid,
    lyapunov_closed_loop,
    lyapunov_zero_dynamics,
    regulate,
    simulate_zero_dynamics,
)
from .dynamics import (
    RobotModel,
    State,
    SystemBounds,
    TrajectoryLog,
    coriolis_matrix,
    estimate_bounds,
    forward_dynamics,
    gravity_potential,
    gravity_vector,
    mass_matrix,
    mass_matrix_gradient,
    step,
    uniform_rod_chain,
)
from .errors import (
    ConfigError,
    DegenerateDatasetError,
    DegenerateGeometryError,
    DivergenceError,
    EquilibriumSolveError,
    IllConditionedError,
    ParelasticError,
    UnsupportedFamilyError,
)
from .identification import (
    FitResult,
    IdSample,
    StiffnessRegressor,
    fit_stiffness,
    generate_synthetic_dataset,
    rank_families,
    regressor,
)
from .kinematics import (
    LinkGeometry,
    forward_point,
    joint_origins,
    point_jacobian,
)

__version__ = "0.1.0"


def scenario_path(name):
    """Filesystem path of a bundled scenario (e.g. ``"finger"``)."""
    if not name.endswith(".scenario"):
        name = name + ".scenario"
    return resources.files(__name__).joinpath("scenarios", name)
