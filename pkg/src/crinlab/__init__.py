"""crinlab: a numerical laboratory for cross-immunoreactivity network dynamics.

Builds directed cross-immunoreactivity networks and their immune matrices,
integrates the coupled virus/antibody population model, evaluates the
closed-form fixed-point families with local immunodeficiency, classifies
their stability from Jacobian spectra, verifies the characteristic-polynomial
factorizations, and reproduces the random-dandelion attachment experiment.
"""

from .dynamics import (
    ClassificationThresholds,
    NodeRole,
    StimulationMatrix,
    SystemState,
    Termination,
    Trajectory,
    classify_nodes,
    integrate,
    rhs,
    stimulation_probabilities,
)
from .experiments import (
    ExperimentConfig,
    ExperimentReport,
    RunRecord,
    SweepPoint,
    SweepResult,
    li_on_tail,
    run_dandelion,
    sample_params,
    sweep_x1,
)
from .fixedpoints import (
    FamilyConstraintError,
    InfeasibleParamsError,
    StarFamilyPoint,
    SymmetricFixedPoint,
    constrained_f1,
    star_family,
    symmetric_fixed_point,
    two_node_family,
    verify_fixed_point,
)
from .network import (
    CrnGraph,
    ImmuneMatrices,
    ModelParams,
    NetworkError,
    build_matrices,
    catalog,
    random_dandelion,
)
from .rng import SplitMix64, derive_seed
from .stability import (
    CharPolyFactors,
    EigensolverError,
    JacobianMatrix,
    StabilityClass,
    StabilityReport,
    classify_stability,
    eigenvalues,
    jacobian_analytic,
    jacobian_fd,
    lambda1_crossing_bisect,
    star_zero_eigenvector,
    symmetric_factors,
    three_node_star_factors,
    two_node_factors,
    verify_factorization,
)

__version__ = "0.1.0"
