"""Smallest singular values of isotropic log-concave random matrices:
samplers, sphere decomposition and lattice-net tools, and Monte Carlo tail
estimators."""

__version__ = "0.1.0"

from .ensembles import (  # noqa: E402
    EnsembleSpec,
    RandomSeed,
    ell1_ball,
    gaussian,
    independent_columns,
    isotropy_report,
    laplace,
    make_concatenated,
    sample_matrix,
    sample_vector,
    uniform_cube,
)
from .geometry import (  # noqa: E402
    Compressibility,
    DecompositionParams,
    SpreadParams,
    classify_compressible,
    dist_to_sparse,
    random_round,
    rounding_approximation,
)
from .linalg import distance_to_colspan, hs_norm, projected_block, singular_values  # noqa: E402
from .montecarlo import ExperimentConfig, TailEstimate, run_experiment  # noqa: E402
