"""antipgd: a lab for gradient descent with anticorrelated noise injection.

Core pieces: seeded perturbation streams (``noise``), analytic loss
landscapes with exact Hessian traces (``landscapes``), the GD/PGD/Anti-PGD
family of update rules (``optim``), closed-form second-moment oracles for
the scalar linear recursion (``recursion``), flatness diagnostics
(``diagnostics``), and a CLI harness (``cli``). Hot loops run on a compiled
kernel when available; see ``antipgd.kernels``.
"""

from .noise import NoiseSpec, NoiseStream, derive_seed, lag1_autocorrelation
from .landscapes import (
    DiagQuadratic,
    MatrixSensing,
    QuadRegression,
    SparseValley,
    WideningValley,
    ZeroLoss,
    gen_matrix_sensing,
    gen_quad_regression,
)
from .optim import InitSpec, RunConfig, Trajectory, run, run_zform
from .recursion import (
    RhoSpec,
    expected_sqnorm_const_rho,
    expected_sqnorm_sequence,
    limit_const_rho,
    nu_sequence,
    simulate_recursion,
)

__version__ = "0.1.0"
