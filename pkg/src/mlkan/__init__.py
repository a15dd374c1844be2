"""Spline-basis Kolmogorov-Arnold networks, their power-ReLU multichannel
MLP form via an explicit change of basis, and multilevel training on
properly nested knot-refinement hierarchies."""

from .basis import (
    CobMatrix,
    KnotVector,
    build_cob,
    eval_bspline,
    eval_relu_power,
    make_knots,
    make_uniform_knots,
    verify_basis_identity,
)
from .estimators import KanRegressor
from .linalg import BandedUpper, banded_matvec, banded_upper_solve, dft2, matmul, sym_eig
from .model import (
    KanLayer,
    MlpLayer,
    Network,
    convert_network,
    init_weights,
    load_checkpoint,
    make_kan_network,
    make_mlp_network,
    param_count,
    save_checkpoint,
)
from .multilevel import (
    Hierarchy,
    build_hierarchy,
    dyadic_prolongation,
    general_prolongation,
    nested_train,
    refine_network,
)
from .optim import GlobalCob, LrSchedule, RbaWeights, UpdateRule, table1_update
from .problems import (
    AllenCahnProblem,
    BurgersProblem,
    PoissonProblem,
    RegressionProblem,
    relative_l2_error,
)

__version__ = "0.1.0"
