"""Treatment-effect estimation with a single high-cardinality discrete covariate."""

from .model import (
    EstimandValues,
    ModelClassParams,
    ModelSpec,
    joint_cell_probs,
    population_estimands,
    validate_model,
)
from .sampling import (
    Dataset,
    SeedSpec,
    SufficientStats,
    draw_dataset,
    split_sample,
    tabulate,
    uniform_sim_model,
)
from .estimators import (
    EstimateResult,
    NuisanceEstimates,
    dr_ate,
    homogeneity_tau,
    influence_ci,
    ipw_ate,
    nuisance_mle,
    plugin_ate,
    reg_ate,
    second_order_ate,
    second_order_eta,
    second_order_rho,
    wate_hat,
)

__version__ = "0.1.0"
