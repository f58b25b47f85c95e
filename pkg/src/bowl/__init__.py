"""Bayesian outcome-weighted learning for individualized treatment rules."""

from .distributions import (
    GigHalfParams,
    InvGaussianParams,
    MvnParams,
    log_density_gig_half,
    sample_gig_half,
    sample_inverse_gaussian,
    sample_mvn,
)
from .pseudo_model import (
    Dataset,
    ExponentialPowerPrior,
    ItrCoefficients,
    NormalPrior,
    SpikeSlabPrior,
    load_dataset_csv,
    log_pseudo_likelihood,
    log_pseudo_posterior,
    owl_objective,
    owl_weight,
    owl_weights,
    reward_transform,
)
from .gibbs import (
    ChainState,
    GibbsConfig,
    GibbsNumericalError,
    PosteriorDraws,
    SuffStats,
    build_suffstats,
    draw_beta_ep,
    draw_beta_normal,
    draw_gamma_and_beta_ss,
    draw_lambda,
    draw_omega,
    run_chain,
)
from .prediction import (
    Recommendation,
    certainty_grid,
    coefficient_magnitudes,
    predictive_prob,
    recommend,
)
from .owl import OwlFit, fit_owl_linear, predict_owl
from .simulate import (
    ExperimentResult,
    ScenarioSpec,
    generate_scenario,
    misclassification_rate,
    run_experiment,
    true_optimal_rule,
)

__version__ = "0.1.0"
