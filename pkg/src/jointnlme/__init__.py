"""Bayesian joint modeling of sparse nonlinear longitudinal profiles and a
primary outcome, estimated by Metropolis-within-Gibbs sampling."""

from .exceptions import (
    ConfigError,
    DataError,
    InvalidParameterError,
    JointNlmeError,
    NumericError,
)
from .model import (
    BERNOULLI,
    GAUSSIAN,
    POISSON,
    ErrorModel,
    GlmFamily,
    Hyperparameters,
    Individual,
    ParameterState,
    build_error_cov,
    get_family,
    glm_loglik,
    growth_mean,
    joint_unnorm_logpost,
    longit_loglik,
)
from .sampler import (
    ChainStore,
    FitConfig,
    GibbsSampler,
    draw_mu_x,
    draw_sigma_eps,
    draw_sigma_x,
    gibbs_sweep,
    laplace_proposal,
    mh_independence_step,
    run_chain,
)
from .diagnostics import PosteriorSummary, ScalarChain, geweke_z, geweke_report, summarize, summary_table
from .evaluation import (
    ClassificationReport,
    CpoReport,
    classify,
    cpo_hat,
    cpo_report,
    lpml,
    predict_outcome_prob,
    roc_auc,
    roc_points,
)
from .simulation import (
    ReplicationReport,
    SimDesign,
    TrueParameters,
    bundled_design,
    load_design,
    run_replication_study,
    simulate_dataset,
)

__version__ = "0.1.0"
