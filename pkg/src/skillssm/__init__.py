"""Dynamic skill rating via factorial state-space models.

Filtering, smoothing and maximum-likelihood static-parameter estimation on
match streams, with point-rating (Elo-Davidson), Gaussian (Glicko,
Extended Kalman, TrueSkill2 moment matching), particle (SMC) and
finite-state (fHMM) method families sharing one data model and one
evaluation protocol.
"""

from .core import (
    MatchRecord,
    MatchStream,
    Outcome,
    OUTCOMES,
    PredictiveProbs,
    SparseIndex,
    build_sparse_index,
    simultaneous_blocks,
)
from .discrete import (
    DiscreteParams,
    Spectrum,
    build_generator,
    build_initial,
    build_spectrum,
    discrete_assimilate,
    discrete_match_probs,
    discrete_propagate,
    discrete_smooth_step,
    q2_gradient,
    q2_value,
    run_discrete_filter,
    run_discrete_smoother,
)
from .evaluate import EvalReport, evaluate, export_trajectory, format_report_table
from .gaussian import (
    EloParams,
    GaussianSkill,
    GaussianSSMParams,
    Method,
    Sigmoid,
    ek_assimilate,
    elo_davidson_update,
    gaussian_propagate,
    kalman_smooth_step,
    outcome_likelihood,
    probit_gaussian_cdf_integral,
    run_filter,
    run_smoother,
    ts2_assimilate,
)
from .ingest import SchemaDescriptor, load_csv, split_by_date, write_csv
from .learn import (
    EmState,
    QuadratureRule,
    em_fit,
    fisher_gradient,
    grid_search,
    m_step_epsilon,
    m_step_gaussian,
)
from .smc import (
    ParticleBelief,
    SmcConfig,
    backward_simulate,
    run_smc_filter,
    smc_assimilate,
    smc_em_statistics,
    smc_propagate,
)

__version__ = "0.1.0"
