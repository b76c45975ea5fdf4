"""Noisy search with comparative feedback.

A library, simulator, CLI and session service for searching a finite point
set through noisy closest-point feedback: Bayesian posterior tracking, the
quantile-pair / smallest-ball / k-interval query strategies with their
per-call geometry checks, the adversarial instance with its query-complexity
lower bounds, and a seeded Monte-Carlo harness that verifies the analytic
bounds at desk scale.
"""

from .adversarial import (
    AdversarialInstance,
    VerificationReport,
    generate_instance,
    max_feasible_n,
    recursion_defect,
    verify_response_decay,
    verify_similarity_dominance,
)
from .bounds import (
    BoundReport,
    adversarial_horizon,
    adversarial_lower_bound,
    adversarial_success_bound,
    kary_gain_floor,
    kary_gain_report,
    own_point_response_floor,
    quantile_gain_floor,
    quantile_query_bound,
    response_split,
)
from .feedback import (
    Dataset,
    Posterior,
    ProtocolError,
    Query,
    ResponseDistribution,
    SimilarityFamily,
    UserModel,
    condition_on_miss,
    entropy,
    expected_info_gain,
    expected_round_gain,
    kl_bernoulli,
    kl_divergence,
    marginal_response_probs,
    posterior_update,
    quantile_index,
    response_matrix,
    response_probs,
    sample_response,
    similarity,
)
from .harness import (
    CellResult,
    DatasetSpec,
    EpisodeConfig,
    EpisodeResult,
    ExperimentResult,
    ExperimentSpec,
    ModelSpec,
    bound_for_cell,
    episode_rng,
    load_result_json,
    mismatch_sweep,
    run_episode,
    run_experiment,
    save_result_csv,
    save_result_json,
)
from .strategies import (
    IntervalSet,
    InvariantViolation,
    SelectionInfo,
    StrategyError,
    StrategyKind,
    interval_mass_floor,
    select_binary_quantile,
    select_dball,
    select_kary_intervals,
    select_median_bisection,
    select_query,
    select_random_baseline,
    select_topk_fallback,
)

__version__ = "0.1.0"
