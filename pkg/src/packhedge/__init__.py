"""Online learning with expert advice at scale.

Adaptive exponential weights, a packing-grown active-set learner with
restarts, an accuracy-grid meta-learner, adversarial environment generators,
and exact covering/packing analysis tools.
"""

__version__ = "0.1.0"

from .core import (
    ExpertId,
    GameConfig,
    GameTrajectory,
    LossOracle,
    expected_loss,
    game_rng,
    sample_categorical,
)
from .hedge import HedgeState, hedge_regret_bound, learning_rate, play_hedge
from .many_experts import (
    PackingState,
    expand_packing,
    packing_regret_bound,
    play_many_experts,
    restart,
)
from .meta_tuner import EpsilonGrid, MetaState, build_grid, play_meta
from .environments import (
    EnvironmentSpec,
    MatrixOracle,
    make_bounded_variation_adversary,
    make_clustered_binary,
    make_environment,
    make_finite_matrix,
    make_iid_stochastic,
    make_low_rank,
    make_sparse_dictionary,
)
from .analysis import (
    CoverReport,
    RegretLedger,
    VariationProfile,
    covering_number_exact,
    duality_certificate,
    empirical_regret,
    expert_distance,
    logsum_bound_check,
    packing_greedy,
    packing_number_exact,
    variation_profile,
)

__all__ = [
    "__version__",
    "ExpertId",
    "GameConfig",
    "GameTrajectory",
    "LossOracle",
    "expected_loss",
    "game_rng",
    "sample_categorical",
    "HedgeState",
    "hedge_regret_bound",
    "learning_rate",
    "play_hedge",
    "PackingState",
    "expand_packing",
    "packing_regret_bound",
    "play_many_experts",
    "restart",
    "EpsilonGrid",
    "MetaState",
    "build_grid",
    "play_meta",
    "EnvironmentSpec",
    "MatrixOracle",
    "make_bounded_variation_adversary",
    "make_clustered_binary",
    "make_environment",
    "make_finite_matrix",
    "make_iid_stochastic",
    "make_low_rank",
    "make_sparse_dictionary",
    "CoverReport",
    "RegretLedger",
    "VariationProfile",
    "covering_number_exact",
    "duality_certificate",
    "empirical_regret",
    "expert_distance",
    "logsum_bound_check",
    "packing_greedy",
    "packing_number_exact",
    "variation_profile",
]
