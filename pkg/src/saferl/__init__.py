"""Safe on-policy RL with a clustered buffer of recovery actions.

The training loop augments PPO with a safety mechanism: every action that
rescued the agent from a danger state is remembered, the memory is organized
by k-means clustering over state features, and whenever the agent is in
danger again its sampled action is filtered through the best known recovery
action for similar states.
"""

from .buffer import (
    BRUTE_FORCE,
    ExactActionMatch,
    GridBucketMatch,
    RecoveryRecord,
    SafetyBuffer,
    actions_match,
    cluster_count,
)
from .clustering import KMeansModel, assign, fit_kmeans
from .cmdp import (
    DEFAULT_DANGER_THRESHOLD,
    Transition,
    is_danger,
    is_failure,
    is_recovery,
    make_transition,
)
from .envs import EnvSpec, LayoutError, cost_from_distance, cost_of_state, make_env
from .nn import Adam, init_actor_critic, load_params, save_params
from .ppo import (
    Categorical,
    DiagGaussian,
    LagrangianState,
    PpoConfig,
    compute_gae,
    lagrangian_update,
    penalized_rewards,
    policy_forward,
    ppo_update,
)
from .trainer import (
    EpochMetrics,
    TrainConfig,
    Trainer,
    evaluate,
    load_checkpoint,
    run_training,
)
from .bench import MatrixSpec, relative_cumulative_failures, run_matrix

__version__ = "0.1.0"
