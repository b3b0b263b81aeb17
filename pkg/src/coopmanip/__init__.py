"""Cooperative two-arm manipulation with distributed multi-agent Q-learning.

Two planar arms learn to carry an implicit object (defined by their end
effectors) to a target pose.  Two training schemes are provided: independent
Q-learning on per-agent shaped rewards, and Nash-Q, where every bootstrap
goes through an exact equilibrium of the bimatrix game formed by the agents'
value matrices.
"""

from .agents import (
    AgentConfig,
    AlphaSchedule,
    BackendConfig,
    EpsilonSchedule,
    JointPolicyStep,
    LearnerPair,
    NashSolverHook,
    act_darl,
    act_gtrl,
    update_darl,
    update_gtrl,
)
from .config import ConfigError, DEFAULTS, ExperimentConfig, config_hash, load_config, parse_config, serialize_config
from .env import (
    ArmSpec,
    EnvState,
    InvalidTaskError,
    JointAction,
    RewardStructure,
    TaskSpec,
    TwoArmEnv,
    forward_kinematics,
    is_success,
    make_state,
    reward_constituents,
    rewards,
    systemwide_reward,
)
from .games import (
    BimatrixGame,
    EquilibriumProfile,
    MixedStrategy,
    UnsupportedSizeError,
    expected_payoffs,
    select_equilibrium,
    solve_and_select,
    solve_support_enumeration,
    verify_equilibrium,
)
from .harness import (
    CampaignError,
    CampaignSummary,
    EpisodeRecord,
    evaluate,
    load_checkpoint_pair,
    random_policy_stats,
    run_campaign,
    run_episode,
    save_checkpoint_pair,
    summary_from_metrics,
)
from .qfunc import (
    CheckpointError,
    DenseApproximator,
    QTable,
    ReplayBuffer,
    TrainingDivergenceError,
    Transition,
    approximator_update,
    load_checkpoint,
    q_matrix,
    replay_sample,
    save_checkpoint,
    tabular_update,
    td_target_nash,
)

__version__ = "0.1.0"
