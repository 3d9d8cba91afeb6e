from .policy import PolicyParams, action_probs, greedy_action, init_policy, uniform_policy
from .ppo import Adam, JsdTerm, PPOConfig, ppo_update
from .rollout import RolloutRunner, Samples, TrajectoryBatch, collect_rollouts
from .trajedi import Population, TrajeDiConfig, jsd_gamma, self_play_eval, train_partner, train_population

__all__ = [
    "Adam", "JsdTerm", "PPOConfig", "PolicyParams", "Population", "RolloutRunner", "Samples",
    "TrajeDiConfig", "TrajectoryBatch", "action_probs", "collect_rollouts", "greedy_action",
    "init_policy", "jsd_gamma", "ppo_update", "self_play_eval", "train_partner", "train_population",
    "uniform_policy",
]
