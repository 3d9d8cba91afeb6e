"""Population training with a diversity bonus and a best-response agent, plus plain self-play partners."""
from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ..errors import InsufficientMembers
from ..kitchen.env import HORIZON
from ..kitchen.layout import Layout
from ..shaping import ShapingVector
from .policy import ROLE_BEST_RESPONSE, ROLE_PARTNER, PolicyParams, action_probs, init_policy, member_role
from .ppo import Adam, JsdTerm, PPOConfig, ppo_update
from .rollout import RolloutRunner, TrajectoryBatch, alternating_owner, self_play_owner

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrajeDiConfig:
    n: int = 4
    alpha: float = 0.5
    gamma: float = 0.99
    gae_lambda: float = 0.95
    learning_rate: float = 0.0005
    clip_param: float = 0.2
    ent_coef: float = 0.1
    vf_coef: float = 0.5
    total_timesteps: int = 200_000
    eval_every: int | None = None  # defaults to total_timesteps // 5
    n_envs: int = 8
    rollout_length: int = 64  # steps per env per collection phase
    epochs: int = 10
    minibatch_size: int = 64
    max_grad_norm: float = 10.0
    hidden: int = 64
    jsd_states: int = 512
    eval_episodes: int = 4
    horizon: int = HORIZON
    # linear decay of the shaping multiplier from 1 to 0 over this many steps; None keeps it at 1
    shaping_horizon: int | None = None
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must be in (0, 1], got {self.gamma}")
        if self.clip_param <= 0:
            raise ValueError("clip_param must be positive")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.n_envs % 2:
            raise ValueError("n_envs must be even so both seat assignments are covered")

    @property
    def eval_interval(self) -> int:
        return self.eval_every if self.eval_every else max(self.total_timesteps // 5, 1)

    @property
    def ppo(self) -> PPOConfig:
        return PPOConfig(
            learning_rate=self.learning_rate, clip_param=self.clip_param, gamma=self.gamma,
            gae_lambda=self.gae_lambda, ent_coef=self.ent_coef, vf_coef=self.vf_coef,
            epochs=self.epochs, minibatch_size=self.minibatch_size, max_grad_norm=self.max_grad_norm,
        )

    def shaping_scale(self, steps: int) -> float:
        if not self.shaping_horizon:
            return 1.0
        return max(0.0, 1.0 - steps / self.shaping_horizon)

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class Population:
    members: list[PolicyParams]
    best_response: PolicyParams
    shaping: ShapingVector
    train_curve: list[tuple[int, float, float]] = field(default_factory=list)

    def __post_init__(self):
        if len(self.members) < 2:
            raise InsufficientMembers(f"a population needs at least 2 members, got {len(self.members)}")

    def save(self, directory: str | Path) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        for i, m in enumerate(self.members):
            m.save(d / f"member_{i}.ckpt")
        self.best_response.save(d / "best_response.ckpt")
        write_curve(self.train_curve, d / "curve.csv")

    @classmethod
    def load(cls, directory: str | Path) -> "Population":
        d = Path(directory)
        members = [PolicyParams.load(p) for p in sorted(d.glob("member_*.ckpt"),
                                                         key=lambda p: int(p.stem.split("_")[1]))]
        br = PolicyParams.load(d / "best_response.ckpt")
        return cls(members, br, br.shaping, read_curve(d / "curve.csv"))


def write_curve(curve, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestep", "sparse_eval", "shaped_eval"])
        for row in curve:
            w.writerow([int(row[0]), repr(float(row[1])), repr(float(row[2]))])


def read_curve(path: str | Path) -> list[tuple[int, float, float]]:
    with open(path, newline="") as fh:
        return [(int(r["timestep"]), float(r["sparse_eval"]), float(r["shaped_eval"])) for r in csv.DictReader(fh)]


# --- diversity -----------------------------------------------------------------

def jsd_states(batches: Sequence[TrajectoryBatch], max_states: int | None = None,
               rng: np.random.Generator | None = None):
    """Pool every visited (observation, episode step) from the members' batches."""
    obs = np.concatenate([b.obs.reshape(-1, b.obs.shape[-1]) for b in batches])
    ep_t = np.concatenate([np.repeat(b.ep_t.reshape(-1), 2) for b in batches])
    if max_states is not None and len(obs) > max_states:
        idx = (rng or np.random.default_rng(0)).choice(len(obs), size=max_states, replace=False)
        obs, ep_t = obs[idx], ep_t[idx]
    return obs, ep_t


def discount_weights(ep_t: np.ndarray, gamma: float) -> np.ndarray:
    w = gamma ** ep_t.astype(np.float64)
    return w / w.sum()


def jsd_per_state(probs: np.ndarray) -> np.ndarray:
    """Generalized Jensen-Shannon divergence (natural log) of (n, S, A) distributions."""
    mix = probs.mean(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ent = lambda p: -np.sum(np.where(p > 0, p * np.log(p), 0.0), axis=-1)  # noqa: E731
        return np.maximum(ent(mix) - ent(probs).mean(axis=0), 0.0)


def jsd_gamma(batches: Sequence[TrajectoryBatch], members: Sequence[PolicyParams], gamma: float,
              max_states: int | None = None, seed: int = 0) -> float:
    """Discounted average JSD among members' action distributions over the pooled states.

    States are weighted by gamma ** (episode step). The result lies in [0, ln n].
    """
    if len(members) < 2:
        raise InsufficientMembers(f"JSD needs at least 2 members, got {len(members)}")
    obs, ep_t = jsd_states(batches, max_states, np.random.default_rng(seed))
    probs = np.stack([action_probs(m, obs) for m in members])
    return float(discount_weights(ep_t, gamma) @ jsd_per_state(probs))


# --- evaluation ----------------------------------------------------------------

def self_play_eval(policy: PolicyParams, layout: Layout, shaping, episodes: int, seed: int,
                   horizon: int = HORIZON) -> tuple[float, float]:
    """Mean (sparse, shaped) episode return of ``policy`` playing with itself."""
    runner = RolloutRunner(layout, episodes, seed, horizon)
    batch = runner.collect([policy], self_play_owner(episodes), shaping, horizon)
    return float(np.mean(batch.episode_sparse)), float(np.mean(batch.episode_dense))


# --- training ------------------------------------------------------------------

ProgressFn = Callable[[str, int, dict], None]


class _Trainer:
    """Policy + optimizer + rng bundle updated in place."""

    def __init__(self, policy: PolicyParams, cfg: TrajeDiConfig, seed):
        self.policy = policy
        self.opt = Adam(cfg.learning_rate)
        self.rng = np.random.default_rng(seed)
        self.ppo = cfg.ppo

    def update(self, batch, owner=0, jsd=None) -> dict:
        self.policy, stats = ppo_update(self.policy, batch, self.ppo, self.opt, owner, self.rng, jsd)
        return stats


def _run_schedule(cfg: TrajeDiConfig, phase_fn, eval_fn, progress: ProgressFn | None):
    """Call ``phase_fn(steps_so_far)`` until the step budget is spent, evaluating at each interval.

    ``phase_fn`` returns the number of env steps it consumed; evaluations are
    stamped with their nominal timestep k * eval_interval.
    """
    interval = cfg.eval_interval
    n_evals = cfg.total_timesteps // interval
    curve = []
    steps = 0
    next_eval = 1
    while steps < cfg.total_timesteps:
        steps += phase_fn(steps)
        while next_eval <= n_evals and steps >= next_eval * interval:
            sparse, shaped = eval_fn(next_eval)
            curve.append((next_eval * interval, sparse, shaped))
            if progress:
                progress("eval", next_eval * interval, {"sparse": sparse, "shaped": shaped})
            next_eval += 1
    return curve, steps


def train_population(shaping: ShapingVector, layout: Layout, cfg: TrajeDiConfig = TrajeDiConfig(),
                     progress: ProgressFn | None = None) -> Population:
    """Train ``cfg.n`` diverse members and a best response under one shaping.

    Each iteration, round-robin: every member collects self-play data and
    updates on it plus the alpha-weighted JSD bonus; the best response then
    updates on data from pairing with each member (seats alternate across
    envs) and finally on its own self-play data. Shaped reward drives
    learning; curves record sparse and shaped self-play evaluations of the
    best response.
    """
    if cfg.n < 2:
        raise InsufficientMembers(f"population size must be >= 2, got {cfg.n}")
    ss = np.random.SeedSequence(cfg.seed)
    (init_ss, member_ss, br_ss, sp_env_ss, xp_env_ss, br_env_ss, jsd_ss, eval_ss) = ss.spawn(8)
    init_seeds = init_ss.generate_state(cfg.n + 1)
    members = [_Trainer(init_policy(int(init_seeds[i]), hidden=cfg.hidden, role=member_role(i), shaping=shaping),
                        cfg, s) for i, s in enumerate(member_ss.spawn(cfg.n))]
    br = _Trainer(init_policy(int(init_seeds[cfg.n]), hidden=cfg.hidden, role=ROLE_BEST_RESPONSE, shaping=shaping),
                  cfg, br_ss)
    for t in members + [br]:
        t.policy.seed = cfg.seed
    sp_runners = [RolloutRunner(layout, cfg.n_envs, s, cfg.horizon) for s in sp_env_ss.spawn(cfg.n)]
    xp_runners = [RolloutRunner(layout, cfg.n_envs, s, cfg.horizon) for s in xp_env_ss.spawn(cfg.n)]
    br_runner = RolloutRunner(layout, cfg.n_envs, br_env_ss, cfg.horizon)
    jsd_rng = np.random.default_rng(jsd_ss)
    eval_seeds = eval_ss.generate_state(8)
    sp_owner = self_play_owner(cfg.n_envs)
    xp_owner = alternating_owner(cfg.n_envs)
    phase_steps = cfg.n_envs * cfg.rollout_length
    last_stats: dict = {}

    def phase(done: int) -> int:
        w = shaping.as_array() * cfg.shaping_scale(done)
        batches = [r.collect([m.policy], sp_owner, w, cfg.rollout_length)
                   for r, m in zip(sp_runners, members)]
        if cfg.alpha > 0:
            obs, ep_t = jsd_states(batches, cfg.jsd_states, jsd_rng)
            weights = discount_weights(ep_t, cfg.gamma)
            probs = np.stack([action_probs(m.policy, obs) for m in members])
        for i, (m, batch) in enumerate(zip(members, batches)):
            jsd = None
            if cfg.alpha > 0:
                jsd = JsdTerm(obs, np.delete(probs, i, axis=0), weights, cfg.alpha)
            last_stats[f"member{i}"] = m.update(batch, 0, jsd)
        for r, m in zip(xp_runners, members):
            batch = r.collect([br.policy, m.policy], xp_owner, w, cfg.rollout_length)
            last_stats["br_xp"] = br.update(batch, owner=0)
        batch = br_runner.collect([br.policy], sp_owner, w, cfg.rollout_length)
        last_stats["br_sp"] = br.update(batch, owner=0)
        return (2 * cfg.n + 1) * phase_steps

    def evaluate(k: int):
        return self_play_eval(br.policy, layout, shaping, cfg.eval_episodes,
                              int(eval_seeds[(k - 1) % len(eval_seeds)]), cfg.horizon)

    curve, steps = _run_schedule(cfg, phase, evaluate, progress)
    for t in members + [br]:
        t.policy.timesteps = steps
    return Population([m.policy for m in members], br.policy, shaping, curve)


def train_partner(shaping: ShapingVector, layout: Layout, cfg: TrajeDiConfig = TrajeDiConfig(),
                  progress: ProgressFn | None = None) -> PolicyParams:
    """Plain self-play PPO with parameter sharing across seats (the partner baseline)."""
    ss = np.random.SeedSequence(cfg.seed)
    init_ss, opt_ss, env_ss, eval_ss = ss.spawn(4)
    trainer = _Trainer(init_policy(int(init_ss.generate_state(1)[0]), hidden=cfg.hidden, role=ROLE_PARTNER,
                                   shaping=shaping), cfg, opt_ss)
    trainer.policy.seed = cfg.seed
    if cfg.total_timesteps <= 0:
        return trainer.policy
    runner = RolloutRunner(layout, cfg.n_envs, env_ss, cfg.horizon)
    owner = self_play_owner(cfg.n_envs)
    eval_seeds = eval_ss.generate_state(8)

    def phase(done: int) -> int:
        w = shaping.as_array() * cfg.shaping_scale(done)
        batch = runner.collect([trainer.policy], owner, w, cfg.rollout_length)
        trainer.update(batch)
        return cfg.n_envs * cfg.rollout_length

    def evaluate(k: int):
        return self_play_eval(trainer.policy, layout, shaping, cfg.eval_episodes,
                              int(eval_seeds[(k - 1) % len(eval_seeds)]), cfg.horizon)

    curve, steps = _run_schedule(cfg, phase, evaluate, progress)
    trainer.policy.timesteps = steps
    trainer.policy.extra["train_curve"] = [list(c) for c in curve]
    return trainer.policy


__all__ = [
    "Population", "TrajeDiConfig", "discount_weights", "jsd_gamma", "jsd_per_state", "read_curve",
    "self_play_eval", "train_partner", "train_population", "write_curve",
]
