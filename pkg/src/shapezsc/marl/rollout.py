"""Seeded rollout collection over batched kitchens."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..kitchen import kernels as K
from ..kitchen.env import HORIZON, N_FEATURES, VecKitchen, densify
from ..kitchen.layout import Layout
from ..shaping import ShapingVector
from .policy import PolicyParams, act, values


@dataclass
class Samples:
    """Flat per-decision training data for one policy."""

    obs: np.ndarray
    actions: np.ndarray
    logp: np.ndarray
    values: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray
    ep_t: np.ndarray

    def __len__(self) -> int:
        return len(self.actions)

    def subset(self, idx) -> "Samples":
        return Samples(*(getattr(self, f)[idx] for f in self.__dataclass_fields__))


@dataclass
class TrajectoryBatch:
    """``T`` steps of ``B`` parallel kitchens; seat arrays are (T, B, 2)."""

    obs: np.ndarray  # (T, B, 2, D)
    actions: np.ndarray
    logp: np.ndarray
    values: np.ndarray
    sparse: np.ndarray  # (T, B)
    features: np.ndarray  # (T, B, 2, 6)
    dense: np.ndarray  # (T, B)
    dones: np.ndarray  # (T, B)
    ep_t: np.ndarray  # (T, B) within-episode step index
    last_values: np.ndarray  # (B, 2) bootstrap values
    seat_owner: np.ndarray  # (B, 2) index into the policy list used for collection
    shaping: np.ndarray  # (6,)
    episode_sparse: list = field(default_factory=list)
    episode_dense: list = field(default_factory=list)

    @property
    def n_steps(self) -> int:
        return int(self.sparse.size)

    def advantages(self, gamma: float, lam: float) -> np.ndarray:
        adv = np.zeros_like(self.values)
        K.gae(self.dense, self.values, self.dones, self.last_values, gamma, lam, adv)
        return adv

    def samples(self, owner: int, gamma: float, lam: float) -> Samples:
        """Every decision made by policy ``owner``, with GAE advantages and returns."""
        adv = self.advantages(gamma, lam)
        mask = np.broadcast_to(self.seat_owner[None] == owner, self.actions.shape)
        t_idx = np.broadcast_to(self.ep_t[..., None], self.actions.shape)
        return Samples(
            obs=self.obs[mask],
            actions=self.actions[mask],
            logp=self.logp[mask],
            values=self.values[mask],
            advantages=adv[mask],
            returns=(adv + self.values)[mask],
            ep_t=t_idx[mask],
        )


class RolloutRunner:
    """Persistent batched kitchens so episodes continue across collections."""

    def __init__(self, layout: Layout, n_envs: int, seed: int, horizon: int = HORIZON):
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        env_seed, act_seed = ss.spawn(2)
        self.env = VecKitchen(layout, n_envs, seed=env_seed, horizon=horizon)
        self.rng = np.random.default_rng(act_seed)
        self.obs = self.env.observe()
        self._ep_sparse = np.zeros(n_envs)
        self._ep_dense = np.zeros(n_envs)

    @property
    def n_envs(self) -> int:
        return self.env.n_envs

    def collect(self, policies: Sequence[PolicyParams], seat_owner: np.ndarray, shaping,
                n_steps: int) -> TrajectoryBatch:
        b = self.n_envs
        w = np.asarray(getattr(shaping, "weights", shaping), dtype=np.float64)
        seat_owner = np.asarray(seat_owner, dtype=np.int64).reshape(b, 2)
        d = self.obs.shape[-1]
        obs = np.zeros((n_steps, b, 2, d))
        actions = np.zeros((n_steps, b, 2), dtype=np.int64)
        logp = np.zeros((n_steps, b, 2))
        vals = np.zeros((n_steps, b, 2))
        sparse = np.zeros((n_steps, b))
        feats = np.zeros((n_steps, b, 2, N_FEATURES))
        dense = np.zeros((n_steps, b))
        dones = np.zeros((n_steps, b), dtype=np.bool_)
        ep_t = np.zeros((n_steps, b), dtype=np.int64)
        owners = [(k, seat_owner == k) for k in range(len(policies)) if np.any(seat_owner == k)]
        ep_sparse, ep_dense = [], []
        for t in range(n_steps):
            obs[t] = self.obs
            u = self.rng.random((b, 2))
            for k, mask in owners:
                a, lp, v = act(policies[k], self.obs[mask], u[mask])
                actions[t][mask] = a
                logp[t][mask] = lp
                vals[t][mask] = v
            sp, ft, done, t_before = self.env.step(actions[t])
            sparse[t] = sp
            feats[t] = ft
            dense[t] = densify(sp, ft, w)
            dones[t] = done
            ep_t[t] = t_before
            self._ep_sparse += sp
            self._ep_dense += dense[t]
            for e in np.flatnonzero(done):
                ep_sparse.append(float(self._ep_sparse[e]))
                ep_dense.append(float(self._ep_dense[e]))
                self._ep_sparse[e] = 0.0
                self._ep_dense[e] = 0.0
            self.obs = self.env.observe()
        last = np.zeros((b, 2))
        for k, mask in owners:
            last[mask] = values(policies[k], self.obs[mask])
        return TrajectoryBatch(obs, actions, logp, vals, sparse, feats, dense, dones, ep_t, last,
                               seat_owner, w, ep_sparse, ep_dense)


def self_play_owner(n_envs: int) -> np.ndarray:
    return np.zeros((n_envs, 2), dtype=np.int64)


def alternating_owner(n_envs: int) -> np.ndarray:
    """Policy 0 sits in seat 0 in even envs and seat 1 in odd envs."""
    owner = np.zeros((n_envs, 2), dtype=np.int64)
    owner[0::2, 1] = 1
    owner[1::2, 0] = 1
    return owner


def collect_rollouts(policies: Sequence[PolicyParams], layout: Layout, shaping: ShapingVector, steps: int,
                     seed: int, n_envs: int = 8, horizon: int = HORIZON) -> TrajectoryBatch:
    """Run ``steps`` joint environment steps (rounded up to a multiple of ``n_envs``).

    ``policies`` is the (seat 0, seat 1) pair; passing the same object twice
    is self-play with a single owner.
    """
    p0, p1 = policies
    runner = RolloutRunner(layout, n_envs, seed, horizon)
    n_steps = -(-steps // n_envs)
    if p0 is p1:
        return runner.collect([p0], self_play_owner(n_envs), shaping, n_steps)
    owner = np.zeros((n_envs, 2), dtype=np.int64)
    owner[:, 1] = 1
    return runner.collect([p0, p1], owner, shaping, n_steps)
