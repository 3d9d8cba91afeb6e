"""Actor-critic MLPs in numpy with hand-written backprop."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..checkpoint import read_flat, write_flat
from ..errors import DimensionMismatch
from ..kitchen.env import N_ACTIONS, OBS_DIM
from ..shaping import ShapingVector

PARAM_NAMES = ("W1", "b1", "W2", "b2", "V1", "c1", "V2", "c2")
POLICY_KEYS = ("W1", "b1", "W2", "b2")
VALUE_KEYS = ("V1", "c1", "V2", "c2")

ROLE_BEST_RESPONSE = "BestResponse"
ROLE_PARTNER = "Partner"


def member_role(i: int) -> str:
    return f"PopulationMember({i})"


@dataclass
class PolicyParams:
    """One agent: a tanh policy net and a separate tanh value net.

    ``value_scale`` converts the value head's normalized output back to
    return units.
    """

    params: dict[str, np.ndarray]
    role: str = ROLE_PARTNER
    seed: int = 0
    shaping: ShapingVector | None = None
    timesteps: int = 0
    value_scale: float = 1.0
    extra: dict = field(default_factory=dict)

    @property
    def obs_dim(self) -> int:
        return int(self.params["W1"].shape[0])

    @property
    def hidden(self) -> int:
        return int(self.params["W1"].shape[1])

    @property
    def n_actions(self) -> int:
        return int(self.params["W2"].shape[1])

    def copy(self) -> "PolicyParams":
        return replace(self, params={k: v.copy() for k, v in self.params.items()}, extra=dict(self.extra))

    def flat(self) -> np.ndarray:
        return np.concatenate([self.params[k].ravel() for k in PARAM_NAMES])

    def save(self, path: str | Path) -> None:
        meta = {
            "role": self.role,
            "seed": self.seed,
            "shaping": None if self.shaping is None else self.shaping.to_dict(),
            "timesteps": self.timesteps,
            "value_scale": self.value_scale,
            "obs_dim": self.obs_dim,
            "hidden": self.hidden,
            "n_actions": self.n_actions,
            **({"extra": self.extra} if self.extra else {}),
        }
        write_flat(path, "policy", {k: self.params[k] for k in PARAM_NAMES}, meta)

    @classmethod
    def load(cls, path: str | Path) -> "PolicyParams":
        arrays, meta = read_flat(path, kind="policy")
        shaping = meta.get("shaping")
        return cls(
            params=arrays,
            role=meta["role"],
            seed=meta["seed"],
            shaping=None if shaping is None else ShapingVector.from_dict(shaping),
            timesteps=meta["timesteps"],
            value_scale=meta["value_scale"],
            extra=meta.get("extra", {}),
        )


def init_policy(seed: int, obs_dim: int = OBS_DIM, hidden: int = 64, n_actions: int = N_ACTIONS,
                role: str = ROLE_PARTNER, shaping: ShapingVector | None = None) -> PolicyParams:
    rng = np.random.default_rng(seed)
    scale_in = np.sqrt(2.0 / (obs_dim + hidden))
    params = {
        "W1": rng.normal(0.0, scale_in, (obs_dim, hidden)),
        "b1": np.zeros(hidden),
        # near-uniform initial action distribution
        "W2": rng.normal(0.0, 0.01, (hidden, n_actions)),
        "b2": np.zeros(n_actions),
        "V1": rng.normal(0.0, scale_in, (obs_dim, hidden)),
        "c1": np.zeros(hidden),
        "V2": rng.normal(0.0, 1.0 / np.sqrt(hidden), (hidden, 1)),
        "c2": np.zeros(1),
    }
    return PolicyParams(params, role=role, seed=int(seed), shaping=shaping)


def uniform_policy(obs_dim: int = OBS_DIM, hidden: int = 64, n_actions: int = N_ACTIONS) -> PolicyParams:
    """A policy that picks every action with equal probability (the random baseline)."""
    pol = init_policy(0, obs_dim, hidden, n_actions, role=ROLE_PARTNER)
    pol.params["W2"][:] = 0.0
    pol.extra["uniform"] = True
    return pol


def _check_obs(policy: PolicyParams, obs: np.ndarray) -> None:
    if obs.shape[-1] != policy.obs_dim:
        raise DimensionMismatch(f"observation has {obs.shape[-1]} dims, policy expects {policy.obs_dim}")


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def policy_logits(policy: PolicyParams, obs: np.ndarray):
    """Returns (logits, hidden activations)."""
    p = policy.params
    h = np.tanh(obs @ p["W1"] + p["b1"])
    return h @ p["W2"] + p["b2"], h


def value_forward(policy: PolicyParams, obs: np.ndarray):
    """Normalized value output and hidden activations."""
    p = policy.params
    h = np.tanh(obs @ p["V1"] + p["c1"])
    return (h @ p["V2"] + p["c2"])[..., 0], h


def action_probs(policy: PolicyParams, obs: np.ndarray) -> np.ndarray:
    obs = np.asarray(obs, dtype=np.float64)
    _check_obs(policy, obs)
    logits, _ = policy_logits(policy, obs)
    return np.exp(log_softmax(logits))


def values(policy: PolicyParams, obs: np.ndarray) -> np.ndarray:
    v, _ = value_forward(policy, obs)
    return v * policy.value_scale


def greedy_action(policy: PolicyParams, obs: np.ndarray) -> np.ndarray:
    """Argmax action; ties go to the lowest action index."""
    obs = np.asarray(obs, dtype=np.float64)
    _check_obs(policy, obs)
    logits, _ = policy_logits(policy, obs)
    return np.argmax(logits, axis=-1)


def act(policy: PolicyParams, obs: np.ndarray, u: np.ndarray):
    """Sample actions by inverse CDF with uniforms ``u``; returns (actions, logp, values)."""
    logits, _ = policy_logits(policy, obs)
    logp_all = log_softmax(logits)
    probs = np.exp(logp_all)
    cdf = np.cumsum(probs, axis=-1)
    a = np.minimum((cdf < u[:, None]).sum(axis=-1), probs.shape[-1] - 1)
    v, _ = value_forward(policy, obs)
    return a, logp_all[np.arange(len(a)), a], v * policy.value_scale


def policy_backward(policy: PolicyParams, obs: np.ndarray, h: np.ndarray, dlogits: np.ndarray) -> dict:
    p = policy.params
    dh = (dlogits @ p["W2"].T) * (1.0 - h ** 2)
    return {"W1": obs.T @ dh, "b1": dh.sum(axis=0), "W2": h.T @ dlogits, "b2": dlogits.sum(axis=0)}


def value_backward(policy: PolicyParams, obs: np.ndarray, h: np.ndarray, dv: np.ndarray) -> dict:
    p = policy.params
    dv = dv[:, None]
    dh = (dv @ p["V2"].T) * (1.0 - h ** 2)
    return {"V1": obs.T @ dh, "c1": dh.sum(axis=0), "V2": h.T @ dv, "c2": dv.sum(axis=0)}
