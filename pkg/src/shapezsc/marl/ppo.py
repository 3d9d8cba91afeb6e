"""Clipped-surrogate policy optimization with GAE, entropy bonus and value loss."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .._jit import njit
from ..errors import NonFiniteLoss
from .policy import (
    PARAM_NAMES,
    POLICY_KEYS,
    VALUE_KEYS,
    PolicyParams,
    log_softmax,
    policy_backward,
    policy_logits,
    value_backward,
    value_forward,
)
from .rollout import Samples, TrajectoryBatch


@dataclass(frozen=True)
class PPOConfig:
    learning_rate: float = 0.0005
    clip_param: float = 0.2
    gamma: float = 0.99
    gae_lambda: float = 0.95
    ent_coef: float = 0.01
    vf_coef: float = 0.5
    epochs: int = 4
    minibatch_size: int = 256
    max_grad_norm: float = 10.0
    value_scale_decay: float = 0.9

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must be in (0, 1], got {self.gamma}")
        if self.clip_param <= 0:
            raise ValueError(f"clip_param must be positive, got {self.clip_param}")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")


@njit
def adam_kernel(theta, grad, m, v, step_size, beta1, beta2, c2, eps):
    for i in range(theta.shape[0]):
        g = grad[i]
        m[i] = beta1 * m[i] + (1.0 - beta1) * g
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g
        theta[i] -= step_size * m[i] / (math.sqrt(v[i] / c2) + eps)


class Adam:
    """Adam over one flat parameter vector (updated in place)."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m: np.ndarray | None = None
        self.v: np.ndarray | None = None
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> None:
        if self.m is None:
            self.m = np.zeros_like(theta)
            self.v = np.zeros_like(theta)
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        adam_kernel(theta, grad, self.m, self.v, self.lr / c1, self.beta1, self.beta2, c2, self.eps)


@dataclass
class JsdTerm:
    """Diversity objective for one population member.

    ``others`` holds the other members' action distributions at ``obs`` and
    stays fixed while this member updates; ``weights`` sum to one.
    """

    obs: np.ndarray  # (S, D)
    others: np.ndarray  # (n - 1, S, A)
    weights: np.ndarray  # (S,)
    alpha: float

    @property
    def n_members(self) -> int:
        return self.others.shape[0] + 1


def jsd_value_and_logit_grad(probs: np.ndarray, others: np.ndarray, weights: np.ndarray):
    """Weighted JSD across {probs} ∪ others and its gradient w.r.t. the logits behind ``probs``."""
    n = others.shape[0] + 1
    mix = (probs + others.sum(axis=0)) / n
    log_p = np.log(np.maximum(probs, 1e-300))
    log_m = np.log(np.maximum(mix, 1e-300))
    ent_mix = -(mix * log_m).sum(axis=-1)
    ent_self = -(probs * log_p).sum(axis=-1)
    ent_others = -(others * np.log(np.maximum(others, 1e-300))).sum(axis=-1).sum(axis=0)
    per_state = ent_mix - (ent_self + ent_others) / n
    g = (log_p - log_m) / n
    dz = probs * (g - (probs * g).sum(axis=-1, keepdims=True))
    return float(weights @ per_state), weights[:, None] * dz


def loss_and_grads(policy: PolicyParams, mb: Samples, cfg: PPOConfig, jsd: JsdTerm | None = None):
    """Total loss on one minibatch, its gradients and diagnostics.

    The loss is clipped surrogate + vf_coef * value MSE / 2 - ent_coef * entropy
    (- alpha * JSD when a diversity term is given). Advantages are normalized
    within the minibatch.
    """
    m = len(mb)
    logits, h = policy_logits(policy, mb.obs)
    logp_all = log_softmax(logits)
    probs = np.exp(logp_all)
    idx = np.arange(m)
    logp = logp_all[idx, mb.actions]
    ratio = np.exp(logp - mb.logp)
    adv = mb.advantages
    if m > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    eps = cfg.clip_param
    surr1 = ratio * adv
    surr2 = np.clip(ratio, 1.0 - eps, 1.0 + eps) * adv
    policy_loss = -float(np.mean(np.minimum(surr1, surr2)))
    active = surr1 <= surr2
    entropy_per = -(probs * logp_all).sum(axis=-1)
    entropy = float(entropy_per.mean())

    dlogp = -(ratio * adv * active) / m
    dlogits = -dlogp[:, None] * probs
    dlogits[idx, mb.actions] += dlogp
    dlogits += (cfg.ent_coef / m) * probs * (logp_all + entropy_per[:, None])

    v_norm, hv = value_forward(policy, mb.obs)
    target = mb.returns / policy.value_scale
    value_loss = 0.5 * float(np.mean((v_norm - target) ** 2))
    dv = cfg.vf_coef * (v_norm - target) / m

    grads = policy_backward(policy, mb.obs, h, dlogits)
    grads.update(value_backward(policy, mb.obs, hv, dv))
    total = policy_loss + cfg.vf_coef * value_loss - cfg.ent_coef * entropy

    jsd_value = 0.0
    if jsd is not None and jsd.alpha != 0.0:
        z_j, h_j = policy_logits(policy, jsd.obs)
        p_j = np.exp(log_softmax(z_j))
        jsd_value, dz = jsd_value_and_logit_grad(p_j, jsd.others, jsd.weights)
        total -= jsd.alpha * jsd_value
        g_j = policy_backward(policy, jsd.obs, h_j, -jsd.alpha * dz)
        for k in POLICY_KEYS:
            grads[k] = grads[k] + g_j[k]

    stats = {
        "loss": total,
        "policy_loss": policy_loss,
        "value_loss": value_loss,
        "entropy": entropy,
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > eps)),
        "approx_kl": float(np.mean(mb.logp - logp)),
        "jsd": jsd_value,
    }
    return total, grads, stats


def _clip_by_norm(g: np.ndarray, max_norm: float) -> None:
    norm = math.sqrt(float(g @ g))
    if norm > max_norm:
        g *= max_norm / norm


def _flat_views(params: dict):
    """Pack ``params`` into one vector; returns it with per-name views and slice offsets."""
    sizes = [params[k].size for k in PARAM_NAMES]
    theta = np.concatenate([params[k].ravel() for k in PARAM_NAMES])
    views, offsets, start = {}, {}, 0
    for k, n in zip(PARAM_NAMES, sizes):
        views[k] = theta[start:start + n].reshape(params[k].shape)
        offsets[k] = (start, start + n)
        start += n
    return theta, views, offsets


def _rescale_value_head(policy: PolicyParams, returns: np.ndarray, decay: float) -> None:
    """Track the RMS of returns and rescale the value head so its predictions are unchanged."""
    rms = float(np.sqrt(np.mean(returns ** 2)))
    if not policy.extra.get("value_scale_init"):
        scale = max(rms, 1.0)
        policy.extra["value_scale_init"] = True
    else:
        scale = max(math.sqrt(decay * policy.value_scale ** 2 + (1 - decay) * rms ** 2), 1.0)
    ratio = policy.value_scale / scale
    policy.params["V2"] *= ratio
    policy.params["c2"] *= ratio
    policy.value_scale = scale


def ppo_update(policy: PolicyParams, batch: TrajectoryBatch | Samples, cfg: PPOConfig = PPOConfig(),
               optimizer: Adam | None = None, owner: int = 0, rng: np.random.Generator | None = None,
               jsd: JsdTerm | None = None):
    """Run ``cfg.epochs`` passes of minibatch updates; returns (updated copy, stats).

    Stats average over minibatches: loss terms, entropy, clip fraction.
    """
    samples = batch.samples(owner, cfg.gamma, cfg.gae_lambda) if isinstance(batch, TrajectoryBatch) else batch
    if len(samples) == 0:
        raise ValueError("empty batch")
    policy = policy.copy()
    optimizer = optimizer or Adam(cfg.learning_rate)
    optimizer.lr = cfg.learning_rate
    rng = rng or np.random.default_rng(0)

    if cfg.learning_rate > 0:
        _rescale_value_head(policy, samples.returns, cfg.value_scale_decay)
    theta, policy.params, offsets = _flat_views(policy.params)
    grad = np.zeros_like(theta)
    split = offsets[VALUE_KEYS[0]][0]

    n = len(samples)
    mb_size = min(cfg.minibatch_size, n)
    acc: dict[str, float] = {}
    count = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, mb_size):
            idx = order[start:start + mb_size]
            if len(idx) < 2 and n >= 2:
                continue
            loss, grads, stats = loss_and_grads(policy, samples.subset(idx), cfg, jsd)
            if not math.isfinite(loss):
                raise NonFiniteLoss(f"PPO loss became {loss}")
            for k, (a, b) in offsets.items():
                grad[a:b] = grads[k].ravel()
            _clip_by_norm(grad[:split], cfg.max_grad_norm)
            _clip_by_norm(grad[split:], cfg.max_grad_norm)
            optimizer.step(theta, grad)
            for k, v in stats.items():
                acc[k] = acc.get(k, 0.0) + v
            count += 1
    out = {k: v / max(count, 1) for k, v in acc.items()}
    out["n_samples"] = n
    return policy, out


__all__ = ["Adam", "JsdTerm", "PARAM_NAMES", "PPOConfig", "jsd_value_and_logit_grad", "loss_and_grads", "ppo_update"]
