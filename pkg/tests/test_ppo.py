import numpy as np
import pytest

from shapezsc.errors import DimensionMismatch, NonFiniteLoss
from shapezsc.kitchen import VecKitchen, get_layout
from shapezsc.kitchen.env import densify
from shapezsc.marl import (
    Adam,
    JsdTerm,
    PPOConfig,
    Samples,
    action_probs,
    collect_rollouts,
    init_policy,
    ppo_update,
    uniform_policy,
)
from shapezsc.marl.policy import PARAM_NAMES, act, greedy_action
from shapezsc.marl.ppo import loss_and_grads
from shapezsc.shaping import ShapingVector

BASE = ShapingVector((3, 3, 5, 1, 1, 1))
ZERO = ShapingVector((0,) * 6)
R3 = get_layout("random3-mini")


def _micro_batch(seed, m=12, d=7, a=6):
    rng = np.random.default_rng(seed)
    pol = init_policy(seed, obs_dim=d, hidden=5, n_actions=a)
    for k in pol.params:
        pol.params[k] = pol.params[k] + rng.normal(0, 0.3, pol.params[k].shape)
    pol.value_scale = 2.0
    mb = Samples(rng.normal(size=(m, d)), rng.integers(0, a, m), np.log(rng.dirichlet(np.ones(a), m)[:, 0]),
                 rng.normal(size=m), rng.normal(size=m), rng.normal(size=m), np.arange(m))
    others = rng.dirichlet(np.ones(a), (2, 5))
    w = rng.random(5)
    jsd = JsdTerm(rng.normal(size=(5, d)), others, w / w.sum(), 0.7)
    return pol, mb, jsd


@pytest.mark.parametrize("with_jsd", [False, True])
def test_gradients_match_finite_differences(with_jsd):
    pol, mb, jsd = _micro_batch(0)
    cfg = PPOConfig(ent_coef=0.05)
    jsd = jsd if with_jsd else None
    _, grads, _ = loss_and_grads(pol, mb, cfg, jsd)
    worst = 0.0
    for k in PARAM_NAMES:
        it = np.nditer(pol.params[k], flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = pol.params[k][i]
            pol.params[k][i] = old + 1e-6
            lp = loss_and_grads(pol, mb, cfg, jsd)[0]
            pol.params[k][i] = old - 1e-6
            lm = loss_and_grads(pol, mb, cfg, jsd)[0]
            pol.params[k][i] = old
            num, ana = (lp - lm) / 2e-6, grads[k][i]
            worst = max(worst, abs(ana - num) / max(abs(ana) + abs(num), 1e-8))
    assert worst < 1e-3


def test_adam_matches_reference():
    rng = np.random.default_rng(1)
    theta = rng.normal(size=20)
    ref = theta.copy()
    m = v = np.zeros(20)
    opt = Adam(0.01)
    for t in range(1, 6):
        g = rng.normal(size=20)
        opt.step(theta, g)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref -= 0.01 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    assert np.allclose(theta, ref, atol=1e-12)


def _kitchen_batch(seed=0):
    pol = init_policy(seed)
    return pol, collect_rollouts((pol, pol), R3, BASE, 512, seed)


def test_zero_learning_rate_is_noop():
    pol, batch = _kitchen_batch()
    out, _ = ppo_update(pol, batch, PPOConfig(learning_rate=0.0))
    assert all(np.array_equal(pol.params[k], out.params[k]) for k in PARAM_NAMES)
    assert out.value_scale == pol.value_scale


def test_update_does_not_mutate_input_and_stats_are_sane():
    pol, batch = _kitchen_batch(1)
    before = pol.flat().copy()
    out, stats = ppo_update(pol, batch, PPOConfig(epochs=2, minibatch_size=128))
    assert np.array_equal(pol.flat(), before) and not np.array_equal(out.flat(), before)
    assert 0.0 <= stats["clip_fraction"] <= 1.0
    assert 0.0 <= stats["entropy"] <= np.log(6) + 1e-12
    assert stats["n_samples"] == 1024
    obs = np.random.default_rng(0).normal(size=(500, pol.obs_dim)) * 3
    assert np.allclose(action_probs(out, obs).sum(axis=1), 1.0, atol=1e-9)


def test_value_rescale_preserves_predictions():
    from shapezsc.marl.ppo import _rescale_value_head
    from shapezsc.marl.policy import values

    pol = init_policy(2)
    obs = np.random.default_rng(0).normal(size=(10, pol.obs_dim))
    before = values(pol, obs)
    _rescale_value_head(pol, np.full(50, 40.0), 0.9)
    assert pol.value_scale == pytest.approx(40.0)
    assert np.allclose(values(pol, obs), before, atol=1e-12)


def test_nonfinite_loss_raises():
    pol, batch = _kitchen_batch(2)
    pol.params["W2"][0, 0] = np.nan
    with pytest.raises(NonFiniteLoss):
        ppo_update(pol, batch, PPOConfig(epochs=1))


def test_empty_batch_rejected():
    pol = init_policy(0, obs_dim=3, hidden=4)
    empty = Samples(np.zeros((0, 3)), np.zeros(0, int), np.zeros(0), np.zeros(0), np.zeros(0), np.zeros(0),
                    np.zeros(0, int))
    with pytest.raises(ValueError):
        ppo_update(pol, empty)


# --- micro bandit ------------------------------------------------------------------

LUCRATIVE = np.array([2, 4])  # best action in state 0 and state 1


def _bandit_run(updates=200, seed=0):
    rng = np.random.default_rng(seed)
    pol = init_policy(seed, obs_dim=2, hidden=16)
    cfg = PPOConfig(learning_rate=0.01, epochs=4, minibatch_size=64)
    opt = Adam(cfg.learning_rate)
    eye = np.eye(2)
    curve = []
    for _ in range(updates):
        s = rng.integers(0, 2, 128)
        obs = eye[s]
        a, logp, v = act(pol, obs, rng.random(128))
        r = (a == LUCRATIVE[s]).astype(float)
        mb = Samples(obs, a, logp, v, r - v, r, np.zeros(128, int))
        pol, _ = ppo_update(pol, mb, cfg, optimizer=opt, rng=rng)
        p = action_probs(pol, eye)
        curve.append(float(p[[0, 1], LUCRATIVE].mean()))
    return pol, np.array(curve)


def test_bandit_learns_lucrative_action():
    pol, curve = _bandit_run()
    p = action_probs(pol, np.eye(2))
    assert p[0, 2] > 0.9 and p[1, 4] > 0.9
    assert np.array_equal(greedy_action(pol, np.eye(2)), LUCRATIVE)


def test_bandit_expected_return_trends_up():
    _, curve = _bandit_run()
    ma = np.convolve(curve, np.ones(10) / 10, mode="valid")
    assert np.all(np.diff(ma) >= -1e-3)
    assert curve[0] < 0.5 < 0.9 < ma[-1]


# --- rollouts ----------------------------------------------------------------------

def test_rollouts_uniform_decomposition_identity():
    u = uniform_policy()
    b = collect_rollouts((u, u), R3, BASE, 10_000, 3)
    assert b.n_steps == 10_000
    assert np.allclose(b.dense, densify(b.sparse, b.features, BASE.as_array()), atol=1e-9)
    assert np.all(np.isfinite(b.logp)) and np.allclose(b.logp, -np.log(6))


def test_zero_shaping_dense_equals_sparse():
    pol = init_policy(0)
    b = collect_rollouts((pol, pol), R3, ZERO, 2000, 4)
    assert np.array_equal(b.dense, b.sparse)


def test_rollouts_deterministic():
    a, c = init_policy(0), init_policy(1)
    x = collect_rollouts((a, c), R3, BASE, 800, 5)
    y = collect_rollouts((a, c), R3, BASE, 800, 5)
    for f in ("obs", "actions", "logp", "sparse", "features", "dense", "dones"):
        assert np.array_equal(getattr(x, f), getattr(y, f))


def test_rewards_match_replay():
    a, c = init_policy(0), init_policy(1)
    batch = collect_rollouts((a, c), R3, BASE, 4000, 6, n_envs=4)
    env = VecKitchen(R3, 4, seed=np.random.SeedSequence(6).spawn(2)[0])
    for t in range(batch.actions.shape[0]):
        assert np.array_equal(env.observe(), batch.obs[t])
        sp, ft, done, _ = env.step(batch.actions[t])
        assert np.array_equal(sp, batch.sparse[t]) and np.array_equal(ft, batch.features[t])
        assert np.array_equal(done, batch.dones[t])


def test_policy_rejects_wrong_obs_dim():
    with pytest.raises(DimensionMismatch):
        action_probs(init_policy(0), np.zeros((1, 5)))
