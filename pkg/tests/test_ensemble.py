import numpy as np
import pytest

from shapezsc.errors import DimensionMismatch, ShapeZscError, ValidationError
from shapezsc.ensemble import (
    Z90,
    EnsemblePolicy,
    EvalProtocol,
    EvalReport,
    build_baseline_ensemble,
    ensemble_action,
    evaluate_method,
    improvement,
    play_episodes,
    shaping_set_of,
    xp_return,
)
from shapezsc.kitchen import get_layout
from shapezsc.kitchen.env import OBS_DIM
from shapezsc.marl import TrajeDiConfig, greedy_action, init_policy, train_population, uniform_policy
from shapezsc.shaping import ShapingVector

R3 = get_layout("random3-mini")
BASE = ShapingVector((3, 3, 5, 0, 0, 0))


def voter(action, obs_dim=4, n_actions=6):
    """A policy whose greedy action is ``action`` for every observation."""
    pol = init_policy(0, obs_dim=obs_dim, n_actions=n_actions)
    pol.params["W2"][:] = 0.0
    pol.params["b2"][action] = 1.0
    return pol


VOTERS = [voter(a) for a in range(6)]


def brute_force_mode(votes):
    counts = [sum(1 for v in votes if v == a) for a in range(6)]
    best = max(counts)
    return min(a for a in range(6) if counts[a] == best)


# --- voting ----------------------------------------------------------------------

def test_vote_examples():
    obs = np.zeros(4)
    assert ensemble_action(EnsemblePolicy([VOTERS[2], VOTERS[2], VOTERS[5]]), obs) == 2
    assert ensemble_action(EnsemblePolicy([VOTERS[3], VOTERS[1]]), obs) == 1
    assert ensemble_action(EnsemblePolicy([VOTERS[4]]), obs) == 4


def test_vote_matches_brute_force():
    rng = np.random.default_rng(0)
    obs = np.zeros(4)
    mismatches = 0
    for _ in range(10_000):
        votes = rng.integers(0, 6, int(rng.integers(1, 8)))
        mismatches += ensemble_action(EnsemblePolicy([VOTERS[v] for v in votes]), obs) != brute_force_mode(votes)
    assert mismatches == 0


def test_singleton_equals_greedy():
    pol = init_policy(3)
    obs = np.random.default_rng(1).normal(size=(200, OBS_DIM))
    assert np.array_equal(ensemble_action(EnsemblePolicy([pol]), obs), greedy_action(pol, obs))


def test_batch_matches_per_observation():
    ens = EnsemblePolicy([init_policy(s) for s in range(5)])
    obs = np.random.default_rng(2).normal(size=(30, OBS_DIM))
    assert ensemble_action(ens, obs).tolist() == [ensemble_action(ens, o) for o in obs]


def test_ensemble_validation():
    with pytest.raises(ShapeZscError):
        EnsemblePolicy([])
    with pytest.raises(DimensionMismatch):
        EnsemblePolicy([voter(0), voter(0, obs_dim=5)])
    with pytest.raises(ValidationError):
        EnsemblePolicy([voter(0)], tie_break="random")
    with pytest.raises(DimensionMismatch):
        ensemble_action(EnsemblePolicy([voter(0)]), np.zeros(7))


# --- cross-play ------------------------------------------------------------------

def test_xp_seat_swap_symmetry():
    a, b = init_policy(0), init_policy(1)
    ab = xp_return(a, b, R3, 8, [0, 1])
    ba = xp_return(b, a, R3, 8, [0, 1])
    assert ab.mean == ba.mean
    assert ab.seat_a_first == ba.seat_b_first and ab.seat_b_first == ba.seat_a_first


def test_xp_self_matches_self_play():
    u = uniform_policy()
    xp = xp_return(u, u, R3, 40, [0])
    sp = play_episodes(u, u, R3, 40, 123).sparse
    se = np.hypot(xp.stderr, sp.std(ddof=1) / np.sqrt(len(sp)))
    assert abs(xp.mean - sp.mean()) <= 2 * se + 1e-12
    assert xp.mean >= 0.0


def test_play_episodes_deterministic():
    a, b = init_policy(0), EnsemblePolicy([init_policy(1), init_policy(2)])
    x, y = play_episodes(a, b, R3, 4, 9), play_episodes(a, b, R3, 4, 9)
    assert np.array_equal(x.sparse, y.sparse) and np.array_equal(x.features, y.features)


def test_play_episodes_checks_dims():
    with pytest.raises(DimensionMismatch):
        play_episodes(voter(0), uniform_policy(), R3, 2, 0)


# --- reports -----------------------------------------------------------------------

def _shaped_partner(seed):
    p = uniform_policy()
    p.shaping = ShapingVector((1, 2, 3, 4, 5, 6))
    p.seed = seed
    return p


def test_single_partner_report_equals_xp():
    ego, partner = init_policy(5), _shaped_partner(0)
    prot = EvalProtocol(rollouts=6, seeds=(0, 1))
    rep = evaluate_method(ego, [partner], R3, prot, "ego")
    xp = xp_return(ego, partner, R3, 6, [0, 1])
    assert sorted(rep.sparse) == sorted(xp.per_rollout)
    assert rep.mean_sparse == pytest.approx(xp.mean, abs=1e-12)


def test_shaped_return_uses_partner_weights():
    partner = _shaped_partner(0)
    rep = evaluate_method(uniform_policy(), [partner], R3, EvalProtocol(rollouts=3, seeds=(0,)))
    w = partner.shaping.as_array()
    for r in rep.records:
        assert r.shaped == pytest.approx(r.sparse + w @ np.array(r.feature_sums), abs=1e-9)


def test_ci_halves_with_four_times_rollouts():
    partner = _shaped_partner(0)
    small = evaluate_method(uniform_policy(), [partner], R3, EvalProtocol(rollouts=40, seeds=(0,)))
    big = evaluate_method(uniform_policy(), [partner], R3, EvalProtocol(rollouts=160, seeds=(0,)))
    assert 0.4 <= big.ci90_shaped / small.ci90_shaped <= 0.6
    s = small.shaped
    assert small.ci90_shaped == pytest.approx(Z90 * s.std(ddof=1) / np.sqrt(len(s)))


def test_improvement_and_self_reference():
    assert improvement(15.0, 10.0) == pytest.approx(50.0)
    assert improvement(0.0, 0.0) == 0.0
    rep = evaluate_method(uniform_policy(), [_shaped_partner(0)], R3, EvalProtocol(rollouts=4, seeds=(0,)), "m")
    assert rep.with_reference(rep).improvement_pct == 0.0
    assert rep.improvement_pct is None


def test_report_round_trip(tmp_path):
    ens = EnsemblePolicy([_shaped_partner(0), init_policy(1, shaping=ShapingVector((9, 0, 0, 0, 0, 1)))])
    rep = evaluate_method(ens, [_shaped_partner(1)], R3, EvalProtocol(rollouts=3, seeds=(0,)), "E")
    rep.save(tmp_path / "r.json")
    back = EvalReport.load(tmp_path / "r.json")
    assert back.summary() == rep.summary() and back.records == rep.records
    assert back.diversity == rep.diversity and rep.diversity is not None
    rep.save_csv(tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text().splitlines()[0] == "method,mean,ci90,improvement_pct"


def test_empty_pool_rejected():
    with pytest.raises(ValidationError):
        evaluate_method(uniform_policy(), [], R3)
    with pytest.raises(ValidationError):
        EvalProtocol(rollouts=0)


# --- baselines ------------------------------------------------------------------

SMALL = TrajeDiConfig(n=2, n_envs=4, rollout_length=16, epochs=1, total_timesteps=1200, eval_episodes=2,
                      horizon=50, seed=3)


def test_baseline_of_one_equals_single_run():
    ens = build_baseline_ensemble(BASE, 1, R3, SMALL)
    single = train_population(BASE, R3, SMALL)
    assert np.array_equal(ens.components[0].flat(), single.best_response.flat())


def test_baseline_components_share_shaping():
    pops = []
    ens = build_baseline_ensemble(BASE, 2, R3, SMALL, populations=pops)
    assert len(pops) == 2 and all(s == BASE for s in ens.shapings)
    assert len(shaping_set_of(ens)) == 2
    assert not np.array_equal(ens.components[0].flat(), ens.components[1].flat())


def test_ensemble_vs_own_components_lower_bound():
    pops = [train_population(ShapingVector(s), R3, SMALL) for s in ((3, 3, 5, 0, 0, 0), (8, 1, 1, 0, 0, 0))]
    brs = [p.best_response for p in pops]
    prot = EvalProtocol(rollouts=4, seeds=(0,), horizon=100)
    worst = min(xp_return(a, b, R3, 4, [0], 100).mean for a in brs for b in brs)
    rep = evaluate_method(EnsemblePolicy(brs), brs, R3, prot)
    assert rep.mean_sparse >= worst
