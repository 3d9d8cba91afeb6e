"""Mode-vote ensembles of best-response policies and cross-play evaluation."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence, Union

import numpy as np

from .errors import DimensionMismatch, InsufficientSamples, ShapeZscError, ValidationError
from .kitchen.env import HORIZON, OBS_DIM, VecKitchen
from .kitchen.layout import Layout
from .marl.policy import PolicyParams, act, policy_logits
from .marl.trajedi import Population, TrajeDiConfig, train_population
from .shaping import DiversityReport, ShapingSet, ShapingVector, diversity_metrics

TIE_LOWEST_INDEX = "lowest-index"
Z90 = 1.645


@dataclass
class EnsemblePolicy:
    """Greedy components voting on one action; ties go to ``tie_break``."""

    components: list[PolicyParams]
    tie_break: str = TIE_LOWEST_INDEX
    label: str = ""

    def __post_init__(self):
        if not self.components:
            raise ShapeZscError("an ensemble needs at least one component")
        if self.tie_break != TIE_LOWEST_INDEX:
            raise ValidationError(f"unknown tie-break rule {self.tie_break!r}")
        d, a = self.components[0].obs_dim, self.components[0].n_actions
        for c in self.components[1:]:
            if c.obs_dim != d or c.n_actions != a:
                raise DimensionMismatch(
                    f"component shapes differ: ({c.obs_dim}, {c.n_actions}) vs ({d}, {a})")

    @property
    def obs_dim(self) -> int:
        return self.components[0].obs_dim

    @property
    def n_actions(self) -> int:
        return self.components[0].n_actions

    @property
    def shapings(self) -> list[ShapingVector | None]:
        return [c.shaping for c in self.components]

    def votes(self, obs: np.ndarray) -> np.ndarray:
        """(N, n_actions) vote counts for a batch of observations."""
        counts = np.zeros((len(obs), self.n_actions), dtype=np.int64)
        rows = np.arange(len(obs))
        for c in self.components:
            logits, _ = policy_logits(c, obs)
            np.add.at(counts, (rows, np.argmax(logits, axis=-1)), 1)
        return counts


def ensemble_action(ensemble: EnsemblePolicy, observation: np.ndarray):
    """Modal greedy action; a single observation gives an int, a batch an array."""
    obs = np.asarray(observation, dtype=np.float64)
    if obs.shape[-1] != ensemble.obs_dim:
        raise DimensionMismatch(f"observation has {obs.shape[-1]} dims, ensemble expects {ensemble.obs_dim}")
    single = obs.ndim == 1
    counts = ensemble.votes(obs.reshape(-1, obs.shape[-1]))
    # argmax returns the first maximum, which is the lowest action index
    a = np.argmax(counts, axis=-1)
    return int(a[0]) if single else a


Agent = Union[EnsemblePolicy, PolicyParams]


def _actor(agent: Agent) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """Single policies sample their actions; ensembles vote greedily."""
    if isinstance(agent, EnsemblePolicy):
        return lambda obs, u: ensemble_action(agent, obs)
    return lambda obs, u: act(agent, obs, u)[0]


@dataclass
class Episodes:
    """Per-episode outcomes of one seat assignment: sparse return and team feature sums."""

    sparse: np.ndarray  # (R,)
    features: np.ndarray  # (R, 6) summed over time and both agents


def play_episodes(seat0: Agent, seat1: Agent, layout: Layout, rollouts: int, seed: int,
                  horizon: int = HORIZON) -> Episodes:
    """Run ``rollouts`` full episodes in lockstep; a pure function of (seat0, seat1, seed)."""
    for agent in (seat0, seat1):
        if agent.obs_dim != OBS_DIM:
            raise DimensionMismatch(
                f"policy expects {agent.obs_dim} observation dims, environment gives {OBS_DIM}")
    ss = np.random.SeedSequence(seed)
    env_ss, act_ss = ss.spawn(2)
    env = VecKitchen(layout, rollouts, seed=env_ss, horizon=horizon)
    rng = np.random.default_rng(act_ss)
    actors = (_actor(seat0), _actor(seat1))
    sparse = np.zeros(rollouts)
    feats = np.zeros((rollouts, 6))
    actions = np.zeros((rollouts, 2), dtype=np.int64)
    for _ in range(horizon):
        obs = env.observe()
        u = rng.random((rollouts, 2))
        actions[:, 0] = actors[0](obs[:, 0], u[:, 0])
        actions[:, 1] = actors[1](obs[:, 1], u[:, 1])
        sp, ft, _done, _t = env.step(actions)
        sparse += sp
        feats += ft.sum(axis=1)
    return Episodes(sparse, feats)


@dataclass
class XpResult:
    mean: float
    seat_a_first: float  # pi_a in seat 0
    seat_b_first: float  # pi_b in seat 0
    per_rollout: np.ndarray  # every episode of both assignments
    stderr: float


def _stderr(x: np.ndarray) -> float:
    return float(np.std(x, ddof=1) / math.sqrt(len(x))) if len(x) > 1 else 0.0


def xp_return(pi_a: Agent, pi_b: Agent, layout: Layout, rollouts: int, seeds: Sequence[int],
              horizon: int = HORIZON) -> XpResult:
    """Cross-play sparse return averaged over both seat assignments.

    Each assignment reuses the same seeds, so swapping the arguments gives
    the same value exactly.
    """
    if rollouts < 1:
        raise ValidationError("rollouts must be >= 1")
    ab = np.concatenate([play_episodes(pi_a, pi_b, layout, rollouts, s, horizon).sparse for s in seeds])
    ba = np.concatenate([play_episodes(pi_b, pi_a, layout, rollouts, s, horizon).sparse for s in seeds])
    m_ab, m_ba = float(ab.mean()), float(ba.mean())
    both = np.concatenate([ab, ba])
    return XpResult(0.5 * (m_ab + m_ba), m_ab, m_ba, both, _stderr(both))


# --- method evaluation -----------------------------------------------------------

@dataclass(frozen=True)
class EvalProtocol:
    rollouts: int = 40
    seeds: tuple[int, ...] = tuple(range(10))
    horizon: int = HORIZON

    def __post_init__(self):
        if self.rollouts < 1:
            raise ValidationError("rollouts must be >= 1")
        if not self.seeds:
            raise ValidationError("at least one evaluation seed is required")


@dataclass
class MatchSpec:
    ego: Agent
    partner: PolicyParams
    layout: Layout
    protocol: EvalProtocol = EvalProtocol()

    def run(self) -> list["RolloutRecord"]:
        shaping = self.partner.shaping
        w = np.zeros(6) if shaping is None else shaping.as_array()
        out = []
        for seed in self.protocol.seeds:
            for ego_seat in (0, 1):
                pair = (self.ego, self.partner) if ego_seat == 0 else (self.partner, self.ego)
                ep = play_episodes(*pair, self.layout, self.protocol.rollouts, seed, self.protocol.horizon)
                for r in range(self.protocol.rollouts):
                    f = ep.features[r]
                    out.append(RolloutRecord(-1, int(seed), ego_seat, r, float(ep.sparse[r]),
                                             float(ep.sparse[r] + w @ f), [float(v) for v in f]))
        return out


@dataclass
class RolloutRecord:
    partner: int
    seed: int
    ego_seat: int
    rollout: int
    sparse: float
    shaped: float  # sparse + partner weights . feature sums
    feature_sums: list[float]

    def to_json(self) -> dict:
        return dict(self.__dict__)


@dataclass
class EvalReport:
    method: str
    layout: str
    records: list[RolloutRecord]
    rollouts: int
    seeds: list[int]
    diversity: DiversityReport | None = None
    ego_shapings: list[list[float]] = field(default_factory=list)
    reference_method: str | None = None
    reference_mean: float | None = None

    @property
    def sparse(self) -> np.ndarray:
        return np.array([r.sparse for r in self.records])

    @property
    def shaped(self) -> np.ndarray:
        return np.array([r.shaped for r in self.records])

    @property
    def mean_sparse(self) -> float:
        return float(self.sparse.mean())

    @property
    def mean_shaped(self) -> float:
        return float(self.shaped.mean())

    @property
    def ci90_sparse(self) -> float:
        return Z90 * _stderr(self.sparse)

    @property
    def ci90_shaped(self) -> float:
        return Z90 * _stderr(self.shaped)

    @property
    def improvement_pct(self) -> float | None:
        if self.reference_mean is None:
            return None
        return improvement(self.mean_sparse, self.reference_mean)

    def with_reference(self, ref: "EvalReport") -> "EvalReport":
        return replace(self, reference_method=ref.method, reference_mean=ref.mean_sparse)

    def summary(self) -> dict:
        return {
            "mean_sparse": self.mean_sparse,
            "mean_shaped": self.mean_shaped,
            "ci90_sparse": self.ci90_sparse,
            "ci90_shaped": self.ci90_shaped,
            "n_rollouts": len(self.records),
            "improvement_pct": self.improvement_pct,
            "reference_method": self.reference_method,
            "reference_mean": self.reference_mean,
        }

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "layout": self.layout,
            "rollouts": self.rollouts,
            "seeds": list(self.seeds),
            "summary": self.summary(),
            "diversity": None if self.diversity is None else self.diversity.to_json(),
            "ego_shapings": self.ego_shapings,
            "records": [r.to_json() for r in self.records],
        }

    @classmethod
    def from_json(cls, d: dict) -> "EvalReport":
        try:
            s = d["summary"]
            return cls(
                method=d["method"], layout=d["layout"],
                records=[RolloutRecord(**r) for r in d["records"]],
                rollouts=int(d["rollouts"]), seeds=[int(x) for x in d["seeds"]],
                diversity=None if d.get("diversity") is None else DiversityReport.from_json(d["diversity"]),
                ego_shapings=d.get("ego_shapings", []),
                reference_method=s.get("reference_method"), reference_mean=s.get("reference_mean"),
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed evaluation report: {exc}") from exc

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "EvalReport":
        return cls.from_json(json.loads(Path(path).read_text()))

    def csv_row(self) -> list:
        imp = self.improvement_pct
        return [self.method, f"{self.mean_sparse:.6g}", f"{self.ci90_sparse:.6g}",
                "" if imp is None else f"{imp:.6g}"]

    def save_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["method", "mean", "ci90", "improvement_pct"])
            w.writerow(self.csv_row())


def improvement(mean: float, reference_mean: float) -> float:
    if reference_mean == 0:
        return 0.0 if mean == 0 else math.copysign(math.inf, mean)
    return 100.0 * (mean - reference_mean) / reference_mean


def ego_diversity(ego: Agent) -> DiversityReport | None:
    comps = ego.components if isinstance(ego, EnsemblePolicy) else [ego]
    rows = [c.shaping.weights for c in comps if c.shaping is not None]
    if len(rows) < 2:
        return None
    try:
        return diversity_metrics(np.array(rows))
    except InsufficientSamples:
        return None


def evaluate_method(ensemble: Agent, partner_pool: Sequence[PolicyParams], layout: Layout,
                    protocol: EvalProtocol = EvalProtocol(), method: str = "",
                    reference: EvalReport | None = None) -> EvalReport:
    """Play the ego with every partner in both seats over the protocol's seeds.

    Shaped returns are recomputed afterwards from logged feature sums under
    each partner's own weights; the ego never receives them.
    """
    if not partner_pool:
        raise ValidationError("partner pool is empty")
    records = []
    for k, partner in enumerate(partner_pool):
        for rec in MatchSpec(ensemble, partner, layout, protocol).run():
            rec.partner = k
            records.append(rec)
    comps = ensemble.components if isinstance(ensemble, EnsemblePolicy) else [ensemble]
    report = EvalReport(
        method=method or getattr(ensemble, "label", "") or "ego",
        layout=layout.name,
        records=records,
        rollouts=protocol.rollouts,
        seeds=list(protocol.seeds),
        diversity=ego_diversity(ensemble),
        ego_shapings=[list(c.shaping.weights) for c in comps if c.shaping is not None],
    )
    return report.with_reference(reference) if reference is not None else report


def ensemble_from_populations(populations: Sequence[Population], label: str = "") -> EnsemblePolicy:
    return EnsemblePolicy([p.best_response for p in populations], label=label)


def build_baseline_ensemble(shaping: ShapingVector, count: int, layout: Layout,
                            cfg: TrajeDiConfig = TrajeDiConfig(), progress=None,
                            populations: list | None = None) -> EnsemblePolicy:
    """Train ``count`` populations under one shaping (seeds cfg.seed, cfg.seed + 1, ...) and ensemble their BRs.

    Trained populations are appended to ``populations`` when a list is given.
    """
    if count < 1:
        raise ValidationError("count must be >= 1")
    pops = []
    for i in range(count):
        pops.append(train_population(shaping, layout, replace(cfg, seed=cfg.seed + i), progress))
    if populations is not None:
        populations.extend(pops)
    return ensemble_from_populations(pops, label="Baseline (ensembled)")


def shaping_set_of(ensemble: EnsemblePolicy, method: str = "Fixed") -> ShapingSet:
    return ShapingSet([s for s in ensemble.shapings if s is not None], method)


__all__ = [
    "EnsemblePolicy", "EvalProtocol", "EvalReport", "Episodes", "MatchSpec", "RolloutRecord", "XpResult",
    "build_baseline_ensemble", "ego_diversity", "ensemble_action", "ensemble_from_populations",
    "evaluate_method", "improvement", "play_episodes", "shaping_set_of", "xp_return",
]
