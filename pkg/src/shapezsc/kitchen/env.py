"""Two-agent cooperative kitchen: single-state API and a batched simulator."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionMismatch, HorizonExceeded
from . import kernels as K
from .layout import Layout

HORIZON = 400
COOK_TIME = 10
OBS_DIM = K.OBS_DIM
N_ACTIONS = K.N_ACTIONS
N_FEATURES = K.N_FEATURES

FEATURE_NAMES = (
    "PLACEMENT_IN_POT_REW",
    "DISH_PICKUP_REWARD",
    "SOUP_PICKUP_REWARD",
    "DISH_DISP_DISTANCE_REW",
    "POT_DISTANCE_REW",
    "SOUP_DISTANCE_REW",
)
ITEM_NAMES = ("Nothing", "Onion", "Dish", "Soup")
ACTION_NAMES = ("Up", "Down", "Left", "Right", "Stay", "Interact")
ORIENTATION_NAMES = ("N", "S", "W", "E")


@dataclass(frozen=True)
class AgentState:
    position: tuple[int, int]
    orientation: int
    held: int


@dataclass(frozen=True)
class PotState:
    onion_count: int
    cook_timer: int

    @property
    def ready(self) -> bool:
        return self.onion_count == K.ONION_CAPACITY and self.cook_timer == 0


@dataclass(eq=False)
class KitchenState:
    """Joint state of one kitchen episode.

    Arrays are owned by the state; ``step`` returns a fresh state and never
    mutates its input.
    """

    layout: Layout
    pos: np.ndarray  # (2, 2) row, col
    ori: np.ndarray  # (2,)
    held: np.ndarray  # (2,)
    pot_onions: np.ndarray  # (n_pots,)
    pot_timer: np.ndarray  # (n_pots,)
    counters: np.ndarray  # (H, W) item on each counter cell
    timestep: int = 0
    deliveries: int = 0
    horizon: int = HORIZON
    cook_time: int = COOK_TIME

    @property
    def agents(self) -> tuple[AgentState, AgentState]:
        return tuple(
            AgentState((int(self.pos[i, 0]), int(self.pos[i, 1])), int(self.ori[i]), int(self.held[i]))
            for i in range(2)
        )

    @property
    def pots(self) -> dict[tuple[int, int], PotState]:
        return {
            (int(r), int(c)): PotState(int(self.pot_onions[p]), int(self.pot_timer[p]))
            for p, (r, c) in enumerate(self.layout.pot_cells)
        }

    def copy(self) -> "KitchenState":
        return KitchenState(
            self.layout, self.pos.copy(), self.ori.copy(), self.held.copy(),
            self.pot_onions.copy(), self.pot_timer.copy(), self.counters.copy(),
            self.timestep, self.deliveries, self.horizon, self.cook_time,
        )

    def key(self) -> tuple:
        """Hashable snapshot used for equality checks in tests."""
        return (
            self.pos.tobytes(), self.ori.tobytes(), self.held.tobytes(),
            self.pot_onions.tobytes(), self.pot_timer.tobytes(), self.counters.tobytes(),
            self.timestep, self.deliveries,
        )

    def __eq__(self, other) -> bool:
        return isinstance(other, KitchenState) and self.layout is other.layout and self.key() == other.key()


@dataclass(frozen=True)
class StepOutcome:
    next_state: KitchenState
    sparse_reward: float
    features: np.ndarray  # (2, 6) per agent
    done: bool


def spawn_order(seed) -> bool:
    """True when the seed swaps which agent starts on which spawn cell."""
    return bool(np.random.default_rng(seed).random() < 0.5)


def reset(layout: Layout, seed=0, horizon: int = HORIZON, cook_time: int = COOK_TIME) -> KitchenState:
    spawns = np.array(layout.spawn_points, dtype=np.int64)
    if spawn_order(seed):
        spawns = spawns[::-1].copy()
    n_pots = len(layout.pot_cells)
    return KitchenState(
        layout=layout,
        pos=spawns,
        ori=np.zeros(2, dtype=np.int64),
        held=np.zeros(2, dtype=np.int64),
        pot_onions=np.zeros(n_pots, dtype=np.int64),
        pot_timer=np.zeros(n_pots, dtype=np.int64),
        counters=np.zeros(layout.grid.shape, dtype=np.int64),
        horizon=horizon,
        cook_time=cook_time,
    )


def step(state: KitchenState, action) -> StepOutcome:
    if state.timestep >= state.horizon:
        raise HorizonExceeded(f"timestep {state.timestep} reached horizon {state.horizon}")
    lay = state.layout
    s = state.copy()
    pos, ori, held = s.pos[None], s.ori[None], s.held[None]
    pot_on, pot_t, ctr = s.pot_onions[None], s.pot_timer[None], s.counters[None]
    t = np.array([s.timestep], dtype=np.int64)
    deliv = np.array([s.deliveries], dtype=np.int64)
    acts = np.asarray(action, dtype=np.int64).reshape(1, 2)
    sparse = np.zeros(1)
    feat = np.zeros((1, 2, N_FEATURES))
    K.step_batch(lay.grid, lay.pot_index, lay.pot_cells, lay.nearest, s.cook_time,
                 pos, ori, held, pot_on, pot_t, ctr, t, deliv, acts, sparse, feat)
    s.timestep = int(t[0])
    s.deliveries = int(deliv[0])
    return StepOutcome(s, float(sparse[0]), feat[0], s.timestep >= s.horizon)


def observe(state: KitchenState, agent_index: int) -> np.ndarray:
    lay = state.layout
    out = np.zeros((1, 2, OBS_DIM))
    K.observe_batch(lay.grid, lay.pot_cells, lay.nearest, state.cook_time, state.horizon,
                    state.pos[None], state.ori[None], state.held[None],
                    state.pot_onions[None], state.pot_timer[None], state.counters[None],
                    np.array([state.timestep], dtype=np.int64), out)
    return out[0, agent_index]


def densify(sparse, features, shaping) -> float | np.ndarray:
    """Sparse reward plus the shaping-weighted, team-summed features.

    ``features`` is (..., 2, 6) per agent or (..., 6) already summed;
    ``shaping`` is a ShapingVector or any length-6 sequence.
    """
    w = np.asarray(getattr(shaping, "weights", shaping), dtype=np.float64)
    if w.shape != (N_FEATURES,):
        raise DimensionMismatch(f"shaping has {w.size} weights, expected {N_FEATURES}")
    f = np.asarray(features, dtype=np.float64)
    if f.ndim >= 2 and f.shape[-2] == 2:
        f = f.sum(axis=-2)
    if f.shape[-1] != N_FEATURES:
        raise DimensionMismatch(f"features have {f.shape[-1]} entries, expected {N_FEATURES}")
    out = np.asarray(sparse, dtype=np.float64) + f @ w
    return float(out) if np.ndim(out) == 0 else out


class VecKitchen:
    """``n_envs`` independent kitchens advanced in lockstep.

    Episodes auto-reset on reaching the horizon; each reset draws the spawn
    order from the instance RNG so runs are reproducible from ``seed``.
    """

    def __init__(self, layout: Layout, n_envs: int, seed=0,
                 horizon: int = HORIZON, cook_time: int = COOK_TIME):
        self.layout = layout
        self.n_envs = n_envs
        self.horizon = horizon
        self.cook_time = cook_time
        self.rng = np.random.default_rng(seed)
        h, w = layout.grid.shape
        n_pots = len(layout.pot_cells)
        self.pos = np.zeros((n_envs, 2, 2), dtype=np.int64)
        self.ori = np.zeros((n_envs, 2), dtype=np.int64)
        self.held = np.zeros((n_envs, 2), dtype=np.int64)
        self.pot_on = np.zeros((n_envs, n_pots), dtype=np.int64)
        self.pot_t = np.zeros((n_envs, n_pots), dtype=np.int64)
        self.ctr = np.zeros((n_envs, h, w), dtype=np.int64)
        self.t = np.zeros(n_envs, dtype=np.int64)
        self.deliv = np.zeros(n_envs, dtype=np.int64)
        self._sparse = np.zeros(n_envs)
        self._feat = np.zeros((n_envs, 2, N_FEATURES))
        self._obs = np.zeros((n_envs, 2, OBS_DIM))
        for b in range(n_envs):
            self._reset_env(b)

    def _reset_env(self, b: int) -> None:
        spawns = np.array(self.layout.spawn_points, dtype=np.int64)
        if self.rng.random() < 0.5:
            spawns = spawns[::-1]
        self.pos[b] = spawns
        self.ori[b] = 0
        self.held[b] = 0
        self.pot_on[b] = 0
        self.pot_t[b] = 0
        self.ctr[b] = 0
        self.t[b] = 0
        self.deliv[b] = 0

    def observe(self) -> np.ndarray:
        lay = self.layout
        K.observe_batch(lay.grid, lay.pot_cells, lay.nearest, self.cook_time, self.horizon,
                        self.pos, self.ori, self.held, self.pot_on, self.pot_t, self.ctr,
                        self.t, self._obs)
        return self._obs.copy()

    def step(self, actions: np.ndarray):
        """Apply (n_envs, 2) actions; returns (sparse, features, done, timestep).

        ``timestep`` is the within-episode index of the step just taken.
        Finished environments are reset before returning.
        """
        lay = self.layout
        t_before = self.t.copy()
        K.step_batch(lay.grid, lay.pot_index, lay.pot_cells, lay.nearest, self.cook_time,
                     self.pos, self.ori, self.held, self.pot_on, self.pot_t, self.ctr,
                     self.t, self.deliv, np.ascontiguousarray(actions, dtype=np.int64),
                     self._sparse, self._feat)
        done = self.t >= self.horizon
        for b in np.flatnonzero(done):
            self._reset_env(b)
        return self._sparse.copy(), self._feat.copy(), done, t_before
