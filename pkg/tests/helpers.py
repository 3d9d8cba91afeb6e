"""Shared test helpers."""
import numpy as np

from shapezsc.kitchen.env import KitchenState

# A corridor kitchen small enough to script by hand:
#   row 1: onion dispenser, floor x3, pot
#   row 2: dish dispenser, floor x3, serve station
TINY = "\n".join([
    "XXXXX",
    "O1 2P",
    "D   S",
    "XXXXX",
])


def make_state(layout, pos, ori=(0, 0), held=(0, 0), pot_onions=None, pot_timer=None, timestep=0,
               horizon=400, cook_time=10):
    n_pots = len(layout.pot_cells)
    return KitchenState(
        layout=layout,
        pos=np.array(pos, dtype=np.int64),
        ori=np.array(ori, dtype=np.int64),
        held=np.array(held, dtype=np.int64),
        pot_onions=np.array(pot_onions if pot_onions is not None else [0] * n_pots, dtype=np.int64),
        pot_timer=np.array(pot_timer if pot_timer is not None else [0] * n_pots, dtype=np.int64),
        counters=np.zeros(layout.grid.shape, dtype=np.int64),
        timestep=timestep,
        horizon=horizon,
        cook_time=cook_time,
    )
