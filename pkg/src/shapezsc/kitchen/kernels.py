"""Batched environment kernels.

Every array carries a leading batch dimension ``B`` and is updated in place.
The functions are written as explicit loops so numba can compile them; with
numba disabled they run unchanged as Python.
"""
import numpy as np

from .._jit import njit

FLOOR, COUNTER, ONION_DISP, DISH_DISP, POT, SERVE = 0, 1, 2, 3, 4, 5
NOTHING, ONION, DISH, SOUP = 0, 1, 2, 3
UP, DOWN, LEFT, RIGHT, STAY, INTERACT = 0, 1, 2, 3, 4, 5
N_ACTIONS = 6
N_FEATURES = 6
F_PLACEMENT, F_DISH_PICKUP, F_SOUP_PICKUP, F_DISH_DIST, F_POT_DIST, F_SOUP_DIST = range(6)

ONION_CAPACITY = 3
DELIVERY_REWARD = 20.0

# Orientation codes share the action codes of the four moves: N, S, W, E.
DROW = np.array([-1, 1, 0, 0], dtype=np.int64)
DCOL = np.array([0, 0, -1, 1], dtype=np.int64)

# Observation layout: one block per agent (self first), then shared pot/time block.
BLOCK = 35
MAX_POTS = 2
POT_FEATS = 5
OBS_DIM = 2 * BLOCK + MAX_POTS * POT_FEATS + 1


@njit
def _distance_feature(d, norm):
    v = 1.0 - d / norm
    return v if v > 0.0 else 0.0


@njit
def _dish_useful(b, i, held, pot_on, ctr):
    # a pickup only counts while non-empty pots outnumber dishes already in play
    need = 0
    for p in range(pot_on.shape[1]):
        if pot_on[b, p] > 0:
            need += 1
    have = 1 if held[b, 1 - i] == DISH else 0
    for r in range(ctr.shape[1]):
        for c in range(ctr.shape[2]):
            if ctr[b, r, c] == DISH:
                have += 1
    return have < need


@njit
def step_batch(grid, pot_index, pot_cells, nearest, cook_time,
               pos, ori, held, pot_on, pot_t, ctr, t, deliv,
               actions, sparse, feat):
    """Advance every environment in the batch by one joint step.

    Order within a step: pot timers tick, agents move (conflicts resolved
    with agent 0 priority, swaps blocked), Interact actions resolve in agent
    index order, then distance features are read off the resulting state.
    """
    n_batch = pos.shape[0]
    n_pots = pot_cells.shape[0]
    height = grid.shape[0]
    width = grid.shape[1]
    norm = float(height + width)
    for b in range(n_batch):
        sparse[b] = 0.0
        for i in range(2):
            for k in range(N_FEATURES):
                feat[b, i, k] = 0.0

        for p in range(n_pots):
            if pot_t[b, p] > 0:
                pot_t[b, p] -= 1

        # movement targets
        r0 = pos[b, 0, 0]
        c0 = pos[b, 0, 1]
        r1 = pos[b, 1, 0]
        c1 = pos[b, 1, 1]
        tr0, tc0, tr1, tc1 = r0, c0, r1, c1
        a0 = actions[b, 0]
        a1 = actions[b, 1]
        if a0 < 4:
            ori[b, 0] = a0
            nr = r0 + DROW[a0]
            nc = c0 + DCOL[a0]
            if grid[nr, nc] == FLOOR:
                tr0, tc0 = nr, nc
        if a1 < 4:
            ori[b, 1] = a1
            nr = r1 + DROW[a1]
            nc = c1 + DCOL[a1]
            if grid[nr, nc] == FLOOR:
                tr1, tc1 = nr, nc
        # swap: both stay
        if tr0 == r1 and tc0 == c1 and tr1 == r0 and tc1 == c0:
            tr0, tc0, tr1, tc1 = r0, c0, r1, c1
        # same target: agent 0 wins
        if tr0 == tr1 and tc0 == tc1:
            tr1, tc1 = r1, c1
        # moving into a cell the other agent keeps occupying
        for _ in range(2):
            if tr0 == tr1 and tc0 == tc1:
                if tr1 == r1 and tc1 == c1:
                    tr0, tc0 = r0, c0
                else:
                    tr1, tc1 = r1, c1
        pos[b, 0, 0] = tr0
        pos[b, 0, 1] = tc0
        pos[b, 1, 0] = tr1
        pos[b, 1, 1] = tc1

        # interactions
        for i in range(2):
            if actions[b, i] != INTERACT:
                continue
            o = ori[b, i]
            fr = pos[b, i, 0] + DROW[o]
            fc = pos[b, i, 1] + DCOL[o]
            kind = grid[fr, fc]
            h = held[b, i]
            if kind == ONION_DISP:
                if h == NOTHING:
                    held[b, i] = ONION
            elif kind == DISH_DISP:
                if h == NOTHING:
                    held[b, i] = DISH
                    if _dish_useful(b, i, held, pot_on, ctr):
                        feat[b, i, F_DISH_PICKUP] = 1.0
            elif kind == POT:
                p = pot_index[fr, fc]
                if h == ONION and pot_on[b, p] < ONION_CAPACITY:
                    pot_on[b, p] += 1
                    held[b, i] = NOTHING
                    feat[b, i, F_PLACEMENT] = 1.0
                    if pot_on[b, p] == ONION_CAPACITY:
                        pot_t[b, p] = cook_time
                elif h == DISH and pot_on[b, p] == ONION_CAPACITY and pot_t[b, p] == 0:
                    pot_on[b, p] = 0
                    held[b, i] = SOUP
                    feat[b, i, F_SOUP_PICKUP] = 1.0
            elif kind == SERVE:
                if h == SOUP:
                    held[b, i] = NOTHING
                    sparse[b] += DELIVERY_REWARD
                    deliv[b] += 1
            elif kind == COUNTER:
                if h == NOTHING and ctr[b, fr, fc] != NOTHING:
                    held[b, i] = ctr[b, fr, fc]
                    ctr[b, fr, fc] = NOTHING
                elif h != NOTHING and ctr[b, fr, fc] == NOTHING:
                    ctr[b, fr, fc] = h
                    held[b, i] = NOTHING

        # gated distance features on the post-step state
        any_ready = False
        for p in range(n_pots):
            if pot_on[b, p] == ONION_CAPACITY and pot_t[b, p] == 0:
                any_ready = True
        for i in range(2):
            r = pos[b, i, 0]
            c = pos[b, i, 1]
            h = held[b, i]
            if h == NOTHING:
                feat[b, i, F_DISH_DIST] = _distance_feature(nearest[1, r, c, 2], norm)
            elif h == ONION:
                feat[b, i, F_POT_DIST] = _distance_feature(nearest[2, r, c, 2], norm)
            elif h == DISH and any_ready:
                best = 1 << 30
                for p in range(n_pots):
                    if pot_on[b, p] == ONION_CAPACITY and pot_t[b, p] == 0:
                        d = abs(pot_cells[p, 0] - r) + abs(pot_cells[p, 1] - c)
                        if d < best:
                            best = d
                feat[b, i, F_SOUP_DIST] = _distance_feature(best, norm)
        t[b] += 1


@njit
def _write_block(out, b, row, off, i, grid, nearest, pos, ori, held, ctr):
    height = grid.shape[0]
    width = grid.shape[1]
    r = pos[b, i, 0]
    c = pos[b, i, 1]
    out[b, row, off + 0] = r / height
    out[b, row, off + 1] = c / width
    out[b, row, off + 2 + ori[b, i]] = 1.0
    out[b, row, off + 6 + held[b, i]] = 1.0
    if i == 0:
        out[b, row, off + 10] = 1.0
    fr = r + DROW[ori[b, i]]
    fc = c + DCOL[ori[b, i]]
    kind = grid[fr, fc]
    out[b, row, off + 11 + kind] = 1.0
    if kind == COUNTER:
        out[b, row, off + 17 + ctr[b, fr, fc]] = 1.0
    for k in range(4):
        out[b, row, off + 21 + 2 * k] = (nearest[k, r, c, 0] - r) / height
        out[b, row, off + 22 + 2 * k] = (nearest[k, r, c, 1] - c) / width
    # nearest counter holding each item kind; zeros when none exists
    for item in range(1, 4):
        best = 1 << 30
        br = r
        bc = c
        for rr in range(height):
            for cc in range(width):
                if grid[rr, cc] == COUNTER and ctr[b, rr, cc] == item:
                    d = abs(rr - r) + abs(cc - c)
                    if d < best:
                        best = d
                        br = rr
                        bc = cc
        out[b, row, off + 29 + 2 * (item - 1)] = (br - r) / height
        out[b, row, off + 30 + 2 * (item - 1)] = (bc - c) / width


@njit
def observe_batch(grid, pot_cells, nearest, cook_time, horizon,
                  pos, ori, held, pot_on, pot_t, ctr, t, out):
    """Fill ``out`` (B, 2, OBS_DIM) with both agents' egocentric observations.

    Row ``i`` holds agent ``i``'s view: its own block, the partner's block,
    then pot statuses and the elapsed-time fraction.
    """
    n_batch = pos.shape[0]
    n_pots = pot_cells.shape[0]
    height = grid.shape[0]
    width = grid.shape[1]
    shared = 2 * BLOCK
    for b in range(n_batch):
        for i in range(2):
            for k in range(out.shape[2]):
                out[b, i, k] = 0.0
        for i in range(2):
            _write_block(out, b, i, 0, i, grid, nearest, pos, ori, held, ctr)
            _write_block(out, b, i, BLOCK, 1 - i, grid, nearest, pos, ori, held, ctr)
            for p in range(n_pots):
                base = shared + POT_FEATS * p
                out[b, i, base + 0] = pot_cells[p, 0] / height
                out[b, i, base + 1] = pot_cells[p, 1] / width
                out[b, i, base + 2] = pot_on[b, p] / ONION_CAPACITY
                out[b, i, base + 3] = pot_t[b, p] / cook_time
                if pot_on[b, p] == ONION_CAPACITY and pot_t[b, p] == 0:
                    out[b, i, base + 4] = 1.0
            out[b, i, shared + MAX_POTS * POT_FEATS] = t[b] / horizon


@njit
def gae(rewards, values, dones, last_values, gamma, lam, adv):
    """Generalized advantage estimation over (T, B, S) value streams.

    ``rewards``/``dones`` are (T, B) and shared by all S seats; a done at
    step t means no bootstrap from t + 1.
    """
    n_t = rewards.shape[0]
    n_b = rewards.shape[1]
    n_s = values.shape[2]
    for b in range(n_b):
        for s in range(n_s):
            running = 0.0
            next_v = last_values[b, s]
            for k in range(n_t):
                step = n_t - 1 - k
                nonterminal = 0.0 if dones[step, b] else 1.0
                delta = rewards[step, b] + gamma * next_v * nonterminal - values[step, b, s]
                running = delta + gamma * lam * nonterminal * running
                adv[step, b, s] = running
                next_v = values[step, b, s]
