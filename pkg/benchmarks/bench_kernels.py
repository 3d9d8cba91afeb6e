"""Compiled vs interpreted kernel timings.

    python3 benchmarks/bench_kernels.py --envs 32 --steps 200

Each kernel is timed through its numba dispatcher (after one warm-up call)
and through ``.py_func``, the plain Python body that runs when
SHAPEZSC_DISABLE_NUMBA=1 is set.
"""
import argparse
import time

import numpy as np

from shapezsc import _jit
from shapezsc.kitchen import VecKitchen, get_layout
from shapezsc.kitchen import kernels as K
from shapezsc.marl import ppo


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def env_steps(step, observe, layout, n_envs, steps, seed=0):
    env = VecKitchen(layout, n_envs, seed=seed)
    acts = np.random.default_rng(seed).integers(0, 6, (steps, n_envs, 2))
    lay = env.layout

    def run():
        for a in acts:
            step(lay.grid, lay.pot_index, lay.pot_cells, lay.nearest, env.cook_time, env.pos, env.ori, env.held,
                 env.pot_on, env.pot_t, env.ctr, env.t, env.deliv, a, env._sparse, env._feat)
            observe(lay.grid, lay.pot_cells, lay.nearest, env.cook_time, env.horizon, env.pos, env.ori, env.held,
                    env.pot_on, env.pot_t, env.ctr, env.t, env._obs)
    return run


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--layout", default="random3-mini")
    ap.add_argument("--envs", type=int, default=32)
    ap.add_argument("--steps", type=int, default=200)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()
    if not _jit.HAS_NUMBA:
        print("numba unavailable or disabled; only the interpreted path would run")
        return

    layout = get_layout(args.layout)
    rng = np.random.default_rng(0)
    T, B = 256, args.envs
    r, v = rng.normal(size=(T, B)), rng.normal(size=(T, B, 2))
    d, last, adv = rng.random((T, B)) < 0.01, rng.normal(size=(B, 2)), np.zeros((T, B, 2))
    n_par = 81 * 64 * 2 + 64 * 6 + 64 * 2 + 6 + 1
    theta, grad, m, vv = (rng.normal(size=n_par) for _ in range(4))
    vv = np.abs(vv)

    cases = {
        f"env step+observe ({B} envs x {args.steps} steps)": (
            env_steps(K.step_batch, K.observe_batch, layout, B, args.steps),
            env_steps(_jit.python_impl(K.step_batch), _jit.python_impl(K.observe_batch), layout, B, args.steps)),
        f"gae ({T} x {B} x 2)": (
            lambda: K.gae(r, v, d, last, 0.99, 0.95, adv),
            lambda: _jit.python_impl(K.gae)(r, v, d, last, 0.99, 0.95, adv)),
        f"adam ({n_par} params)": (
            lambda: ppo.adam_kernel(theta, grad, m, vv, 1e-4, 0.9, 0.999, 0.5, 1e-8),
            lambda: _jit.python_impl(ppo.adam_kernel)(theta, grad, m, vv, 1e-4, 0.9, 0.999, 0.5, 1e-8)),
    }
    print(f"{'kernel':<44} {'numba s':>10} {'python s':>10} {'speedup':>8}")
    for name, (fast, slow) in cases.items():
        fast()  # compile
        tf = best_of(fast, args.repeats)
        ts = best_of(slow, 1)
        print(f"{name:<44} {tf:>10.4f} {ts:>10.4f} {ts / tf:>7.0f}x")


if __name__ == "__main__":
    main()
