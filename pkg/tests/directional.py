"""Scaled end-to-end experiment: stratified-grid ensemble vs single-shaping baselines in cross-play.

    python3 tests/directional.py --seeds 0 1 2 3 4 --jobs 4

For each experiment seed: P stratified-grid shapings each train a population,
P populations train under the base shaping (their BR ensemble is the
ensembled baseline, population 0's BR alone is the single baseline), and a
pool of partners trains under hidden random shapings. All three egos are
then evaluated in cross-play against the pool.
"""
from __future__ import annotations

import argparse
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

from shapezsc.cli import substream_seed
from shapezsc.ensemble import EnsemblePolicy, EvalProtocol, evaluate_method
from shapezsc.kitchen import get_layout
from shapezsc.marl import TrajeDiConfig, train_partner, train_population
from shapezsc.shaping import BASE_SHAPING, ShapingVector, lhs_select, random_select


@dataclass
class SeedResult:
    seed: int
    grid: float
    baseline: float
    single: float
    curve_steps: list
    seconds: float

    @property
    def ordered(self) -> bool:
        return self.grid > self.baseline > self.single


def _job(kind, shaping, layout_name, cfg):
    layout = get_layout(layout_name)
    if kind == "partner":
        return train_partner(shaping, layout, cfg)
    return train_population(shaping, layout, cfg)


def run_seed(seed: int, layout_name: str = "random3-mini", p: int = 4, n: int = 4, steps: int = 200_000,
             partners: int = 5, protocol: EvalProtocol = EvalProtocol(), jobs: int = 1,
             base_cfg: TrajeDiConfig | None = None) -> SeedResult:
    t0 = time.perf_counter()
    cfg = replace(base_cfg or TrajeDiConfig(), n=n, total_timesteps=steps)
    grid = lhs_select(p, substream_seed(seed, "selection"))
    base = ShapingVector(BASE_SHAPING)
    base_seed = substream_seed(seed, "baseline")
    hidden = random_select(partners, substream_seed(seed, "partner-shapings"))
    work = [("population", s, replace(cfg, seed=substream_seed(seed, "population", i)))
            for i, s in enumerate(grid.shapings)]
    # same seed rule as build_baseline_ensemble: cfg.seed + i
    work += [("population", base, replace(cfg, seed=base_seed + i)) for i in range(p)]
    work += [("partner", s, replace(cfg, seed=substream_seed(seed, "partner", k)))
             for k, s in enumerate(hidden.shapings)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            out = list(pool.map(_job, *zip(*[(k, s, layout_name, c) for k, s, c in work])))
    else:
        out = [_job(k, s, layout_name, c) for k, s, c in work]
    grid_pops, base_pops, pool_partners = out[:p], out[p:2 * p], out[2 * p:]

    layout = get_layout(layout_name)
    egos = {
        "grid": EnsemblePolicy([q.best_response for q in grid_pops], label="StratifiedGrid"),
        "baseline": EnsemblePolicy([q.best_response for q in base_pops], label="Baseline (ens.)"),
        "single": base_pops[0].best_response,
    }
    means = {k: evaluate_method(e, pool_partners, layout, protocol, k).mean_sparse for k, e in egos.items()}
    curves = [[c[0] for c in q.train_curve] for q in grid_pops + base_pops]
    return SeedResult(seed, means["grid"], means["baseline"], means["single"], curves, time.perf_counter() - t0)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--steps", type=int, default=200_000)
    ap.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    args = ap.parse_args()
    for s in args.seeds:
        r = run_seed(s, steps=args.steps, jobs=args.jobs)
        print(json.dumps({**r.__dict__, "ordered": r.ordered, "curve_steps": r.curve_steps[0]}), flush=True)


if __name__ == "__main__":
    main()
