"""Command-line pipeline: select -> train -> train-partners -> eval -> report.

Artifacts live under one output directory::

    out/shapings/shapings.json (+ .diversity.json)
    out/populations/<i>/{member_*.ckpt, best_response.ckpt, curve.csv}
    out/partners/{shapings.json, partner_<k>.ckpt}
    out/reports/...
    out/manifest.json

Exit codes: 0 ok, 2 usage or validation, 3 external service, 4 internal error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import sys
import time
import zlib
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    CheckpointError,
    DimensionMismatch,
    ExhaustedRetries,
    InsufficientData,
    InsufficientSamples,
    InvalidCount,
    ParseError,
    ProviderError,
    ValidationError,
)
from .ensemble import EnsemblePolicy, EvalProtocol, EvalReport, evaluate_method
from .kitchen.env import FEATURE_NAMES, OBS_DIM
from .kitchen.layout import Layout, get_layout
from .marl import PolicyParams, Population, TrajeDiConfig, train_partner, train_population
from .shaping import (
    BASE_SHAPING,
    ShapingSet,
    ShapingVector,
    diversity_metrics,
    load_shaping_set,
    lhs_select,
    random_select,
    save_shaping_set,
)

log = logging.getLogger("shapezsc")

EXIT_OK, EXIT_USAGE, EXIT_EXTERNAL, EXIT_INTERNAL = 0, 2, 3, 4
METHODS = ("random", "lhs", "surrogate", "llm", "base")
MANIFEST = "manifest.json"


def substream_seed(seed: int, *names) -> int:
    """Independent 32-bit seed for a named stage, e.g. ("population", 3)."""
    key = [zlib.crc32(str(n).encode()) for n in names]
    return int(np.random.SeedSequence([int(seed), *key]).generate_state(1)[0])


def resolve_layout(name: str) -> Layout:
    try:
        return get_layout(name)
    except (OSError, KeyError, ValueError) as exc:
        raise ValidationError(f"cannot load layout {name!r}: {exc}") from exc


# --- configuration -------------------------------------------------------------

TRAJEDI_FIELDS = {f.name for f in fields(TrajeDiConfig)} - {"seed"}
EVAL_FIELDS = {"rollouts", "seeds", "horizon"}


@dataclass
class ExperimentConfig:
    """One experiment: selection, population training, partners and evaluation."""

    layout: str = "random3-mini"
    method: str = "lhs"
    p: int = 10
    seed: int = 0
    data: str | None = None
    provider: dict | None = None
    partners: int = 5
    trajedi: dict = field(default_factory=dict)
    eval: dict = field(default_factory=dict)
    out_dir: str = "runs/experiment"

    @classmethod
    def from_json(cls, doc: dict, base_dir: Path = Path(".")) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ValidationError("config must be a JSON object")
        unknown = set(doc) - {f.name for f in fields(cls)}
        if unknown:
            raise ValidationError(f"unknown config keys {sorted(unknown)}")
        cfg = cls(**doc)
        if cfg.data is not None and not Path(cfg.data).is_absolute():
            cfg.data = str(base_dir / cfg.data)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        problems = []
        if self.method not in METHODS:
            problems.append(f"method must be one of {METHODS}, got {self.method!r}")
        for name in ("p", "partners"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                problems.append(f"{name} must be a positive integer, got {v!r}")
        if not isinstance(self.seed, int) or self.seed < 0:
            problems.append(f"seed must be a non-negative integer, got {self.seed!r}")
        if self.method in ("surrogate", "llm") and not self.data:
            problems.append(f"method {self.method} needs a results data file")
        if self.data and not Path(self.data).is_file():
            problems.append(f"data file {self.data} does not exist")
        bad = set(self.trajedi) - TRAJEDI_FIELDS
        if bad:
            problems.append(f"unknown trajedi keys {sorted(bad)}")
        bad = set(self.eval) - EVAL_FIELDS
        if bad:
            problems.append(f"unknown eval keys {sorted(bad)}")
        if problems:
            raise ValidationError("; ".join(problems))
        try:
            self.trajedi_config(0)
            self.protocol()
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"invalid training/eval settings: {exc}") from exc
        resolve_layout(self.layout)

    def trajedi_config(self, seed: int) -> TrajeDiConfig:
        return TrajeDiConfig(**self.trajedi, seed=seed)

    def protocol(self) -> EvalProtocol:
        d = dict(self.eval)
        if "seeds" in d:
            d["seeds"] = tuple(int(s) for s in d["seeds"])
        return EvalProtocol(**d)

    def to_json(self) -> dict:
        return asdict(self)


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config {path} is not valid JSON: {exc}") from exc
    return ExperimentConfig.from_json(doc, path.parent)


# --- manifest ----------------------------------------------------------------------

def sha256_of(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    """Per-run record of stages, finished items and content hashes of every artifact."""

    root: Path
    config: dict = field(default_factory=dict)
    tool_version: str = __version__
    stages: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)

    @classmethod
    def open(cls, root: str | Path) -> "RunManifest":
        root = Path(root)
        path = root / MANIFEST
        if not path.exists():
            return cls(root)
        try:
            doc = json.loads(path.read_text())
            return cls(root, doc["config"], doc["tool_version"], doc["stages"], doc["artifacts"])
        except (json.JSONDecodeError, KeyError) as exc:
            raise ValidationError(f"{path}: unreadable manifest ({exc})") from exc

    def _rel(self, path: Path) -> str:
        return Path(os.path.relpath(path, self.root)).as_posix()

    def record(self, *paths: Path) -> list[str]:
        rels = []
        for p in paths:
            rel = self._rel(p)
            self.artifacts[rel] = sha256_of(Path(p))
            rels.append(rel)
        return rels

    def verify(self, rels=None) -> list[str]:
        """Problems with recorded artifacts: missing files or changed contents."""
        out = []
        for rel in self.artifacts if rels is None else rels:
            p = self.root / rel
            if rel not in self.artifacts:
                out.append(f"{rel}: not recorded")
            elif not p.exists():
                out.append(f"{rel}: missing")
            elif sha256_of(p) != self.artifacts[rel]:
                out.append(f"{rel}: content changed since it was written")
        return out

    def stage(self, name: str) -> dict:
        return self.stages.setdefault(name, {"status": "pending", "items": {}, "seconds": 0.0})

    def item_done(self, stage: str, key: str) -> bool:
        item = self.stage(stage)["items"].get(key)
        return bool(item) and item["status"] == "done" and not self.verify(item["artifacts"])

    def finish_item(self, stage: str, key: str, paths, seconds: float) -> None:
        self.stage(stage)["items"][key] = {"status": "done", "artifacts": self.record(*paths),
                                           "seconds": round(seconds, 3)}
        self.save()

    def finish_stage(self, name: str, seconds: float) -> None:
        st = self.stage(name)
        st["status"] = "done"
        st["seconds"] = round(st.get("seconds", 0.0) + seconds, 3)
        self.save()

    def save(self) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        doc = {"tool_version": self.tool_version, "config": self.config, "stages": self.stages,
               "artifacts": dict(sorted(self.artifacts.items()))}
        tmp = self.root / (MANIFEST + ".tmp")
        tmp.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        tmp.replace(self.root / MANIFEST)


# --- select ------------------------------------------------------------------------

def _select(args) -> ShapingSet:
    p, seed = args.p, args.seed
    if args.method == "random":
        return random_select(p, seed)
    if args.method == "lhs":
        return lhs_select(p, seed)
    if args.method == "base":
        return ShapingSet([ShapingVector(BASE_SHAPING)] * p, "Fixed", seed)
    if not args.data:
        raise ValidationError(f"--method {args.method} requires --data (results file)")
    from .surrogate import load_results

    try:
        data = load_results(args.data)
    except OSError as exc:
        raise ValidationError(f"cannot read --data {args.data}: {exc}") from exc
    if args.method == "surrogate":
        from .surrogate import surrogate_select

        return surrogate_select(data, p, n_candidates=args.candidates, seed=seed)
    from .llm import ProviderConfig, default_env_code, example_fixture_path, llm_select

    if args.provider:
        try:
            pcfg = ProviderConfig.from_json(json.loads(Path(args.provider).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read --provider {args.provider}: {exc}") from exc
    else:
        pcfg = ProviderConfig(mode="Fixture", fixture_path=str(example_fixture_path()))
    env_code = Path(args.env_code).read_text() if args.env_code else default_env_code()
    out = llm_select(pcfg, data, env_code, p, max_retries=args.max_retries)
    out.seed = seed
    return out


def diversity_sidecar(path: Path) -> Path:
    return path.with_name(path.stem + ".diversity.json")


def write_shapings(shapings: ShapingSet, out: Path) -> list[Path]:
    out.parent.mkdir(parents=True, exist_ok=True)
    save_shaping_set(shapings, out)
    side = diversity_sidecar(out)
    try:
        div = diversity_metrics(shapings).to_json()
    except InsufficientSamples:
        div = None
    side.write_text(json.dumps({"method": shapings.method, "p": len(shapings), "diversity": div}, indent=2) + "\n")
    return [out, side]


def cmd_select(args) -> int:
    shapings = _select(args)
    write_shapings(shapings, Path(args.out))
    log.info("wrote %d %s shapings to %s", len(shapings), shapings.method, args.out)
    return EXIT_OK


# --- training ----------------------------------------------------------------------

def _train_population_job(shaping: ShapingVector, layout: Layout, cfg: TrajeDiConfig) -> Population:
    return train_population(shaping, layout, cfg)


def _train_partner_job(shaping: ShapingVector, layout: Layout, cfg: TrajeDiConfig) -> PolicyParams:
    return train_partner(shaping, layout, cfg)


def _run_jobs(jobs: int, fn, work: list, on_done) -> None:
    """Run ``fn(*args)`` for each (key, args) in ``work``; ``on_done(key, result, seconds)`` in the caller."""
    if jobs <= 1 or len(work) <= 1:
        for key, fargs in work:
            t0 = time.perf_counter()
            on_done(key, fn(*fargs), time.perf_counter() - t0)
        return
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        started = {pool.submit(fn, *fargs): (key, time.perf_counter()) for key, fargs in work}
        for fut in as_completed(started):
            key, t0 = started[fut]
            on_done(key, fut.result(), time.perf_counter() - t0)


def _experiment(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    over = {}
    if getattr(args, "layout", None):
        over["layout"] = args.layout
    if getattr(args, "seed", None) is not None:
        over["seed"] = args.seed
    if getattr(args, "count", None) is not None:
        over["partners"] = args.count
    trajedi = dict(cfg.trajedi)
    if getattr(args, "steps", None) is not None:
        trajedi["total_timesteps"] = args.steps
    cfg = replace(cfg, trajedi=trajedi, **over)
    cfg.validate()
    return cfg


def cmd_train(args) -> int:
    cfg = _experiment(args)
    src = Path(args.shapings)
    try:
        shapings = load_shaping_set(src)
    except OSError as exc:
        raise ValidationError(f"cannot read shapings {src}: {exc}") from exc
    if len(shapings) == 0:
        raise ValidationError(f"{src}: no shapings")
    layout = resolve_layout(cfg.layout)
    root = Path(args.out_dir)
    manifest = RunManifest.open(root)
    manifest.config = cfg.to_json()
    stage_dir = root / "shapings"
    manifest.record(*write_shapings(shapings, stage_dir / "shapings.json"))
    manifest.save()

    t_stage = time.perf_counter()
    work = []
    for i, s in enumerate(shapings.shapings):
        if manifest.item_done("train", str(i)):
            log.info("population %d already complete, skipping", i)
            continue
        work.append((i, (s, layout, cfg.trajedi_config(substream_seed(cfg.seed, "population", i)))))

    def done(i, pop: Population, seconds):
        d = root / "populations" / str(i)
        pop.save(d)
        manifest.finish_item("train", str(i), sorted(d.iterdir()), seconds)
        final = pop.train_curve[-1][1] if pop.train_curve else float("nan")
        log.info("population %d done in %.1fs (BR self-play sparse %.1f)", i, seconds, final)

    _run_jobs(args.jobs, _train_population_job, work, done)
    manifest.finish_stage("train", time.perf_counter() - t_stage)
    return EXIT_OK


def cmd_train_partners(args) -> int:
    cfg = _experiment(args)
    layout = resolve_layout(cfg.layout)
    root = Path(args.out_dir)
    manifest = RunManifest.open(root)
    if not manifest.config:
        manifest.config = cfg.to_json()
    pdir = root / "partners"
    hidden = random_select(cfg.partners, substream_seed(cfg.seed, "partner-shapings"))
    manifest.record(*write_shapings(hidden, pdir / "shapings.json"))
    manifest.save()

    t_stage = time.perf_counter()
    work = [(k, (s, layout, cfg.trajedi_config(substream_seed(cfg.seed, "partner", k))))
            for k, s in enumerate(hidden.shapings) if not manifest.item_done("train-partners", str(k))]

    def done(k, partner: PolicyParams, seconds):
        path = pdir / f"partner_{k}.ckpt"
        partner.save(path)
        manifest.finish_item("train-partners", str(k), [path], seconds)
        log.info("partner %d done in %.1fs", k, seconds)

    _run_jobs(args.jobs, _train_partner_job, work, done)
    manifest.finish_stage("train-partners", time.perf_counter() - t_stage)
    return EXIT_OK


# --- evaluation --------------------------------------------------------------------

def _load_policy(path: Path) -> PolicyParams:
    try:
        return PolicyParams.load(path)
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: {exc}") from exc


def load_best_responses(directory: Path) -> list[PolicyParams]:
    """Best responses from ``directory``/populations/<i> (or ``directory``/<i>), ordered by i."""
    base = directory / "populations" if (directory / "populations").is_dir() else directory
    found = sorted((p for p in base.glob("*/best_response.ckpt") if p.parent.name.isdigit()),
                   key=lambda p: int(p.parent.name))
    if not found and (base / "best_response.ckpt").exists():
        found = [base / "best_response.ckpt"]
    if not found:
        raise CheckpointError(f"no best_response.ckpt found under {directory}")
    return [_load_policy(p) for p in found]


def load_partners(directory: Path) -> list[PolicyParams]:
    base = directory / "partners" if (directory / "partners").is_dir() else directory
    found = sorted(base.glob("partner_*.ckpt"), key=lambda p: int(p.stem.split("_")[1]))
    if not found:
        raise CheckpointError(f"no partner_*.ckpt found under {directory}")
    return [_load_policy(p) for p in found]


def _check_dims(policies, what: str) -> None:
    for p in policies:
        if p.obs_dim != OBS_DIM:
            raise DimensionMismatch(f"{what} checkpoint expects {p.obs_dim} observation dims, "
                                    f"environment provides {OBS_DIM}")


def cmd_eval(args) -> int:
    layout = resolve_layout(args.layout)
    brs = load_best_responses(Path(args.ensemble))
    partners = load_partners(Path(args.partners))
    _check_dims(brs, "ego")
    _check_dims(partners, "partner")
    if args.single:
        ego = brs[0]
        default_label = "TrajeDi (single)"
    else:
        ego = EnsemblePolicy(brs, label=args.method or "ensemble")
        default_label = "ensemble"
    reference = None
    self_reference = bool(args.reference) and Path(args.reference).resolve() == Path(args.out).resolve()
    if args.reference and not self_reference:
        try:
            reference = EvalReport.load(args.reference)
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read --reference {args.reference}: {exc}") from exc
    protocol = EvalProtocol(rollouts=args.rollouts, seeds=tuple(args.seeds), horizon=args.horizon)
    report = evaluate_method(ego, partners, layout, protocol, args.method or default_label)
    if self_reference:
        reference = report
    if reference is not None:
        report = report.with_reference(reference)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    report.save(out)
    report.save_csv(out.with_suffix(".csv"))
    s = report.summary()
    log.info("%s: sparse %.2f ± %.2f, shaped %.2f ± %.2f", report.method, s["mean_sparse"], s["ci90_sparse"],
             s["mean_shaped"], s["ci90_shaped"])
    return EXIT_OK


# --- reports -----------------------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _fmt_pct(x) -> str:
    if x is None:
        return ""
    if math.isinf(x):
        return "+inf%" if x > 0 else "-inf%"
    return f"{x:+.1f}%"


def report_rows(reports: list[EvalReport], reference: str | None) -> list[dict]:
    """One row per (layout, metric, report) with improvement vs the flagged reference method."""
    from .ensemble import improvement

    rows = []
    for layout in sorted({r.layout for r in reports}):
        group = [r for r in reports if r.layout == layout]
        ref = next((r for r in group if r.method == reference), None) if reference else None
        for metric in ("sparse", "shaped"):
            for r in group:
                mean = r.mean_sparse if metric == "sparse" else r.mean_shaped
                ci = r.ci90_sparse if metric == "sparse" else r.ci90_shaped
                if ref is not None:
                    ref_mean = ref.mean_sparse if metric == "sparse" else ref.mean_shaped
                    imp = improvement(mean, ref_mean)
                elif metric == "sparse":
                    imp = r.improvement_pct
                else:
                    imp = None
                rows.append({"layout": layout, "metric": metric, "method": r.method, "mean": mean,
                             "ci90": ci, "improvement_pct": imp})
    return rows


def markdown_tables(rows: list[dict], reports: list[EvalReport], reference: str | None) -> str:
    out = []
    ref_label = f"vs {reference}" if reference else "vs reference"
    for layout in sorted({r["layout"] for r in rows}):
        for metric, title in (("sparse", "Sparse Reward"), ("shaped", "Shaped Reward")):
            group = [r for r in rows if r["layout"] == layout and r["metric"] == metric]
            best = max(r["mean"] for r in group)
            out += [f"### {layout}: {title.lower()}", "", f"| Algorithm | {title} | {ref_label} |", "|---|---|---|"]
            for r in group:
                cell = f"{_fmt(r['mean'])} ± {_fmt(r['ci90'])}"
                name = r["method"]
                if r["mean"] == best:
                    cell, name = f"**{cell}**", f"**{name}**"
                out.append(f"| {name} | {cell} | {_fmt_pct(r['improvement_pct'])} |")
            out.append("")
    div = diversity_rows(reports)
    if div:
        out += ["### Shaping diversity", "", "| Method | Avg. Stdev | % Range Covered |", "|---|---|---|"]
        out += [f"| {d['method']} | {d['avg_stdev']:.4f} | {d['range_pct']:.1f} |" for d in div]
        out.append("")
    feats = feature_rows(reports)
    if feats:
        methods = list(dict.fromkeys(f["method"] for f in feats))
        head = " | ".join(f"{m} Mean | {m} Stdev" for m in methods)
        out += ["### Shaping weights per feature", "", f"| Feature | {head} |",
                "|---|" + "---|" * (2 * len(methods))]
        for name in FEATURE_NAMES:
            cells = []
            for m in methods:
                f = next(x for x in feats if x["method"] == m and x["feature"] == name)
                cells += [f"{f['mean']:.2f}", f"{f['stdev']:.2f}"]
            out.append(f"| {name} | " + " | ".join(cells) + " |")
        out.append("")
    return "\n".join(out)


def _unique_by_method(reports: list[EvalReport]) -> list[EvalReport]:
    seen, out = set(), []
    for r in reports:
        if r.method not in seen:
            seen.add(r.method)
            out.append(r)
    return out


def diversity_rows(reports: list[EvalReport]) -> list[dict]:
    return [{"method": r.method, "avg_stdev": r.diversity.avg_stdev, "range_pct": r.diversity.avg_range_pct}
            for r in _unique_by_method(reports) if r.diversity is not None]


def feature_rows(reports: list[EvalReport]) -> list[dict]:
    rows = []
    for r in _unique_by_method(reports):
        if len(r.ego_shapings) < 1:
            continue
        w = np.asarray(r.ego_shapings, dtype=np.float64)
        for k, name in enumerate(FEATURE_NAMES):
            rows.append({"method": r.method, "feature": name, "mean": float(w[:, k].mean()),
                         "stdev": float(w[:, k].std())})
    return rows


def _write_csv(path: Path, header: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow(["" if r[h] is None else (f"{r[h]:.6g}" if isinstance(r[h], float) else r[h])
                        for h in header])


def cmd_report(args) -> int:
    reports = []
    for path in args.reports:
        try:
            reports.append(EvalReport.load(path))
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read report {path}: {exc}") from exc
    if args.reference and not any(r.method == args.reference for r in reports):
        raise ValidationError(f"--reference {args.reference!r} matches no report method "
                              f"({sorted({r.method for r in reports})})")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = report_rows(reports, args.reference)
    (out / "summary.md").write_text(markdown_tables(rows, reports, args.reference))
    _write_csv(out / "summary.csv", ["layout", "metric", "method", "mean", "ci90", "improvement_pct"], rows)
    _write_csv(out / "diversity.csv", ["method", "avg_stdev", "range_pct"], diversity_rows(reports))
    _write_csv(out / "features.csv", ["method", "feature", "mean", "stdev"], feature_rows(reports))
    log.info("wrote tables for %d reports to %s", len(reports), out)
    return EXIT_OK


# --- entry point ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="shapezsc", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("select", help="choose a set of shaping weight vectors")
    s.add_argument("--method", required=True, choices=METHODS,
                   help="random, lhs (stratified grid), surrogate, llm, or base (P copies of the base shaping)")
    s.add_argument("--p", type=int, default=10, help="number of shapings (default 10)")
    s.add_argument("--seed", type=int, default=0, help="selection seed")
    s.add_argument("--data", help="training results JSON (surrogate and llm methods)")
    s.add_argument("--provider", help="provider config JSON for the llm method (default: bundled fixture)")
    s.add_argument("--env-code", help="environment source excerpt to attach to the llm prompt")
    s.add_argument("--candidates", type=int, default=1000, help="surrogate candidate pool size")
    s.add_argument("--max-retries", type=int, default=2, help="llm retries after a parse failure")
    s.add_argument("--out", required=True, help="output shaping-set JSON")
    s.set_defaults(func=cmd_select)

    t = sub.add_parser("train", help="train one population per shaping")
    t.add_argument("--shapings", required=True, help="shaping-set JSON from select")
    t.add_argument("--config", help="experiment config JSON")
    t.add_argument("--layout", help="bundled layout name or layout file (overrides config)")
    t.add_argument("--seed", type=int, help="global seed (overrides config)")
    t.add_argument("--steps", type=int, help="environment steps per population (overrides config)")
    t.add_argument("--jobs", type=int, default=1, help="parallel training processes")
    t.add_argument("--out-dir", required=True, help="run directory")
    t.set_defaults(func=cmd_train)

    tp = sub.add_parser("train-partners", help="train self-play partners under hidden random shapings")
    tp.add_argument("--count", type=int, help="number of partners (overrides config, default 5)")
    tp.add_argument("--config", help="experiment config JSON")
    tp.add_argument("--layout", help="bundled layout name or layout file (overrides config)")
    tp.add_argument("--seed", type=int, help="global seed (overrides config)")
    tp.add_argument("--steps", type=int, help="environment steps per partner (overrides config)")
    tp.add_argument("--jobs", type=int, default=1, help="parallel training processes")
    tp.add_argument("--out-dir", required=True, help="run directory")
    tp.set_defaults(func=cmd_train_partners)

    e = sub.add_parser("eval", help="cross-play an ensemble (or single best response) against partners")
    e.add_argument("--ensemble", required=True, help="run or populations directory holding best responses")
    e.add_argument("--partners", required=True, help="run or partners directory")
    e.add_argument("--layout", default="random3-mini", help="bundled layout name or layout file")
    e.add_argument("--single", action="store_true", help="evaluate only population 0's best response")
    e.add_argument("--rollouts", type=int, default=40, help="rollouts per seed and seat (default 40)")
    e.add_argument("--seeds", type=int, nargs="+", default=list(range(10)), help="evaluation seeds")
    e.add_argument("--horizon", type=int, default=400, help="episode length")
    e.add_argument("--method", default="", help="method label stored in the report")
    e.add_argument("--reference", help="report JSON used for the improvement column")
    e.add_argument("--out", required=True, help="output report JSON (a CSV is written alongside)")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("report", help="summarize evaluation reports as markdown and CSV tables")
    r.add_argument("reports", nargs="+", help="report JSON files")
    r.add_argument("--reference", help="method name used for the improvement column")
    r.add_argument("--out-dir", required=True, help="directory for summary.md and CSV tables")
    r.set_defaults(func=cmd_report)
    return ap


USAGE_ERRORS = (ValidationError, DimensionMismatch, CheckpointError, ParseError, InvalidCount,
                InsufficientData, InsufficientSamples)
EXTERNAL_ERRORS = (ProviderError, ExhaustedRetries)


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        return args.func(args)
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except EXTERNAL_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EXTERNAL
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
