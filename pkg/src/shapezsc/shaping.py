"""Shaping-weight vectors, the Random and Latin-hypercube selectors, and diversity metrics."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InsufficientSamples, InvalidCount, ValidationError
from .kitchen.env import FEATURE_NAMES

N_WEIGHTS = len(FEATURE_NAMES)
W_MIN = 0.0
W_MAX = 10.0
METHODS = ("Random", "StratifiedGrid", "Surrogate", "LLM", "Fixed")

# Stock kitchen shaping used by the single-shaping baseline.
BASE_SHAPING = (3.0, 3.0, 5.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class WeightRange:
    low: float = W_MIN
    high: float = W_MAX

    @property
    def span(self) -> float:
        return self.high - self.low


DEFAULT_RANGE = WeightRange()


@dataclass(frozen=True)
class ShapingVector:
    weights: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))

    def as_array(self) -> np.ndarray:
        return np.array(self.weights, dtype=np.float64)

    def to_dict(self) -> dict[str, float]:
        return dict(zip(FEATURE_NAMES, self.weights))

    @classmethod
    def from_dict(cls, d: dict) -> "ShapingVector":
        return cls(tuple(float(d[k]) for k in FEATURE_NAMES))

    def __len__(self) -> int:
        return len(self.weights)


@dataclass
class ShapingSet:
    shapings: list[ShapingVector]
    method: str
    seed: int | None = None
    created_at: str | None = None

    def stamp(self) -> "ShapingSet":
        self.created_at = datetime.now(timezone.utc).isoformat(timespec="seconds")
        return self

    def as_array(self) -> np.ndarray:
        return np.array([s.weights for s in self.shapings], dtype=np.float64).reshape(-1, N_WEIGHTS)

    def __len__(self) -> int:
        return len(self.shapings)

    @classmethod
    def from_array(cls, arr, method: str, seed=None, created_at: str | None = None) -> "ShapingSet":
        shapings = [ShapingVector(tuple(row)) for row in np.asarray(arr, dtype=np.float64)]
        return cls(shapings, method, seed, created_at)

    def to_json(self) -> dict:
        doc = {"method": self.method, "seed": self.seed}
        if self.created_at is not None:
            doc["created_at"] = self.created_at
        doc["reward_shaping_params"] = [s.to_dict() for s in self.shapings]
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "ShapingSet":
        params = doc.get("reward_shaping_params")
        if not isinstance(params, list):
            raise ValidationError("shaping file must contain a 'reward_shaping_params' list")
        shapings = []
        for i, entry in enumerate(params):
            if not isinstance(entry, dict):
                raise ValidationError(f"entry {i} is not an object")
            missing = [k for k in FEATURE_NAMES if k not in entry]
            extra = [k for k in entry if k not in FEATURE_NAMES]
            if missing or extra:
                raise ValidationError(f"entry {i}: missing keys {missing}, unknown keys {extra}")
            try:
                shapings.append(ShapingVector.from_dict(entry))
            except (TypeError, ValueError) as exc:
                raise ValidationError(f"entry {i}: non-numeric weight ({exc})") from exc
        return cls(shapings, doc.get("method", "Fixed"), doc.get("seed"), doc.get("created_at"))


def _check_count(p: int) -> None:
    if not isinstance(p, (int, np.integer)) or p < 1:
        raise InvalidCount(f"shaping count must be a positive integer, got {p!r}")


def random_select(p: int, seed, wrange: WeightRange = DEFAULT_RANGE) -> ShapingSet:
    """Draw every weight independently and uniformly from the weight range."""
    _check_count(p)
    rng = np.random.default_rng(seed)
    w = wrange.low + wrange.span * rng.random((p, N_WEIGHTS))
    return ShapingSet.from_array(w, "Random", seed)


def lhs_select(p: int, seed, wrange: WeightRange = DEFAULT_RANGE) -> ShapingSet:
    """Latin hypercube selection: one draw per equal-width stratum per feature.

    Each feature column is shuffled independently, so row ``i`` takes the
    ``i``-th entry of every permuted column.
    """
    _check_count(p)
    rng = np.random.default_rng(seed)
    u = (np.arange(p)[:, None] + rng.random((p, N_WEIGHTS))) / p
    for k in range(N_WEIGHTS):
        u[:, k] = u[rng.permutation(p), k]
    # guard the half-open upper stratum against rounding up to 1.0
    u = np.minimum(u, np.nextafter(1.0, 0.0))
    return ShapingSet.from_array(wrange.low + wrange.span * u, "StratifiedGrid", seed)


@dataclass(frozen=True)
class DiversityReport:
    per_weight_stdev: tuple[float, ...]
    avg_stdev: float
    per_weight_range_pct: tuple[float, ...]
    avg_range_pct: float
    per_weight_mean: tuple[float, ...] = ()

    def to_json(self) -> dict:
        return {
            "per_weight_stdev": dict(zip(FEATURE_NAMES, self.per_weight_stdev)),
            "avg_stdev": self.avg_stdev,
            "per_weight_range_pct": dict(zip(FEATURE_NAMES, self.per_weight_range_pct)),
            "avg_range_pct": self.avg_range_pct,
            "per_weight_mean": dict(zip(FEATURE_NAMES, self.per_weight_mean)),
        }

    @classmethod
    def from_json(cls, d: dict) -> "DiversityReport":
        return cls(
            tuple(d["per_weight_stdev"][k] for k in FEATURE_NAMES),
            d["avg_stdev"],
            tuple(d["per_weight_range_pct"][k] for k in FEATURE_NAMES),
            d["avg_range_pct"],
            tuple(d.get("per_weight_mean", {}).get(k, math.nan) for k in FEATURE_NAMES),
        )


def diversity_metrics(shapings: ShapingSet | np.ndarray, wrange: WeightRange = DEFAULT_RANGE) -> DiversityReport:
    """Population stdev and percentage of the weight range covered, per weight."""
    w = shapings.as_array() if isinstance(shapings, ShapingSet) else np.asarray(shapings, dtype=np.float64)
    if w.shape[0] < 2:
        raise InsufficientSamples(f"diversity needs at least 2 shapings, got {w.shape[0]}")
    # sort each column first so the result does not depend on list order
    w = np.sort(w, axis=0)
    std = w.std(axis=0, ddof=0)
    rng_pct = 100.0 * (w[-1] - w[0]) / wrange.span
    return DiversityReport(
        per_weight_stdev=tuple(float(x) for x in std),
        avg_stdev=float(np.mean(std)),
        per_weight_range_pct=tuple(float(x) for x in rng_pct),
        avg_range_pct=float(np.mean(rng_pct)),
        per_weight_mean=tuple(float(x) for x in w.mean(axis=0)),
    )


@dataclass(frozen=True)
class Violation:
    shaping_index: int
    feature_index: int | None
    value: float | None
    reason: str

    def __str__(self) -> str:
        where = f"shaping {self.shaping_index}"
        if self.feature_index is not None:
            where += f", {FEATURE_NAMES[self.feature_index]} (index {self.feature_index})"
        if self.value is not None:
            where += f" = {self.value!r}"
        return f"{where}: {self.reason}"


def validate_shaping_set(shapings: ShapingSet | Sequence, wrange: WeightRange = DEFAULT_RANGE) -> list[Violation]:
    """Every invariant violation in the set; an empty list means the set is valid."""
    items: Iterable = shapings.shapings if isinstance(shapings, ShapingSet) else shapings
    items = list(items)
    out: list[Violation] = []
    if not items:
        out.append(Violation(-1, None, None, "empty shaping set"))
    for i, s in enumerate(items):
        weights = getattr(s, "weights", s)
        try:
            weights = list(weights)
        except TypeError:
            out.append(Violation(i, None, None, "shaping is not a sequence"))
            continue
        if len(weights) != N_WEIGHTS:
            out.append(Violation(i, None, None, f"arity {len(weights)}, expected {N_WEIGHTS}"))
            continue
        for k, v in enumerate(weights):
            if isinstance(v, bool) or not isinstance(v, (int, float, np.integer, np.floating)):
                out.append(Violation(i, k, v, "non-numeric weight"))
            elif not math.isfinite(v) or v < wrange.low or v > wrange.high:
                out.append(Violation(i, k, float(v), f"outside [{wrange.low}, {wrange.high}]"))
    return out


def save_shaping_set(shapings: ShapingSet, path: str | Path) -> None:
    Path(path).write_text(json.dumps(shapings.to_json(), indent=2) + "\n")


def load_shaping_set(path: str | Path) -> ShapingSet:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ValidationError(f"{path}: expected a JSON object")
    out = ShapingSet.from_json(doc)
    problems = validate_shaping_set(out)
    if problems:
        raise ValidationError(f"{path}: " + "; ".join(str(v) for v in problems))
    return out
