"""Kitchen layouts: ASCII parsing, validation and precomputed lookup tables."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path

import numpy as np

from ..errors import ParseError, ValidationError

FLOOR, COUNTER, ONION_DISP, DISH_DISP, POT, SERVE = range(6)
CELL_NAMES = ("Floor", "Counter", "OnionDispenser", "DishDispenser", "Pot", "ServeStation")

_LEGEND = {
    " ": FLOOR,
    "1": FLOOR,
    "2": FLOOR,
    "X": COUNTER,
    "O": ONION_DISP,
    "D": DISH_DISP,
    "P": POT,
    "S": SERVE,
}
_CHARS = {FLOOR: " ", COUNTER: "X", ONION_DISP: "O", DISH_DISP: "D", POT: "P", SERVE: "S"}

# Static targets whose nearest instance is tracked per cell, in observation order.
TARGET_KINDS = (ONION_DISP, DISH_DISP, POT, SERVE)
MAX_POTS = 2

BUNDLED = ("random3-mini", "random0-mini", "unident-mini")


@dataclass(frozen=True, eq=False)
class Layout:
    name: str
    grid: np.ndarray  # (height, width) int64 cell kinds
    spawn_points: tuple[tuple[int, int], tuple[int, int]]  # (row, col)
    _text: str = field(default="", repr=False)

    @property
    def height(self) -> int:
        return int(self.grid.shape[0])

    @property
    def width(self) -> int:
        return int(self.grid.shape[1])

    @cached_property
    def pot_cells(self) -> np.ndarray:
        """(n_pots, 2) pot coordinates in row-major order."""
        return np.argwhere(self.grid == POT).astype(np.int64)

    @cached_property
    def pot_index(self) -> np.ndarray:
        idx = np.full(self.grid.shape, -1, dtype=np.int64)
        for p, (r, c) in enumerate(self.pot_cells):
            idx[r, c] = p
        return idx

    @cached_property
    def nearest(self) -> np.ndarray:
        """(len(TARGET_KINDS), H, W, 3): nearest (row, col, manhattan) per kind.

        Ties break in row-major order of the target cells.
        """
        h, w = self.grid.shape
        out = np.zeros((len(TARGET_KINDS), h, w, 3), dtype=np.int64)
        rr, cc = np.mgrid[0:h, 0:w]
        for k, kind in enumerate(TARGET_KINDS):
            targets = np.argwhere(self.grid == kind)
            d = np.abs(rr[..., None] - targets[:, 0]) + np.abs(cc[..., None] - targets[:, 1])
            best = np.argmin(d, axis=-1)
            out[k, ..., 0] = targets[best, 0]
            out[k, ..., 1] = targets[best, 1]
            out[k, ..., 2] = np.take_along_axis(d, best[..., None], axis=-1)[..., 0]
        return out

    def to_text(self) -> str:
        rows = [[_CHARS[int(v)] for v in row] for row in self.grid]
        for i, (r, c) in enumerate(self.spawn_points):
            rows[r][c] = str(i + 1)
        return "\n".join("".join(r) for r in rows) + "\n"


def load_layout(text: str, name: str = "layout") -> Layout:
    """Parse an ASCII layout and validate it.

    Raises ParseError for unknown characters or ragged rows and
    ValidationError when a structural invariant does not hold.
    """
    lines = text.split("\n")
    while lines and lines[-1].strip("\r") == "":
        lines.pop()
    lines = [ln.rstrip("\r") for ln in lines]
    if not lines:
        raise ParseError("empty layout")
    width = len(lines[0])
    spawns: dict[str, tuple[int, int]] = {}
    grid = np.zeros((len(lines), width), dtype=np.int64)
    for r, line in enumerate(lines):
        if len(line) != width:
            raise ParseError(f"row {r} has width {len(line)}, expected {width}")
        for c, ch in enumerate(line):
            if ch not in _LEGEND:
                raise ParseError(f"unknown character {ch!r} at row {r}, col {c}")
            grid[r, c] = _LEGEND[ch]
            if ch in "12":
                if ch in spawns:
                    raise ValidationError(f"duplicate spawn marker {ch!r}")
                spawns[ch] = (r, c)
    if set(spawns) != {"1", "2"}:
        raise ValidationError(f"expected exactly 2 spawn points, found {len(spawns)}")
    _validate_grid(grid)
    return Layout(name=name, grid=grid, spawn_points=(spawns["1"], spawns["2"]), _text=text)


def _validate_grid(grid: np.ndarray) -> None:
    h, w = grid.shape
    if h < 3 or w < 3:
        raise ValidationError("layout must be at least 3x3")
    border = np.concatenate([grid[0], grid[-1], grid[:, 0], grid[:, -1]])
    if np.any(border == FLOOR):
        raise ValidationError("border cells must not be floor")
    for kind in (ONION_DISP, DISH_DISP, POT, SERVE):
        if not np.any(grid == kind):
            raise ValidationError(f"layout has no {CELL_NAMES[kind]}")
    n_pots = int(np.sum(grid == POT))
    if n_pots > MAX_POTS:
        raise ValidationError(f"at most {MAX_POTS} pots supported, found {n_pots}")


def load_layout_file(path: str | Path) -> Layout:
    path = Path(path)
    return load_layout(path.read_text(), name=path.stem)


def bundled_layout(name: str) -> Layout:
    if name not in BUNDLED:
        raise KeyError(f"unknown bundled layout {name!r}; choose from {BUNDLED}")
    text = resources.files("shapezsc.kitchen").joinpath("layouts", f"{name}.layout").read_text()
    return load_layout(text, name=name)


def get_layout(name_or_path: str) -> Layout:
    """Resolve a bundled layout name or a path to a layout file."""
    if name_or_path in BUNDLED:
        return bundled_layout(name_or_path)
    return load_layout_file(name_or_path)
