"""Pixel-wise marker design: per-combo cell solves, caching, aggregation.

Each low-res code pixel must show one of two gray levels in every view, so
its intent is a grid_k**2-bit word (bit v-1 = view v, LSB first). A cell
solved for a word works for every pixel carrying that word; the cache maps
words to solved cells and aggregation tiles the cached cells (with their
periodic margins) into the full front/rear layers.

The per-cell observation operator bakes the periodic margin into cyclic
index arithmetic: view t sees the mean of the (u_t, v_t)-rolled front core
times the rear core, which is exactly what the padded cell shows a camera.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .factorization import AnnealSchedule, WnmfConfig, bmf_solve
from .geometry import BinaryLayer, CellSpec, ViewSpec, periodic_pad
from .imaging import render_view

__all__ = [
    "ViewTargetStack",
    "CellSolution",
    "ComboCache",
    "MultiViewCellOp",
    "combo_bits",
    "bits_to_word",
    "combo_target",
    "solve_combo",
    "solve_all_combos",
    "aggregate",
    "stamp_finder_patterns",
    "binarize_at_midpoint",
    "make_test_stack",
    "save_stack",
    "load_stack",
]

FINDER_SIDE = 7


def combo_bits(word: int, n_views: int) -> np.ndarray:
    """Per-view bits of a combo word, view order 1..n_views (LSB first)."""
    if not 0 <= word < 2**n_views:
        raise ValueError(f"combo {word} out of range for {n_views} views")
    return np.array([(word >> t) & 1 for t in range(n_views)], dtype=np.uint8)


def bits_to_word(bits) -> int:
    bits = np.asarray(bits).ravel()
    return int(sum(int(b) << t for t, b in enumerate(bits)))


@dataclass(eq=False)
class ViewTargetStack:
    """One low-res target per view, all the same shape, entries at two levels."""

    codes: np.ndarray
    view: ViewSpec
    level_low: float = 0.2
    level_high: float = 0.5

    def __post_init__(self):
        self.codes = np.asarray(self.codes, dtype=np.float64)
        if self.codes.ndim != 3:
            raise ValueError(f"codes must be (views, rows, cols), got {self.codes.shape}")
        if self.codes.shape[0] != self.view.n_views:
            raise ValueError(
                f"expected {self.view.n_views} views, got {self.codes.shape[0]}"
            )
        if not 0.0 < self.level_low < self.level_high <= 1.0:
            raise ValueError(
                f"need 0 < low < high <= 1, got ({self.level_low}, {self.level_high})"
            )
        ok = np.isclose(self.codes, self.level_low, rtol=0, atol=1e-12) | np.isclose(
            self.codes, self.level_high, rtol=0, atol=1e-12
        )
        if not ok.all():
            raise ValueError(
                f"stack entries must be {self.level_low} or {self.level_high}"
            )

    @classmethod
    def from_bits(cls, bits, view: ViewSpec, level_low: float = 0.2,
                  level_high: float = 0.5) -> "ViewTargetStack":
        bits = np.asarray(bits)
        codes = np.where(bits > 0, level_high, level_low).astype(np.float64)
        return cls(codes, view, level_low, level_high)

    @property
    def code_shape(self) -> tuple[int, int]:
        return self.codes.shape[1], self.codes.shape[2]

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.level_low + self.level_high)

    def bits(self) -> np.ndarray:
        return (self.codes >= self.midpoint).astype(np.uint8)

    def combo_words(self) -> np.ndarray:
        """Per-pixel combo word across views."""
        bits = self.bits().astype(np.int64)
        weights = (1 << np.arange(self.view.n_views, dtype=np.int64))[:, None, None]
        return (bits * weights).sum(axis=0)


def combo_target(combo: int, view: ViewSpec,
                 levels: tuple[float, float] = (0.2, 0.5)) -> ViewTargetStack:
    """1x1-pixel target stack for one combo word."""
    bits = combo_bits(combo, view.n_views).reshape(-1, 1, 1)
    return ViewTargetStack.from_bits(bits, view, levels[0], levels[1])


class MultiViewCellOp:
    """Joint observation of one cell from every view.

    Factors are row-major flattened scale x scale cores; view t's value is
    mean(roll(front, (u_t, v_t) cyclically) * rear), i.e. the diagonal of the
    outer product selected by that view's parallax.
    """

    def __init__(self, cell: CellSpec, view: ViewSpec):
        cell.validate_against(view)
        s = cell.scale
        self.scale = s
        self.m = self.n = s * s
        self.target_shape = (view.n_views,)
        rows = np.arange(s)
        fwd = np.empty((view.n_views, s * s), dtype=np.intp)
        bwd = np.empty((view.n_views, s * s), dtype=np.intp)
        for t, (u, v) in enumerate(view.offsets):
            fwd[t] = (((rows[:, None] + u) % s) * s + (rows[None, :] + v) % s).ravel()
            bwd[t] = (((rows[:, None] - u) % s) * s + (rows[None, :] - v) % s).ravel()
        self._fwd = fwd
        self._bwd = bwd

    def render(self, w: np.ndarray, h: np.ndarray) -> np.ndarray:
        return (w[self._fwd] * h).sum(axis=1) / (self.scale * self.scale)

    def backproject_w(self, y: np.ndarray, h: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        return (y[:, None] * h[self._bwd]).sum(axis=0) / (self.scale * self.scale)

    def backproject_h(self, y: np.ndarray, w: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        return (y[:, None] * w[self._fwd]).sum(axis=0) / (self.scale * self.scale)

    def render_many(self, ws: np.ndarray, hs: np.ndarray) -> np.ndarray:
        """render for every (row of ws) x (row of hs); shape (Cw, Ch, views)."""
        gathered = ws[:, self._fwd]  # (Cw, views, s*s)
        return np.einsum("ctk,dk->cdt", gathered, hs) / (self.scale * self.scale)


@dataclass(eq=False)
class CellSolution:
    """Solved binary cell cores for one combo plus achieved per-view values."""

    combo: int
    w_core: np.ndarray
    h_core: np.ndarray
    per_view: np.ndarray
    rms: float

    def to_record(self) -> dict:
        s = self.w_core.shape[0]
        return {
            "combo": int(self.combo),
            "bits": [int(b) for b in combo_bits(self.combo, len(self.per_view))],
            "scale": s,
            "w_rows": [np.packbits(row).tobytes().hex() for row in self.w_core],
            "h_rows": [np.packbits(row).tobytes().hex() for row in self.h_core],
            "per_view": [float(x) for x in self.per_view],
            "rms": float(self.rms),
        }

    @classmethod
    def from_record(cls, rec: dict) -> "CellSolution":
        s = int(rec["scale"])

        def unpack(rows):
            return np.stack(
                [np.unpackbits(np.frombuffer(bytes.fromhex(r), dtype=np.uint8),
                               count=s) for r in rows]
            ).astype(np.uint8)

        return cls(
            combo=int(rec["combo"]),
            w_core=unpack(rec["w_rows"]),
            h_core=unpack(rec["h_rows"]),
            per_view=np.array(rec["per_view"], dtype=np.float64),
            rms=float(rec["rms"]),
        )


@dataclass(eq=False)
class ComboCache:
    """Write-once map from combo words to solved cells, persistable to a directory."""

    cell: CellSpec
    view: ViewSpec
    level_low: float
    level_high: float
    entries: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)

    def config_key(self) -> dict:
        return {
            "scale": self.cell.scale,
            "margin": self.cell.margin,
            "grid_k": self.view.grid_k,
            "shift_step": self.view.shift_step,
            "level_low": self.level_low,
            "level_high": self.level_high,
        }

    def save(self, directory) -> None:
        os.makedirs(directory, exist_ok=True)
        manifest = dict(self.config_key())
        manifest["schema_version"] = 1
        manifest["combos"] = sorted(int(c) for c in self.entries)
        manifest["failures"] = {str(k): v for k, v in sorted(self.failures.items())}
        with open(os.path.join(directory, "cache_manifest.json"), "w") as f:
            json.dump(manifest, f, indent=2, sort_keys=True)
        for word in manifest["combos"]:
            rec = self.entries[word].to_record()
            with open(os.path.join(directory, f"combo_{word:08d}.json"), "w") as f:
                json.dump(rec, f, sort_keys=True)

    @classmethod
    def load(cls, directory) -> "ComboCache":
        with open(os.path.join(directory, "cache_manifest.json")) as f:
            manifest = json.load(f)
        cell = CellSpec(scale=manifest["scale"], margin=manifest["margin"])
        view = ViewSpec(grid_k=manifest["grid_k"], shift_step=manifest["shift_step"])
        cache = cls(cell, view, manifest["level_low"], manifest["level_high"])
        for word in manifest["combos"]:
            with open(os.path.join(directory, f"combo_{word:08d}.json")) as f:
                cache.entries[word] = CellSolution.from_record(json.load(f))
        cache.failures = {int(k): v for k, v in manifest.get("failures", {}).items()}
        return cache


def _cell_layers(solution: CellSolution, cell: CellSpec) -> tuple[BinaryLayer, BinaryLayer]:
    front = BinaryLayer(periodic_pad(solution.w_core, cell.margin), role="front")
    rear = BinaryLayer(periodic_pad(solution.h_core, cell.margin), role="rear")
    return front, rear


def _imaging_per_view(w_core, h_core, cell: CellSpec, view: ViewSpec) -> np.ndarray:
    """Per-view cell values computed through the imaging path (the recorded truth)."""
    front = BinaryLayer(periodic_pad(w_core, cell.margin), role="front")
    rear = BinaryLayer(periodic_pad(h_core, cell.margin), role="rear")
    return np.array(
        [render_view(front, rear, view, t, cell)[0, 0] for t in range(1, view.n_views + 1)]
    )


def solve_combo(combo: int, cell: CellSpec, view: ViewSpec, cfg: WnmfConfig,
                sched: AnnealSchedule, levels: tuple[float, float] = (0.2, 0.5),
                restarts: int = 8) -> CellSolution:
    """Solve one cell jointly over all views of a combo word."""
    op = MultiViewCellOp(cell, view)
    bits = combo_bits(combo, view.n_views)
    target = np.where(bits > 0, levels[1], levels[0]).astype(np.float64)
    mask = np.ones(view.n_views)
    pair, _report = bmf_solve(target, mask, op, cfg, sched, restarts=restarts)
    s = cell.scale
    w_core = pair.w.reshape(s, s).astype(np.uint8)
    h_core = pair.h.reshape(s, s).astype(np.uint8)
    per_view = _imaging_per_view(w_core, h_core, cell, view)
    rms = float(np.sqrt(np.mean((target - per_view) ** 2)))
    return CellSolution(combo, w_core, h_core, per_view, rms)


def _solve_combo_task(args):
    combo, cell, view, cfg, sched, levels, restarts = args
    try:
        return combo, solve_combo(combo, cell, view, cfg, sched, levels, restarts), None
    except Exception as exc:  # collected per combo, not fatal to the batch
        return combo, None, f"{type(exc).__name__}: {exc}"


def solve_all_combos(cell: CellSpec, view: ViewSpec, cfg: WnmfConfig,
                     sched: AnnealSchedule, levels: tuple[float, float] = (0.2, 0.5),
                     combos=None, restarts: int = 8, jobs: int = 1) -> ComboCache:
    """Solve every requested combo (or the full enumeration for small grids).

    Cache content is deterministic and independent of the worker count: each
    combo's solve depends only on (combo, cell, view, cfg, sched, levels,
    restarts).
    """
    n_views = view.n_views
    if n_views > 25:
        raise ValueError(f"view grids beyond 25 views are unsupported, got {n_views}")
    if combos is None:
        if 2**n_views > 512:
            raise ValueError(
                f"refusing to enumerate 2^{n_views} combos; pass the combos "
                f"present in the target stack instead"
            )
        combos = range(2**n_views)
    words = sorted({int(c) for c in combos})
    for w in words:
        if not 0 <= w < 2**n_views:
            raise ValueError(f"combo {w} out of range for {n_views} views")
    cache = ComboCache(cell, view, levels[0], levels[1])
    tasks = [(w, cell, view, cfg, sched, levels, restarts) for w in words]
    if jobs <= 1 or len(tasks) <= 1:
        results = map(_solve_combo_task, tasks)
        for combo, solution, err in results:
            if err is None:
                cache.entries[combo] = solution
            else:
                cache.failures[combo] = err
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for combo, solution, err in pool.map(
                _solve_combo_task, tasks, chunksize=max(1, len(tasks) // (4 * jobs))
            ):
                if err is None:
                    cache.entries[combo] = solution
                else:
                    cache.failures[combo] = err
    return cache


def aggregate(stack: ViewTargetStack, cache: ComboCache,
              cell: CellSpec) -> tuple[BinaryLayer, BinaryLayer]:
    """Tile cached cell solutions into full front/rear layers."""
    cell.validate_against(stack.view)
    words = stack.combo_words()
    rows, cols = words.shape
    cs = cell.cell_side
    front = np.zeros((rows * cs, cols * cs), dtype=np.uint8)
    rear = np.zeros_like(front)
    n_views = stack.view.n_views
    for i in range(rows):
        for j in range(cols):
            word = int(words[i, j])
            sol = cache.entries.get(word)
            if sol is None:
                raise ValueError(
                    f"no cached solution for combo {word:0{n_views}b} "
                    f"(word {word}) required by pixel ({i}, {j})"
                )
            front[i * cs : (i + 1) * cs, j * cs : (j + 1) * cs] = periodic_pad(
                sol.w_core, cell.margin
            )
            rear[i * cs : (i + 1) * cs, j * cs : (j + 1) * cs] = periodic_pad(
                sol.h_core, cell.margin
            )
    return BinaryLayer(front, role="front"), BinaryLayer(rear, role="rear")


def _finder_block() -> np.ndarray:
    """7x7 concentric block: high border ring, low ring, high 3x3 core."""
    d = np.maximum(
        np.abs(np.arange(FINDER_SIDE) - 3)[:, None],
        np.abs(np.arange(FINDER_SIDE) - 3)[None, :],
    )
    return (d != 2).astype(np.uint8)


def stamp_finder_patterns(stack: ViewTargetStack,
                          positions=None) -> ViewTargetStack:
    """Write identical corner finder blocks into every view's code."""
    rows, cols = stack.code_shape
    if positions is None:
        if rows < 2 * FINDER_SIDE or cols < 2 * FINDER_SIDE:
            raise ValueError(
                f"code of {rows}x{cols} pixels cannot host three {FINDER_SIDE}x"
                f"{FINDER_SIDE} corner finders (needs at least "
                f"{2 * FINDER_SIDE} per axis)"
            )
        positions = [(0, 0), (0, cols - FINDER_SIDE), (rows - FINDER_SIDE, 0)]
    block = _finder_block()
    bits = stack.bits().copy()
    for r, c in positions:
        if not (0 <= r <= rows - FINDER_SIDE and 0 <= c <= cols - FINDER_SIDE):
            raise ValueError(f"finder at ({r}, {c}) does not fit in {rows}x{cols}")
        bits[:, r : r + FINDER_SIDE, c : c + FINDER_SIDE] = block
    return ViewTargetStack.from_bits(bits, stack.view, stack.level_low, stack.level_high)


def binarize_at_midpoint(rendered: np.ndarray, level_low: float,
                         level_high: float) -> np.ndarray:
    """Decode a rendered view: at or above the level midpoint reads as 1."""
    mid = 0.5 * (level_low + level_high)
    return (np.asarray(rendered, dtype=np.float64) >= mid).astype(np.uint8)


def make_test_stack(kind: str, size: int, view: ViewSpec,
                    levels: tuple[float, float] = (0.2, 0.5), seed: int = 0,
                    finders: bool = False) -> ViewTargetStack:
    """Built-in deterministic code generators for demos and verification."""
    n_views = view.n_views
    if kind == "checkerboard":
        i, j = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
        bits = np.stack([((i + j + t) % 2) for t in range(n_views)]).astype(np.uint8)
    elif kind == "random":
        rng = np.random.default_rng([seed, 0x5EED])
        bits = rng.integers(0, 2, size=(n_views, size, size), dtype=np.uint8)
    else:
        raise ValueError(f"unknown generator {kind!r} (use 'checkerboard' or 'random')")
    stack = ViewTargetStack.from_bits(bits, view, levels[0], levels[1])
    if finders:
        stack = stamp_finder_patterns(stack)
    return stack


def write_combo_report(cache: ComboCache, path) -> None:
    """Per-combo RMS table: combo word, bits, rms, achieved per-view values."""
    n_views = cache.view.n_views
    header = ["combo", "bits", "rms"] + [f"view{t:02d}" for t in range(1, n_views + 1)]
    lines = [",".join(header)]
    for word in sorted(cache.entries):
        sol = cache.entries[word]
        row = [str(word), f"{word:0{n_views}b}", repr(float(sol.rms))]
        row += [repr(float(x)) for x in sol.per_view]
        lines.append(",".join(row))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def save_stack(stack: ViewTargetStack, path) -> None:
    """Write a stack file: bit matrices plus the level pair, JSON."""
    payload = {
        "schema_version": 1,
        "grid_k": stack.view.grid_k,
        "shift_step": stack.view.shift_step,
        "level_low": stack.level_low,
        "level_high": stack.level_high,
        "bits": stack.bits().tolist(),
    }
    with open(path, "w") as f:
        json.dump(payload, f, sort_keys=True)


def load_stack(path) -> ViewTargetStack:
    with open(path) as f:
        payload = json.load(f)
    view = ViewSpec(grid_k=payload["grid_k"], shift_step=payload["shift_step"])
    return ViewTargetStack.from_bits(
        np.array(payload["bits"], dtype=np.uint8),
        view,
        payload["level_low"],
        payload["level_high"],
    )
