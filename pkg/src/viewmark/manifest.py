"""Run manifest: every parameter a run needs, serialized next to its outputs.

A manifest fully determines a run; re-running any command from the manifest
it wrote reproduces the outputs byte for byte. The JSON schema is documented
in the README and version-stamped.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from ._version import __version__
from .factorization import AnnealSchedule, WnmfConfig
from .geometry import CellSpec, ViewSpec, default_margin
from .optics import GlassSpec

__all__ = ["RunManifest"]

SCHEMA_VERSION = 1
SHIFT_CONVENTION = "front"


@dataclass(frozen=True)
class RunManifest:
    cell: CellSpec = field(default_factory=lambda: CellSpec(scale=10, margin=1))
    view: ViewSpec = field(default_factory=lambda: ViewSpec(grid_k=3))
    glass: GlassSpec = field(default_factory=GlassSpec)
    level_low: float = 0.2
    level_high: float = 0.5
    solver: WnmfConfig = field(default_factory=WnmfConfig)
    anneal: AnnealSchedule = field(default_factory=AnnealSchedule)
    restarts: int = 8
    jobs: int | None = None
    max_combo_rms: float | None = None
    max_bit_error_rate: float | None = None
    stack_path: str | None = None
    cache_path: str | None = None

    def __post_init__(self):
        self.cell.validate_against(self.view)
        if not 0.0 < self.level_low < self.level_high <= 1.0:
            raise ValueError(
                f"need 0 < low < high <= 1, got ({self.level_low}, {self.level_high})"
            )
        if self.restarts < 1:
            raise ValueError(f"restarts must be >= 1, got {self.restarts}")

    @property
    def levels(self) -> tuple[float, float]:
        return (self.level_low, self.level_high)

    @classmethod
    def default_for_grid(cls, grid_k: int, scale: int = 10,
                         shift_step: int = 1) -> "RunManifest":
        view = ViewSpec(grid_k=grid_k, shift_step=shift_step)
        cell = CellSpec(scale=scale, margin=default_margin(grid_k, shift_step))
        return cls(cell=cell, view=view)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "tool_version": __version__,
            "shift_convention": SHIFT_CONVENTION,
            "cell": {"scale": self.cell.scale, "margin": self.cell.margin},
            "view": {"grid_k": self.view.grid_k, "shift_step": self.view.shift_step},
            "glass": {
                "thickness_um": self.glass.thickness_um,
                "n0": self.glass.n0,
                "n1": self.glass.n1,
                "pixel_pitch_um": self.glass.pixel_pitch_um,
            },
            "levels": {"low": self.level_low, "high": self.level_high},
            "solver": {
                "lambda1": self.solver.lambda1,
                "lambda2": self.solver.lambda2,
                "max_iters": self.solver.max_iters,
                "tol": self.solver.tol,
                "tol_window": self.solver.tol_window,
                "epsilon": self.solver.epsilon,
                "seed": self.solver.seed,
            },
            "anneal": {
                "a_values": list(self.anneal.a_values),
                "inner_max_iters": self.anneal.inner_max_iters,
                "learn_rate": self.anneal.learn_rate,
                "thresh_init": list(self.anneal.thresh_init),
                "anneal_input": self.anneal.anneal_input,
            },
            "restarts": self.restarts,
            "jobs": self.jobs,
            "bounds": {
                "max_combo_rms": self.max_combo_rms,
                "max_bit_error_rate": self.max_bit_error_rate,
            },
            "paths": {"stack": self.stack_path, "cache": self.cache_path},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunManifest":
        if d.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
            raise ValueError(
                f"unsupported manifest schema version {d.get('schema_version')}"
            )
        view_d = d.get("view", {})
        view = ViewSpec(
            grid_k=view_d.get("grid_k", 3), shift_step=view_d.get("shift_step", 1)
        )
        cell_d = d.get("cell", {})
        cell = CellSpec(
            scale=cell_d.get("scale", 10),
            margin=cell_d.get(
                "margin", default_margin(view.grid_k, view.shift_step)
            ),
        )
        glass_d = d.get("glass", {})
        glass = GlassSpec(
            thickness_um=glass_d.get("thickness_um", 510.0),
            n0=glass_d.get("n0", 1.0),
            n1=glass_d.get("n1", 1.46),
            pixel_pitch_um=glass_d.get("pixel_pitch_um"),
        )
        levels = d.get("levels", {})
        solver_d = d.get("solver", {})
        solver = WnmfConfig(
            lambda1=solver_d.get("lambda1", 1e-4),
            lambda2=solver_d.get("lambda2", 1e-4),
            max_iters=solver_d.get("max_iters", 2000),
            tol=solver_d.get("tol", 1e-7),
            tol_window=solver_d.get("tol_window", 5),
            epsilon=solver_d.get("epsilon", 1e-12),
            seed=solver_d.get("seed", 0),
        )
        anneal_d = d.get("anneal", {})
        anneal = AnnealSchedule(
            a_values=tuple(anneal_d.get("a_values", (5.0, 10.0, 20.0, 40.0, 80.0, 160.0))),
            inner_max_iters=anneal_d.get("inner_max_iters", 200),
            learn_rate=anneal_d.get("learn_rate", 0.05),
            thresh_init=tuple(anneal_d.get("thresh_init", (0.5, 0.5))),
            anneal_input=anneal_d.get("anneal_input", "previous"),
        )
        bounds = d.get("bounds", {})
        paths = d.get("paths", {})
        return cls(
            cell=cell,
            view=view,
            glass=glass,
            level_low=levels.get("low", 0.2),
            level_high=levels.get("high", 0.5),
            solver=solver,
            anneal=anneal,
            restarts=d.get("restarts", 8),
            jobs=d.get("jobs"),
            max_combo_rms=bounds.get("max_combo_rms"),
            max_bit_error_rate=bounds.get("max_bit_error_rate"),
            stack_path=paths.get("stack"),
            cache_path=paths.get("cache"),
        )

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")

    @classmethod
    def load(cls, path) -> "RunManifest":
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def with_paths(self, stack_path=None, cache_path=None) -> "RunManifest":
        updates = {}
        if stack_path is not None:
            updates["stack_path"] = str(stack_path)
        if cache_path is not None:
            updates["cache_path"] = str(cache_path)
        return replace(self, **updates) if updates else self
