"""Marker geometry: cells, view grids, binary layers and factor vectors.

A marker is a pair of high-resolution binary layers tiled from per-pixel
cells. Each cell has a ``scale x scale`` information core surrounded by a
``margin``-wide periodic-padding ring that absorbs the relative layer shift
of off-center views, so the averaging window of every view stays inside the
cell.

Offset convention: a view offset ``(u, v)`` shifts the *front* layer along
array axes 0 and 1 (``front[i + u, j + v]`` against ``rear[i, j]``); the
rear layer never moves. View indices run 1..grid_k**2 with the fast axis of
that numbering driving ``u``, so the center view is ``(grid_k**2 + 1) // 2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CellSpec",
    "ViewSpec",
    "BinaryLayer",
    "FactorPair",
    "default_margin",
    "reshape_vector_to_layer",
    "layer_to_vector",
    "periodic_pad",
    "view_offset_table",
]


def default_margin(grid_k: int, shift_step: int = 1) -> int:
    """Smallest margin that absorbs every shift of a grid_k view grid."""
    return (grid_k - 1) // 2 * shift_step


@dataclass(frozen=True)
class CellSpec:
    """High-res geometry of one low-res code pixel.

    ``scale`` is the number of high-res pixels per low-res pixel side,
    ``margin`` the width of the periodic boundary ring on each side.
    """

    scale: int
    margin: int

    def __post_init__(self):
        if self.scale < 2:
            raise ValueError(f"scale must be >= 2, got {self.scale}")
        if self.margin < 0:
            raise ValueError(f"margin must be >= 0, got {self.margin}")

    @property
    def cell_side(self) -> int:
        return self.scale + 2 * self.margin

    def validate_against(self, view: "ViewSpec") -> None:
        """Reject view grids whose shifts the margin cannot absorb."""
        if view.max_shift > self.margin:
            raise ValueError(
                f"margin {self.margin} cannot absorb view shifts up to "
                f"{view.max_shift} (grid_k={view.grid_k}, "
                f"shift_step={view.shift_step})"
            )


@dataclass(frozen=True)
class ViewSpec:
    """Grid of discrete viewing directions.

    ``offsets[i-1]`` is the front-layer shift (u, v) of view index i;
    ``angles`` holds the matching physical angle pairs in degrees once the
    optics module has annotated them.
    """

    grid_k: int
    shift_step: int = 1
    offsets: tuple[tuple[int, int], ...] = field(default=())
    angles: tuple[tuple[float, float], ...] | None = None

    @classmethod
    def create(cls, grid_k: int, shift_step: int = 1) -> "ViewSpec":
        return cls(grid_k=grid_k, shift_step=shift_step)

    def __post_init__(self):
        if self.grid_k < 1 or self.grid_k % 2 == 0:
            raise ValueError(f"grid_k must be odd and positive, got {self.grid_k}")
        if self.shift_step < 1:
            raise ValueError(f"shift_step must be >= 1, got {self.shift_step}")
        if not self.offsets:
            half = (self.grid_k - 1) // 2
            object.__setattr__(
                self,
                "offsets",
                tuple(
                    ((a - half) * self.shift_step, (b - half) * self.shift_step)
                    for b in range(self.grid_k)
                    for a in range(self.grid_k)
                ),
            )
        if len(self.offsets) != self.grid_k**2:
            raise ValueError(
                f"expected {self.grid_k**2} offsets, got {len(self.offsets)}"
            )
        if len(set(self.offsets)) != len(self.offsets):
            raise ValueError("view offsets must be unique")
        if (0, 0) not in self.offsets:
            raise ValueError("view grid must contain the center view (0, 0)")

    @property
    def n_views(self) -> int:
        return self.grid_k**2

    @property
    def center_index(self) -> int:
        return (self.n_views + 1) // 2

    @property
    def max_shift(self) -> int:
        return max(max(abs(u), abs(v)) for u, v in self.offsets)

    def offset(self, view_index: int) -> tuple[int, int]:
        """Front-layer shift of a 1-based view index."""
        if not 1 <= view_index <= self.n_views:
            raise ValueError(
                f"view index {view_index} out of range 1..{self.n_views}"
            )
        return self.offsets[view_index - 1]


def view_offset_table(view: ViewSpec) -> list[tuple[int, tuple[int, int]]]:
    """Deterministic (view_index, (u, v)) enumeration, index 1..grid_k**2."""
    return [(i + 1, uv) for i, uv in enumerate(view.offsets)]


@dataclass(eq=False)
class BinaryLayer:
    """One printed side of the marker: a 2-D {0,1} pixel matrix."""

    pixels: np.ndarray
    role: str = "front"

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels)
        if self.pixels.ndim != 2:
            raise ValueError(f"layer must be 2-D, got shape {self.pixels.shape}")
        if self.role not in ("front", "rear"):
            raise ValueError(f"role must be 'front' or 'rear', got {self.role!r}")
        vals = np.unique(self.pixels)
        if not np.isin(vals, (0, 1)).all():
            raise ValueError("layer pixels must all be 0 or 1")
        self.pixels = self.pixels.astype(np.uint8)

    @property
    def rows(self) -> int:
        return self.pixels.shape[0]

    @property
    def cols(self) -> int:
        return self.pixels.shape[1]


@dataclass(eq=False)
class FactorPair:
    """Rank-1 factor vectors (w, h), relaxed (nonnegative) or binary."""

    w: np.ndarray
    h: np.ndarray
    mode: str = "relaxed"

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64).ravel()
        self.h = np.asarray(self.h, dtype=np.float64).ravel()
        if self.mode == "relaxed":
            if (self.w < 0).any() or (self.h < 0).any():
                raise ValueError("relaxed factors must be nonnegative")
        elif self.mode == "binary":
            for name, v in (("w", self.w), ("h", self.h)):
                if not np.isin(v, (0.0, 1.0)).all():
                    raise ValueError(f"binary factor {name} has entries outside {{0,1}}")
        else:
            raise ValueError(f"mode must be 'relaxed' or 'binary', got {self.mode!r}")


def reshape_vector_to_layer(
    v: np.ndarray,
    rows: int,
    cols: int,
    order: str = "row-major",
    role: str = "front",
) -> BinaryLayer:
    """Reshape a binary vector to a layer, row-major: pixels[i, j] = v[i*cols + j]."""
    if order != "row-major":
        raise ValueError(f"unsupported reshape order {order!r}")
    v = np.asarray(v).ravel()
    if v.size != rows * cols:
        raise ValueError(
            f"vector of length {v.size} cannot fill a {rows}x{cols} layer "
            f"({rows * cols} pixels)"
        )
    return BinaryLayer(v.reshape(rows, cols), role=role)


def layer_to_vector(layer: BinaryLayer) -> np.ndarray:
    """Row-major flattening; inverse of reshape_vector_to_layer."""
    return layer.pixels.ravel().astype(np.float64)


def periodic_pad(layer, margin: int):
    """Surround with a torus-wrap ring of the given width.

    Accepts a BinaryLayer or a bare 2-D array and returns the same kind.
    The ring replicates the input with period equal to its dimensions, so
    the output at (i, j) equals input[(i - margin) % rows, (j - margin) % cols].
    """
    if margin < 0:
        raise ValueError(f"margin must be >= 0, got {margin}")
    if isinstance(layer, BinaryLayer):
        return BinaryLayer(np.pad(layer.pixels, margin, mode="wrap"), role=layer.role)
    arr = np.asarray(layer)
    if margin == 0:
        return arr.copy()
    return np.pad(arr, margin, mode="wrap")
