"""Forward image formation: superposition, block-average downsampling, objective.

A camera far from the marker resolves only the per-cell average of the
superposed (element-wise product) layers. The downsampling operator takes
the mean of the central scale x scale window of each cell; the margin ring
exists only to absorb view shifts and never enters any average.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import BinaryLayer, CellSpec, FactorPair, ViewSpec

__all__ = [
    "GrayTarget",
    "WeightMask",
    "DownsampleOp",
    "superpose",
    "downsample",
    "upsample",
    "render_view",
    "objective",
    "rms_error",
    "uniform_mask",
    "edge_weighted_mask",
]


@dataclass(eq=False)
class GrayTarget:
    """Low-res target whose entries are one of two grayscale levels."""

    values: np.ndarray
    level_low: float = 0.2
    level_high: float = 0.5

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if not 0.0 < self.level_low < self.level_high <= 1.0:
            raise ValueError(
                f"need 0 < low < high <= 1, got ({self.level_low}, {self.level_high})"
            )
        near_low = np.isclose(self.values, self.level_low, rtol=0, atol=1e-12)
        near_high = np.isclose(self.values, self.level_high, rtol=0, atol=1e-12)
        if not (near_low | near_high).all():
            raise ValueError(
                f"target entries must be {self.level_low} or {self.level_high}"
            )

    @classmethod
    def from_bits(cls, bits, level_low: float = 0.2, level_high: float = 0.5):
        bits = np.asarray(bits)
        values = np.where(bits > 0, level_high, level_low).astype(np.float64)
        return cls(values, level_low, level_high)

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.level_low + self.level_high)

    def bits(self) -> np.ndarray:
        return (self.values >= self.midpoint).astype(np.uint8)


@dataclass(eq=False)
class WeightMask:
    """Nonnegative per-entry weights of the data-fit term."""

    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if (self.weights < 0).any():
            raise ValueError("mask weights must be nonnegative")
        if not (self.weights > 0).any():
            raise ValueError("mask must not be identically zero")


def uniform_mask(shape) -> WeightMask:
    return WeightMask(np.ones(shape))


def edge_weighted_mask(shape, edge_weight: float = 0.5) -> WeightMask:
    """All-ones mask with the outermost low-res ring down-weighted."""
    w = np.ones(shape)
    if w.ndim != 2:
        raise ValueError("edge weighting applies to 2-D targets")
    w[0, :] = w[-1, :] = edge_weight
    w[:, 0] = w[:, -1] = edge_weight
    return WeightMask(w)


@dataclass(frozen=True)
class DownsampleOp:
    """Block-average map from cell-tiled high-res matrices to low-res values."""

    scale: int
    margin: int = 0

    def __post_init__(self):
        if self.scale < 1:
            raise ValueError(f"scale must be >= 1, got {self.scale}")
        if self.margin < 0:
            raise ValueError(f"margin must be >= 0, got {self.margin}")

    @property
    def cell_side(self) -> int:
        return self.scale + 2 * self.margin

    @classmethod
    def for_cell(cls, cell: CellSpec) -> "DownsampleOp":
        return cls(scale=cell.scale, margin=cell.margin)


def _pixels(layer) -> np.ndarray:
    return layer.pixels if isinstance(layer, BinaryLayer) else np.asarray(layer)


def superpose(front, rear, shift: tuple[int, int], margin: int | None = None) -> np.ndarray:
    """Element-wise product of the shifted front layer with the fixed rear.

    output[i, j] = front[i + u, j + v] * rear[i, j], with the front wrapped
    torus-fashion; entries are exact on every cell's central window whenever
    |u|, |v| <= margin, because the shifted values then come from the cell's
    own periodic-padding ring.
    """
    f = _pixels(front).astype(np.float64)
    r = _pixels(rear).astype(np.float64)
    if f.shape != r.shape:
        raise ValueError(f"layer shapes differ: front {f.shape} vs rear {r.shape}")
    u, v = shift
    if margin is not None and max(abs(u), abs(v)) > margin:
        raise ValueError(f"shift {shift} exceeds margin {margin}")
    return np.roll(f, (-u, -v), axis=(0, 1)) * r


def downsample(op: DownsampleOp, hi: np.ndarray) -> np.ndarray:
    """Mean of each cell's central scale x scale window."""
    hi = np.asarray(hi, dtype=np.float64)
    cs, s, m = op.cell_side, op.scale, op.margin
    if hi.ndim != 2 or hi.shape[0] % cs or hi.shape[1] % cs:
        raise ValueError(
            f"high-res shape {hi.shape} is not tiled by cells of side {cs} "
            f"(scale {s} + 2*margin {m})"
        )
    p, q = hi.shape[0] // cs, hi.shape[1] // cs
    cells = hi.reshape(p, cs, q, cs)
    return cells[:, m : m + s, :, m : m + s].mean(axis=(1, 3))


def upsample(op: DownsampleOp, lo: np.ndarray) -> np.ndarray:
    """Adjoint of downsample: spread lo/scale**2 over central windows, zero margins."""
    lo = np.asarray(lo, dtype=np.float64)
    if lo.ndim != 2:
        raise ValueError(f"low-res input must be 2-D, got shape {lo.shape}")
    cs, s, m = op.cell_side, op.scale, op.margin
    p, q = lo.shape
    hi = np.zeros((p, cs, q, cs))
    hi[:, m : m + s, :, m : m + s] = lo[:, None, :, None] / (s * s)
    return hi.reshape(p * cs, q * cs)


def render_view(front, rear, view: ViewSpec, view_index: int, cell: CellSpec) -> np.ndarray:
    """Low-res appearance of the marker from one viewing direction."""
    shift = view.offset(view_index)
    return downsample(
        DownsampleOp.for_cell(cell), superpose(front, rear, shift, margin=cell.margin)
    )


def _values(target) -> np.ndarray:
    return target.values if isinstance(target, GrayTarget) else np.asarray(target, dtype=np.float64)


def _weights(mask) -> np.ndarray:
    return mask.weights if isinstance(mask, WeightMask) else np.asarray(mask, dtype=np.float64)


def objective(target, mask, rendered: np.ndarray, pair: FactorPair,
              lambda1: float, lambda2: float) -> float:
    """Weighted data-fit plus L2 penalties:

    0.5 * || mask o (target - rendered) ||_F^2
        + lambda1 * ||w||_2^2 + lambda2 * ||h||_2^2
    """
    v = _values(target)
    c = _weights(mask)
    rendered = np.asarray(rendered, dtype=np.float64)
    if v.shape != rendered.shape or c.shape != v.shape:
        raise ValueError(
            f"shape mismatch: target {v.shape}, mask {c.shape}, rendered {rendered.shape}"
        )
    if lambda1 < 0 or lambda2 < 0:
        raise ValueError("regularizer weights must be nonnegative")
    fit = 0.5 * float(np.sum((c * (v - rendered)) ** 2))
    return fit + lambda1 * float(np.sum(pair.w**2)) + lambda2 * float(np.sum(pair.h**2))


def rms_error(target, rendered: np.ndarray) -> float:
    """Root mean squared entry-wise difference."""
    v = _values(target)
    rendered = np.asarray(rendered, dtype=np.float64)
    if v.shape != rendered.shape:
        raise ValueError(f"shape mismatch: target {v.shape} vs rendered {rendered.shape}")
    return float(np.sqrt(np.mean((v - rendered) ** 2)))
