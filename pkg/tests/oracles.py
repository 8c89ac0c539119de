"""Independent brute-force oracles used to freeze expected values.

These enumerate *every* binary factor pair, so they are exact references for
the solver's achievable optima. They deliberately share no code with the
solvers: rendering is re-derived from closed forms here.
"""

from __future__ import annotations

import numpy as np

from viewmark.geometry import CellSpec, ViewSpec
from viewmark.designer import MultiViewCellOp


def all_bit_vectors(n: int) -> np.ndarray:
    """(2**n, n) matrix of every binary vector, row index = word, LSB first."""
    words = np.arange(2**n, dtype=np.int64)
    return ((words[:, None] >> np.arange(n)[None, :]) & 1).astype(np.float64)


def single_view_optimum(target: np.ndarray, scale: int) -> float:
    """Exact min RMS of target vs block-averaged outer(w, h) over binary w, h.

    w has length rows*scale, h cols*scale; the block average of the outer
    product factors into block sums: B(w h^T)[I, J] = bw_I * bh_J / scale**2.
    """
    target = np.asarray(target, dtype=np.float64)
    p, q = target.shape
    m, n = p * scale, q * scale
    if m + n > 22:
        raise ValueError(f"enumeration of 2^{m + n} pairs is too large")
    bw = all_bit_vectors(m).reshape(-1, p, scale).sum(axis=2)
    bh = all_bit_vectors(n).reshape(-1, q, scale).sum(axis=2)
    # mean_IJ (V - bw_I bh_J / s^2)^2 expanded into three separable terms
    c0 = float(np.mean(target**2))
    cross = bw @ target @ bh.T
    sq = np.outer((bw**2).sum(axis=1), (bh**2).sum(axis=1))
    s2 = float(scale * scale)
    err = c0 - (2.0 / (p * q * s2)) * cross + sq / (p * q * s2 * s2)
    return float(np.sqrt(max(err.min(), 0.0)))


def multiview_cell_optimum(per_view_target: np.ndarray, cell: CellSpec,
                           view: ViewSpec) -> float:
    """Exact min RMS over all binary cell cores for a joint multi-view target."""
    per_view_target = np.asarray(per_view_target, dtype=np.float64)
    s = cell.scale
    if 2 * s * s > 20:
        raise ValueError(f"enumeration of 2^{2 * s * s} cell pairs is too large")
    op = MultiViewCellOp(cell, view)
    bits = all_bit_vectors(s * s)
    n_pairs = bits.shape[0]
    err = np.zeros((n_pairs, n_pairs))
    s2 = float(s * s)
    for t in range(view.n_views):
        vals = (bits[:, op._fwd[t]] @ bits.T) / s2
        err += (vals - per_view_target[t]) ** 2
    return float(np.sqrt(err.min() / view.n_views))


def central_difference(f, x: float, step: float = 1e-6) -> float:
    return (f(x + step) - f(x - step)) / (2.0 * step)
