"""Rank-1 factorization solvers: relaxed weighted NMF, then annealed binarization.

The relaxed stage runs multiplicative updates for

    min_{w,h >= 0}  0.5*||C o (V - B(w h^T))||_F^2
                    + lambda1*||w||^2 + lambda2*||h||^2

where B is an abstract linear observation operator of the outer product.
The binarization stage sweeps a sigmoid steepness schedule from gentle to
steep; at each steepness it searches a scalar threshold pair by gradient
descent, re-maps the factors through the sigmoid, and finally hard-thresholds.

Because C sits inside the Frobenius norm, each squared residual is weighted
by C^2; the multiplicative updates therefore use C o C as the per-entry
weight, which keeps the recorded objective non-increasing for any
nonnegative mask (for binary masks this is the textbook weighted update).
The h update uses the freshly updated w, so both half-steps are
majorization-minimization steps.

Operators must expose ``m``, ``n``, ``target_shape`` and three maps:
``render(w, h)`` = B(w h^T), ``backproject_w(Y, h)`` = B^T(Y) h and
``backproject_h(Y, w)`` = w^T B^T(Y). A bare :class:`DownsampleOp` is
promoted to the single-view operator in which the high-res image is the
outer product of a row profile w and a column profile h.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import FactorPair
from .imaging import DownsampleOp, _values, _weights

__all__ = [
    "WnmfConfig",
    "AnnealSchedule",
    "AnnealStage",
    "BmfReport",
    "SingleViewOp",
    "NonFiniteIterateError",
    "wnmf_init",
    "wnmf_step",
    "wnmf_solve",
    "sigmoid_relax",
    "float2binary",
    "threshold_objective",
    "threshold_gradient",
    "threshold_search",
    "bmf_solve",
    "write_trace_csv",
]


class NonFiniteIterateError(RuntimeError):
    """Raised when an iterate or gradient stops being finite."""

    def __init__(self, iteration: int):
        super().__init__(f"non-finite values encountered at iteration {iteration}")
        self.iteration = iteration


@dataclass(frozen=True)
class WnmfConfig:
    """Knobs of the relaxed multiplicative-update stage."""

    lambda1: float = 1e-4
    lambda2: float = 1e-4
    max_iters: int = 2000
    tol: float = 1e-7
    tol_window: int = 5
    epsilon: float = 1e-12
    seed: int = 0

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("regularizer weights must be nonnegative")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.tol <= 0 or self.epsilon <= 0:
            raise ValueError("tol and epsilon must be positive")
        if self.tol_window < 1:
            raise ValueError(f"tol_window must be >= 1, got {self.tol_window}")


@dataclass(frozen=True)
class AnnealSchedule:
    """Sigmoid steepness sweep and threshold-search settings.

    anneal_input selects what each stage thresholds and re-maps through the
    sigmoid: "initial" (default) always works on the relaxed factors, so the
    searched thresholds and the values they cut live in one domain;
    "previous" chains the sigmoid through the previous iterate instead.
    """

    a_values: tuple[float, ...] = (5.0, 10.0, 20.0, 40.0, 80.0, 160.0)
    inner_max_iters: int = 200
    learn_rate: float = 0.05
    thresh_init: tuple[float, float] = (0.5, 0.5)
    anneal_input: str = "initial"
    seed_quantiles: int = 9

    def __post_init__(self):
        if not self.a_values:
            raise ValueError("a_values must be nonempty")
        if any(a <= 0 for a in self.a_values):
            raise ValueError("a_values must be positive")
        if any(b <= a for a, b in zip(self.a_values, self.a_values[1:])):
            raise ValueError("a_values must be strictly increasing")
        if self.inner_max_iters < 1:
            raise ValueError("inner_max_iters must be >= 1")
        if self.learn_rate <= 0:
            raise ValueError("learn_rate must be positive")
        if self.seed_quantiles < 2:
            raise ValueError("seed_quantiles must be >= 2")
        if self.anneal_input not in ("previous", "initial"):
            raise ValueError(
                f"anneal_input must be 'previous' or 'initial', got {self.anneal_input!r}"
            )


@dataclass
class AnnealStage:
    """Diagnostics of one steepness stage."""

    a: float
    w_thresh: float
    h_thresh: float
    objective: float


@dataclass(eq=False)
class BmfReport:
    """Outcome of bmf_solve: best restart's traces and final metrics."""

    rms: float
    objective_trace: list[float]
    rms_trace: list[float]
    stages: list[AnnealStage]
    thresholds: tuple[float, float]
    restarts: int
    best_restart: int
    per_restart_rms: list[float]
    rendered: np.ndarray


class SingleViewOp:
    """Head-on observation: high-res image = outer(w, h), block-averaged.

    w is the high-res row profile (length rows*scale), h the column profile;
    margins never enter the averaging window at zero shift, so the operator
    works directly on unpadded profiles.
    """

    def __init__(self, down: DownsampleOp, lo_shape: tuple[int, int]):
        rows, cols = lo_shape
        self.scale = down.scale
        self.m = rows * down.scale
        self.n = cols * down.scale
        self.target_shape = (rows, cols)

    def _blocksum(self, v: np.ndarray, count: int) -> np.ndarray:
        return v.reshape(count, self.scale).sum(axis=1)

    def render(self, w: np.ndarray, h: np.ndarray) -> np.ndarray:
        bw = self._blocksum(w, self.target_shape[0])
        bh = self._blocksum(h, self.target_shape[1])
        return np.outer(bw, bh) / (self.scale * self.scale)

    def backproject_w(self, y: np.ndarray, h: np.ndarray) -> np.ndarray:
        bh = self._blocksum(h, self.target_shape[1])
        return np.repeat(y @ bh, self.scale) / (self.scale * self.scale)

    def backproject_h(self, y: np.ndarray, w: np.ndarray) -> np.ndarray:
        bw = self._blocksum(w, self.target_shape[0])
        return np.repeat(bw @ y, self.scale) / (self.scale * self.scale)

    def render_many(self, ws: np.ndarray, hs: np.ndarray) -> np.ndarray:
        """render for every (row of ws) x (row of hs); shape (Cw, Ch, rows, cols)."""
        p, q = self.target_shape
        bw = ws.reshape(ws.shape[0], p, self.scale).sum(axis=2)
        bh = hs.reshape(hs.shape[0], q, self.scale).sum(axis=2)
        return bw[:, None, :, None] * bh[None, :, None, :] / (self.scale * self.scale)


def as_operator(op, target) -> object:
    """Promote a DownsampleOp to the single-view operator; pass others through."""
    if isinstance(op, DownsampleOp):
        return SingleViewOp(op, _values(target).shape)
    return op


def wnmf_init(m: int, n: int, seed) -> FactorPair:
    """Uniform(0.25, 0.75) starting factors, deterministic per seed."""
    if m < 1 or n < 1:
        raise ValueError(f"factor lengths must be >= 1, got m={m}, n={n}")
    rng = np.random.default_rng(seed)
    return FactorPair(rng.uniform(0.25, 0.75, m), rng.uniform(0.25, 0.75, n), "relaxed")


def _update_pair(w, h, target_v, m2, m2v, op, cfg):
    """One multiplicative update of w, then of h with the fresh w."""
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        rendered = op.render(w, h)
        num = op.backproject_w(m2v, h)
        den = op.backproject_w(m2 * rendered, h) + 2.0 * cfg.lambda1 * w + cfg.epsilon
        w = w * (num / den)
        rendered = op.render(w, h)
        num = op.backproject_h(m2v, w)
        den = op.backproject_h(m2 * rendered, w) + 2.0 * cfg.lambda2 * h + cfg.epsilon
        h = h * (num / den)
    return w, h


def wnmf_step(pair: FactorPair, target, mask, op, cfg: WnmfConfig) -> FactorPair:
    """Apply the multiplicative update once and return the new relaxed pair."""
    v = _values(target)
    c = _weights(mask)
    op = as_operator(op, v)
    m2 = c * c
    w, h = _update_pair(pair.w, pair.h, v, m2, m2 * v, op, cfg)
    if not (np.isfinite(w).all() and np.isfinite(h).all()):
        raise NonFiniteIterateError(1)
    return FactorPair(w, h, "relaxed")


def _solve_arrays(v, c, op, cfg, w, h):
    """Iterate updates until the windowed relative objective change drops below tol.

    Returns (w, h, objective trace, rms trace); trace[0] is the initial value.
    """
    m2 = c * c
    m2v = m2 * v
    objs: list[float] = []
    rmss: list[float] = []
    for k in range(cfg.max_iters + 1):
        rendered = op.render(w, h)
        if not np.isfinite(rendered).all():
            raise NonFiniteIterateError(k)
        resid = v - rendered
        objs.append(
            0.5 * float(np.sum((c * resid) ** 2))
            + cfg.lambda1 * float(w @ w)
            + cfg.lambda2 * float(h @ h)
        )
        rmss.append(float(np.sqrt(np.mean(resid**2))))
        if k == cfg.max_iters:
            break
        if k >= cfg.tol_window:
            f_old, f_new = objs[k - cfg.tol_window], objs[k]
            if f_old - f_new < cfg.tol * max(abs(f_old), 1e-300):
                break
        w, h = _update_pair(w, h, v, m2, m2v, op, cfg)
        if not (np.isfinite(w).all() and np.isfinite(h).all()):
            raise NonFiniteIterateError(k + 1)
    return w, h, objs, rmss


def wnmf_solve(target, mask, op, cfg: WnmfConfig) -> tuple[FactorPair, list[float]]:
    """Run the relaxed stage from a seeded random start; trace is the objective."""
    v = _values(target)
    c = _weights(mask)
    op = as_operator(op, v)
    pair0 = wnmf_init(op.m, op.n, cfg.seed)
    w, h, objs, _ = _solve_arrays(v, c, op, cfg, pair0.w, pair0.h)
    return FactorPair(w, h, "relaxed"), objs


def sigmoid_relax(v: np.ndarray, a: float, thresh: float) -> np.ndarray:
    """Element-wise logistic 1/(1 + exp(-a*(v - thresh))), overflow-safe."""
    if a <= 0:
        raise ValueError(f"steepness a must be positive, got {a}")
    z = np.clip(a * (np.asarray(v, dtype=np.float64) - thresh), -500.0, 500.0)
    return 1.0 / (1.0 + np.exp(-z))


def float2binary(v: np.ndarray, thresh: float) -> np.ndarray:
    """Hard threshold: entry >= thresh maps to 1, else 0."""
    return (np.asarray(v, dtype=np.float64) >= thresh).astype(np.float64)


def threshold_objective(pair: FactorPair, target, mask, op, a: float,
                        thresholds: tuple[float, float]) -> float:
    """Masked squared residual with both factors passed through the sigmoid."""
    v = _values(target)
    c = _weights(mask)
    op = as_operator(op, v)
    pw = sigmoid_relax(pair.w, a, thresholds[0])
    ph = sigmoid_relax(pair.h, a, thresholds[1])
    resid = v - op.render(pw, ph)
    return 0.5 * float(np.sum((c * resid) ** 2))


def threshold_gradient(pair: FactorPair, target, mask, op, a: float,
                       thresholds: tuple[float, float]) -> tuple[float, float]:
    """Analytic gradient of threshold_objective w.r.t. the two thresholds."""
    v = _values(target)
    c = _weights(mask)
    op = as_operator(op, v)
    pw = sigmoid_relax(pair.w, a, thresholds[0])
    ph = sigmoid_relax(pair.h, a, thresholds[1])
    m2r = (c * c) * (v - op.render(pw, ph))
    g_tw = a * float(np.sum(op.backproject_w(m2r, ph) * pw * (1.0 - pw)))
    g_th = a * float(np.sum(op.backproject_h(m2r, pw) * ph * (1.0 - ph)))
    return g_tw, g_th


def _cut_points(v: np.ndarray) -> np.ndarray:
    """Every threshold that yields a distinct binarization of v.

    Midpoints between consecutive sorted values plus one cut beyond each
    extreme; never at a value, so no entry sits on the sigmoid midpoint.
    """
    u = np.unique(v)
    span = float(u[-1] - u[0]) + 1e-3
    return np.concatenate([[u[0] - 0.05 * span], 0.5 * (u[:-1] + u[1:]),
                           [u[-1] + 0.05 * span]])


def _sigmoid_rows(v: np.ndarray, a: float, cuts: np.ndarray) -> np.ndarray:
    """Row c of the result is sigmoid_relax(v, a, cuts[c])."""
    z = np.clip(a * (v[None, :] - cuts[:, None]), -500.0, 500.0)
    return 1.0 / (1.0 + np.exp(-z))


def _scan_objectives(op, v, m2, pw: np.ndarray, ph: np.ndarray) -> np.ndarray:
    """Masked objective for every (row of pw) x (row of ph) candidate pair."""
    if hasattr(op, "render_many"):
        rendered = op.render_many(pw, ph)
        resid = v.reshape((1, 1) + v.shape) - rendered
        axes = tuple(range(2, resid.ndim))
        return 0.5 * np.sum(m2 * resid**2, axis=axes)
    out = np.empty((pw.shape[0], ph.shape[0]))
    for i in range(pw.shape[0]):
        for j in range(ph.shape[0]):
            resid = v - op.render(pw[i], ph[j])
            out[i, j] = 0.5 * float(np.sum(m2 * resid**2))
    return out


def _scan_thresholds(pair: FactorPair, v, m2, op, a, init, quantiles: int):
    """Coarse-to-fine scan over the cut-point grid; returns the best pair found.

    ``a`` is the sigmoid steepness; ``a=None`` evaluates the steep limit, the
    hard cut itself. Each round evaluates a subsampled (quantiles+2)^2 block
    of the full cut grid around the incumbent, so the scan converges to the
    best full-grid pair in a few rounds without ever evaluating the whole
    product grid.
    """

    def rows(values: np.ndarray, cuts: np.ndarray) -> np.ndarray:
        if a is None:
            return (values[None, :] >= cuts[:, None]).astype(np.float64)
        return _sigmoid_rows(values, a, cuts)

    cuts_w = _cut_points(pair.w)
    cuts_h = _cut_points(pair.h)
    lo_w, hi_w = 0, len(cuts_w) - 1
    lo_h, hi_h = 0, len(cuts_h) - 1
    best = (np.inf, float(init[0]), float(init[1]))
    for _ in range(8):
        idx_w = np.unique(np.linspace(lo_w, hi_w, quantiles + 2).round().astype(int))
        idx_h = np.unique(np.linspace(lo_h, hi_h, quantiles + 2).round().astype(int))
        cand_w = np.append(cuts_w[idx_w], best[1])
        cand_h = np.append(cuts_h[idx_h], best[2])
        objs = _scan_objectives(op, v, m2, rows(pair.w, cand_w), rows(pair.h, cand_h))
        i, j = np.unravel_index(int(objs.argmin()), objs.shape)
        if objs[i, j] < best[0]:
            best = (float(objs[i, j]), float(cand_w[i]), float(cand_h[j]))
        done_w = hi_w - lo_w <= quantiles
        done_h = hi_h - lo_h <= quantiles
        if done_w and done_h:
            break
        # zoom toward the incumbent's neighborhood on the full cut grid
        ci = int(np.searchsorted(cuts_w, best[1]))
        cj = int(np.searchsorted(cuts_h, best[2]))
        step_w = max(1, (hi_w - lo_w) // (quantiles + 1))
        step_h = max(1, (hi_h - lo_h) // (quantiles + 1))
        lo_w, hi_w = max(0, ci - step_w), min(len(cuts_w) - 1, ci + step_w)
        lo_h, hi_h = max(0, cj - step_h), min(len(cuts_h) - 1, cj + step_h)
    return best[1], best[2], best[0]


def threshold_search(pair: FactorPair, target, mask, op, a: float,
                     sched: AnnealSchedule,
                     init: tuple[float, float] | None = None) -> tuple[float, float]:
    """Descend the sigmoid-relaxed residual over the scalar threshold pair.

    The descent is seeded from the best of a deterministic coarse-to-fine
    scan over cut-point candidates (plus the warm start), because the
    smoothed landscape is flat wherever the sigmoid saturates and a single
    start routinely stalls there. Backtracking halves the step while the
    objective would increase; stops on gradient norm < 1e-8, a dead step, or
    inner_max_iters.
    """
    v = _values(target)
    c = _weights(mask)
    opn = as_operator(op, v)
    m2 = c * c
    tw0, th0 = init if init is not None else sched.thresh_init
    f0 = threshold_objective(pair, target, mask, opn, a, (tw0, th0))
    tw, th, f = _scan_thresholds(pair, v, m2, opn, a, (tw0, th0), sched.seed_quantiles)
    if f0 <= f:
        tw, th, f = float(tw0), float(th0), f0
    op = opn
    for _ in range(sched.inner_max_iters):
        g_tw, g_th = threshold_gradient(pair, target, mask, op, a, (tw, th))
        if not (math.isfinite(g_tw) and math.isfinite(g_th)):
            raise NonFiniteIterateError(0)
        if math.hypot(g_tw, g_th) < 1e-8:
            break
        lr = sched.learn_rate
        moved = False
        while lr >= 1e-12:
            cand = (tw - lr * g_tw, th - lr * g_th)
            f_cand = threshold_objective(pair, target, mask, op, a, cand)
            if f_cand <= f:
                tw, th = cand
                f = f_cand
                moved = True
                break
            lr *= 0.5
        if not moved:
            break
    return tw, th


def bmf_solve(target, mask, op, cfg: WnmfConfig, sched: AnnealSchedule,
              restarts: int = 8) -> tuple[FactorPair, BmfReport]:
    """Full binary factorization: relaxed solve, annealed thresholding, best of restarts.

    Restart i initializes from default_rng([cfg.seed, i]); the candidate with
    the lowest final RMS wins (first such restart on ties), so results are
    bit-identical for identical inputs and configuration.
    """
    if restarts < 1:
        raise ValueError(f"restarts must be >= 1, got {restarts}")
    v = _values(target)
    c = _weights(mask)
    opn = as_operator(op, v)
    best = None
    per_restart_rms: list[float] = []
    for i in range(restarts):
        pair0 = wnmf_init(opn.m, opn.n, [cfg.seed, i])
        w, h, objs, rmss = _solve_arrays(v, c, opn, cfg, pair0.w, pair0.h)
        relaxed = FactorPair(w, h, "relaxed")
        cur_w, cur_h = w, h
        thresholds = tuple(sched.thresh_init)
        stages: list[AnnealStage] = []
        base = relaxed
        for a in sched.a_values:
            if sched.anneal_input == "previous":
                base = FactorPair(cur_w, cur_h, "relaxed")
            else:
                base = relaxed
            thresholds = threshold_search(base, v, c, opn, a, sched, init=thresholds)
            cur_w = sigmoid_relax(base.w, a, thresholds[0])
            cur_h = sigmoid_relax(base.h, a, thresholds[1])
            resid = v - opn.render(cur_w, cur_h)
            stages.append(
                AnnealStage(a, thresholds[0], thresholds[1],
                            0.5 * float(np.sum((c * resid) ** 2)))
            )
        # hard binarization is the steep limit of the schedule: pick the final
        # float2binary threshold pair by the same masked residual, evaluated
        # on hard cuts, warm-started at the annealed thresholds. The sigmoid
        # is monotone, so cutting the stage input at t equals cutting the
        # squashed factors at their 0.5 midpoint, and this stays exact even
        # where the final sigmoid is not yet saturated.
        tw, th, _ = _scan_thresholds(base, v, c * c, opn, None, thresholds,
                                     sched.seed_quantiles)
        thresholds = (tw, th)
        wb = float2binary(base.w, thresholds[0])
        hb = float2binary(base.h, thresholds[1])
        rendered = opn.render(wb, hb)
        rms = float(np.sqrt(np.mean((v - rendered) ** 2)))
        per_restart_rms.append(rms)
        if best is None or rms < best[0]:
            best = (rms, i, wb, hb, rendered, objs, rmss, stages, thresholds)
    rms, idx, wb, hb, rendered, objs, rmss, stages, thresholds = best
    report = BmfReport(
        rms=rms,
        objective_trace=objs,
        rms_trace=rmss,
        stages=stages,
        thresholds=(float(thresholds[0]), float(thresholds[1])),
        restarts=restarts,
        best_restart=idx,
        per_restart_rms=per_restart_rms,
        rendered=rendered,
    )
    return FactorPair(wb, hb, "binary"), report


def write_trace_csv(path, objectives, rms=None) -> None:
    """Plain-text trace export: one ``iteration,objective,rms`` row per iterate."""
    lines = ["iteration,objective,rms"]
    for k, obj in enumerate(objectives):
        r = "" if rms is None else repr(float(rms[k]))
        lines.append(f"{k},{obj!r},{r}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
