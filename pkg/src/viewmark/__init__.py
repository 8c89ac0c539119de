"""viewmark: two-layer parallax marker synthesis and verification.

A marker prints one binary pattern on each face of a thin glass wafer; the
element-wise product the camera sees shifts with the viewing direction, and
the per-cell average of that product is a grayscale code pixel. This package
designs the two layers so that every discrete viewing direction shows its
own intended code, via weighted rank-1 NMF followed by sigmoid-annealed
binarization, and verifies the result in simulation.
"""

from ._version import __version__
from .geometry import (
    BinaryLayer,
    CellSpec,
    FactorPair,
    ViewSpec,
    default_margin,
    layer_to_vector,
    periodic_pad,
    reshape_vector_to_layer,
    view_offset_table,
)
from .optics import GlassSpec, angle_for_offset, annotate_view_angles, offset_for_angle
from .imaging import (
    DownsampleOp,
    GrayTarget,
    WeightMask,
    downsample,
    objective,
    render_view,
    rms_error,
    superpose,
    uniform_mask,
    upsample,
)
from .factorization import (
    AnnealSchedule,
    BmfReport,
    NonFiniteIterateError,
    SingleViewOp,
    WnmfConfig,
    bmf_solve,
    float2binary,
    sigmoid_relax,
    threshold_gradient,
    threshold_objective,
    threshold_search,
    wnmf_init,
    wnmf_solve,
    wnmf_step,
    write_trace_csv,
)
from .designer import (
    ComboCache,
    MultiViewCellOp,
    ViewTargetStack,
    aggregate,
    binarize_at_midpoint,
    bits_to_word,
    combo_bits,
    combo_target,
    load_stack,
    make_test_stack,
    save_stack,
    solve_all_combos,
    solve_combo,
    stamp_finder_patterns,
    write_combo_report,
)
from .manifest import RunManifest

__all__ = [
    "__version__",
    "BinaryLayer",
    "CellSpec",
    "FactorPair",
    "ViewSpec",
    "default_margin",
    "layer_to_vector",
    "periodic_pad",
    "reshape_vector_to_layer",
    "view_offset_table",
    "GlassSpec",
    "angle_for_offset",
    "annotate_view_angles",
    "offset_for_angle",
    "DownsampleOp",
    "GrayTarget",
    "WeightMask",
    "downsample",
    "objective",
    "render_view",
    "rms_error",
    "superpose",
    "uniform_mask",
    "upsample",
    "AnnealSchedule",
    "BmfReport",
    "NonFiniteIterateError",
    "SingleViewOp",
    "WnmfConfig",
    "bmf_solve",
    "float2binary",
    "sigmoid_relax",
    "threshold_gradient",
    "threshold_objective",
    "threshold_search",
    "wnmf_init",
    "wnmf_solve",
    "wnmf_step",
    "write_trace_csv",
    "ComboCache",
    "MultiViewCellOp",
    "ViewTargetStack",
    "aggregate",
    "binarize_at_midpoint",
    "bits_to_word",
    "combo_bits",
    "combo_target",
    "load_stack",
    "make_test_stack",
    "save_stack",
    "solve_all_combos",
    "solve_combo",
    "stamp_finder_patterns",
    "write_combo_report",
    "RunManifest",
]
