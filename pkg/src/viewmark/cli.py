"""Command-line pipeline: encode, solve, render, decode, angles.

Every command writes the fully resolved manifest next to its outputs, so any
output directory can be reproduced byte for byte from its own manifest.
Exit status: 0 on success, 1 when a bound declared in the manifest is
violated (or a combo solve fails), 2 on usage/contract errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from ._version import __version__
from . import designer, optics
from .designer import (
    ComboCache,
    binarize_at_midpoint,
    load_stack,
    make_test_stack,
    save_stack,
    solve_all_combos,
    write_combo_report,
)
from .geometry import CellSpec, ViewSpec, default_margin
from .imaging import GrayTarget, render_view, rms_error
from .manifest import RunManifest
from .pgm import (
    float_to_image,
    image_to_float,
    image_to_layer,
    layer_to_image,
    read_pgm,
    write_pgm,
)

__all__ = ["main"]

JOBS_ENV = "VIEWMARK_JOBS"


def _resolve_manifest(args) -> RunManifest:
    """Load or default the manifest, then apply command-line overrides."""
    if getattr(args, "manifest", None):
        m = RunManifest.load(args.manifest)
    else:
        m = RunManifest()
    if getattr(args, "grid", None):
        view = ViewSpec(grid_k=args.grid, shift_step=m.view.shift_step)
        cell = CellSpec(
            scale=m.cell.scale, margin=default_margin(args.grid, m.view.shift_step)
        )
        m = replace(m, view=view, cell=cell)
    if getattr(args, "scale", None):
        m = replace(m, cell=CellSpec(scale=args.scale, margin=m.cell.margin))
    if getattr(args, "levels", None):
        low, high = (float(x) for x in args.levels.split(","))
        m = replace(m, level_low=low, level_high=high)
    if getattr(args, "seed", None) is not None:
        m = replace(m, solver=replace(m.solver, seed=args.seed))
    if getattr(args, "restarts", None):
        m = replace(m, restarts=args.restarts)
    if getattr(args, "jobs", None):
        m = replace(m, jobs=args.jobs)
    return m


def _job_count(m: RunManifest) -> int:
    if m.jobs is not None:
        return max(1, m.jobs)
    env = os.environ.get(JOBS_ENV)
    if env:
        return max(1, int(env))
    return 1


def _out_dir(args) -> str:
    os.makedirs(args.out, exist_ok=True)
    return args.out


def cmd_encode(args) -> int:
    m = _resolve_manifest(args)
    out = _out_dir(args)
    if args.images:
        if len(args.images) != m.view.n_views:
            raise ValueError(
                f"expected {m.view.n_views} view images for grid "
                f"{m.view.grid_k}x{m.view.grid_k}, got {len(args.images)}"
            )
        mats, shapes = [], {}
        for path in args.images:
            img = read_pgm(path)
            vals = np.unique(img)
            if not np.isin(vals, (0, 255)).all():
                raise ValueError(
                    f"{path}: non-binary input pixels {vals.tolist()} "
                    "(expected only 0 and 255)"
                )
            mats.append((img > 0).astype(np.uint8))
            shapes.setdefault(img.shape, []).append(path)
        if len(shapes) > 1:
            detail = "; ".join(
                f"{r}x{c}: {', '.join(paths)}" for (r, c), paths in sorted(shapes.items())
            )
            raise ValueError(f"view images disagree in size ({detail})")
        stack = designer.ViewTargetStack.from_bits(
            np.stack(mats), m.view, m.level_low, m.level_high
        )
        if args.finders:
            stack = designer.stamp_finder_patterns(stack)
    else:
        stack = make_test_stack(
            args.generator,
            args.code_size,
            m.view,
            levels=m.levels,
            seed=m.solver.seed,
            finders=args.finders,
        )
    stack_path = os.path.join(out, "stack.json")
    save_stack(stack, stack_path)
    m.with_paths(stack_path=stack_path).save(os.path.join(out, "manifest.json"))
    rows, cols = stack.code_shape
    print(f"wrote {stack.view.n_views}-view {rows}x{cols} stack to {stack_path}")
    return 0


def _load_or_solve_cache(m: RunManifest, needed, jobs: int) -> ComboCache:
    cache = None
    if m.cache_path and os.path.isdir(m.cache_path):
        cache = ComboCache.load(m.cache_path)
        expected = {
            "scale": m.cell.scale,
            "margin": m.cell.margin,
            "grid_k": m.view.grid_k,
            "shift_step": m.view.shift_step,
            "level_low": m.level_low,
            "level_high": m.level_high,
        }
        if cache.config_key() != expected:
            raise ValueError(
                f"cache at {m.cache_path} was solved with {cache.config_key()}, "
                f"manifest expects {expected}"
            )
    missing = sorted(set(needed) - set(cache.entries if cache else ()))
    if missing:
        solved = solve_all_combos(
            m.cell,
            m.view,
            m.solver,
            m.anneal,
            levels=m.levels,
            combos=missing,
            restarts=m.restarts,
            jobs=jobs,
        )
        if cache is None:
            cache = solved
        else:
            cache.entries.update(solved.entries)
            cache.failures.update(solved.failures)
    return cache


def cmd_solve(args) -> int:
    m = _resolve_manifest(args)
    if getattr(args, "cache", None):
        m = m.with_paths(cache_path=args.cache)
    stack_path = args.stack or m.stack_path
    if not stack_path:
        raise ValueError("no stack file: pass --stack or a manifest with paths.stack")
    stack = load_stack(stack_path)
    if stack.view.grid_k != m.view.grid_k or stack.view.shift_step != m.view.shift_step:
        raise ValueError(
            f"stack view grid {stack.view.grid_k} (step {stack.view.shift_step}) "
            f"does not match manifest {m.view.grid_k} (step {m.view.shift_step})"
        )
    if (stack.level_low, stack.level_high) != m.levels:
        raise ValueError(
            f"stack levels {stack.level_low}/{stack.level_high} do not match "
            f"manifest {m.level_low}/{m.level_high}"
        )
    out = _out_dir(args)
    jobs = _job_count(m)
    needed = sorted({int(w) for w in np.unique(stack.combo_words())})
    cache = _load_or_solve_cache(m, needed, jobs)
    if cache.failures:
        for combo, err in sorted(cache.failures.items()):
            print(f"combo {combo}: solve failed: {err}", file=sys.stderr)
    front, rear = designer.aggregate(stack, cache, m.cell)
    write_pgm(os.path.join(out, "front.pgm"), layer_to_image(front))
    write_pgm(os.path.join(out, "rear.pgm"), layer_to_image(rear))
    cache.save(os.path.join(out, "cache"))
    write_combo_report(cache, os.path.join(out, "report.csv"))
    m.with_paths(stack_path=stack_path).save(os.path.join(out, "manifest.json"))
    used_rms = [cache.entries[w].rms for w in needed]
    worst = max(used_rms) if used_rms else 0.0
    print(
        f"solved {len(needed)} combos (cache total {len(cache.entries)}); "
        f"layers {front.rows}x{front.cols}; worst combo rms {worst:.6f}"
    )
    if cache.failures:
        return 1
    if m.max_combo_rms is not None and worst > m.max_combo_rms:
        print(
            f"combo rms bound violated: {worst:.6f} > {m.max_combo_rms}",
            file=sys.stderr,
        )
        return 1
    return 0


def _view_filename(m: RunManifest, index: int) -> str:
    u, v = m.view.offset(index)
    name = f"view{index:02d}_u{u:+d}_v{v:+d}"
    if m.glass.pixel_pitch_um is not None:
        view = optics.annotate_view_angles(m.glass, m.view)
        tu, tv = view.angles[index - 1]
        name += f"_tu{tu:+.2f}_tv{tv:+.2f}"
    return name + ".pgm"


def cmd_render(args) -> int:
    m = _resolve_manifest(args)
    front = image_to_layer(read_pgm(os.path.join(args.layers, "front.pgm")), "front")
    rear = image_to_layer(read_pgm(os.path.join(args.layers, "rear.pgm")), "rear")
    if args.views == "all":
        indices = list(range(1, m.view.n_views + 1))
    else:
        indices = [int(x) for x in args.views.split(",")]
    out = _out_dir(args)
    for idx in indices:
        rendered = render_view(front, rear, m.view, idx, m.cell)
        write_pgm(os.path.join(out, _view_filename(m, idx)), float_to_image(rendered))
    m.save(os.path.join(out, "manifest.json"))
    print(f"rendered {len(indices)} view(s) to {out}")
    return 0


def _intended_bits(args, m: RunManifest):
    if getattr(args, "code", None):
        img = read_pgm(args.code)
        vals = np.unique(img)
        if not np.isin(vals, (0, 255)).all():
            raise ValueError(f"{args.code}: non-binary code pixels {vals.tolist()}")
        return (img > 0).astype(np.uint8)
    if getattr(args, "stack", None):
        if args.view is None:
            raise ValueError("--stack requires --view to pick the intended code")
        stack = load_stack(args.stack)
        return stack.bits()[args.view - 1]
    return None


def cmd_decode(args) -> int:
    m = _resolve_manifest(args)
    values = image_to_float(read_pgm(args.image))
    bits = binarize_at_midpoint(values, m.level_low, m.level_high)
    result = {
        "shape": list(values.shape),
        "midpoint": 0.5 * (m.level_low + m.level_high),
        "bits": bits.tolist(),
    }
    intended = _intended_bits(args, m)
    if intended is not None:
        if intended.shape != bits.shape:
            raise ValueError(
                f"decoded image is {bits.shape} but intended code is {intended.shape}"
            )
        hamming = int(np.sum(bits != intended))
        ber = hamming / bits.size
        target = GrayTarget.from_bits(intended, m.level_low, m.level_high)
        result.update(
            {
                "hamming": hamming,
                "bit_error_rate": ber,
                "rms": rms_error(target, values),
            }
        )
    payload = json.dumps(result, sort_keys=True)
    if args.out:
        with open(args.out, "w") as f:
            f.write(payload + "\n")
    print(payload)
    if (
        intended is not None
        and m.max_bit_error_rate is not None
        and result["bit_error_rate"] > m.max_bit_error_rate
    ):
        print(
            f"bit error rate bound violated: {result['bit_error_rate']:.4f} > "
            f"{m.max_bit_error_rate}",
            file=sys.stderr,
        )
        return 1
    return 0


def cmd_angles(args) -> int:
    m = _resolve_manifest(args)
    if m.glass.pixel_pitch_um is None:
        raise ValueError(
            "manifest glass.pixel_pitch_um is required to report physical angles"
        )
    view = optics.annotate_view_angles(m.glass, m.view)
    pitch = m.glass.pixel_pitch_um
    print("view      u      v      x_u_um      x_v_um   theta_u_deg   theta_v_deg")
    for idx, (u, v) in enumerate(view.offsets, start=1):
        tu, tv = view.angles[idx - 1]
        print(
            f"{idx:4d} {u:6d} {v:6d} {u * pitch:11.3f} {v * pitch:11.3f} "
            f"{tu:13.6f} {tv:13.6f}"
        )
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="viewmark",
        description="Two-layer parallax marker synthesis and verification.",
    )
    parser.add_argument("--version", action="version", version=f"viewmark {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, out_required=True):
        p.add_argument("--manifest", help="run manifest JSON to start from")
        p.add_argument("--scale", type=int, help="high-res pixels per code pixel side")
        p.add_argument("--grid", type=int, help="views per axis (odd)")
        p.add_argument("--levels", help="LOW,HIGH grayscale levels")
        p.add_argument("--seed", type=int, help="base random seed")
        p.add_argument("--restarts", type=int, help="solver restarts per combo")
        p.add_argument("--jobs", type=int, help=f"worker processes (default ${JOBS_ENV} or 1)")
        if out_required:
            p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("encode", help="build a view-target stack from images or a generator")
    add_common(p)
    p.add_argument("--images", nargs="+", help="one binary PGM per view, view order")
    p.add_argument("--generator", choices=("checkerboard", "random"),
                   help="built-in test pattern")
    p.add_argument("--code-size", type=int, default=21, help="code pixels per side")
    p.add_argument("--finders", action="store_true", help="stamp corner finder patterns")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("solve", help="solve combos and aggregate the two layers")
    add_common(p)
    p.add_argument("--stack", help="stack file (defaults to manifest paths.stack)")
    p.add_argument("--cache", help="reusable combo cache directory")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("render", help="render per-view low-res images of solved layers")
    add_common(p)
    p.add_argument("--layers", required=True, help="directory with front.pgm/rear.pgm")
    p.add_argument("--views", default="all", help="comma-separated view indices or 'all'")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("decode", help="binarize a rendered view and score it")
    add_common(p, out_required=False)
    p.add_argument("--image", required=True, help="rendered view PGM")
    p.add_argument("--code", help="intended code as a binary PGM")
    p.add_argument("--stack", help="stack file holding the intended codes")
    p.add_argument("--view", type=int, help="view index into --stack")
    p.add_argument("--out", help="write the metrics JSON here too")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("angles", help="print the per-view offset/angle table")
    add_common(p, out_required=False)
    p.set_defaults(func=cmd_angles)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command == "encode" and not args.images and not args.generator:
        parser.error("encode needs --images or --generator")
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
