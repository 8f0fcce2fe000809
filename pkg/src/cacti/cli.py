"""Command-line interface.

Exit codes:
  0   success
  1   unexpected failure
  2   usage error (unknown flag, bad argument syntax)
  3   input file not found
  4   configuration violation (bad value, missing seed)
  5   infeasible measurement (nonzero data at uncoded pixels, with --strict)
  10  CCV1 file has a bad magic number
  11  CCV1 file is truncated
  12  CCV1 header dimensions are zero or too large
  13  CCV1 file has trailing bytes
"""

import argparse
import os
import sys
import warnings

import numpy as np

from . import analysis
from .calibration import (
    interior_channels,
    load_stack,
    save_stack,
    simulate_calibration_stack,
    subset_operator,
)
from .ccv1 import CCV1FormatError, read_ccv1, write_ccv1, write_pgm
from .config import ConfigError, RunConfig
from .forward_model import build_operator, forward, generate_mask
from .gap import InfeasibleMeasurementWarning, normalized_residual, solve, write_history_csv
from .scenes import generate_scene

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_MISSING_FILE = 3
EXIT_CONFIG = 4
EXIT_INFEASIBLE = 5


class InfeasibleError(RuntimeError):
    pass


def _config_path(path):
    return str(path) + ".cfg"


def _load_config(args, fallback=None):
    path = getattr(args, "config", None) or fallback
    if path and os.path.exists(path):
        cfg = RunConfig.load(path)
    elif getattr(args, "config", None):
        raise FileNotFoundError(args.config)
    else:
        cfg = RunConfig()
    seed = getattr(args, "seed", None)
    if seed is not None:
        for key in ("scene.seed", "mask.seed", "noise.seed"):
            if cfg.values.get(key) is None:
                cfg.values[key] = seed
    overrides = {
        "scene.kind": getattr(args, "scene", None),
        "scene.rows": getattr(args, "rows", None),
        "scene.cols": getattr(args, "cols", None),
        "scene.frames": getattr(args, "frames", None),
        "scene.seed": getattr(args, "scene_seed", None),
        "mask.seed": getattr(args, "mask_seed", None),
        "mask.fill": getattr(args, "fill", None),
        "mask.upsample": getattr(args, "upsample", None),
        "motion.C": getattr(args, "C", None),
        "motion.d": getattr(args, "d", None),
        "noise.kind": "gaussian" if getattr(args, "noise_sigma", None) else None,
        "noise.sigma": getattr(args, "noise_sigma", None),
        "noise.seed": getattr(args, "noise_seed", None),
        "solver.transform": getattr(args, "transform", None),
        "solver.partition": getattr(args, "partition", None),
        "solver.block": getattr(args, "block", None),
        "solver.radius_rule": getattr(args, "radius_rule", None),
        "solver.max_iterations": getattr(args, "max_iterations", None),
        "solver.stop_tolerance": getattr(args, "tol", None),
    }
    return cfg.update(overrides)


def _operator_from_config(cfg):
    mask = cfg.mask()
    return build_operator(mask, cfg.profile(), cfg["scene.rows"], cfg["scene.cols"]), mask


def _parse_channels(text, n):
    """``"all"``, ``"a:b[:step]"``, ``"interior:k"`` or a comma list."""
    if text in (None, "all"):
        return np.arange(n)
    if text.startswith("interior:"):
        return np.arange(int(text.split(":", 1)[1]), n - int(text.split(":", 1)[1]))
    if ":" in text:
        parts = [int(p) if p else None for p in text.split(":")]
        return np.arange(n)[slice(*parts)]
    return np.array([int(p) for p in text.split(",")])


def cmd_simulate(args):
    cfg = _load_config(args)
    spec = cfg.scene_spec()
    if spec.frames != cfg.n_frames():
        raise ConfigError(f"scene has {spec.frames} frames but C/d gives {cfg.n_frames()} channels")
    cube = generate_scene(spec)
    op, mask = _operator_from_config(cfg)
    g = forward(op, cube, cfg.noise())
    cfg.update({"output.snapshot": args.out, "output.truth": args.truth, "output.mask": args.mask_out})
    write_ccv1(args.out, g)
    if args.truth:
        write_ccv1(args.truth, cube)
    if args.mask_out:
        write_ccv1(args.mask_out, mask.values)
    cfg.save(_config_path(args.out))
    print(f"wrote {args.out} ({g.shape[0]}x{g.shape[1]}, {op.n_frames} coded frames)")


def cmd_calibrate(args):
    cfg = _load_config(args)
    mask = cfg.mask()
    stack = simulate_calibration_stack(
        mask,
        cfg.profile(),
        cfg["scene.rows"],
        cfg["scene.cols"],
        jitter_rms=args.jitter,
        blur_width=args.blur,
        seed=args.jitter_seed if args.jitter_seed is not None else cfg["mask.seed"],
    )
    save_stack(stack, args.out)
    cfg.save(_config_path(args.out))
    print(f"wrote {args.out} ({len(stack)} planes)")


def cmd_reconstruct(args):
    if not os.path.exists(args.snapshot):
        raise FileNotFoundError(args.snapshot)
    cfg = _load_config(args, fallback=_config_path(args.snapshot))
    g = read_ccv1(args.snapshot)[:, :, 0].astype(np.float64)
    if args.stack:
        if not os.path.exists(args.stack):
            raise FileNotFoundError(args.stack)
        stack = load_stack(args.stack)
        if args.drop is not None:
            channels = interior_channels(stack, args.drop)
        else:
            channels = _parse_channels(args.channels, len(stack))
        op = subset_operator(stack, channels)
    else:
        op, _ = _operator_from_config(cfg)
    if g.shape != op.snapshot_shape:
        raise ConfigError(f"snapshot {g.shape} does not match operator area {op.snapshot_shape}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        if args.strict:
            # later filters take precedence, so this one goes last
            warnings.simplefilter("error", InfeasibleMeasurementWarning)
        try:
            f, state = solve(op, g, cfg.solver(), log=sys.stderr if args.verbose else None)
        except InfeasibleMeasurementWarning as exc:
            raise InfeasibleError(str(exc)) from None
    if state.infeasible_pixels:
        print(
            f"cacti: warning: {state.infeasible_pixels} pixel(s) have zero code but nonzero "
            "measurement; they were left out of the fit",
            file=sys.stderr,
        )
    out = args.out or os.path.splitext(args.snapshot)[0] + ".estimate.ccv1"
    write_ccv1(out, f)
    cfg.save(_config_path(out))
    if args.history:
        write_history_csv(state, args.history)
    if args.pgm_dir:
        os.makedirs(args.pgm_dir, exist_ok=True)
        peak = float(f.max())
        for k in range(f.shape[2]):
            write_pgm(os.path.join(args.pgm_dir, f"frame_{k:04d}.pgm"), f[:, :, k], peak)
    res = state.residual_history[-1]
    print(
        f"wrote {out} ({f.shape[2]} frames, {state.iteration} iterations, {state.status}, "
        f"sparse-iterate residual {res:.4e})"
    )


def cmd_evaluate(args):
    for path in (args.truth, args.estimate):
        if not os.path.exists(path):
            raise FileNotFoundError(path)
    truth = read_ccv1(args.truth).astype(np.float64)
    estimate = read_ccv1(args.estimate).astype(np.float64)
    report = analysis.evaluate(truth, estimate, peak=args.peak)
    if args.snapshot:
        cfg = _load_config(args, fallback=_config_path(args.snapshot))
        op, _ = _operator_from_config(cfg)
        g = read_ccv1(args.snapshot)[:, :, 0].astype(np.float64)
        report.residual = normalized_residual(op, estimate, g)
    if args.out:
        report.write_csv(args.out)
        with open(args.out + ".txt", "w") as fh:
            fh.write(report.summary())
    sys.stdout.write(report.summary())


def cmd_sweep(args):
    cfg = _load_config(args)
    spec = cfg.scene_spec()
    mask = generate_mask(cfg["scene.rows"], cfg["scene.cols"], cfg["mask.fill"], cfg.require("mask.seed"))
    solver = cfg.solver()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        if args.kind == "residual":
            d_list = [float(x) for x in args.d_list.split(",")]
            table = analysis.residual_vs_nf_sweep(spec, mask, cfg["motion.C"], d_list, solver)
            fit = None
        else:
            C_list = [int(x) for x in args.C_list.split(",")]
            table, fit = analysis.runtime_vs_nf_sweep(
                spec, mask, C_list, solver, iterations=args.iterations, repeats=args.repeats
            )
    if args.out:
        analysis.write_table(table, args.out)
        cfg.save(_config_path(args.out))
    for row in table:
        print(" ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()))
    if fit is not None:
        print(f"linear fit: slope={fit.slope:.6g} intercept={fit.intercept:.6g} r2={fit.r_squared:.4f}")


def cmd_compare_coding(args):
    cfg = _load_config(args)
    C = int(round(cfg["motion.C"]))
    spec = cfg.scene_spec()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        result = analysis.coding_strategy_compare(
            spec, C, cfg.require("mask.seed"), cfg.solver(), cfg["mask.fill"], truth=args.truth
        )
    if args.out:
        analysis.write_table(result.rows(), args.out)
        cfg.save(_config_path(args.out))
    print(f"translated mean PSNR = {np.mean(result.translated_psnr):.3f} dB")
    print(f"re-randomized mean PSNR = {np.mean(result.rerandomized_psnr):.3f} dB")
    print(f"baseline mean PSNR = {np.mean(result.translated_baseline_psnr):.3f} dB")
    print(f"mean gap (translated - re-randomized) = {result.mean_gap:.3f} dB")


def cmd_spectrum_check(args):
    rng = np.random.Generator(np.random.PCG64(args.seed))
    video = rng.random((args.n, args.n))
    code = np.ones(args.n) if args.code == "ones" else (rng.random(args.n) < 0.5).astype(float)
    report = analysis.temporal_spectrum_check(
        video, code, args.velocity, pixel_width=args.pixel_width, integration=args.integration
    )
    print(f"max relative discrepancy = {report.discrepancy:.3e}")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cacti",
        description="Coded aperture compressive temporal imaging: simulate and reconstruct.",
        epilog=__doc__.split("\n", 2)[2],
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scene=True, solver=True):
        p.add_argument("--config", help="flat key = value run configuration")
        p.add_argument("--seed", type=int, help="default for every unset seed")
        p.add_argument("--C", type=float, help="mask travel per exposure (pixels)")
        p.add_argument("--d", type=float, help="travel between temporal channels (pixels)")
        p.add_argument("--mask-seed", type=int)
        p.add_argument("--fill", type=float)
        p.add_argument("--upsample", type=int)
        if scene:
            p.add_argument("--scene", choices=["moving_square", "rotating_spokes", "two_blobs", "static_target"])
            p.add_argument("--rows", type=int)
            p.add_argument("--cols", type=int)
            p.add_argument("--frames", type=int)
            p.add_argument("--scene-seed", type=int)
        if solver:
            p.add_argument("--transform", help="comma list of dct/haar/identity per axis")
            p.add_argument("--partition", choices=["block", "singleton"])
            p.add_argument("--block", help="group block shape, e.g. 2,2,2")
            p.add_argument("--radius-rule", choices=["nondecreasing", "adaptive"])
            p.add_argument("--max-iterations", type=int)
            p.add_argument("--tol", type=float)

    p = sub.add_parser("simulate", help="scene + mask + motion -> snapshot and truth cube")
    common(p, solver=False)
    p.add_argument("--noise-sigma", type=float)
    p.add_argument("--noise-seed", type=int)
    p.add_argument("--out", required=True, help="snapshot CCV1 path")
    p.add_argument("--truth", help="ground-truth cube CCV1 path")
    p.add_argument("--mask-out", help="mask CCV1 path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", help="mask + motion -> calibration stack")
    common(p, solver=False)
    p.add_argument("--jitter", type=float, default=0.0, help="RMS shift jitter (pixels)")
    p.add_argument("--jitter-seed", type=int)
    p.add_argument("--blur", type=float, default=0.0, help="Gaussian blur width (pixels)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("reconstruct", help="snapshot + operator -> estimated cube")
    p.add_argument("snapshot")
    common(p)
    p.add_argument("--stack", help="calibration stack to draw the operator from")
    p.add_argument("--channels", help="all | a:b[:step] | interior:k | i,j,k")
    p.add_argument("--drop", type=int, help="drop this many channels from each end of the stack")
    p.add_argument("--out")
    p.add_argument("--history", help="iteration history CSV")
    p.add_argument("--pgm-dir", help="write 8-bit PGM frames here")
    p.add_argument("--verbose", action="store_true")
    p.add_argument("--strict", action="store_true", help="fail (exit 5) on infeasible measurements")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("evaluate", help="truth + estimate -> PSNR/residual CSV")
    p.add_argument("--truth", required=True)
    p.add_argument("--estimate", required=True)
    p.add_argument("--snapshot", help="also report the data residual")
    p.add_argument("--config")
    p.add_argument("--peak", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="residual or runtime against the number of frames")
    common(p)
    p.add_argument("--kind", choices=["residual", "runtime"], default="residual")
    p.add_argument("--d-list", default="7,2,1,0.5")
    p.add_argument("--C-list", default="7,14,28,56")
    p.add_argument("--iterations", type=int, default=20)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare-coding", help="translated vs re-randomized coding")
    common(p)
    p.add_argument("--truth", choices=["synthetic", "from-recon"], default="synthetic")
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare_coding)

    p = sub.add_parser("spectrum-check", help="discrete temporal-spectrum identity")
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--velocity", type=int, default=1)
    p.add_argument("--code", choices=["random", "ones"], default="random")
    p.add_argument("--pixel-width", type=int, default=1)
    p.add_argument("--integration", type=int, default=1)
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=cmd_spectrum_check)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        args.func(args)
    except FileNotFoundError as exc:
        print(f"cacti: error: file not found: {exc.filename or exc}", file=sys.stderr)
        return EXIT_MISSING_FILE
    except CCV1FormatError as exc:
        print(f"cacti: error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"cacti: error: config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleError as exc:
        print(f"cacti: error: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ValueError as exc:
        print(f"cacti: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        print(f"cacti: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
