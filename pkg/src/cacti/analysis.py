"""Metrics, baselines and the scaled-down experiment protocols."""

import csv
import dataclasses
import statistics
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_cube, check_positive_int, check_snapshot
from .forward_model import (
    build_operator,
    build_rerandomized_operator,
    fit_mask,
    forward,
    generate_mask,
    triangle_positions,
)
from .gap import SolverConfig, normalized_residual, solve
from .scenes import SceneSpec, generate_scene

PSNR_CAP = 300.0


def psnr(reference, estimate, peak=None, return_flags=False):
    """Per-frame PSNR in dB, ``10 log10(peak**2 / MSE_k)``.

    ``peak`` defaults to the reference maximum. Frames that match exactly
    report :data:`PSNR_CAP`; ``return_flags`` adds a boolean array marking them.
    """
    ref = check_cube(reference, "reference", allow_2d=True)
    est = check_cube(estimate, "estimate", allow_2d=True)
    if ref.shape != est.shape:
        raise ValueError(f"reference {ref.shape} and estimate {est.shape} differ in shape")
    peak = float(ref.max()) if peak is None else float(peak)
    if not peak > 0:
        raise ValueError(f"peak must be > 0, got {peak}")
    mse = np.mean((ref - est) ** 2, axis=(0, 1))
    identical = mse == 0
    with np.errstate(divide="ignore"):
        values = 10.0 * np.log10(peak**2 / mse)
    values = np.where(identical, PSNR_CAP, np.minimum(values, PSNR_CAP))
    return (values, identical) if return_flags else values


def sum_frames(cube):
    """Time-integrated image an uncoded camera would record."""
    return check_cube(cube, allow_2d=True).sum(axis=2)


def baseline_replicate(g, n_frames):
    """Motion-blind estimate: every frame equals ``g / n_frames``."""
    g = check_snapshot(g)
    n_frames = check_positive_int(n_frames, "n_frames")
    return np.repeat((g / n_frames)[:, :, np.newaxis], n_frames, axis=2)


@dataclass
class ExperimentReport:
    frame_psnr: np.ndarray
    residual: float
    seconds_total: float = float("nan")
    seconds_per_iteration: float = float("nan")
    iterations: int = 0
    config: dict = field(default_factory=dict)
    identical_frames: np.ndarray | None = None

    @property
    def mean_psnr(self):
        return float(np.mean(self.frame_psnr))

    def summary(self):
        lines = [
            f"frames = {len(self.frame_psnr)}",
            f"mean_psnr_db = {self.mean_psnr:.4f}",
            f"min_psnr_db = {float(np.min(self.frame_psnr)):.4f}",
            f"normalized_residual = {self.residual:.6e}",
        ]
        if self.iterations:
            lines += [
                f"iterations = {self.iterations}",
                f"seconds_total = {self.seconds_total:.6f}",
                f"seconds_per_iteration = {self.seconds_per_iteration:.6e}",
            ]
        lines += [f"config.{k} = {v}" for k, v in sorted(self.config.items())]
        return "\n".join(lines) + "\n"

    def write_csv(self, path):
        flags = self.identical_frames
        if flags is None:
            flags = np.zeros(len(self.frame_psnr), dtype=bool)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["frame", "psnr_db", "identical"])
            for k, (v, ident) in enumerate(zip(self.frame_psnr, flags)):
                writer.writerow([k, f"{v:.6f}", int(ident)])


def write_table(rows, path):
    """Write a list of dicts as CSV; columns follow the first row's keys."""
    if not rows:
        raise ValueError("nothing to write")
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)


def _quiet_solve(operator, g, config):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return solve(operator, g, config)


def _scene_cube(scene, frames):
    if isinstance(scene, SceneSpec):
        if scene.frames != frames:
            scene = dataclasses.replace(scene, frames=frames)
        return generate_scene(scene)
    cube = check_cube(scene, "scene")
    if cube.shape[2] != frames:
        raise ValueError(f"scene has {cube.shape[2]} frames, expected {frames}")
    return cube


def _mask_values(mask):
    return mask.values if hasattr(mask, "values") else np.asarray(mask, dtype=np.float64)


def residual_vs_nf_sweep(scene, mask, C, d_list, solver_config=None):
    """Reconstruct one critically sampled snapshot with operators of varying ``d``.

    The snapshot comes from the ``C``-frame scene and the ``d = 1``
    operator. Each row reports the normalized data residual of the final
    shrunk iterate: the manifold-projected iterate fits ``g`` exactly for
    any operator, so only the sparse iterate can show model error.
    """
    solver_config = solver_config or SolverConfig()
    C = int(round(C))
    cube = _scene_cube(scene, C)
    rows, cols = cube.shape[:2]
    values = fit_mask(_mask_values(mask), rows, C)
    g = forward(build_operator(values, triangle_positions(C, 1.0), rows, cols), cube)
    table = []
    for d in d_list:
        op = build_operator(values, triangle_positions(C, d), rows, cols)
        _, state = _quiet_solve(op, g, solver_config)
        table.append(
            {
                "d": float(d),
                "n_frames": op.n_frames,
                "residual": state.residual_history[-1],
                "iterations": state.iteration,
            }
        )
    return table


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    r_squared: float


def linear_fit(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    slope, intercept = np.polyfit(x, y, 1)
    ss_res = float(np.sum((y - (slope * x + intercept)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return LinearFit(float(slope), float(intercept), r2)


def time_solve(operator, g, solver_config, iterations):
    """Wall-clock seconds for exactly ``iterations`` GAP iterations (0 allowed)."""
    if iterations == 0:
        start = time.perf_counter()
        solver_config.resolve_transform(operator.cube_shape)
        return time.perf_counter() - start
    config = dataclasses.replace(
        solver_config, max_iterations=iterations, stop_tolerance=1e-300, record_history=False
    )
    start = time.perf_counter()
    _quiet_solve(operator, g, config)
    return time.perf_counter() - start


def runtime_vs_nf_sweep(scene, mask, C_list, solver_config=None, iterations=20, repeats=3):
    """Per-iteration solve time against ``N_F = C`` (critical sampling).

    Each point is the median of ``repeats`` timed runs. Returns the table
    and a least-squares line through (N_F, seconds per iteration).
    """
    solver_config = solver_config or SolverConfig()
    table = []
    for C in C_list:
        C = int(C)
        cube = _scene_cube(scene, C)
        rows, cols = cube.shape[:2]
        op = build_operator(fit_mask(_mask_values(mask), rows, C - 1), triangle_positions(C, 1.0), rows, cols)
        g = forward(op, cube)
        runs = [time_solve(op, g, solver_config, iterations) for _ in range(repeats)]
        total = statistics.median(runs)
        table.append(
            {
                "n_frames": op.n_frames,
                "seconds_total": total,
                "seconds_per_iteration": total / iterations if iterations else 0.0,
            }
        )
    fit = None
    if len(table) >= 2 and iterations:
        fit = linear_fit([r["n_frames"] for r in table], [r["seconds_per_iteration"] for r in table])
    return table, fit


@dataclass
class CodingComparison:
    translated_psnr: np.ndarray
    rerandomized_psnr: np.ndarray
    translated_baseline_psnr: np.ndarray
    rerandomized_baseline_psnr: np.ndarray
    config: dict = field(default_factory=dict)

    @property
    def mean_gap(self):
        """Mean PSNR of translated minus re-randomized coding, in dB."""
        return float(np.mean(self.translated_psnr) - np.mean(self.rerandomized_psnr))

    def rows(self):
        return [
            {
                "frame": k,
                "translated_db": float(a),
                "rerandomized_db": float(b),
                "translated_baseline_db": float(c),
                "rerandomized_baseline_db": float(e),
            }
            for k, (a, b, c, e) in enumerate(
                zip(
                    self.translated_psnr,
                    self.rerandomized_psnr,
                    self.translated_baseline_psnr,
                    self.rerandomized_baseline_psnr,
                )
            )
        ]


def coding_strategy_compare(scene, C, seed, solver_config=None, fill=0.5, truth="synthetic"):
    """Same scene through a translating mask and through per-frame random masks.

    The translated mask uses ``seed``; the re-randomized planes use
    ``seed + 1, seed + 2, ...``. With ``truth="from-recon"`` the scene is
    first coded with the translating mask and reconstructed, and that
    reconstruction (clipped to be nonnegative) serves as ground truth for
    both strategies.
    """
    if truth not in ("synthetic", "from-recon"):
        raise ValueError(f"truth must be 'synthetic' or 'from-recon', got {truth!r}")
    solver_config = solver_config or SolverConfig()
    C = int(C)
    cube = _scene_cube(scene, C)
    rows, cols = cube.shape[:2]
    mask = generate_mask(rows - (C - 1), cols, fill, seed)
    ops = {
        "translated": build_operator(mask, triangle_positions(C, 1.0), rows, cols),
        "rerandomized": build_rerandomized_operator(rows, cols, C, fill, seed + 1),
    }
    if truth == "from-recon":
        op = ops["translated"]
        cube = np.maximum(_quiet_solve(op, forward(op, cube), solver_config)[0], 0.0)
    peak = float(cube.max())
    results = {}
    for name, op in ops.items():
        g = forward(op, cube)
        f, _ = _quiet_solve(op, g, solver_config)
        results[name] = (psnr(cube, f, peak), psnr(cube, baseline_replicate(g, C), peak))
    return CodingComparison(
        translated_psnr=results["translated"][0],
        rerandomized_psnr=results["rerandomized"][0],
        translated_baseline_psnr=results["translated"][1],
        rerandomized_baseline_psnr=results["rerandomized"][1],
        config={"C": C, "seed": seed, "fill": fill, "shape": cube.shape, "truth": truth},
    )


def evaluate(reference, estimate, operator=None, g=None, peak=None):
    """PSNR by frame plus (when operator and snapshot are given) the data residual."""
    values, flags = psnr(reference, estimate, peak, return_flags=True)
    residual = float("nan")
    if operator is not None and g is not None:
        residual = normalized_residual(operator, estimate, g)
    return ExperimentReport(frame_psnr=values, residual=residual, identical_frames=flags)


# Temporal spectrum of the coded measurement ---------------------------------


def box_kernel_spectrum(n, length):
    """DFT of a length-``length`` box on ``n`` samples (a geometric sum)."""
    u = np.arange(n)
    if length == 1:
        return np.ones(n, dtype=complex)
    z = np.exp(-2j * np.pi * u / n)
    out = np.empty(n, dtype=complex)
    dc = np.isclose(z, 1.0)
    out[dc] = length
    out[~dc] = (1 - z[~dc] ** length) / (1 - z[~dc])
    return out


def coded_measurement(video, code, velocity, pixel_width=1, integration=1):
    """Space-time record of an object seen through a code moving ``velocity`` px/sample.

    ``video`` has shape (n_x, n_t). The coded product is integrated by
    circular box filters of ``pixel_width`` samples in space and
    ``integration`` samples in time.
    """
    video = np.asarray(video, dtype=np.float64)
    code = np.asarray(code, dtype=np.float64)
    n_x, n_t = video.shape
    x = np.arange(n_x)[:, np.newaxis]
    t = np.arange(n_t)[np.newaxis, :]
    coded = video * code[(x - velocity * t) % n_x]
    out = np.zeros_like(coded)
    for a in range(pixel_width):
        for b in range(integration):
            out += np.roll(np.roll(coded, a, axis=0), b, axis=1)
    return out


def predicted_spectrum(video, code, velocity, pixel_width=1, integration=1):
    """Measurement spectrum from the object and code spectra.

    ``G(u, v) = Kx(u) Kt(v) / n_x * sum_w T(w) F(u - w, v + velocity * w * n_t / n_x)``,
    the sheared convolution of the object spectrum with the code spectrum,
    with ``Kx``, ``Kt`` the box-kernel spectra.
    """
    video = np.asarray(video, dtype=np.float64)
    n_x, n_t = video.shape
    F = np.fft.fft2(video)
    T = np.fft.fft(np.asarray(code, dtype=np.float64))
    u = np.arange(n_x)[:, np.newaxis]
    v = np.arange(n_t)[np.newaxis, :]
    acc = np.zeros((n_x, n_t), dtype=complex)
    for w in range(n_x):
        if T[w] == 0:
            continue
        shift = velocity * w * n_t // n_x
        acc += T[w] * F[(u - w) % n_x, (v + shift) % n_t]
    kernel = np.outer(box_kernel_spectrum(n_x, pixel_width), box_kernel_spectrum(n_t, integration))
    return kernel * acc / n_x


@dataclass
class SpectrumReport:
    measured: np.ndarray
    predicted: np.ndarray
    discrepancy: float


def temporal_spectrum_check(video, code, velocity, pixel_width=1, integration=1):
    """Compare the DFT of the coded measurement with its sheared-convolution prediction.

    ``discrepancy`` is ``max|measured - predicted| / max|measured|``.
    ``velocity`` must be an integer with ``velocity * n_t`` divisible by
    ``n_x`` so the sheared frequencies land on the DFT grid.
    """
    video = np.asarray(video, dtype=np.float64)
    code = np.asarray(code, dtype=np.float64)
    if video.ndim != 2:
        raise ValueError(f"video must be 2D (n_x, n_t), got shape {video.shape}")
    n_x, n_t = video.shape
    if code.shape != (n_x,):
        raise ValueError(f"code must have shape ({n_x},), got {code.shape}")
    if int(velocity) != velocity or (int(velocity) * n_t) % n_x:
        raise ValueError("velocity * n_t must be an integer multiple of n_x")
    velocity = int(velocity)
    measured = np.fft.fft2(coded_measurement(video, code, velocity, pixel_width, integration))
    predicted = predicted_spectrum(video, code, velocity, pixel_width, integration)
    scale = float(np.max(np.abs(measured)))
    err = float(np.max(np.abs(measured - predicted)))
    discrepancy = err / scale if scale > 0 else err
    return SpectrumReport(measured=measured, predicted=predicted, discrepancy=discrepancy)


__all__ = [
    "PSNR_CAP",
    "CodingComparison",
    "ExperimentReport",
    "LinearFit",
    "SpectrumReport",
    "baseline_replicate",
    "box_kernel_spectrum",
    "coded_measurement",
    "coding_strategy_compare",
    "evaluate",
    "linear_fit",
    "predicted_spectrum",
    "psnr",
    "residual_vs_nf_sweep",
    "runtime_vs_nf_sweep",
    "sum_frames",
    "temporal_spectrum_check",
    "time_solve",
    "write_table",
]
