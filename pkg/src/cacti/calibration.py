"""Simulated forward-model calibration.

The mask is "imaged" at every nominal position of a fine sweep. Each
exposure can carry positional jitter (applied to the shift, not the pixel
values) and a Gaussian blur along the shift axis standing in for relay
aberrations. Any subset of the resulting planes can then be assembled into
a forward operator.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .ccv1 import read_ccv1, write_ccv1
from .forward_model import ForwardOperator, Mask, MotionProfile, shift_mask
from ._validation import check_seed


@dataclass(eq=False)
class CalibrationStack:
    """Mask images at nominal positions ``positions`` (spacing ``d``).

    ``offsets`` holds the realized jitter of each exposure in pixels.
    """

    planes: np.ndarray
    positions: np.ndarray
    offsets: np.ndarray
    d: float
    jitter_rms: float = 0.0
    blur_width: float = 0.0
    seed: int | None = None

    def __len__(self):
        return self.planes.shape[2]


def simulate_calibration_stack(
    mask, profile, active_rows, active_cols, jitter_rms=0.0, blur_width=0.0, seed=None
):
    """Image ``mask`` at each position of ``profile``.

    Jittered shifts are clipped to the feasible range
    ``[0, active_rows - mask_rows]`` so the mask never leaves the active
    area. A seed is required whenever ``jitter_rms > 0``.
    """
    if jitter_rms < 0 or blur_width < 0:
        raise ValueError("jitter_rms and blur_width must be >= 0")
    values = mask.values if isinstance(mask, Mask) else np.asarray(mask, dtype=np.float64)
    positions = np.asarray(profile.positions, dtype=np.float64)
    room = active_rows - values.shape[0]
    if values.shape[1] > active_cols or room < math.ceil(positions.max() - 1e-12):
        raise ValueError(
            f"mask {values.shape} swept to {positions.max()} does not fit {active_rows}x{active_cols}"
        )
    if jitter_rms > 0:
        rng = np.random.Generator(np.random.PCG64(check_seed(seed)))
        offsets = jitter_rms * rng.standard_normal(positions.size)
    else:
        offsets = np.zeros(positions.size)
    shifts = np.clip(positions + offsets, 0.0, room)

    planes = np.empty((active_rows, active_cols, positions.size))
    for k, p in enumerate(shifts):
        plane = shift_mask(values, p, active_rows, active_cols)
        if blur_width > 0:
            plane = gaussian_filter1d(plane, blur_width, axis=0, mode="constant")
        planes[:, :, k] = plane
    np.clip(planes, 0.0, 1.0, out=planes)
    d = profile.d if isinstance(profile, MotionProfile) else float(np.diff(positions).mean())
    return CalibrationStack(
        planes=planes,
        positions=positions,
        offsets=shifts - positions,
        d=float(d),
        jitter_rms=float(jitter_rms),
        blur_width=float(blur_width),
        seed=seed,
    )


def subset_operator(stack, channel_indices):
    idx = np.asarray(channel_indices)
    if idx.ndim != 1 or idx.size == 0:
        raise ValueError("channel selection must be a non-empty 1D index list")
    if not np.issubdtype(idx.dtype, np.integer):
        raise TypeError("channel indices must be integers")
    if idx[0] < 0 or idx[-1] >= len(stack):
        raise ValueError(f"channel indices must lie in [0, {len(stack)})")
    if np.any(np.diff(idx) <= 0):
        raise ValueError("channel indices must be strictly increasing")
    return ForwardOperator(stack.planes[:, :, idx])


def critical_channels(stack, step=None):
    """Every ``1/d``-th channel, giving one channel per detector-pixel step."""
    if step is None:
        step = round(1.0 / stack.d)
    return np.arange(0, len(stack), max(1, int(step)))


def interior_channels(stack, drop):
    """All channels except ``drop`` at each end of the sweep."""
    if 2 * drop >= len(stack):
        raise ValueError(f"dropping {drop} from each end leaves no channels")
    return np.arange(drop, len(stack) - drop)


def manifest_path(path):
    return str(path) + ".manifest"


def save_stack(stack, path):
    write_ccv1(path, stack.planes)
    lines = [
        f"d = {stack.d!r}",
        f"jitter_rms = {stack.jitter_rms!r}",
        f"blur_width = {stack.blur_width!r}",
        f"seed = {'' if stack.seed is None else stack.seed}",
        "positions = " + ",".join(repr(float(p)) for p in stack.positions),
        "offsets = " + ",".join(repr(float(o)) for o in stack.offsets),
    ]
    with open(manifest_path(path), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_stack(path):
    planes = read_ccv1(path).astype(np.float64)
    meta = {}
    with open(manifest_path(path)) as fh:
        for line in fh:
            if "=" in line:
                key, value = (part.strip() for part in line.split("=", 1))
                meta[key] = value

    def floats(key):
        return np.array([float(v) for v in meta[key].split(",") if v], dtype=np.float64)

    return CalibrationStack(
        planes=planes,
        positions=floats("positions"),
        offsets=floats("offsets"),
        d=float(meta["d"]),
        jitter_rms=float(meta["jitter_rms"]),
        blur_width=float(meta["blur_width"]),
        seed=int(meta["seed"]) if meta.get("seed") else None,
    )
