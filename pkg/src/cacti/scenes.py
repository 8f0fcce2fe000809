"""Synthetic ground-truth datacubes.

All scenes have intensities in [0, 1]. Velocities are in pixels per frame.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_positive_int, check_seed

KINDS = ("moving_square", "rotating_spokes", "two_blobs", "static_target")


@dataclass(frozen=True)
class SceneSpec:
    kind: str = "moving_square"
    rows: int = 64
    cols: int = 64
    frames: int = 14
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown scene kind {self.kind!r}; expected one of {KINDS}")
        for name in ("rows", "cols", "frames"):
            check_positive_int(getattr(self, name), name)
        check_seed(self.seed, "scene seed")


def generate_scene(spec):
    """Render ``spec`` as a (rows, cols, frames) float64 cube."""
    return _RENDERERS[spec.kind](spec, **spec.params)


def _clip_warn(kind, clipped):
    if clipped:
        warnings.warn(f"{kind}: object leaves the frame and was clipped", RuntimeWarning, stacklevel=3)


def square_centers(spec, size=None, velocity=(0.0, 1.0), start=None):
    """Integer (row, col) centre of the square in each frame."""
    size = size or max(2, min(spec.rows, spec.cols) // 4)
    if start is None:
        start = (spec.rows / 2.0, size / 2.0 + 2.0)
    vy, vx = velocity
    return [
        (round(start[0] + vy * k), round(start[1] + vx * k)) for k in range(spec.frames)
    ], size


def _moving_square(spec, size=None, velocity=(0.0, 1.0), start=None, intensity=1.0, background=0.0):
    if not 0 <= background <= 1 or not 0 <= intensity <= 1:
        raise ValueError("intensity and background must lie in [0, 1]")
    centers, size = square_centers(spec, size, velocity, start)
    cube = np.full((spec.rows, spec.cols, spec.frames), float(background))
    clipped = False
    for k, (cy, cx) in enumerate(centers):
        r0, c0 = cy - size // 2, cx - size // 2
        r1, c1 = r0 + size, c0 + size
        if r0 < 0 or c0 < 0 or r1 > spec.rows or c1 > spec.cols:
            clipped = True
        cube[max(r0, 0):max(min(r1, spec.rows), 0), max(c0, 0):max(min(c1, spec.cols), 0), k] = intensity
    _clip_warn("moving_square", clipped)
    return cube


def rotate_nearest(image, angle, center=None):
    """Rotate ``image`` by ``angle`` radians about ``center``, nearest-neighbour, zero fill."""
    rows, cols = image.shape
    if center is None:
        center = ((rows - 1) / 2.0, (cols - 1) / 2.0)
    yy, xx = np.mgrid[0:rows, 0:cols].astype(np.float64)
    dy, dx = yy - center[0], xx - center[1]
    c, s = math.cos(angle), math.sin(angle)
    sy = np.rint(center[0] + c * dy - s * dx).astype(int)
    sx = np.rint(center[1] + s * dy + c * dx).astype(int)
    inside = (sy >= 0) & (sy < rows) & (sx >= 0) & (sx < cols)
    out = np.zeros_like(image, dtype=np.float64)
    out[inside] = image[sy[inside], sx[inside]]
    return out


def _rotating_spokes(spec, spokes=4, radius=None, angular_step=math.pi / 32, hub=0.15):
    radius = radius or 0.45 * min(spec.rows, spec.cols)
    yy, xx = np.mgrid[0:spec.rows, 0:spec.cols].astype(np.float64)
    cy, cx = (spec.rows - 1) / 2.0, (spec.cols - 1) / 2.0
    rr = np.hypot(yy - cy, xx - cx)
    phi = np.arctan2(yy - cy, xx - cx)
    wheel = (np.cos(spokes * phi) > 0.3) & (rr <= radius)
    frame0 = np.where(wheel | (rr <= hub * radius), 1.0, 0.0)
    return np.stack([rotate_nearest(frame0, k * angular_step) for k in range(spec.frames)], axis=2)


def _two_blobs(spec, sigma=None, velocities=((0.5, 1.0), (-0.5, -1.0)), starts=None, amplitudes=(1.0, 0.7)):
    sigma = sigma or min(spec.rows, spec.cols) / 12.0
    if starts is None:
        starts = ((spec.rows / 3.0, spec.cols / 4.0), (2 * spec.rows / 3.0, 3 * spec.cols / 4.0))
    yy, xx = np.mgrid[0:spec.rows, 0:spec.cols].astype(np.float64)
    cube = np.zeros((spec.rows, spec.cols, spec.frames))
    clipped = False
    for (y0, x0), (vy, vx), a in zip(starts, velocities, amplitudes):
        for k in range(spec.frames):
            y, x = y0 + vy * k, x0 + vx * k
            if not (0 <= y < spec.rows and 0 <= x < spec.cols):
                clipped = True
            cube[:, :, k] += a * np.exp(-((yy - y) ** 2 + (xx - x) ** 2) / (2 * sigma**2))
    _clip_warn("two_blobs", clipped)
    return np.clip(cube, 0.0, 1.0)


def _static_target(spec, periods=(2, 3, 4, 6, 8), contrast=1.0):
    """Bar groups of increasing period, the same in every frame.

    Left half carries vertical bars, right half horizontal bars.
    """
    image = np.zeros((spec.rows, spec.cols))
    band = max(1, spec.rows // len(periods))
    half = spec.cols // 2
    for b, period in enumerate(periods):
        r0, r1 = b * band, min((b + 1) * band, spec.rows)
        vertical = (np.arange(half) // period) % 2 == 0
        horizontal = (np.arange(r1 - r0) // period) % 2 == 0
        image[r0:r1, :half] = vertical[np.newaxis, :]
        image[r0:r1, half:] = horizontal[:, np.newaxis]
    image = contrast * image
    return np.repeat(image[:, :, np.newaxis], spec.frames, axis=2)


_RENDERERS = {
    "moving_square": _moving_square,
    "rotating_spokes": _rotating_spokes,
    "two_blobs": _two_blobs,
    "static_target": _static_target,
}
