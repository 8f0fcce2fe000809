"""Moving-mask compressive video forward model.

A datacube ``f`` of shape (rows, cols, frames) is coded frame by frame with
shifted copies of one binary mask and summed onto the detector::

    g[i, j] = sum_k planes[i, j, k] * f[i, j, k] + n[i, j]

The operator is kept in factored form (one transmission plane per temporal
channel); :func:`explicit_matrix` materializes the equivalent sparse matrix
for small instances.

Random masks use ``numpy.random.Generator(PCG64(seed))`` and draw
``rng.random((rows, cols)) < fill`` at mask-element resolution, so a seed
reproduces the same bits on every platform numpy supports.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ._validation import check_cube, check_positive_int, check_seed, check_snapshot

DEFAULT_MATRIX_CAP = 10**6


@dataclass(frozen=True)
class Mask:
    """Binary coded-aperture transmission pattern at detector-pixel resolution."""

    values: np.ndarray
    seed: int
    fill: float
    upsample: int = 1

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class MotionProfile:
    """Mask positions (in detector pixels) for the temporal channels of one sweep."""

    C: float
    d: float
    positions: np.ndarray

    @property
    def n_frames(self):
        return len(self.positions)


@dataclass(frozen=True)
class NoiseModel:
    kind: str = "none"
    sigma: float = 0.0
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in ("none", "gaussian"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.kind == "gaussian":
            if self.sigma < 0:
                raise ValueError("noise sigma must be >= 0")
            check_seed(self.seed, "noise seed")


@dataclass(eq=False)
class ForwardOperator:
    """Factored forward operator ``H = [diag(T_1) ... diag(T_NF)]``.

    Attributes
    ----------
    planes : ndarray, shape (active_rows, active_cols, n_frames)
        Transmission of each temporal channel, values in [0, 1].
    normalizer : ndarray, shape (active_rows, active_cols)
        Per-pixel ``sum_k planes[..., k] ** 2``; the diagonal of ``H H^T``.
    """

    planes: np.ndarray
    normalizer: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        planes = np.asarray(self.planes, dtype=np.float64)
        if planes.ndim == 2:
            planes = planes[:, :, np.newaxis]
        if planes.ndim != 3 or min(planes.shape) < 1:
            raise ValueError(f"operator planes must be (rows, cols, frames), got {planes.shape}")
        self.planes = planes
        self.normalizer = np.einsum("ijk,ijk->ij", planes, planes)

    @property
    def active_rows(self):
        return self.planes.shape[0]

    @property
    def active_cols(self):
        return self.planes.shape[1]

    @property
    def n_frames(self):
        return self.planes.shape[2]

    @property
    def cube_shape(self):
        return self.planes.shape

    @property
    def snapshot_shape(self):
        return self.planes.shape[:2]

    @property
    def n_measurements(self):
        return self.active_rows * self.active_cols

    def __matmul__(self, f):
        return forward(self, f)


def generate_mask(rows, cols, fill=0.5, seed=None, upsample=1):
    """Draw a random binary mask; each element is open with probability ``fill``.

    ``upsample`` makes every mask element span ``upsample x upsample``
    detector pixels (the draw happens at element resolution, then the
    result is cropped to ``rows x cols``).
    """
    rows = check_positive_int(rows, "rows")
    cols = check_positive_int(cols, "cols")
    upsample = check_positive_int(upsample, "upsample")
    seed = check_seed(seed)
    if not 0.0 < fill < 1.0:
        raise ValueError(f"fill must lie in (0, 1), got {fill}")
    rng = np.random.Generator(np.random.PCG64(seed))
    er, ec = -(-rows // upsample), -(-cols // upsample)
    elements = (rng.random((er, ec)) < fill).astype(np.float64)
    if upsample > 1:
        elements = np.kron(elements, np.ones((upsample, upsample)))
    return Mask(values=elements[:rows, :cols], seed=seed, fill=float(fill), upsample=upsample)


def triangle_positions(C, d=1.0):
    """Positions ``s_k = k * d`` of the ascending half of the triangle sweep.

    The number of channels is ``round(C / d)``; the descending half reuses
    the same operator and is not materialized.
    """
    if not C > 0:
        raise ValueError(f"C must be > 0, got {C}")
    if not 0 < d <= C:
        raise ValueError(f"d must satisfy 0 < d <= C, got d={d}, C={C}")
    ratio = C / d
    n = round(ratio)
    if not math.isclose(ratio, n, rel_tol=1e-6, abs_tol=1e-6):
        raise ValueError(f"C/d = {ratio} is not an integer number of channels")
    return MotionProfile(C=float(C), d=float(d), positions=np.arange(n) * float(d))


def _embed(values, shift, active_rows, active_cols):
    out = np.zeros((active_rows, active_cols))
    r, c = values.shape
    out[shift:shift + r, :c] = values
    return out


def shift_mask(mask, p, active_rows, active_cols):
    """Embed ``mask`` in a zero-padded active area, translated ``p`` rows down.

    Fractional ``p`` linearly interpolates between the two neighbouring
    integer shifts, which yields grayscale transmission in [0, 1].
    """
    values = mask.values if isinstance(mask, Mask) else np.asarray(mask, dtype=np.float64)
    r, c = values.shape
    if p < 0:
        raise ValueError(f"shift must be >= 0, got {p}")
    if c > active_cols or r + math.ceil(p - 1e-12) > active_rows:
        raise ValueError(
            f"mask {r}x{c} shifted by {p} does not fit the {active_rows}x{active_cols} active area"
        )
    lo = math.floor(p)
    frac = p - lo
    if frac < 1e-12:
        return _embed(values, lo, active_rows, active_cols)
    if 1.0 - frac < 1e-12:
        return _embed(values, lo + 1, active_rows, active_cols)
    return (1.0 - frac) * _embed(values, lo, active_rows, active_cols) + frac * _embed(
        values, lo + 1, active_rows, active_cols
    )


def build_operator(mask, profile, active_rows=None, active_cols=None):
    """Stack ``shift_mask(mask, s_k)`` for every position in ``profile``.

    The active area defaults to the mask size plus the largest shift.
    """
    values = mask.values if isinstance(mask, Mask) else np.asarray(mask, dtype=np.float64)
    positions = profile.positions if isinstance(profile, MotionProfile) else np.asarray(profile)
    if active_rows is None:
        active_rows = values.shape[0] + math.ceil(max(positions) - 1e-12)
    if active_cols is None:
        active_cols = values.shape[1]
    planes = np.stack([shift_mask(values, p, active_rows, active_cols) for p in positions], axis=2)
    return ForwardOperator(planes)


def build_rerandomized_operator(rows, cols, n_frames, fill=0.5, seed=None):
    """Operator with an independently drawn mask per temporal channel.

    Plane ``k`` uses seed ``seed + k``, so ``n_frames = 1`` reproduces
    ``generate_mask(rows, cols, fill, seed)``.
    """
    n_frames = check_positive_int(n_frames, "n_frames")
    seed = check_seed(seed)
    planes = [generate_mask(rows, cols, fill, seed + k).values for k in range(n_frames)]
    return ForwardOperator(np.stack(planes, axis=2))


def fit_mask(mask, active_rows, max_shift):
    """Crop ``mask`` rows so it stays inside ``active_rows`` when shifted by ``max_shift``."""
    values = mask.values if isinstance(mask, Mask) else np.asarray(mask, dtype=np.float64)
    keep = active_rows - math.ceil(max_shift - 1e-12)
    if keep < 1:
        raise ValueError(f"shift {max_shift} leaves no room for the mask in {active_rows} rows")
    return values[:keep]


def forward(operator, f, noise=None):
    """Coded snapshot ``g = H f (+ n)``."""
    f = check_cube(f, allow_2d=operator.n_frames == 1)
    if f.shape != operator.cube_shape:
        raise ValueError(f"datacube shape {f.shape} does not match operator {operator.cube_shape}")
    g = np.einsum("ijk,ijk->ij", operator.planes, f)
    if noise is not None and noise.kind == "gaussian" and noise.sigma > 0:
        rng = np.random.Generator(np.random.PCG64(noise.seed))
        g = g + noise.sigma * rng.standard_normal(g.shape)
    return g


def adjoint(operator, g):
    """``H^T g``: each plane weighted by the snapshot."""
    g = check_snapshot(g)
    if g.shape != operator.snapshot_shape:
        raise ValueError(f"snapshot shape {g.shape} does not match operator {operator.snapshot_shape}")
    return operator.planes * g[:, :, np.newaxis]


def rasterize(f):
    """Column vector ordering used by :func:`explicit_matrix`.

    Frames are stacked one after another; within a frame the row index
    varies fastest, matching ``diag[T_11k, T_21k, ...]``.
    """
    f = np.asarray(f)
    if f.ndim == 2:
        return f.reshape(-1, order="F")
    return np.concatenate([f[:, :, k].reshape(-1, order="F") for k in range(f.shape[2])])


def unrasterize(v, shape):
    v = np.asarray(v)
    if len(shape) == 2:
        return v.reshape(shape, order="F")
    rows, cols, frames = shape
    n = rows * cols
    return np.stack([v[k * n:(k + 1) * n].reshape((rows, cols), order="F") for k in range(frames)], axis=2)


def explicit_matrix(operator, cap=DEFAULT_MATRIX_CAP):
    """Materialize ``H`` as a CSR matrix of shape (N, N * n_frames)."""
    n = operator.n_measurements
    if n * operator.n_frames > cap:
        raise ValueError(
            f"explicit matrix with {n} x {n * operator.n_frames} exceeds the cap of {cap} columns"
        )
    blocks = [sp.diags(rasterize(operator.planes[:, :, k])) for k in range(operator.n_frames)]
    return sp.hstack(blocks, format="csr")
