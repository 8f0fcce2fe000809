"""Separable orthonormal 3D transforms (DCT-II, Haar, identity).

:func:`build_axis_transform` returns the dense factor matrices. ``apply``
and ``apply_inverse`` use fast per-axis routes (``scipy.fft.dct`` with
orthonormal scaling, an O(n) Haar pyramid) that compute the same linear
maps; the dense matrices are kept on the spec for checking.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from ._validation import check_positive_int

KINDS = ("dct", "haar", "identity")


def _is_power_of_two(n):
    return n >= 1 and n & (n - 1) == 0


def dct_matrix(n):
    """Orthonormal DCT-II matrix: row 0 scaled by 1/sqrt(n), others by sqrt(2/n)."""
    k = np.arange(n)[:, np.newaxis]
    i = np.arange(n)[np.newaxis, :]
    m = np.sqrt(2.0 / n) * np.cos(np.pi * (2 * i + 1) * k / (2 * n))
    m[0] /= np.sqrt(2.0)
    return m


def haar_matrix(n):
    """Full-depth orthonormal Haar wavelet matrix (n a power of two).

    Row 0 is the scaling function; following rows are wavelets ordered
    coarse to fine, matching the coefficient layout of :func:`_haar_forward`.
    """
    if not _is_power_of_two(n):
        raise ValueError(f"Haar transform requires a power-of-two length, got {n}")
    m = np.eye(n)
    return _haar_forward(m, axis=0)


def build_axis_transform(kind, n):
    n = check_positive_int(n, "n")
    if kind == "dct":
        return dct_matrix(n)
    if kind == "haar":
        return haar_matrix(n)
    if kind == "identity":
        return np.eye(n)
    raise ValueError(f"unknown transform kind {kind!r}; expected one of {KINDS}")


def _haar_forward(x, axis):
    x = np.moveaxis(np.array(x, dtype=np.float64), axis, 0)
    n = x.shape[0]
    out = x.copy()
    length = n
    while length > 1:
        half = length // 2
        even = out[0:length:2].copy()
        odd = out[1:length:2].copy()
        out[:half] = (even + odd) / np.sqrt(2.0)
        out[half:length] = (even - odd) / np.sqrt(2.0)
        length = half
    return np.moveaxis(out, 0, axis)


def _haar_inverse(w, axis):
    w = np.moveaxis(np.array(w, dtype=np.float64), axis, 0)
    n = w.shape[0]
    out = w.copy()
    length = 2
    while length <= n:
        half = length // 2
        approx = out[:half].copy()
        detail = out[half:length].copy()
        out[0:length:2] = (approx + detail) / np.sqrt(2.0)
        out[1:length:2] = (approx - detail) / np.sqrt(2.0)
        length *= 2
    return np.moveaxis(out, 0, axis)


@dataclass(frozen=True)
class TransformSpec:
    """Per-axis transform kinds and the factor matrices they induce."""

    kinds: tuple
    shape: tuple
    matrices: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        kinds = tuple(self.kinds)
        shape = tuple(int(s) for s in self.shape)
        if len(kinds) != 3 or len(shape) != 3:
            raise ValueError("TransformSpec needs three kinds and a 3D shape")
        for kind, n in zip(kinds, shape):
            if kind == "haar" and not _is_power_of_two(n):
                raise ValueError(f"Haar axis needs a power-of-two length, got {n}")
        object.__setattr__(self, "kinds", kinds)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(
            self, "matrices", tuple(build_axis_transform(k, n) for k, n in zip(kinds, shape))
        )

    @classmethod
    def for_cube(cls, shape, kinds=("dct", "dct", "dct")):
        if isinstance(kinds, str):
            kinds = (kinds,) * 3
        return cls(tuple(kinds), tuple(shape))


def _check(spec, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != spec.shape:
        raise ValueError(f"array shape {x.shape} does not match transform shape {spec.shape}")
    return x


def apply_axis(kind, x, axis):
    if kind == "dct":
        return scipy.fft.dct(x, type=2, norm="ortho", axis=axis)
    if kind == "haar":
        return _haar_forward(x, axis)
    return x


def apply_axis_inverse(kind, w, axis):
    if kind == "dct":
        return scipy.fft.idct(w, type=2, norm="ortho", axis=axis)
    if kind == "haar":
        return _haar_inverse(w, axis)
    return w


def apply(spec, f):
    """Coefficients ``w = (Q1 x Q2 x Q3) f``."""
    w = _check(spec, f)
    for axis, kind in enumerate(spec.kinds):
        w = apply_axis(kind, w, axis)
    return np.array(w, copy=True) if w is f else w


def apply_inverse(spec, w):
    f = _check(spec, w)
    for axis, kind in enumerate(spec.kinds):
        f = apply_axis_inverse(kind, f, axis)
    return np.array(f, copy=True) if f is w else f


def apply_dense(spec, f):
    """Reference route: contract each axis with its dense factor matrix."""
    f = _check(spec, f)
    q1, q2, q3 = spec.matrices
    return np.einsum("ai,bj,ck,ijk->abc", q1, q2, q3, f, optimize=True)
