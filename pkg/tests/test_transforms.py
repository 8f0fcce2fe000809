import numpy as np
import pytest
import scipy.fft
from hypothesis import given, settings
from hypothesis import strategies as st

from cacti.transforms import (
    TransformSpec,
    apply,
    apply_axis,
    apply_axis_inverse,
    apply_dense,
    apply_inverse,
    build_axis_transform,
    dct_matrix,
    haar_matrix,
)

SHAPES = [(8, 8, 4), (5, 6, 3), (1, 4, 2)]


def naive_dct(n):
    """Orthonormal DCT-II written out from its cosine definition."""
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    M = np.sqrt(2.0 / n) * np.cos(np.pi * (2 * i + 1) * k / (2 * n))
    M[0] /= np.sqrt(2.0)
    return M


def test_dct_two_point_closed_form():
    s = 1 / np.sqrt(2)
    np.testing.assert_allclose(dct_matrix(2), [[s, s], [s, -s]], atol=1e-15)


@pytest.mark.parametrize("n", [1, 2, 3, 8, 17, 64])
def test_dct_matches_cosine_definition(n):
    np.testing.assert_allclose(dct_matrix(n), naive_dct(n), atol=1e-13)


@pytest.mark.parametrize("n", [1, 2, 8, 64])
def test_haar_orthonormal(n):
    H = haar_matrix(n)
    np.testing.assert_allclose(H @ H.T, np.eye(n), atol=1e-13)


def test_haar_two_point():
    s = 1 / np.sqrt(2)
    np.testing.assert_allclose(haar_matrix(2), [[s, s], [s, -s]], atol=1e-15)


def test_haar_rejects_non_power_of_two():
    with pytest.raises(ValueError):
        haar_matrix(6)
    with pytest.raises(ValueError):
        TransformSpec.for_cube((6, 8, 4), ("haar", "dct", "dct"))


def test_unknown_kind():
    with pytest.raises(ValueError):
        build_axis_transform("fourier", 4)


@pytest.mark.parametrize("kind,n", [("dct", 7), ("dct", 16), ("haar", 16), ("identity", 5)])
def test_axis_matrix_orthonormal(kind, n):
    M = build_axis_transform(kind, n)
    assert np.max(np.abs(M @ M.T - np.eye(n))) <= 1e-12


@pytest.mark.parametrize("kind", ["dct", "haar", "identity"])
def test_fast_axis_matches_matrix(kind, rng):
    x = rng.standard_normal((8, 4, 16))
    M = build_axis_transform(kind, 16)
    np.testing.assert_allclose(apply_axis(kind, x, 2), np.einsum("kn,ijn->ijk", M, x), atol=1e-12)
    np.testing.assert_allclose(apply_axis_inverse(kind, apply_axis(kind, x, 2), 2), x, atol=1e-12)


def test_dct_route_matches_scipy(rng):
    x = rng.standard_normal((5, 6))
    np.testing.assert_allclose(apply_axis("dct", x, 0), scipy.fft.dct(x, type=2, norm="ortho", axis=0))


@pytest.mark.parametrize("shape", SHAPES)
def test_separable_matches_dense(shape, rng):
    spec = TransformSpec.for_cube(shape)
    f = rng.standard_normal(shape)
    np.testing.assert_allclose(apply(spec, f), apply_dense(spec, f), atol=1e-12)


def test_mixed_kinds(rng):
    spec = TransformSpec.for_cube((8, 4, 6), ("haar", "haar", "dct"))
    f = rng.standard_normal((8, 4, 6))
    np.testing.assert_allclose(apply(spec, f), apply_dense(spec, f), atol=1e-12)
    np.testing.assert_allclose(apply_inverse(spec, apply(spec, f)), f, atol=1e-12)


def test_constant_cube_concentrates():
    spec = TransformSpec.for_cube((4, 4, 4))
    w = apply(spec, np.ones((4, 4, 4)))
    assert w[0, 0, 0] == pytest.approx(8.0)
    w[0, 0, 0] = 0
    assert np.max(np.abs(w)) < 1e-12


@settings(max_examples=40, deadline=None)
@given(
    shape=st.tuples(st.integers(1, 9), st.integers(1, 9), st.integers(1, 9)),
    seed=st.integers(0, 2**32 - 1),
)
def test_parseval_and_round_trip(shape, seed):
    rng = np.random.default_rng(seed)
    spec = TransformSpec.for_cube(shape)
    f = rng.standard_normal(shape)
    w = apply(spec, f)
    assert abs(np.linalg.norm(w) - np.linalg.norm(f)) <= 1e-12 * max(1.0, np.linalg.norm(f))
    assert np.max(np.abs(apply_inverse(spec, w) - f)) <= 1e-12


def test_spec_shape_checked(rng):
    spec = TransformSpec.for_cube((4, 4, 2))
    with pytest.raises(ValueError):
        apply(spec, rng.random((4, 4, 3)))
