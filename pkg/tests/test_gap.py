import io
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cacti.forward_model import ForwardOperator, build_rerandomized_operator, explicit_matrix, forward, rasterize
from cacti.gap import (
    ConvergenceWarning,
    GroupPartition,
    InfeasibleMeasurementWarning,
    SolverConfig,
    ball_threshold,
    block_partition,
    group_norms,
    normalized_residual,
    project_l21_ball,
    project_linear_manifold,
    select_radius,
    shrink_factors,
    singleton_partition,
    solve,
    weighted_l21_norm,
    write_history_csv,
)
from cacti.transforms import TransformSpec, apply

from conftest import make_problem


def random_partition(rng, shape, m):
    labels = rng.permutation(np.arange(int(np.prod(shape))) % m).reshape(shape)
    return GroupPartition(labels, rng.uniform(0.5, 2.0, m))


def brute_norms(w, partition):
    out = np.zeros(partition.n_groups)
    for l in range(partition.n_groups):
        out[l] = np.sqrt(np.sum(w[partition.labels == l] ** 2))
    return out


# --- partitions ---------------------------------------------------------------


class TestPartition:
    def test_block_counts(self):
        p = block_partition((4, 4, 2))
        assert p.n_groups == 4 and np.all(p.sizes == 8)

    def test_ragged_blocks(self):
        p = block_partition((5, 3, 2), (2, 2, 2))
        assert p.n_groups == 6 and p.sizes.sum() == 30

    def test_subband_weights(self):
        p = block_partition((8, 8, 8), (1, 1, 1), "subband")
        assert p.weights.min() == 1.0 and p.weights.max() == 4.0

    def test_rejects_empty_group(self):
        with pytest.raises(ValueError):
            GroupPartition(np.zeros((2, 2), dtype=int), np.ones(2))

    def test_rejects_bad_weights(self):
        with pytest.raises(ValueError):
            GroupPartition(np.arange(4).reshape(2, 2), [1, 1, 0, 1])
        with pytest.raises(TypeError):
            GroupPartition(np.zeros((2, 2)), [1.0])


class TestGroupNorms:
    def test_three_four_five(self):
        p = GroupPartition(np.zeros(2, dtype=int), [1.0])
        assert group_norms(np.array([3.0, 4.0]), p)[0] == 5.0

    def test_zero(self):
        p = block_partition((4, 4, 4))
        assert not group_norms(np.zeros((4, 4, 4)), p).any()

    def test_singleton_is_l1(self, rng):
        w = rng.standard_normal((3, 4, 5))
        assert weighted_l21_norm(w, singleton_partition(w.shape)) == pytest.approx(np.abs(w).sum(), rel=1e-14)

    def test_matches_brute_force(self, rng):
        p = random_partition(rng, (6, 5, 4), 17)
        w = rng.standard_normal((6, 5, 4))
        np.testing.assert_allclose(group_norms(w, p), brute_norms(w, p), rtol=1e-14)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            group_norms(np.zeros((2, 2, 2)), block_partition((4, 4, 4)))


# --- radius rule -----------------------------------------------------------------


class TestSelectRadius:
    def test_two_singletons(self):
        p = singleton_partition((2,))
        sel = select_radius(np.array([5.0, 1.0]), p, 1)
        assert sel.m_star == 1 and sel.radius == 4.0
        assert sel.reference_group == 1 and sel.threshold == 1.0

    def test_equal_groups(self):
        p = singleton_partition((3,))
        w = np.array([2.0, -2.0, 2.0])
        sel = select_radius(w, p, 1)
        assert sel.m_star == 1 and sel.radius == 0.0
        assert not project_l21_ball(w, p, sel.m_star, sel.reference_group).any()

    def test_zero(self):
        sel = select_radius(np.zeros((4, 4, 2)), block_partition((4, 4, 2)), 16)
        assert sel.radius == 0.0

    def test_all_groups_needed(self):
        p = singleton_partition((3,))
        sel = select_radius(np.array([3.0, 2.0, 1.0]), p, 3)
        assert sel.m_star == 3 and sel.reference_group is None
        assert sel.radius == pytest.approx(6.0)

    def test_stable_ties(self):
        p = singleton_partition((4,))
        sel = select_radius(np.array([1.0, 3.0, 1.0, 1.0]), p, 2)
        assert sel.m_star == 2 and sel.reference_group == 2

    def test_group_sizes_count(self):
        labels = np.array([0, 0, 0, 1, 2])
        p = GroupPartition(labels, np.ones(3))
        sel = select_radius(np.array([3.0, 0, 0, 2.0, 1.0]), p, 3)
        assert sel.m_star == 1 and sel.reference_group == 1 and sel.radius == 1.0

    def test_weighted_formula(self):
        p = GroupPartition(np.arange(3), [2.0, 1.0, 0.5])
        w = np.array([8.0, 3.0, 0.5])  # normalized 4, 3, 1
        sel = select_radius(w, p, 2)
        assert sel.m_star == 2 and sel.threshold == 1.0
        assert sel.radius == pytest.approx(4 * (4 - 1) + 1 * (3 - 1))

    def test_requires_positive_count(self):
        with pytest.raises((TypeError, ValueError)):
            select_radius(np.ones(3), singleton_partition((3,)), 0)

    @pytest.mark.parametrize("seed", range(5))
    def test_radius_is_shrunk_norm(self, seed):
        rng = np.random.default_rng(seed)
        p = random_partition(rng, (6, 6, 4), 40)
        w = rng.standard_normal((6, 6, 4))
        sel = select_radius(w, p, 50)
        shrunk = project_l21_ball(w, p, sel.m_star, sel.reference_group)
        assert weighted_l21_norm(shrunk, p) == pytest.approx(sel.radius, rel=1e-12)


# --- shrinkage ---------------------------------------------------------------------


def bisect_threshold(norms, beta, radius):
    """Oracle: bisection on the monotone map tau -> sum beta*max(n - beta*tau, 0)."""
    lo, hi = 0.0, float(np.max(norms / beta))
    if np.dot(beta, norms) <= radius:
        return 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.sum(beta * np.maximum(norms - beta * mid, 0)) > radius:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


class TestShrink:
    def test_hand_example(self):
        p = singleton_partition((2,))
        np.testing.assert_array_equal(project_l21_ball(np.array([5.0, 1.0]), p, 1, 1), [4.0, 0.0])

    def test_zero_reference_identity(self, rng):
        p = block_partition((4, 4, 2))
        w = rng.standard_normal((4, 4, 2))
        np.testing.assert_array_equal(project_l21_ball(w, p, p.n_groups, None), w)
        np.testing.assert_array_equal(shrink_factors(w, p, 0.0), np.ones(p.n_groups))

    def test_zero_group(self):
        p = GroupPartition(np.array([0, 0, 1]), [1.0, 1.0])
        out = project_l21_ball(np.array([0.0, 0.0, 2.0]), p, 1, 0)
        np.testing.assert_array_equal(out, [0, 0, 2])

    @pytest.mark.parametrize("seed", range(5))
    def test_group_soft_threshold_oracle(self, seed):
        rng = np.random.default_rng(seed)
        p = random_partition(rng, (10, 10, 3), 100)
        w = rng.standard_normal((10, 10, 3))
        sel = select_radius(w, p, 120)
        out = project_l21_ball(w, p, sel.m_star, sel.reference_group)
        n_in, n_out = brute_norms(w, p), brute_norms(out, p)
        expect = np.maximum(n_in - p.weights * sel.threshold, 0)
        np.testing.assert_allclose(n_out, expect, atol=1e-12)
        assert np.all(np.sign(out) * np.sign(w) >= 0)
        assert np.all(np.abs(out) <= np.abs(w) + 1e-15)

    @pytest.mark.parametrize("seed", range(5))
    def test_non_expansive(self, seed):
        rng = np.random.default_rng(seed)
        p = random_partition(rng, (4, 4, 4), 20)
        a, b = rng.standard_normal((2, 4, 4, 4))
        sel = select_radius(a, p, 16)
        pa = project_l21_ball(a, p, sel.m_star, sel.reference_group)
        norms_b = group_norms(b, p)
        pb = b * shrink_factors(b, p, sel.threshold)[p.labels]
        assert np.linalg.norm(pa - pb) <= np.linalg.norm(a - b) + 1e-12
        assert norms_b.shape == (20,)

    @pytest.mark.parametrize("seed", range(5))
    def test_ball_threshold_oracle(self, seed):
        rng = np.random.default_rng(seed)
        p = random_partition(rng, (5, 5, 4), 30)
        w = rng.standard_normal((5, 5, 4))
        norms = group_norms(w, p)
        radius = 0.3 * weighted_l21_norm(w, p)
        tau = ball_threshold(norms, p, radius)
        assert tau == pytest.approx(bisect_threshold(norms, p.weights, radius), abs=1e-10)
        out = w * shrink_factors(w, p, tau)[p.labels]
        assert weighted_l21_norm(out, p) == pytest.approx(radius, rel=1e-10)
        # Euclidean projection: <w - P, z - P> <= 0 for every z in the ball
        for _ in range(20):
            z = rng.standard_normal(w.shape)
            z *= rng.uniform(0, 1) * radius / weighted_l21_norm(z, p)
            assert np.vdot(w - out, z - out) <= 1e-10

    def test_ball_threshold_inside(self, rng):
        p = block_partition((2, 2, 2))
        w = rng.standard_normal((2, 2, 2))
        assert ball_threshold(group_norms(w, p), p, 1e6) == 0.0
        with pytest.raises(ValueError):
            ball_threshold(group_norms(w, p), p, -1)


@settings(max_examples=40, deadline=None)
@given(m=st.integers(1, 30), n_meas=st.integers(1, 60), seed=st.integers(0, 2**32 - 1))
def test_selection_properties(m, n_meas, seed):
    rng = np.random.default_rng(seed)
    p = random_partition(rng, (60,), m)
    w = rng.standard_normal(60) * rng.exponential(1.0, 60)
    sel = select_radius(w, p, n_meas)
    norms = group_norms(w, p) / p.weights
    order = np.argsort(-norms, kind="stable")
    covered = np.cumsum(p.sizes[order])
    assert covered[sel.m_star - 1] >= min(n_meas, 60)
    if sel.m_star > 1:
        assert covered[sel.m_star - 2] < n_meas
    assert sel.radius >= 0
    out = project_l21_ball(w, p, sel.m_star, sel.reference_group)
    assert weighted_l21_norm(out, p) == pytest.approx(sel.radius, rel=1e-9, abs=1e-12)


# --- manifold ------------------------------------------------------------------------


class TestManifold:
    def test_hand_example(self):
        op = ForwardOperator(np.ones((1, 1, 2)))
        f = project_linear_manifold(op, np.array([[4.0]]), np.ones((1, 1, 2)))
        np.testing.assert_array_equal(f.ravel(), [2.0, 2.0])

    def test_feasible_unchanged(self, rng):
        op = build_rerandomized_operator(6, 6, 3, 0.5, seed=2)
        theta = rng.random(op.cube_shape)
        f = project_linear_manifold(op, forward(op, theta), theta)
        assert np.max(np.abs(f - theta)) <= 1e-14

    def test_feasibility_at_scale(self, rng):
        _, op, _ = make_problem()
        g = rng.random(op.snapshot_shape) * (op.normalizer > 0)
        f = project_linear_manifold(op, g, rng.random(op.cube_shape))
        assert np.max(np.abs(forward(op, f) - g)) <= 1e-10

    def test_idempotent(self, rng):
        op = build_rerandomized_operator(8, 8, 4, 0.5, seed=3)
        g = forward(op, rng.random(op.cube_shape))
        once = project_linear_manifold(op, g, rng.standard_normal(op.cube_shape))
        twice = project_linear_manifold(op, g, once)
        assert np.max(np.abs(once - twice)) <= 1e-12

    @pytest.mark.parametrize("seed", range(4))
    def test_closed_form_oracle(self, seed):
        rng = np.random.default_rng(seed)
        op = ForwardOperator(rng.uniform(0.1, 1.0, (4, 5, 3)))
        H = explicit_matrix(op).toarray()
        theta = rng.standard_normal(op.cube_shape)
        g = rng.standard_normal(op.snapshot_shape)
        t = rasterize(theta)
        expect = t + H.T @ np.linalg.solve(H @ H.T, rasterize(g) - H @ t)
        got = rasterize(project_linear_manifold(op, g, theta))
        assert np.max(np.abs(got - expect)) <= 1e-8

    def test_zero_code_passthrough(self):
        planes = np.ones((2, 2, 2))
        planes[0, 0] = 0
        op = ForwardOperator(planes)
        theta = np.full((2, 2, 2), 3.0)
        g = np.zeros((2, 2))
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            f, info = project_linear_manifold(op, g, theta, return_info=True)
        np.testing.assert_array_equal(f[0, 0], [3, 3])
        assert info.zero_code_pixels == 1 and info.infeasible_pixels == 0
        g[0, 0] = 1.0
        with pytest.warns(InfeasibleMeasurementWarning):
            _, info = project_linear_manifold(op, g, theta, return_info=True)
        assert info.infeasible_pixels == 1

    def test_shape_mismatch(self):
        op = ForwardOperator(np.ones((2, 2, 2)))
        with pytest.raises(ValueError):
            project_linear_manifold(op, np.ones((2, 2)), np.ones((2, 2, 3)))


class TestResidual:
    def test_exact_and_zero(self, rng):
        op = build_rerandomized_operator(6, 6, 3, 0.5, seed=1)
        f = rng.random(op.cube_shape)
        g = forward(op, f)
        assert normalized_residual(op, f, g) == 0.0
        assert normalized_residual(op, np.zeros_like(f), g) == pytest.approx(1.0)

    def test_perturbation(self, rng):
        op = build_rerandomized_operator(6, 6, 3, 0.5, seed=1)
        f = rng.random(op.cube_shape)
        delta = 1e-3 * rng.standard_normal(f.shape)
        g = forward(op, f)
        expect = np.linalg.norm(forward(op, delta)) / np.linalg.norm(g)
        assert normalized_residual(op, f + delta, g) == pytest.approx(expect, rel=1e-9)

    def test_zero_snapshot_flag(self):
        op = ForwardOperator(np.ones((2, 2, 1)))
        value, absolute = normalized_residual(op, np.ones((2, 2, 1)), np.zeros((2, 2)), return_flag=True)
        assert absolute and value == pytest.approx(2.0)


# --- solver --------------------------------------------------------------------------


class TestSolve:
    def test_determined_system(self, rng):
        op = ForwardOperator(np.ones((4, 4, 1)))
        g = rng.random((4, 4))
        f, state = solve(op, g, SolverConfig(transform=("identity",) * 3))
        np.testing.assert_allclose(f[:, :, 0], g, atol=1e-14)
        assert state.converged

    def test_small_scene(self):
        cube, op, g = make_problem(size=32, frames=8)
        f, state = solve(op, g, SolverConfig(max_iterations=200))
        assert state.iteration <= 200
        assert normalized_residual(op, f, g) <= 0.05
        # the shrunk iterate's own misfit, frozen from oracle runs
        assert state.residual_history[-1] == pytest.approx(0.1123, abs=5e-4)

    def test_monotone_gap(self):
        for kind, frames in (("moving_square", 14), ("rotating_spokes", 8), ("two_blobs", 8)):
            _, op, g = make_problem(kind, size=32, frames=frames)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ConvergenceWarning)
                _, state = solve(op, g, SolverConfig(max_iterations=150))
            steps = np.diff(state.gap_norm_history[1:])
            assert np.all(steps <= 1e-9), kind
            assert np.all(np.diff(state.radius_history) >= 0)

    def test_deterministic(self):
        _, op, g = make_problem(size=32, frames=8)
        cfg = SolverConfig(max_iterations=30)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            f1, s1 = solve(op, g, cfg)
            f2, s2 = solve(op, g, cfg)
        np.testing.assert_array_equal(f1, f2)
        assert s1.gap_norm_history == s2.gap_norm_history

    def test_resume_matches_single_run(self):
        _, op, g = make_problem(size=32, frames=8)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            f_all, s_all = solve(op, g, SolverConfig(max_iterations=40))
            _, s = solve(op, g, SolverConfig(max_iterations=15))
            f_res, s = solve(op, g, SolverConfig(max_iterations=25), state=s)
        assert s.iteration == 40 and len(s.gap_norm_history) == 40
        np.testing.assert_array_equal(f_res, f_all)
        assert s.gap_norm_history == s_all.gap_norm_history

    def test_max_iterations_warns(self):
        _, op, g = make_problem(size=16, frames=4)
        with pytest.warns(ConvergenceWarning):
            _, state = solve(op, g, SolverConfig(max_iterations=2))
        assert state.status == "max_iterations"

    def test_history_lengths_and_log(self, tmp_path):
        _, op, g = make_problem(size=16, frames=4)
        log = io.StringIO()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            _, state = solve(op, g, SolverConfig(max_iterations=5), log=log)
        assert len(state.gap_norm_history) == state.iteration == 5
        lines = log.getvalue().splitlines()
        assert len(lines) == 5 and lines[0].split()[0] == "1"
        write_history_csv(state, tmp_path / "h.csv")
        rows = (tmp_path / "h.csv").read_text().splitlines()
        assert rows[0] == "iteration,gap_norm,residual,radius" and len(rows) == 6

    def test_adaptive_rule_runs(self):
        _, op, g = make_problem(size=16, frames=4)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            _, state = solve(op, g, SolverConfig(max_iterations=20, radius_rule="adaptive"))
        assert state.iteration <= 20

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SolverConfig(stop_tolerance=0)
        with pytest.raises((TypeError, ValueError)):
            SolverConfig(max_iterations=0)
        with pytest.raises(ValueError):
            SolverConfig(radius_rule="shrinking")
        with pytest.raises(ValueError):
            SolverConfig(partition="voronoi").resolve_partition((2, 2, 2))

    def test_custom_transform_and_partition(self):
        cube, op, g = make_problem(size=16, frames=4)
        spec = TransformSpec.for_cube(op.cube_shape, ("haar", "haar", "dct"))
        cfg = SolverConfig(max_iterations=20, transform=spec, partition=singleton_partition(op.cube_shape))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            f, state = solve(op, g, cfg)
        assert normalized_residual(op, f, g) < 1e-10
        assert np.isfinite(apply(spec, f)).all()

    def test_snapshot_shape_checked(self):
        op = ForwardOperator(np.ones((4, 4, 2)))
        with pytest.raises(ValueError):
            solve(op, np.ones((3, 4)))
