"""Generalized alternating projection (GAP) reconstruction.

GAP alternates two Euclidean projections:

* onto the affine set of datacubes consistent with the snapshot,
  ``{f : H f = g}``, which is a per-pixel closed form because ``H H^T`` is
  diagonal;
* onto a weighted l2,1 ball in transform coefficients whose radius is
  re-chosen every iteration from the current coefficients, which reduces
  to group soft-thresholding.

Starting from ``theta = 0`` the iteration is::

    f     <- P_manifold(theta)
    w     <- Q(f)
    theta <- Q^-1(shrink(w))

and stops when ``||f - theta||_2`` settles.
"""

import csv
import sys
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_cube, check_positive_int, check_snapshot
from .transforms import TransformSpec, apply, apply_inverse


class InfeasibleMeasurementWarning(RuntimeWarning):
    """A pixel has a nonzero measurement but every code entry there is zero."""


class ConvergenceWarning(RuntimeWarning):
    pass


@dataclass(eq=False)
class GroupPartition:
    """Disjoint groups of coefficient indices with positive weights.

    ``labels`` has the coefficient-cube shape and holds each index's group
    id in ``0 .. n_groups - 1``.
    """

    labels: np.ndarray
    weights: np.ndarray
    sizes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if not np.issubdtype(labels.dtype, np.integer):
            raise TypeError("group labels must be integers")
        weights = np.asarray(self.weights, dtype=np.float64).ravel()
        m = weights.size
        if labels.size == 0 or labels.min() < 0 or labels.max() >= m:
            raise ValueError("group labels must lie in [0, n_groups)")
        sizes = np.bincount(labels.ravel(), minlength=m)
        if np.any(sizes == 0):
            raise ValueError("every group must contain at least one index")
        if np.any(~(weights > 0)) or not np.all(np.isfinite(weights)):
            raise ValueError("group weights must be positive and finite")
        self.labels = labels.astype(np.intp, copy=False)
        self.weights = weights
        self.sizes = sizes

    @property
    def n_groups(self):
        return self.weights.size

    @property
    def shape(self):
        return self.labels.shape


def _dyadic_level(index):
    level = np.zeros_like(index)
    nz = index > 0
    level[nz] = np.floor(np.log2(index[nz])).astype(index.dtype) + 1
    return level


def block_partition(shape, block=(2, 2, 2), weighting="uniform"):
    """Non-overlapping blocks; trailing blocks are smaller when sizes don't divide.

    ``weighting="subband"`` sets each group's weight to ``1 + level``,
    where ``level`` is the dyadic scale of the block's first coefficient
    (largest over the three axes).
    """
    shape = tuple(int(s) for s in shape)
    block = tuple(int(b) for b in block)
    if len(block) != len(shape) or min(block) < 1:
        raise ValueError(f"block {block} incompatible with shape {shape}")
    grid = [np.arange(n) // b for n, b in zip(shape, block)]
    counts = [-(-n // b) for n, b in zip(shape, block)]
    idx = np.meshgrid(*grid, indexing="ij")
    labels = np.ravel_multi_index(idx, counts)
    m = int(np.prod(counts))
    if weighting == "uniform":
        weights = np.ones(m)
    elif weighting == "subband":
        starts = np.meshgrid(*[np.arange(c) * b for c, b in zip(counts, block)], indexing="ij")
        level = np.max([_dyadic_level(s) for s in starts], axis=0).ravel()
        weights = 1.0 + level
    else:
        raise ValueError(f"unknown weighting {weighting!r}")
    return GroupPartition(labels, weights)


def singleton_partition(shape):
    """One group per coefficient with unit weights (plain l1)."""
    n = int(np.prod(shape))
    return GroupPartition(np.arange(n).reshape(shape), np.ones(n))


def group_norms(w, partition):
    w = np.asarray(w, dtype=np.float64)
    if w.shape != partition.shape:
        raise ValueError(f"coefficients {w.shape} do not match partition {partition.shape}")
    sq = np.bincount(partition.labels.ravel(), weights=(w * w).ravel(), minlength=partition.n_groups)
    return np.sqrt(sq)


def weighted_l21_norm(w, partition):
    return float(np.dot(partition.weights, group_norms(w, partition)))


@dataclass(frozen=True)
class RadiusSelection:
    """Outcome of the radius rule for one iteration.

    ``reference_group`` is the group ranked just after the retained
    prefix, or ``None`` when every group is retained; ``threshold`` is its
    weight-normalized norm (0 in the ``None`` case).
    """

    m_star: int
    radius: float
    reference_group: int | None
    threshold: float


def _select(norms, partition, measurement_count):
    beta = partition.weights
    scaled = norms / beta
    order = np.argsort(-scaled, kind="stable")
    covered = np.cumsum(partition.sizes[order])
    m = partition.n_groups
    m_star = int(np.searchsorted(covered, measurement_count, side="left")) + 1
    m_star = min(m_star, m)
    if m_star < m:
        ref = int(order[m_star])
        tau = float(scaled[ref])
    else:
        ref, tau = None, 0.0
    top = order[:m_star]
    radius = float(np.sum(beta[top] ** 2 * (scaled[top] - tau)))
    return RadiusSelection(m_star=m_star, radius=radius, reference_group=ref, threshold=tau)


def select_radius(w, partition, measurement_count):
    """Rank groups by ``norm / weight`` and pick the retained prefix and radius.

    ``m_star`` is the shortest prefix of the ranking whose groups hold at
    least ``measurement_count`` coefficients. The radius is::

        R = sum_{q <= m_star} beta_q**2 * (norm_q / beta_q - tau)

    with ``tau`` the normalized norm of the next-ranked group. Ties keep
    the lower group index first.
    """
    measurement_count = check_positive_int(measurement_count, "measurement_count")
    return _select(group_norms(w, partition), partition, measurement_count)


def ball_threshold(norms, partition, radius):
    """Threshold ``tau`` whose group soft-thresholding lands on the ball of ``radius``.

    Solves ``sum_l beta_l * max(norm_l - beta_l * tau, 0) = radius`` by
    scanning the breakpoints ``norm_l / beta_l`` in decreasing order.
    Returns 0 when the coefficients already lie inside the ball.
    """
    beta = partition.weights
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    if float(np.dot(beta, norms)) <= radius:
        return 0.0
    scaled = norms / beta
    order = np.argsort(-scaled, kind="stable")
    cum_bn = np.cumsum((beta * norms)[order])
    cum_b2 = np.cumsum((beta**2)[order])
    taus = (cum_bn - radius) / cum_b2
    active = np.nonzero(scaled[order] > taus)[0]
    return float(max(taus[active[-1]], 0.0))


def _shrink(w, partition, norms, tau):
    beta = partition.weights
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = 1.0 - beta * tau / norms
    factor = np.where(norms > 0, np.maximum(factor, 0.0), 0.0)
    return w * factor[partition.labels], factor


def shrink_factors(w, partition, threshold):
    """Per-group scale ``max(1 - beta_l * threshold / norm_l, 0)``."""
    return _shrink(np.asarray(w, dtype=np.float64), partition, group_norms(w, partition), threshold)[1]


def project_l21_ball(w, partition, m_star, reference_group):
    """Group soft-thresholding onto the ball chosen by :func:`select_radius`.

    Each group is scaled by ``max(1 - beta_l * tau / norm_l, 0)`` where
    ``tau = norm_ref / beta_ref``; ``reference_group=None`` means
    ``tau = 0`` and returns ``w`` unchanged. ``m_star`` is accepted for
    symmetry with the selection step; ``reference_group`` already encodes it.
    """
    w = np.asarray(w, dtype=np.float64)
    norms = group_norms(w, partition)
    if reference_group is None:
        return w.copy()
    if not 0 < m_star <= partition.n_groups:
        raise ValueError(f"m_star must lie in [1, {partition.n_groups}], got {m_star}")
    tau = norms[reference_group] / partition.weights[reference_group]
    return _shrink(w, partition, norms, tau)[0]


@dataclass(frozen=True)
class ManifoldInfo:
    zero_code_pixels: int
    infeasible_pixels: int


def project_linear_manifold(operator, g, theta, return_info=False):
    """Closest datacube to ``theta`` that reproduces the snapshot exactly.

    Per pixel: ``f = theta + h * (g - <h, theta>) / <h, h>`` with ``h`` the
    code column. Pixels whose code column is all zero pass ``theta``
    through; if such a pixel has ``g != 0`` an
    :class:`InfeasibleMeasurementWarning` is issued.
    """
    g = check_snapshot(g)
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != operator.cube_shape or g.shape != operator.snapshot_shape:
        raise ValueError(
            f"shapes theta={theta.shape}, g={g.shape} do not match operator {operator.cube_shape}"
        )
    f, zero, infeasible = _manifold(operator, g, theta)
    if infeasible:
        warnings.warn(
            f"{infeasible} pixel(s) have zero code but nonzero measurement",
            InfeasibleMeasurementWarning,
            stacklevel=2,
        )
    if return_info:
        return f, ManifoldInfo(zero, infeasible)
    return f


def _manifold(operator, g, theta):
    planes, norm = operator.planes, operator.normalizer
    coded = np.zeros_like(norm, dtype=bool)
    np.greater(norm, 0, out=coded)
    residual = g - np.einsum("ijk,ijk->ij", planes, theta)
    scale = np.divide(residual, norm, out=np.zeros_like(residual), where=coded)
    f = theta + planes * scale[:, :, np.newaxis]
    zero = int(np.count_nonzero(~coded))
    infeasible = int(np.count_nonzero(~coded & (g != 0)))
    return f, zero, infeasible


def normalized_residual(operator, f, g, exclude_uncoded=True, return_flag=False):
    """``||g - H f||_2 / ||g||_2``.

    A zero snapshot yields the absolute residual instead; ``return_flag``
    exposes which case applied as a second return value. Pixels with an
    all-zero code are left out unless ``exclude_uncoded`` is false.
    """
    g = check_snapshot(g)
    r = g - np.einsum("ijk,ijk->ij", operator.planes, check_cube(f, allow_2d=True))
    if exclude_uncoded:
        keep = operator.normalizer > 0
        r, g = r[keep], g[keep]
    num = float(np.linalg.norm(r))
    den = float(np.linalg.norm(g))
    absolute = den == 0.0
    value = num if absolute else num / den
    return (value, absolute) if return_flag else value


RADIUS_RULES = ("nondecreasing", "adaptive")


@dataclass
class SolverConfig:
    """Loop control and prior for :func:`solve`.

    ``transform`` is a :class:`TransformSpec` or a tuple of per-axis kinds;
    ``partition`` is a :class:`GroupPartition` or one of ``"block"`` /
    ``"singleton"``.

    ``radius_rule="adaptive"`` uses the ranked-group radius of
    :func:`select_radius` as is. ``"nondecreasing"`` (default) never lets
    the radius fall below the previous iteration's; when the ranked rule
    proposes a smaller ball the previous radius is kept and the threshold
    is solved for it with :func:`ball_threshold`. The previous shrunk
    iterate then stays inside the new ball, which makes the gap norm
    nonincreasing.
    """

    max_iterations: int = 300
    stop_tolerance: float = 1e-6
    patience: int = 3
    transform: object = ("dct", "dct", "dct")
    partition: object = "block"
    block_shape: tuple = (2, 2, 2)
    weighting: str = "uniform"
    radius_rule: str = "nondecreasing"
    record_history: bool = True
    verbose: bool = False

    def __post_init__(self):
        check_positive_int(self.max_iterations, "max_iterations")
        check_positive_int(self.patience, "patience")
        if not self.stop_tolerance > 0:
            raise ValueError(f"stop_tolerance must be > 0, got {self.stop_tolerance}")
        if self.radius_rule not in RADIUS_RULES:
            raise ValueError(f"radius_rule must be one of {RADIUS_RULES}, got {self.radius_rule!r}")

    def resolve_transform(self, shape):
        if isinstance(self.transform, TransformSpec):
            if self.transform.shape != tuple(shape):
                raise ValueError(f"transform shape {self.transform.shape} != cube {tuple(shape)}")
            return self.transform
        return TransformSpec.for_cube(shape, self.transform)

    def resolve_partition(self, shape):
        if isinstance(self.partition, GroupPartition):
            if self.partition.shape != tuple(shape):
                raise ValueError(f"partition shape {self.partition.shape} != cube {tuple(shape)}")
            return self.partition
        if self.partition == "block":
            return block_partition(shape, self.block_shape, self.weighting)
        if self.partition == "singleton":
            return singleton_partition(shape)
        raise ValueError(f"unknown partition scheme {self.partition!r}")


@dataclass(eq=False)
class SolverState:
    """Everything needed to inspect or resume a GAP run.

    ``theta`` is the shrunk iterate mapped back to voxel space and
    ``coefficients`` its transform coefficients. ``residual_history``
    holds the normalized data residual of ``theta``; ``f`` always fits the
    data exactly on coded pixels, so its own residual carries no information.
    """

    theta: np.ndarray
    coefficients: np.ndarray
    f: np.ndarray
    iteration: int = 0
    gap_norm_history: list = field(default_factory=list)
    residual_history: list = field(default_factory=list)
    radius_history: list = field(default_factory=list)
    radius: float | None = None
    status: str = "initialized"
    zero_code_pixels: int = 0
    infeasible_pixels: int = 0
    _calm_steps: int = 0

    @property
    def converged(self):
        return self.status == "converged"

    @classmethod
    def initial(cls, shape):
        zeros = np.zeros(shape)
        return cls(theta=zeros, coefficients=zeros.copy(), f=zeros.copy())


def solve(operator, g, config=None, state=None, log=None):
    """Reconstruct a datacube from one coded snapshot.

    Parameters
    ----------
    operator : ForwardOperator
    g : ndarray, shape (active_rows, active_cols)
    config : SolverConfig, optional
    state : SolverState, optional
        Resume from a previous run; iteration counts continue from it.
    log : file-like, optional
        Receives one ``t gap_norm residual`` line per iteration. Defaults to
        stderr when ``config.verbose`` is set.

    Returns
    -------
    f : ndarray
        The last manifold-projected iterate.
    state : SolverState
        ``status`` is ``"converged"`` or ``"max_iterations"``; the latter
        also raises a :class:`ConvergenceWarning`.
    """
    config = config or SolverConfig()
    g = check_snapshot(g)
    shape = operator.cube_shape
    if g.shape != operator.snapshot_shape:
        raise ValueError(f"snapshot shape {g.shape} does not match operator {operator.snapshot_shape}")
    spec = config.resolve_transform(shape)
    partition = config.resolve_partition(shape)
    n_meas = operator.n_measurements
    if log is None and config.verbose:
        log = sys.stderr

    if state is None:
        state = SolverState.initial(shape)
    elif state.theta.shape != shape:
        raise ValueError(f"resume state shape {state.theta.shape} does not match operator {shape}")

    coded = operator.normalizer > 0
    g_norm = float(np.linalg.norm(g[coded]))
    theta = state.theta
    stop_at = state.iteration + config.max_iterations
    state.status = "running"

    while state.iteration < stop_at:
        f, zero, infeasible = _manifold(operator, g, theta)
        w = apply(spec, f)
        norms = group_norms(w, partition)
        sel = _select(norms, partition, n_meas)
        radius, tau = sel.radius, sel.threshold
        if config.radius_rule == "nondecreasing" and state.radius is not None and radius < state.radius:
            radius = state.radius
            tau = ball_threshold(norms, partition, radius)
        state.radius = radius
        coef, _ = _shrink(w, partition, norms, tau)
        theta = apply_inverse(spec, coef)
        state.iteration += 1

        gap = float(np.linalg.norm(f - theta))
        r = g - np.einsum("ijk,ijk->ij", operator.planes, theta)
        res = float(np.linalg.norm(r[coded]))
        res = res / g_norm if g_norm > 0 else res

        prev_gap = state.gap_norm_history[-1] if state.gap_norm_history else None
        if config.record_history or not state.gap_norm_history:
            state.gap_norm_history.append(gap)
            state.residual_history.append(res)
            state.radius_history.append(radius)
        else:
            state.gap_norm_history[-1] = gap
            state.residual_history[-1] = res
            state.radius_history[-1] = radius
        if log is not None:
            print(f"{state.iteration} {gap:.9e} {res:.9e}", file=log)

        state.f, state.theta, state.coefficients = f, theta, coef
        state.zero_code_pixels, state.infeasible_pixels = zero, infeasible

        if prev_gap is not None:
            change = abs(prev_gap - gap) / prev_gap if prev_gap > 0 else 0.0
            state._calm_steps = state._calm_steps + 1 if change < config.stop_tolerance else 0
            if state._calm_steps >= config.patience:
                state.status = "converged"
                break
    else:
        state.status = "max_iterations"
        warnings.warn(
            f"GAP stopped at max_iterations={config.max_iterations} before the gap norm settled",
            ConvergenceWarning,
            stacklevel=2,
        )

    if state.infeasible_pixels:
        warnings.warn(
            f"{state.infeasible_pixels} pixel(s) have zero code but nonzero measurement",
            InfeasibleMeasurementWarning,
            stacklevel=2,
        )
    return state.f, state


def write_history_csv(state, path):
    """Sidecar CSV with one row per recorded iteration."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "gap_norm", "residual", "radius"])
        start = state.iteration - len(state.gap_norm_history) + 1
        for t, (gap, res, rad) in enumerate(
            zip(state.gap_norm_history, state.residual_history, state.radius_history), start=start
        ):
            writer.writerow([t, repr(gap), repr(res), repr(rad)])
