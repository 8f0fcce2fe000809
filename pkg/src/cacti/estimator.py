"""scikit-learn style wrappers around the forward model and the GAP solver.

``CodedApertureEncoder`` is a transformer mapping datacubes to coded
snapshots; ``GAPReconstructor`` is fitted to a forward operator and
predicts datacubes from snapshots. Both support ``get_params`` /
``set_params`` and ``sklearn.base.clone``.
"""

import dataclasses

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_is_fitted

from ._validation import check_cube, check_snapshot
from .analysis import psnr
from .forward_model import (
    ForwardOperator,
    NoiseModel,
    build_operator,
    fit_mask,
    forward,
    generate_mask,
    triangle_positions,
)
from .gap import SolverConfig, normalized_residual, solve


def _as_operator(operator):
    if isinstance(operator, ForwardOperator):
        return operator
    planes = np.asarray(operator, dtype=np.float64)
    if planes.ndim != 3:
        raise ValueError(f"expected a ForwardOperator or a (rows, cols, frames) plane stack, got {planes.shape}")
    return ForwardOperator(planes)


def _batch(X, single_ndim):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == single_ndim:
        return X[np.newaxis], True
    if X.ndim == single_ndim + 1:
        return X, False
    raise ValueError(f"expected a {single_ndim}D array or a batch of them, got shape {X.shape}")


class CodedApertureEncoder(TransformerMixin, BaseEstimator):
    """Simulate coded snapshots of datacubes through a translating random mask.

    Parameters
    ----------
    C : float
        Mask travel per exposure in detector pixels.
    d : float
        Travel between adjacent temporal channels; ``C / d`` must equal the
        number of frames of the cubes passed to ``fit``.
    fill : float
        Open fraction of the random mask.
    seed : int
        Mask seed. Required.
    noise_sigma : float
        Standard deviation of additive Gaussian noise; 0 disables noise.
    noise_seed : int, optional
        Required when ``noise_sigma > 0``.
    """

    def __init__(self, C=14, d=1.0, fill=0.5, seed=None, noise_sigma=0.0, noise_seed=None):
        self.C = C
        self.d = d
        self.fill = fill
        self.seed = seed
        self.noise_sigma = noise_sigma
        self.noise_seed = noise_seed

    def fit(self, X, y=None):
        cubes, _ = _batch(X, 3)
        rows, cols, frames = cubes.shape[1:]
        profile = triangle_positions(self.C, self.d)
        if profile.n_frames != frames:
            raise ValueError(f"C/d gives {profile.n_frames} channels but cubes have {frames} frames")
        mask = generate_mask(rows, cols, self.fill, self.seed)
        self.mask_ = mask
        self.operator_ = build_operator(fit_mask(mask, rows, profile.positions[-1]), profile, rows, cols)
        if self.noise_sigma > 0:
            self.noise_ = NoiseModel("gaussian", self.noise_sigma, self.noise_seed)
        else:
            self.noise_ = NoiseModel()
        return self

    def transform(self, X):
        check_is_fitted(self, "operator_")
        cubes, single = _batch(X, 3)
        out = np.stack([forward(self.operator_, check_cube(c), self.noise_) for c in cubes])
        return out[0] if single else out


class GAPReconstructor(BaseEstimator):
    """Recover datacubes from coded snapshots with generalized alternating projection.

    ``fit`` takes the forward operator (a :class:`ForwardOperator` or a
    plane stack); ``predict`` takes one snapshot or a batch. The state of
    the last reconstruction is kept in ``state_`` so it can be inspected
    or resumed with ``predict(g, warm_start=True)``.
    """

    def __init__(
        self,
        transform=("dct", "dct", "dct"),
        partition="block",
        block_shape=(2, 2, 2),
        weighting="uniform",
        radius_rule="nondecreasing",
        max_iter=300,
        tol=1e-6,
        verbose=False,
    ):
        self.transform = transform
        self.partition = partition
        self.block_shape = block_shape
        self.weighting = weighting
        self.radius_rule = radius_rule
        self.max_iter = max_iter
        self.tol = tol
        self.verbose = verbose

    def _config(self):
        return SolverConfig(
            max_iterations=self.max_iter,
            stop_tolerance=self.tol,
            transform=self.transform,
            partition=self.partition,
            block_shape=tuple(self.block_shape),
            weighting=self.weighting,
            radius_rule=self.radius_rule,
            verbose=self.verbose,
        )

    def fit(self, X, y=None):
        operator = _as_operator(X)
        config = self._config()
        shape = operator.cube_shape
        # Resolve once so bad transform/partition settings fail at fit time.
        config = dataclasses.replace(
            config,
            transform=config.resolve_transform(shape),
            partition=config.resolve_partition(shape),
        )
        self.operator_ = operator
        self.config_ = config
        self.n_frames_ = operator.n_frames
        self.state_ = None
        return self

    def predict(self, X, warm_start=False):
        check_is_fitted(self, "operator_")
        snapshots, single = _batch(X, 2)
        if warm_start and (self.state_ is None or not single):
            raise NotFittedError("warm_start needs a previous single-snapshot prediction")
        estimates = []
        for g in snapshots:
            g = check_snapshot(g)
            f, state = solve(self.operator_, g, self.config_, state=self.state_ if warm_start else None)
            self.state_ = state
            estimates.append(f)
        out = np.stack(estimates)
        return out[0] if single else out

    def score(self, X, y=None):
        """Mean PSNR against ``y`` when given, else minus the sparse iterate's data residual."""
        estimate = self.predict(X)
        if y is not None:
            return float(np.mean(psnr(y, estimate)))
        return -float(self.state_.residual_history[-1])

    def residual(self, X, estimate):
        check_is_fitted(self, "operator_")
        return normalized_residual(self.operator_, estimate, X)
