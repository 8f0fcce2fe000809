"""Coded aperture compressive temporal imaging: forward model and GAP reconstruction."""

from .calibration import CalibrationStack, simulate_calibration_stack, subset_operator
from .estimator import CodedApertureEncoder, GAPReconstructor
from .forward_model import (
    ForwardOperator,
    Mask,
    MotionProfile,
    NoiseModel,
    adjoint,
    build_operator,
    build_rerandomized_operator,
    explicit_matrix,
    forward,
    generate_mask,
    shift_mask,
    triangle_positions,
)
from .gap import (
    GroupPartition,
    SolverConfig,
    SolverState,
    block_partition,
    group_norms,
    normalized_residual,
    project_l21_ball,
    project_linear_manifold,
    select_radius,
    singleton_partition,
    solve,
)
from .scenes import SceneSpec, generate_scene
from .transforms import TransformSpec, build_axis_transform

__version__ = "0.1.0"

__all__ = [
    "CalibrationStack",
    "CodedApertureEncoder",
    "ForwardOperator",
    "GAPReconstructor",
    "GroupPartition",
    "Mask",
    "MotionProfile",
    "NoiseModel",
    "SceneSpec",
    "SolverConfig",
    "SolverState",
    "TransformSpec",
    "adjoint",
    "block_partition",
    "build_axis_transform",
    "build_operator",
    "build_rerandomized_operator",
    "explicit_matrix",
    "forward",
    "generate_mask",
    "generate_scene",
    "group_norms",
    "normalized_residual",
    "project_l21_ball",
    "project_linear_manifold",
    "select_radius",
    "shift_mask",
    "simulate_calibration_stack",
    "singleton_partition",
    "solve",
    "subset_operator",
    "triangle_positions",
]
