"""Differentiable voxel silhouettes: rendering, shape/pose fitting and evaluation."""

from .camera import CameraModel, Intrinsics, Viewpoint, object_to_pixel, projection_matrix, rotation_from_viewpoint
from .fitter import FitConfig, FitReport, Observation, PoseResult, fit_joint, fit_pose, fit_shape
from .mesh import TriangleMesh, marching_cubes
from .metrics import (
    PointCloud,
    PoseErrorSummary,
    angular_distance,
    cloud_density,
    summarize_pose_errors,
    symmetric_hausdorff,
    voxel_iou,
    voxels_to_pointcloud,
)
from .projector import (
    RenderGradients,
    Silhouette,
    flatten_silhouette,
    render_silhouette,
    render_with_gradients,
    resample_volume,
    silhouette_loss,
)
from .shapes import SyntheticShapeSpec, voxelize_primitive, voxelize_union
from .voxel import BinaryVoxelGrid, VoxelGrid, binarize, compose_shape, compute_mean_shape, select_threshold

__version__ = "0.1.0"
