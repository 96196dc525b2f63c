"""Camera localization in a co-visibility indexed LiDAR map.

Pipeline: build a voxelised map whose points remember which database images
see them, retrieve the most similar database image for a query, then refine
the query pose by feature-metric Levenberg-Marquardt on SE(3).
"""

from .errors import CloudVisionError
from .formats import LidarScan, TimedPose
from .geometry import CameraIntrinsics, Pose, Twist, pose_error, project, se3_exp, se3_log
from .mapcloud import IndexedMap, build_indexed_map, covisible_points, load_map, save_map
from .retrieval import RetrievalDatabase, compute_descriptor, query_top_k
from .solver import LocalizationResult, SolverConfig, localize, refine_pose

__version__ = "0.1.0"

__all__ = [
    "CameraIntrinsics",
    "CloudVisionError",
    "IndexedMap",
    "LidarScan",
    "LocalizationResult",
    "Pose",
    "RetrievalDatabase",
    "SolverConfig",
    "TimedPose",
    "Twist",
    "build_indexed_map",
    "compute_descriptor",
    "covisible_points",
    "load_map",
    "localize",
    "pose_error",
    "project",
    "query_top_k",
    "refine_pose",
    "save_map",
    "se3_exp",
    "se3_log",
]
