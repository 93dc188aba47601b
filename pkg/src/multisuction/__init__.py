"""Multi-suction-cup grasp planning by 3D correlation with encoded gripper kernels."""
from .core import (
    CandidateSource, GraspCandidate, GripperSpec, PlannerConfig, RankEntry, RankedPlan,
    zyz_rotation,
)
from .conv import conv3d_dense, conv3d_sparse
from .decoder import decode, decode_digits, normal_direction_check
from .estimator import MultiCupGraspPlanner, check_scene
from .kernels import EncodedKernelSet, generate_encoded_kernels
from .oracle import brute_force_candidates, check_conditions
from .orientation import (
    NormalOrientationMap, OrientationSamples, build_orientation_map, sample_gripper_orientations,
)
from .planner import PlanOutcome, PlanRequest, plan
from .ranker import rank
from .scene_io import AffordanceScene, CameraIntrinsics, SceneFormatError, load_scene, save_scene
from .voxelizer import EmptySceneError, VoxelGrid, generate_voxel_grid

__version__ = "0.1.0"

__all__ = [
    "AffordanceScene", "CameraIntrinsics", "CandidateSource", "EmptySceneError",
    "EncodedKernelSet", "GraspCandidate", "GripperSpec", "MultiCupGraspPlanner",
    "NormalOrientationMap", "OrientationSamples", "PlanOutcome", "PlanRequest",
    "PlannerConfig", "RankEntry", "RankedPlan", "SceneFormatError", "VoxelGrid",
    "brute_force_candidates", "build_orientation_map", "check_conditions", "check_scene",
    "conv3d_dense", "conv3d_sparse", "decode", "decode_digits", "generate_encoded_kernels",
    "generate_voxel_grid", "load_scene", "normal_direction_check", "plan", "rank",
    "sample_gripper_orientations", "save_scene", "zyz_rotation",
]
