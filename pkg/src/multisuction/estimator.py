"""scikit-learn style front end for the planner.

``fit`` builds the offline normal-to-orientation map for the configured
angle lattice; ``predict`` plans a grasp for one scene or a list of scenes.
"""
from __future__ import annotations

import math
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .core import GripperSpec, PlannerConfig
from .orientation import load_or_build_map
from .planner import PlanOutcome, PlanRequest, plan
from .scene_io import AffordanceScene

DEFAULT_CUPS = ((-0.04, 0.0, 0.0), (0.04, 0.0, 0.0))


def check_scene(X) -> AffordanceScene:
    """Validate a planner input; raw (depth, affordance, intrinsics) tuples are accepted."""
    if isinstance(X, AffordanceScene):
        scene = X
    elif isinstance(X, (tuple, list)) and len(X) == 3:
        scene = AffordanceScene.from_arrays(X[0], X[1], X[2])
    else:
        raise TypeError(
            "expected an AffordanceScene or a (depth, affordance, intrinsics) tuple, "
            f"got {type(X).__name__}"
        )
    if scene.points.shape != scene.shape + (3,) or scene.normals.shape != scene.shape + (3,):
        raise ValueError("scene points/normals must be (H, W, 3)")
    return scene


def check_scenes(X) -> List[AffordanceScene]:
    if isinstance(X, AffordanceScene) or (
        isinstance(X, tuple) and len(X) == 3 and isinstance(X[0], np.ndarray)
    ):
        return [check_scene(X)]
    return [check_scene(x) for x in X]


class MultiCupGraspPlanner(BaseEstimator):
    """Multi-suction-cup grasp planner.

    Parameters mirror :class:`PlannerConfig` with angles given in degrees,
    plus the gripper cup layout.

    Examples
    --------
    >>> planner = MultiCupGraspPlanner().fit()          # doctest: +SKIP
    >>> outcome = planner.predict(scene)                # doctest: +SKIP
    >>> outcome.kind, outcome.optimal.activation        # doctest: +SKIP
    """

    def __init__(
        self,
        cup_centers: Sequence[Sequence[float]] = DEFAULT_CUPS,
        cup_radius: float = 0.0,
        voxel_size: float = 0.005,
        angle_interval_deg: float = 5.0,
        eps_normal_deg: float = 11.5,
        eps_dist: float = 0.01,
        min_points_per_voxel: int = 11,
        normal_k: int = 16,
        top_fraction: float = 0.10,
        weight_orient: float = 1.0,
        weight_dist: float = 1.0,
        weight_var: float = 1.0,
        min_cluster_size: int = 5,
        symmetry_reduction: bool = False,
        threads: int = 1,
        map_cache: Optional[Union[str, Path]] = None,
        ranking_limit: Optional[int] = None,
    ):
        self.cup_centers = cup_centers
        self.cup_radius = cup_radius
        self.voxel_size = voxel_size
        self.angle_interval_deg = angle_interval_deg
        self.eps_normal_deg = eps_normal_deg
        self.eps_dist = eps_dist
        self.min_points_per_voxel = min_points_per_voxel
        self.normal_k = normal_k
        self.top_fraction = top_fraction
        self.weight_orient = weight_orient
        self.weight_dist = weight_dist
        self.weight_var = weight_var
        self.min_cluster_size = min_cluster_size
        self.symmetry_reduction = symmetry_reduction
        self.threads = threads
        self.map_cache = map_cache
        self.ranking_limit = ranking_limit

    def _build_config(self) -> PlannerConfig:
        return PlannerConfig(
            voxel_size=self.voxel_size,
            angle_interval=math.radians(self.angle_interval_deg),
            eps_normal=math.radians(self.eps_normal_deg),
            eps_dist=self.eps_dist,
            min_points_per_voxel=self.min_points_per_voxel,
            normal_k=self.normal_k,
            top_fraction=self.top_fraction,
            weight_orient=self.weight_orient,
            weight_dist=self.weight_dist,
            weight_var=self.weight_var,
            min_cluster_size=self.min_cluster_size,
            symmetry_reduction=self.symmetry_reduction,
        )

    def fit(self, X=None, y=None):
        """Validate parameters and build (or load) the orientation map. ``X`` is ignored."""
        self.gripper_ = GripperSpec(self.cup_centers, self.cup_radius)
        self.config_ = self._build_config()
        self.orientation_map_ = load_or_build_map(
            Path(self.map_cache) if self.map_cache else None,
            self.config_.angle_interval, self.config_.eps_normal,
        )
        return self

    def plan_scene(self, scene: AffordanceScene, current_tcp=None) -> PlanOutcome:
        check_is_fitted(self, "orientation_map_")
        req = PlanRequest(check_scene(scene), self.gripper_, self.config_, current_tcp)
        return plan(req, self.orientation_map_, self.threads, self.ranking_limit)

    def predict(self, X):
        """PlanOutcome for one scene, or a list of outcomes for a list of scenes."""
        check_is_fitted(self, "orientation_map_")
        single = isinstance(X, AffordanceScene) or (
            isinstance(X, tuple) and len(X) == 3 and isinstance(X[0], np.ndarray)
        )
        outcomes = [self.plan_scene(s) for s in check_scenes(X)]
        return outcomes[0] if single else outcomes
