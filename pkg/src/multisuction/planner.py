"""End-to-end multi-cup grasp planning with the single-cup fallback."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from .conv import iter_conv3d_sparse
from .core import (
    CandidateSource, GraspCandidate, GripperSpec, PlannerConfig, RankedPlan,
    make_candidate, vec_to_angles, zyz_rotation,
)
from .decoder import CandidateSet, ContactIndex, decode_set, normal_check_mask
from .kernels import generate_encoded_kernels
from .orientation import NormalOrientationMap, build_orientation_map, sample_gripper_orientations
from .ranker import ClusterMaps, cluster_affordance, rank_set
from .scene_io import AffordanceScene
from .voxelizer import EmptySceneError, VoxelGrid, generate_voxel_grid

MULTI_CUP = "multi_cup"
FALLBACK = "single_cup_fallback"
NO_SOLUTION = "no_solution"


@dataclass
class PlanRequest:
    scene: AffordanceScene
    gripper: GripperSpec
    config: PlannerConfig = field(default_factory=PlannerConfig)
    current_tcp: Optional[np.ndarray] = None


@dataclass
class PlanOutcome:
    kind: str
    plan: Optional[RankedPlan]
    stage_timings: Dict[str, float] = field(default_factory=dict)
    counters: Dict[str, int] = field(default_factory=dict)
    grid: Optional[VoxelGrid] = field(default=None, repr=False)
    maps: Optional[ClusterMaps] = field(default=None, repr=False)
    candidates: Optional[CandidateSet] = field(default=None, repr=False)

    @property
    def optimal(self) -> Optional[GraspCandidate]:
        return self.plan.optimal if self.plan is not None else None


class _Timer:
    def __init__(self, timings: Dict[str, float]):
        self.timings = timings

    def stage(self, name: str):
        timer = self

        class _Ctx:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                timer.timings[name] = timer.timings.get(name, 0.0) + 1e3 * (
                    time.perf_counter() - self.t0
                )

        return _Ctx()


def fallback_pixel(scene: AffordanceScene):
    """Affordance argmax over valid pixels, ties broken by distance to the image center."""
    aff = np.where(scene.affordance_mask, scene.affordance, -np.inf)
    best = aff.max()
    if not np.isfinite(best) or best <= 0:
        return None
    vs, us = np.nonzero(aff == best)
    cy = (scene.shape[0] - 1) / 2.0
    cx = (scene.shape[1] - 1) / 2.0
    d2 = (vs - cy) ** 2 + (us - cx) ** 2
    k = int(np.argmin(d2))  # argmin keeps raster order among equal distances
    return int(vs[k]), int(us[k])


def single_cup_fallback(
    scene: AffordanceScene, gripper: GripperSpec, current_tcp=None
) -> Optional[GraspCandidate]:
    """One-cup grasp at the affordance maximum, gripper axis along the surface normal.

    The cup whose placement needs the smallest TCP displacement from
    ``current_tcp`` is used; cup 0 when no current pose is known.
    """
    pix = fallback_pixel(scene)
    if pix is None:
        return None
    v, u = pix
    point = scene.points[v, u]
    normal = scene.normals[v, u]
    if not np.all(np.isfinite(normal)):
        normal = np.array([0.0, 0.0, 1.0])
    normal = normal / np.linalg.norm(normal)
    theta, phi = vec_to_angles(normal)
    O = zyz_rotation(theta, phi, 0.0)
    tcps = point - gripper.cup_centers_local @ O.T
    cup = 0
    if current_tcp is not None:
        cup = int(np.argmin(np.linalg.norm(tcps - np.asarray(current_tcp, float), axis=1)))
    A = np.zeros(gripper.cup_count, dtype=np.int8)
    A[cup] = 1
    return make_candidate(tcps[cup], O, gripper, A, CandidateSource.SINGLE_CUP_FALLBACK)


def plan(
    req: PlanRequest,
    orientation_map: Optional[NormalOrientationMap] = None,
    threads: int = 1,
    ranking_limit: Optional[int] = None,
) -> PlanOutcome:
    """Voxelise, sample orientations, correlate encoded kernels, decode, check
    normals and rank; fall back to a single cup when nothing survives."""
    scene, gripper, cfg = req.scene, req.gripper, req.config
    timings: Dict[str, float] = {}
    counters: Dict[str, int] = {
        "kernels": 0, "cells_convolved": 0, "candidates_decoded": 0,
        "candidates_normal_ok": 0, "candidates_ranked": 0,
    }
    timer = _Timer(timings)

    with timer.stage("voxelize"):
        try:
            grid = generate_voxel_grid(scene, cfg.voxel_size, cfg.min_points_per_voxel)
        except EmptySceneError:
            return PlanOutcome(NO_SOLUTION, None, timings, counters)

    survivors = CandidateSet.empty(gripper.cup_count)
    if gripper.cup_count >= 2 and grid.n_occupied:
        with timer.stage("orientation_map"):
            omap = orientation_map
            if omap is None or not omap.matches(cfg.angle_interval, cfg.eps_normal):
                omap = build_orientation_map(cfg.angle_interval, cfg.eps_normal)
        with timer.stage("sample_orientations"):
            samples = sample_gripper_orientations(
                scene, omap, cfg.top_fraction, half_turn=cfg.symmetry_reduction
            )
        with timer.stage("kernels"):
            kernels = generate_encoded_kernels(samples, gripper, cfg.voxel_size)
        counters["kernels"] = len(kernels)
        counters["cells_convolved"] = len(kernels) * int(np.prod(grid.dims))
        index = ContactIndex(scene)
        parts = []
        if len(kernels):
            stream = iter_conv3d_sparse(grid, kernels, threads=threads)
            while True:
                with timer.stage("conv3d"):
                    res = next(stream, None)
                if res is None:
                    break
                with timer.stage("decode"):
                    cands = decode_set(res, grid, samples, gripper)
                counters["candidates_decoded"] += len(cands)
                with timer.stage("normal_check"):
                    keep = normal_check_mask(cands, index, cfg.eps_normal, cfg.voxel_size)
                parts.append(cands.take(keep))
        survivors = CandidateSet.concatenate(parts, gripper.cup_count)
        counters["candidates_normal_ok"] = len(survivors)

    maps = None
    if len(survivors):
        with timer.stage("cluster"):
            maps = cluster_affordance(scene, cfg.voxel_size, cfg.min_cluster_size)
        with timer.stage("rank"):
            ranked = rank_set(survivors, maps, scene, cfg, limit=ranking_limit)
        counters["candidates_ranked"] = len(ranked.ranking)
        if ranked.optimal is not None:
            return PlanOutcome(MULTI_CUP, ranked, timings, counters, grid, maps, survivors)

    with timer.stage("fallback"):
        fb = single_cup_fallback(scene, gripper, req.current_tcp)
    if fb is None:
        return PlanOutcome(NO_SOLUTION, None, timings, counters, grid, maps, survivors)
    return PlanOutcome(FALLBACK, RankedPlan(fb, []), timings, counters, grid, maps, survivors)
