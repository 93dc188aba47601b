"""Brute-force references for the convolution pipeline and the grasp conditions.

Nothing here reuses pipeline intermediates: candidates are enumerated by
placing the gripper at every cell directly, and conditions are re-derived
from the raw scene points.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.spatial import cKDTree

from .conv import conv3d_dense, conv3d_sparse
from .core import GraspCandidate, GripperSpec, PlannerConfig, make_candidate
from .decoder import decode_set
from .kernels import generate_encoded_kernels
from .orientation import OrientationSamples
from .scene_io import AffordanceScene
from .voxelizer import VoxelGrid

MAX_ORACLE_CELLS = 64**3
MAX_ORACLE_ORIENTATIONS = 128


def _cell_offset(x: float, voxel_size: float) -> int:
    # a cup at metric offset x from a cell-centered TCP falls in cell floor(x/l + 1/2)
    return int(math.floor(round(x / voxel_size, 9) + 0.5))


def brute_force_candidates(
    V: VoxelGrid, samples: OrientationSamples, gripper: GripperSpec, voxel_size: Optional[float] = None
) -> List[GraspCandidate]:
    """Every (orientation, cell) where two or more cups land on occupied cells."""
    l = V.voxel_size if voxel_size is None else float(voxel_size)
    nx, ny, nz = V.dims
    if nx * ny * nz > MAX_ORACLE_CELLS or len(samples) > MAX_ORACLE_ORIENTATIONS:
        raise ValueError(
            f"instance too large for brute force: {V.dims} cells x {len(samples)} orientations"
        )
    occ = V.occupancy.astype(bool)
    n_c = gripper.cup_count
    out: List[GraspCandidate] = []
    for n, O in enumerate(np.asarray(samples.rotations)):
        offsets = []
        for c0 in gripper.cup_centers_local:
            rotated = [sum(O[a][b] * c0[b] for b in range(3)) for a in range(3)]
            offsets.append(tuple(_cell_offset(x, l) for x in rotated))
        hits = np.zeros((nx, ny, nz, n_c), dtype=np.int8)
        for i, off in enumerate(offsets):
            if off in offsets[:i]:
                continue  # shares its cell with a lower-index cup
            if any(abs(o) >= d for o, d in zip(off, V.dims)):
                continue  # this cup never lands inside the grid
            src = [slice(max(0, o), min(d, d + o)) for o, d in zip(off, V.dims)]
            dst = [slice(max(0, -o), min(d, d - o)) for o, d in zip(off, V.dims)]
            hits[dst[0], dst[1], dst[2], i] = occ[src[0], src[1], src[2]]
        for cell in np.argwhere(hits.sum(axis=3) >= 2):
            m, t, p = (int(x) for x in cell)
            P = V.origin + (np.array([m, t, p]) + 0.5) * l
            out.append(make_candidate(P, O, gripper, hits[m, t, p], orientation_index=n, cell=(m, t, p)))
    return out


@dataclass
class ConditionReport:
    cond1: bool
    cond2: bool
    cond3: bool
    cond4: bool
    angle_deviation: float
    distance_residual: float
    coplanarity_residual: float
    contact_distance: np.ndarray = field(repr=False, default=None)
    cup_angles: np.ndarray = field(repr=False, default=None)
    cup_distance_residuals: np.ndarray = field(repr=False, default=None)

    @property
    def all_ok(self) -> bool:
        return self.cond1 and self.cond2 and self.cond3 and self.cond4

    def to_dict(self) -> dict:
        return {
            "cond1": self.cond1, "cond2": self.cond2, "cond3": self.cond3, "cond4": self.cond4,
            "angle_deviation": self.angle_deviation,
            "distance_residual": self.distance_residual,
            "coplanarity_residual": self.coplanarity_residual,
        }


class ConditionChecker:
    """Re-checks the four multi-cup grasp conditions against raw scene data."""

    def __init__(self, scene: AffordanceScene, config: Optional[PlannerConfig] = None,
                 gripper: Optional[GripperSpec] = None):
        self.config = config or PlannerConfig()
        self.gripper = gripper
        aff = scene.affordance.ravel()
        pts = scene.points.reshape(-1, 3)
        keep = (aff > 0) & np.isfinite(pts).all(axis=1)
        self.points = pts[keep]
        self.normals = scene.normals.reshape(-1, 3)[keep]
        self.tree = cKDTree(self.points) if len(self.points) else None

    def check(self, c: GraspCandidate) -> ConditionReport:
        cfg = self.config
        guard = cfg.voxel_size * math.sqrt(3.0)
        active = np.flatnonzero(c.activation)
        n_g = c.orientation[:, 2]
        C = c.cup_centers_world[active]
        if self.tree is None or len(active) == 0:
            return ConditionReport(False, False, False, False, math.inf, math.inf, math.inf)
        dist, idx = self.tree.query(C)
        cp = self.points[idx]
        ncp = self.normals[idx]
        with np.errstate(invalid="ignore"):
            ang = np.arccos(np.clip(ncp @ n_g, -1.0, 1.0))
        ang = np.where(np.isfinite(ang), ang, math.pi)
        if self.gripper is not None:
            d0 = self.gripper.cup_distances[active]
        else:
            # cup layout recovered from the pose itself
            d0 = np.linalg.norm(C - c.position, axis=1)
        d_cp = np.linalg.norm(cp - c.position, axis=1)
        resid = np.abs(d_cp - d0)
        coplanar = np.abs((C - c.position) @ n_g)
        supported = dist <= guard
        return ConditionReport(
            cond1=bool(len(active) >= 2 and supported.all()),
            cond2=bool(coplanar.max() <= cfg.voxel_size),
            cond3=bool(np.all(ang < cfg.eps_normal)),
            cond4=bool(np.all(resid < cfg.eps_dist)),
            angle_deviation=float(ang.max()),
            distance_residual=float(resid.max()),
            coplanarity_residual=float(coplanar.max()),
            contact_distance=dist,
            cup_angles=ang,
            cup_distance_residuals=resid,
        )


def check_conditions(
    c: GraspCandidate,
    scene: AffordanceScene,
    config: Optional[PlannerConfig] = None,
    gripper: Optional[GripperSpec] = None,
) -> ConditionReport:
    return ConditionChecker(scene, config, gripper).check(c)


def candidate_keys(cands) -> set:
    return {c.key() for c in cands}


def random_gripper(rng: np.random.Generator, cup_count: int) -> GripperSpec:
    """Two cups on a line or four cups on a rectangle, with random spacing."""
    if cup_count == 2:
        half = rng.uniform(0.01, 0.04)
        return GripperSpec([[-half, 0, 0], [half, 0, 0]])
    if cup_count == 4:
        hx, hy = rng.uniform(0.01, 0.035, size=2)
        return GripperSpec([[-hx, -hy, 0], [hx, -hy, 0], [-hx, hy, 0], [hx, hy, 0]])
    raise ValueError("random grippers have 2 or 4 cups")


def random_instance(rng: np.random.Generator, grid: int = 24, n_orient: int = 8,
                    cup_count: int = 2, occupancy: Optional[float] = None,
                    voxel_size: float = 0.005):
    """Random occupancy grid, orientation set and gripper for equivalence checks."""
    occupancy = rng.uniform(0.02, 0.10) if occupancy is None else occupancy
    dims = tuple(int(x) for x in rng.integers(max(4, grid // 2), grid + 1, size=3))
    V = VoxelGrid.from_occupancy(rng.random(dims) < occupancy, voxel_size,
                                 origin=rng.uniform(-0.1, 0.1, size=3))
    angles = np.column_stack([
        rng.uniform(-np.pi, np.pi, n_orient),
        rng.uniform(0, np.pi / 2, n_orient),
        rng.uniform(-np.pi, np.pi, n_orient),
    ])
    return V, OrientationSamples.from_angles(angles), random_gripper(rng, cup_count)


def pipeline_keys(V: VoxelGrid, samples: OrientationSamples, gripper: GripperSpec,
                  dense: bool = False) -> set:
    K = generate_encoded_kernels(samples, gripper, V.voxel_size)
    conv = conv3d_dense(V, K) if dense else conv3d_sparse(V, K)
    cs = decode_set(conv, V, samples, gripper)
    return {(int(n), tuple(int(x) for x in cell), tuple(int(a) for a in A))
            for n, cell, A in zip(cs.orientation_index, cs.cells, cs.activation)}


def equivalence_mismatch(V: VoxelGrid, samples: OrientationSamples, gripper: GripperSpec) -> dict:
    """Symmetric difference between the conv+decode and brute-force candidate sets."""
    fast = pipeline_keys(V, samples, gripper)
    ref = candidate_keys(brute_force_candidates(V, samples, gripper))
    return {"missing": sorted(ref - fast), "extra": sorted(fast - ref), "count": len(ref)}
