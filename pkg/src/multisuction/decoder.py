"""Decode correlation sums into cup activations and grasp candidates."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, Union

import numpy as np
from scipy.spatial import cKDTree

from .conv import ConvResult
from .core import CandidateSource, GraspCandidate, GripperSpec
from .orientation import OrientationSamples
from .scene_io import AffordanceScene
from .voxelizer import VoxelGrid


def decode_digits(values, cup_count: int) -> np.ndarray:
    """Per-cup activation flags from correlation sums, shape ``values.shape + (N_c,)``."""
    values = np.asarray(values, dtype=np.int64)
    powers = 10 ** np.arange(cup_count - 1, -1, -1, dtype=np.int64)
    digits = (values[..., None] // powers) % 10
    return np.minimum(digits, 1).astype(np.int8)


@dataclass
class CandidateSet:
    """Grasp candidates as parallel arrays.

    Row ``r`` is the gripper at orientation ``orientation_index[r]`` with its
    TCP at the center of grid cell ``cells[r]``.
    """

    orientation_index: np.ndarray
    cells: np.ndarray
    activation: np.ndarray
    positions: np.ndarray
    rotations: np.ndarray
    cup_centers: np.ndarray

    def __len__(self) -> int:
        return len(self.orientation_index)

    @classmethod
    def empty(cls, cup_count: int) -> "CandidateSet":
        return cls(
            np.zeros(0, np.int64), np.zeros((0, 3), np.int64),
            np.zeros((0, cup_count), np.int8), np.zeros((0, 3)),
            np.zeros((0, 3, 3)), np.zeros((0, cup_count, 3)),
        )

    def take(self, rows) -> "CandidateSet":
        return CandidateSet(
            self.orientation_index[rows], self.cells[rows], self.activation[rows],
            self.positions[rows], self.rotations[rows], self.cup_centers[rows],
        )

    @classmethod
    def concatenate(cls, parts: List["CandidateSet"], cup_count: int) -> "CandidateSet":
        if not parts:
            return cls.empty(cup_count)
        return cls(*(np.concatenate([getattr(p, f) for p in parts]) for f in cls.__dataclass_fields__))

    def candidate(self, r: int) -> GraspCandidate:
        return GraspCandidate(
            self.positions[r].copy(), self.rotations[r].copy(), self.cup_centers[r].copy(),
            self.activation[r].copy(), CandidateSource.MULTI_CUP,
            int(self.orientation_index[r]), tuple(int(c) for c in self.cells[r]),
        )

    def to_list(self) -> List[GraspCandidate]:
        return [self.candidate(r) for r in range(len(self))]

    @classmethod
    def from_list(cls, cands: List[GraspCandidate], cup_count: int) -> "CandidateSet":
        if not cands:
            return cls.empty(cup_count)
        return cls(
            np.array([c.orientation_index for c in cands], dtype=np.int64),
            np.array([c.cell for c in cands], dtype=np.int64).reshape(-1, 3),
            np.array([c.activation for c in cands], dtype=np.int8),
            np.array([c.position for c in cands], dtype=float),
            np.array([c.orientation for c in cands], dtype=float),
            np.array([c.cup_centers_world for c in cands], dtype=float),
        )


def decode_set(
    conv: Union[ConvResult, Iterable[ConvResult]],
    V: VoxelGrid,
    samples: OrientationSamples,
    gripper: GripperSpec,
) -> CandidateSet:
    """Cells where at least two cups land on occupied voxels, for every orientation."""
    results = [conv] if isinstance(conv, ConvResult) else conv
    n_c = gripper.cup_count
    parts = []
    for res in results:
        vals = res.values
        if n_c < 2 or vals.size == 0:
            continue
        # any value with two set digits is at least 11 in its lowest two places
        hit = np.nonzero(vals >= 11)
        if len(hit[0]) == 0:
            continue
        A = decode_digits(vals[hit], n_c)
        keep = A.sum(axis=1) >= 2
        n = hit[0][keep] + res.kernel_offset
        cells = np.stack([h[keep] for h in hit[1:]], axis=1).astype(np.int64)
        A = A[keep]
        P = V.origin + (cells + 0.5) * V.voxel_size
        R = np.asarray(samples.rotations)[n]
        C = np.einsum("nab,cb->nca", R, gripper.cup_centers_local) + P[:, None, :]
        parts.append(CandidateSet(n.astype(np.int64), cells, A, P, R, C))
    return CandidateSet.concatenate(parts, n_c)


def decode(
    conv: ConvResult, V: VoxelGrid, samples: OrientationSamples, gripper: GripperSpec
) -> List[GraspCandidate]:
    return decode_set(conv, V, samples, gripper).to_list()


class ContactIndex:
    """Nearest affordance-masked scene point lookup."""

    def __init__(self, scene: AffordanceScene):
        mask = scene.affordance_mask.ravel()
        self.pixels = np.flatnonzero(mask)
        self.points = scene.points.reshape(-1, 3)[self.pixels]
        self.normals = scene.normals.reshape(-1, 3)[self.pixels]
        self.tree = cKDTree(self.points) if len(self.points) else None

    def query(self, xyz: np.ndarray):
        """Distance, point, normal and pixel of the nearest masked point to each query."""
        xyz = np.asarray(xyz, dtype=float).reshape(-1, 3)
        if self.tree is None or len(xyz) == 0:
            nan3 = np.full((len(xyz), 3), np.nan)
            return np.full(len(xyz), np.inf), nan3, nan3.copy(), np.full(len(xyz), -1)
        dist, idx = self.tree.query(xyz)
        return dist, self.points[idx], self.normals[idx], self.pixels[idx]


def normal_check_mask(
    cands: CandidateSet,
    index: ContactIndex,
    eps_normal: float,
    voxel_size: float,
) -> np.ndarray:
    if len(cands) == 0:
        return np.zeros(0, dtype=bool)
    guard = voxel_size * math.sqrt(3.0)
    rows, cups = np.nonzero(cands.activation)
    dist, _, normals, _ = index.query(cands.cup_centers[rows, cups])
    axis = cands.rotations[rows, :, 2]
    with np.errstate(invalid="ignore"):
        dots = np.clip(np.sum(normals * axis, axis=1), -1.0, 1.0)
        ang = np.arccos(dots)
    ok = (dist <= guard) & np.isfinite(ang) & (ang < eps_normal)
    bad = np.zeros(len(cands), dtype=bool)
    np.logical_or.at(bad, rows, ~ok)
    return ~bad


def normal_direction_check(
    cands: Union[List[GraspCandidate], CandidateSet],
    scene: AffordanceScene,
    eps_normal: float,
    voxel_size: float = 0.005,
    index: Optional[ContactIndex] = None,
):
    """Keep candidates whose active cups all sit on a surface facing the approach axis.

    Each active cup is matched to its nearest affordance-masked point; that
    point must lie within ``voxel_size * sqrt(3)`` of the cup center and its
    normal within ``eps_normal`` of gripper axis-z.
    """
    index = index or ContactIndex(scene)
    if isinstance(cands, CandidateSet):
        return cands.take(normal_check_mask(cands, index, eps_normal, voxel_size))
    if not cands:
        return []
    arr = CandidateSet.from_list(cands, len(cands[0].activation))
    keep = normal_check_mask(arr, index, eps_normal, voxel_size)
    return [c for c, k in zip(cands, keep) if k]
