"""Binary occupancy grid of affordance-masked points."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from .scene_io import AffordanceScene

# absorbs floating-point noise when a coordinate sits exactly on a cell boundary
_EDGE_EPS = 1e-9


class EmptySceneError(ValueError):
    """No pixel carries a positive affordance score."""


@dataclass(frozen=True)
class VoxelGrid:
    origin: np.ndarray
    voxel_size: float
    dims: Tuple[int, int, int]
    occupancy: np.ndarray
    cell_point_index: Dict[Tuple[int, int, int], np.ndarray]

    @property
    def n_occupied(self) -> int:
        return int(self.occupancy.sum())

    def occupied_cells(self) -> np.ndarray:
        return np.argwhere(self.occupancy)

    def cell_center(self, index) -> np.ndarray:
        return self.origin + (np.asarray(index, dtype=float) + 0.5) * self.voxel_size

    def cell_of(self, points: np.ndarray) -> np.ndarray:
        """Cell index of world points, clamped into the grid."""
        return cell_indices(points, self.origin, self.voxel_size, self.dims)

    @classmethod
    def from_occupancy(cls, occupancy, voxel_size=0.005, origin=(0.0, 0.0, 0.0)) -> "VoxelGrid":
        """Grid with a given occupancy and no source pixels (tests and benchmarks)."""
        occ = np.asarray(occupancy).astype(np.uint8)
        if occ.ndim != 3:
            raise ValueError("occupancy must be 3-D")
        occ = (occ > 0).astype(np.uint8)
        return cls(np.asarray(origin, dtype=float), float(voxel_size), occ.shape, occ, {})


def grid_dims(lo: np.ndarray, hi: np.ndarray, voxel_size: float) -> Tuple[int, int, int]:
    n = np.floor((hi - lo) / voxel_size + _EDGE_EPS).astype(int)
    # a flat extent still needs one layer of cells
    return tuple(int(x) for x in np.maximum(n, 1))


def cell_indices(points, origin, voxel_size, dims) -> np.ndarray:
    idx = np.floor((np.asarray(points) - origin) / voxel_size + _EDGE_EPS).astype(np.int64)
    return np.clip(idx, 0, np.asarray(dims) - 1)


def generate_voxel_grid(
    scene: AffordanceScene, voxel_size: float = 0.005, min_points_per_voxel: int = 11
) -> VoxelGrid:
    """Voxelise the affordance-masked point cloud over its bounding box.

    A cell is occupied when it holds at least ``min_points_per_voxel`` points.
    """
    if voxel_size <= 0:
        raise ValueError("voxel_size must be positive")
    mask = scene.affordance_mask.ravel()
    pixels = np.flatnonzero(mask)
    if len(pixels) == 0:
        raise EmptySceneError("scene has no affordance-positive pixels")
    pts = scene.points.reshape(-1, 3)[pixels]
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    dims = grid_dims(lo, hi, voxel_size)
    cells = cell_indices(pts, lo, voxel_size, dims)
    flat = np.ravel_multi_index(cells.T, dims)
    counts = np.bincount(flat, minlength=int(np.prod(dims)))
    occ = (counts >= min_points_per_voxel).astype(np.uint8).reshape(dims)

    order = np.argsort(flat, kind="stable")
    sorted_flat = flat[order]
    keep_cells = np.flatnonzero(counts >= min_points_per_voxel)
    starts = np.searchsorted(sorted_flat, keep_cells, side="left")
    ends = np.searchsorted(sorted_flat, keep_cells, side="right")
    index: Dict[Tuple[int, int, int], np.ndarray] = {}
    for cell, s, e in zip(keep_cells, starts, ends):
        key = tuple(int(c) for c in np.unravel_index(cell, dims))
        index[key] = pixels[order[s:e]]
    return VoxelGrid(lo, float(voxel_size), dims, occ, index)
