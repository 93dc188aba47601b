"""Integer-encoded gripper kernels, one per sampled orientation.

Cup ``i`` of an ``N_c``-cup gripper writes the digit value ``10**(N_c-1-i)``
at the kernel cell under its rotated center, so a correlation sum spells out
which cups landed on occupied cells, one decimal digit per cup.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import GripperSpec
from .orientation import OrientationSamples


def kernel_extent(max_cup_distance: float, voxel_size: float) -> int:
    return 2 * int(math.ceil(max_cup_distance / voxel_size - 1e-9)) + 1


def quantize_offsets(offsets_m: np.ndarray, voxel_size: float) -> np.ndarray:
    """Cell offsets of metric offsets from a cell-centered TCP (round half up)."""
    scaled = np.round(np.asarray(offsets_m) / voxel_size, 9)
    return np.floor(scaled + 0.5).astype(np.int64)


@dataclass(frozen=True)
class EncodedKernelSet:
    """Kernels stored sparsely as per-cup cell offsets and digit values.

    ``offsets[n, i]`` is the cell offset of cup ``i`` from the kernel center
    for orientation ``n``; ``values[n, i]`` its digit (0 when dropped by a
    collision). ``dense`` materialises the full ``extent**3`` arrays.
    """

    offsets: np.ndarray
    values: np.ndarray
    extent: int
    orientations: OrientationSamples
    collision_flags: np.ndarray
    cup_count: int

    def __len__(self) -> int:
        return len(self.offsets)

    @property
    def center(self) -> int:
        return (self.extent - 1) // 2

    def kernel(self, n: int) -> np.ndarray:
        K = np.zeros((self.extent,) * 3, dtype=np.int64)
        idx = self.offsets[n] + self.center
        for (x, y, z), v in zip(idx, self.values[n]):
            if v:
                K[x, y, z] = v
        return K

    def dense(self) -> np.ndarray:
        out = np.zeros((len(self),) + (self.extent,) * 3, dtype=np.int64)
        for n in range(len(self)):
            out[n] = self.kernel(n)
        return out

    def subset(self, start: int, stop: int) -> "EncodedKernelSet":
        rots = self.orientations
        sub = OrientationSamples(rots.rotations[start:stop], rots.angles[start:stop])
        return EncodedKernelSet(
            self.offsets[start:stop], self.values[start:stop], self.extent, sub,
            self.collision_flags[start:stop], self.cup_count,
        )


def generate_encoded_kernels(
    samples: OrientationSamples, gripper: GripperSpec, voxel_size: float
) -> EncodedKernelSet:
    if gripper.cup_count > 9:
        raise ValueError("at most 9 cups fit the one-digit-per-cup encoding")
    extent = kernel_extent(gripper.max_cup_distance, voxel_size)
    digits = gripper.digit_values()
    rotations = np.asarray(samples.rotations, dtype=float).reshape(-1, 3, 3)
    # rotated cup centers relative to the TCP, (N_O, N_c, 3)
    rotated = np.einsum("nab,cb->nca", rotations, gripper.cup_centers_local)
    offsets = quantize_offsets(rotated, voxel_size)
    values = np.broadcast_to(digits, offsets.shape[:2]).copy()
    collisions = np.zeros(len(offsets), dtype=bool)
    n_c = gripper.cup_count
    for i in range(n_c):
        for j in range(i + 1, n_c):
            same = np.all(offsets[:, i] == offsets[:, j], axis=1)
            if same.any():
                collisions |= same
                # cup i carries the larger digit and wins the cell
                values[same, j] = 0
    return EncodedKernelSet(offsets, values, extent, samples, collisions, n_c)
