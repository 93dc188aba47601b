"""Shared domain types, planner configuration and rotation helpers."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np

MAX_CUPS = 9


class CandidateSource(str, Enum):
    MULTI_CUP = "multi_cup"
    SINGLE_CUP_FALLBACK = "single_cup_fallback"


@dataclass(frozen=True)
class GripperSpec:
    """Cup layout of a vacuum gripper in its own frame.

    All cup centers lie in the gripper x-y plane together with the TCP, which
    sits at the local origin.
    """

    cup_centers_local: np.ndarray
    cup_radius: float = 0.0

    def __post_init__(self):
        centers = np.array(self.cup_centers_local, dtype=float).reshape(-1, 3)
        if len(centers) < 1:
            raise ValueError("gripper needs at least one cup")
        if len(centers) > MAX_CUPS:
            raise ValueError(
                f"at most {MAX_CUPS} cups are supported by the one-digit-per-cup "
                f"encoding, got {len(centers)}"
            )
        if not np.all(np.isfinite(centers)):
            raise ValueError("cup centers must be finite")
        if np.any(np.abs(centers[:, 2]) > 1e-12):
            raise ValueError("cup centers must lie in the gripper plane (z = 0)")
        centers[:, 2] = 0.0
        if len(centers) > 1 and not np.max(np.linalg.norm(centers, axis=1)) > 0:
            raise ValueError("at least one cup must be offset from the TCP")
        centers.setflags(write=False)
        object.__setattr__(self, "cup_centers_local", centers)
        object.__setattr__(self, "cup_radius", float(self.cup_radius))

    @property
    def cup_count(self) -> int:
        return len(self.cup_centers_local)

    @property
    def cup_distances(self) -> np.ndarray:
        """Distance of every cup center from the TCP."""
        return np.linalg.norm(self.cup_centers_local, axis=1)

    @property
    def max_cup_distance(self) -> float:
        return float(self.cup_distances.max())

    def digit_values(self) -> np.ndarray:
        """Integer code of each cup: cup ``i`` owns the value ``10**(N_c-1-i)``."""
        n = self.cup_count
        return np.array([10 ** (n - 1 - i) for i in range(n)], dtype=np.int64)

    @classmethod
    def from_dict(cls, doc: dict) -> "GripperSpec":
        if "cup_centers_local" not in doc:
            raise KeyError("gripper document is missing 'cup_centers_local'")
        return cls(doc["cup_centers_local"], doc.get("cup_radius", 0.0))

    def to_dict(self) -> dict:
        return {
            "cup_centers_local": self.cup_centers_local.tolist(),
            "cup_radius": self.cup_radius,
            "cup_count": self.cup_count,
        }


_ANGLE_FIELDS = ("angle_interval", "eps_normal")


@dataclass(frozen=True)
class PlannerConfig:
    """Tunable planner parameters. Angles are radians."""

    voxel_size: float = 0.005
    angle_interval: float = math.radians(5.0)
    eps_normal: float = math.radians(11.5)
    eps_dist: float = 0.01
    min_points_per_voxel: int = 11
    normal_k: int = 16
    top_fraction: float = 0.10
    weight_orient: float = 1.0
    weight_dist: float = 1.0
    weight_var: float = 1.0
    min_cluster_size: int = 5
    symmetry_reduction: bool = False

    def __post_init__(self):
        if not self.voxel_size > 0:
            raise ValueError("voxel_size must be positive")
        if not 0 < self.angle_interval <= math.pi / 2:
            raise ValueError("angle_interval must be in (0, pi/2]")
        if not self.eps_normal > 0:
            raise ValueError("eps_normal must be positive")
        if not self.eps_dist > 0:
            raise ValueError("eps_dist must be positive")
        if self.min_points_per_voxel < 1:
            raise ValueError("min_points_per_voxel must be >= 1")
        if self.normal_k < 3:
            raise ValueError("normal_k must be >= 3")
        if not 0 < self.top_fraction <= 1:
            raise ValueError("top_fraction must be in (0, 1]")
        if self.min_cluster_size < 1:
            raise ValueError("min_cluster_size must be >= 1")

    @classmethod
    def from_dict(cls, doc: dict) -> "PlannerConfig":
        """Build from a JSON-style mapping; ``<angle>_deg`` keys are accepted."""
        kwargs = {}
        known = set(cls.__dataclass_fields__)
        for key, value in doc.items():
            if key.endswith("_deg") and key[:-4] in _ANGLE_FIELDS:
                kwargs[key[:-4]] = math.radians(float(value))
            elif key in known:
                kwargs[key] = value
            else:
                raise KeyError(f"unknown config key {key!r}")
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.__dataclass_fields__}


@dataclass(frozen=True)
class GraspCandidate:
    position: np.ndarray
    orientation: np.ndarray
    cup_centers_world: np.ndarray
    activation: np.ndarray
    source: CandidateSource = CandidateSource.MULTI_CUP
    orientation_index: int = -1
    cell: Tuple[int, int, int] = (-1, -1, -1)

    @property
    def approach_axis(self) -> np.ndarray:
        """Gripper axis-z in world coordinates."""
        return self.orientation[:, 2]

    @property
    def active_cups(self) -> np.ndarray:
        return np.flatnonzero(self.activation)

    def key(self) -> tuple:
        """Identity used for set comparisons between pipeline and oracle."""
        return (self.orientation_index, tuple(self.cell), tuple(int(a) for a in self.activation))


def make_candidate(
    position,
    orientation,
    gripper: GripperSpec,
    activation,
    source: CandidateSource = CandidateSource.MULTI_CUP,
    orientation_index: int = -1,
    cell=(-1, -1, -1),
) -> GraspCandidate:
    P = np.asarray(position, dtype=float).reshape(3)
    O = np.asarray(orientation, dtype=float).reshape(3, 3)
    C = gripper.cup_centers_local @ O.T + P
    A = np.asarray(activation, dtype=np.int8).reshape(gripper.cup_count)
    return GraspCandidate(P, O, C, A, source, int(orientation_index), tuple(int(c) for c in cell))


@dataclass(frozen=True)
class RankEntry:
    labels: Tuple[int, ...]
    max_obj: int
    score: float
    candidate: GraspCandidate
    breakdown: Optional[object] = None


@dataclass(frozen=True)
class RankedPlan:
    optimal: Optional[GraspCandidate]
    ranking: List[RankEntry] = field(default_factory=list)


def zyz_rotation(theta: float, phi: float, gamma: float) -> np.ndarray:
    """Rotation ``R_z(theta) R_y(phi) R_z(gamma)``.

    The third column is the approach axis
    ``[sin(phi)cos(theta), sin(phi)sin(theta), cos(phi)]``.
    """
    ct, st = math.cos(theta), math.sin(theta)
    cp, sp = math.cos(phi), math.sin(phi)
    cg, sg = math.cos(gamma), math.sin(gamma)
    return np.array(
        [
            [cp * ct * cg - st * sg, -cp * ct * sg - st * cg, sp * ct],
            [cp * st * cg + ct * sg, -cp * st * sg + ct * cg, sp * st],
            [-sp * cg, sp * sg, cp],
        ]
    )


def zyz_rotations(theta, phi, gamma) -> np.ndarray:
    """Vectorised :func:`zyz_rotation` over equal-length angle arrays, shape (N, 3, 3)."""
    theta, phi, gamma = np.broadcast_arrays(
        np.asarray(theta, float), np.asarray(phi, float), np.asarray(gamma, float)
    )
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(phi), np.sin(phi)
    cg, sg = np.cos(gamma), np.sin(gamma)
    R = np.empty(theta.shape + (3, 3))
    R[..., 0, 0] = cp * ct * cg - st * sg
    R[..., 0, 1] = -cp * ct * sg - st * cg
    R[..., 0, 2] = sp * ct
    R[..., 1, 0] = cp * st * cg + ct * sg
    R[..., 1, 1] = -cp * st * sg + ct * cg
    R[..., 1, 2] = sp * st
    R[..., 2, 0] = -sp * cg
    R[..., 2, 1] = sp * sg
    R[..., 2, 2] = cp
    return R


def angles_to_vec(theta, phi) -> np.ndarray:
    theta = np.asarray(theta, float)
    phi = np.asarray(phi, float)
    return np.stack(
        [np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)], axis=-1
    )


def vec_to_angles(v: Sequence[float]) -> Tuple[float, float]:
    """Azimuth and polar angle of an up-facing unit vector.

    The azimuth is canonicalised to 0 at the pole.
    """
    v = np.asarray(v, dtype=float).reshape(3)
    norm = float(np.linalg.norm(v))
    if abs(norm - 1.0) > 1e-6:
        raise ValueError(f"expected a unit vector, got norm {norm:.6g}")
    if v[2] < 0:
        raise ValueError("expected an up-facing vector (z >= 0)")
    phi = math.acos(min(1.0, v[2] / norm))
    if v[0] == 0.0 and v[1] == 0.0:
        return 0.0, phi
    theta = math.atan2(v[1], v[0])
    if theta == -math.pi:
        theta = math.pi
    return theta, phi


def angle_between(a, b) -> np.ndarray:
    """Angle between unit vectors along the last axis, clipped for safety."""
    dots = np.clip(np.sum(np.asarray(a) * np.asarray(b), axis=-1), -1.0, 1.0)
    return np.arccos(dots)


def is_rotation(R, atol: float = 1e-9) -> bool:
    R = np.asarray(R, dtype=float)
    return R.shape == (3, 3) and np.allclose(R.T @ R, np.eye(3), atol=atol) and abs(
        np.linalg.det(R) - 1.0
    ) < atol
