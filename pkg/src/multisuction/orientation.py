"""Offline normal-to-approach-axis map and gripper orientation sampling."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .core import angles_to_vec, zyz_rotations
from .scene_io import AffordanceScene

Key = Tuple[int, int]


@dataclass(frozen=True)
class AngleLattice:
    """Azimuth/polar lattice with step ``delta_alpha``.

    Azimuth index ``ii`` runs over ``1..n_theta`` so that ``ii*da - pi`` covers
    (-pi, pi]; polar index ``jj`` runs over ``0..n_phi``. The pole is a single
    key with the azimuth canonicalised to 0.
    """

    delta_alpha: float

    @property
    def n_theta(self) -> int:
        return int(math.floor(2 * math.pi / self.delta_alpha + 1e-9))

    @property
    def n_phi(self) -> int:
        return int(math.floor(0.5 * math.pi / self.delta_alpha + 1e-9))

    @property
    def pole_ii(self) -> int:
        return int(round(math.pi / self.delta_alpha))

    def theta(self, ii):
        return np.asarray(ii) * self.delta_alpha - math.pi

    def phi(self, jj):
        return np.asarray(jj) * self.delta_alpha

    def keys(self) -> np.ndarray:
        """Every distinct lattice direction as (ii, jj) rows, pole first."""
        ii, jj = np.meshgrid(
            np.arange(1, self.n_theta + 1), np.arange(1, self.n_phi + 1), indexing="ij"
        )
        body = np.stack([ii.ravel(), jj.ravel()], axis=1)
        body = body[np.lexsort((body[:, 0], body[:, 1]))]
        return np.vstack([[[self.pole_ii, 0]], body]).astype(np.int64)

    def vectors(self, keys: np.ndarray) -> np.ndarray:
        keys = np.asarray(keys)
        return angles_to_vec(self.theta(keys[..., 0]), self.phi(keys[..., 1]))

    def snap(self, normals: np.ndarray) -> np.ndarray:
        """Nearest lattice key of each up-facing unit normal, shape (N, 2)."""
        n = np.asarray(normals, dtype=float).reshape(-1, 3)
        theta = np.arctan2(n[:, 1], n[:, 0])
        phi = np.arccos(np.clip(n[:, 2], -1.0, 1.0))
        jj = np.clip(np.rint(phi / self.delta_alpha), 0, self.n_phi).astype(np.int64)
        ii = np.rint((theta + math.pi) / self.delta_alpha).astype(np.int64) % self.n_theta
        ii[ii == 0] = self.n_theta
        ii[jj == 0] = self.pole_ii
        return np.stack([ii, jj], axis=1)


@dataclass(frozen=True)
class NormalOrientationMap:
    delta_alpha: float
    eps_normal: float
    entries: Dict[Key, np.ndarray] = field(repr=False)

    @property
    def lattice(self) -> AngleLattice:
        return AngleLattice(self.delta_alpha)

    def lookup(self, key) -> np.ndarray:
        return self.entries[(int(key[0]), int(key[1]))]

    def matches(self, delta_alpha: float, eps_normal: float) -> bool:
        return math.isclose(self.delta_alpha, delta_alpha, rel_tol=0, abs_tol=1e-12) and \
            math.isclose(self.eps_normal, eps_normal, rel_tol=0, abs_tol=1e-12)

    def to_json(self) -> dict:
        return {
            "delta_alpha": self.delta_alpha,
            "eps_normal": self.eps_normal,
            "entries": {f"{k[0]},{k[1]}": v.tolist() for k, v in sorted(self.entries.items())},
        }

    @classmethod
    def from_json(cls, doc: dict) -> "NormalOrientationMap":
        entries = {}
        for key, value in doc["entries"].items():
            ii, jj = (int(x) for x in key.split(","))
            entries[(ii, jj)] = np.asarray(value, dtype=np.int64).reshape(-1, 2)
        return cls(float(doc["delta_alpha"]), float(doc["eps_normal"]), entries)


def build_orientation_map(delta_alpha: float, eps_normal: float) -> NormalOrientationMap:
    """For every lattice normal, list the lattice approach axes within ``eps_normal``."""
    if not 0 < delta_alpha <= math.pi / 2 + 1e-12:
        raise ValueError("delta_alpha must be in (0, pi/2]")
    lattice = AngleLattice(delta_alpha)
    keys = lattice.keys()
    vecs = lattice.vectors(keys)
    angles = np.arccos(np.clip(vecs @ vecs.T, -1.0, 1.0))
    entries = {}
    for row, key in enumerate(keys):
        entries[(int(key[0]), int(key[1]))] = keys[angles[row] < eps_normal]
    return NormalOrientationMap(float(delta_alpha), float(eps_normal), entries)


def load_or_build_map(
    cache_path: Optional[Path], delta_alpha: float, eps_normal: float
) -> NormalOrientationMap:
    """Read a cached map when its parameters match, otherwise rebuild and cache it."""
    if cache_path is not None:
        cache_path = Path(cache_path)
        if cache_path.exists():
            try:
                cached = NormalOrientationMap.from_json(json.loads(cache_path.read_text()))
            except (ValueError, KeyError):
                cached = None
            if cached is not None and cached.matches(delta_alpha, eps_normal):
                return cached
    omap = build_orientation_map(delta_alpha, eps_normal)
    if cache_path is not None:
        cache_path.parent.mkdir(parents=True, exist_ok=True)
        cache_path.write_text(json.dumps(omap.to_json()))
    return omap


@dataclass(frozen=True)
class OrientationSamples:
    rotations: np.ndarray
    angles: np.ndarray
    axis_keys: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    normal_keys: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))

    def __len__(self) -> int:
        return len(self.rotations)

    @classmethod
    def from_angles(cls, angles) -> "OrientationSamples":
        angles = np.asarray(angles, dtype=float).reshape(-1, 3)
        return cls(zyz_rotations(angles[:, 0], angles[:, 1], angles[:, 2]), angles)

    @classmethod
    def from_rotations(cls, rotations) -> "OrientationSamples":
        rotations = np.asarray(rotations, dtype=float).reshape(-1, 3, 3)
        return cls(rotations, np.full((len(rotations), 3), np.nan))


def select_frequent_keys(keys: np.ndarray, top_fraction: float) -> Tuple[np.ndarray, np.ndarray]:
    """Unique keys whose count reaches the ``1 - top_fraction`` quantile of counts."""
    uniq, counts = np.unique(keys, axis=0, return_counts=True)
    threshold = np.quantile(counts, 1.0 - top_fraction)
    keep = counts >= threshold
    keep[np.argmax(counts)] = True
    return uniq[keep], counts[keep]


def gamma_values(delta_alpha: float, half_turn: bool = False) -> np.ndarray:
    """Spin angles ``kk*da - pi`` over (-pi, pi]; ``half_turn`` keeps (-pi, 0]."""
    lattice = AngleLattice(delta_alpha)
    kk = np.arange(1, lattice.n_theta + 1)
    gammas = lattice.theta(kk)
    if half_turn:
        gammas = gammas[gammas <= 1e-12]
    return gammas


def sample_gripper_orientations(
    scene: AffordanceScene,
    omap: NormalOrientationMap,
    top_fraction: float = 0.10,
    half_turn: bool = False,
) -> OrientationSamples:
    """Gripper orientations whose approach axis matches the dominant scene normals."""
    lattice = omap.lattice
    mask = scene.affordance_mask & np.isfinite(scene.normals).all(axis=-1)
    normals = scene.normals[mask]
    if len(normals) == 0:
        return OrientationSamples(np.zeros((0, 3, 3)), np.zeros((0, 3)))
    keys = lattice.snap(normals)
    kept, _ = select_frequent_keys(keys, top_fraction)
    axes = np.unique(np.vstack([omap.lookup(k) for k in kept]), axis=0)
    axes = axes[np.lexsort((axes[:, 0], axes[:, 1]))]
    gammas = gamma_values(omap.delta_alpha, half_turn)
    theta = np.repeat(lattice.theta(axes[:, 0]), len(gammas))
    phi = np.repeat(lattice.phi(axes[:, 1]), len(gammas))
    gamma = np.tile(gammas, len(axes))
    angles = np.stack([theta, phi, gamma], axis=1)
    rotations = zyz_rotations(theta, phi, gamma)
    return OrientationSamples(rotations, angles, np.repeat(axes, len(gammas), axis=0), kept)
