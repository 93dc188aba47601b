"""Scene ingestion: depth/affordance arrays, camera model, point cloud and normals."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy.spatial import cKDTree

PathLike = Union[str, Path]


class SceneFormatError(ValueError):
    """Raised when an input file is malformed; carries the file and field."""

    def __init__(self, path, field: str, message: str):
        self.path = str(path)
        self.field = field
        super().__init__(f"{self.path}: {field}: {message}")


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    camera_to_world: np.ndarray

    def __post_init__(self):
        T = np.array(self.camera_to_world, dtype=float).reshape(4, 4)
        for name in ("fx", "fy", "cx", "cy"):
            if not math.isfinite(float(getattr(self, name))):
                raise ValueError(f"{name} must be finite")
        if not np.all(np.isfinite(T)):
            raise ValueError("camera_to_world must be finite")
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")
        R = T[:3, :3]
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-6) or abs(np.linalg.det(R) - 1) > 1e-6:
            raise ValueError("camera_to_world rotation must be orthonormal with det +1")
        if not np.allclose(T[3], [0, 0, 0, 1]):
            raise ValueError("camera_to_world last row must be [0, 0, 0, 1]")
        T.setflags(write=False)
        object.__setattr__(self, "camera_to_world", T)
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))

    @property
    def world_to_camera(self) -> np.ndarray:
        R = self.camera_to_world[:3, :3]
        t = self.camera_to_world[:3, 3]
        T = np.eye(4)
        T[:3, :3] = R.T
        T[:3, 3] = -R.T @ t
        return T

    def project(self, points_world: np.ndarray) -> np.ndarray:
        """World points (..., 3) to continuous pixel coordinates (..., 2) as (u, v)."""
        W2C = self.world_to_camera
        pc = points_world @ W2C[:3, :3].T + W2C[:3, 3]
        z = pc[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = self.fx * pc[..., 0] / z + self.cx
            v = self.fy * pc[..., 1] / z + self.cy
        return np.stack([u, v], axis=-1)

    @classmethod
    def from_dict(cls, doc: dict) -> "CameraIntrinsics":
        T = np.asarray(doc.get("camera_to_world", np.eye(4).ravel()), dtype=float)
        if T.size != 16:
            raise ValueError("camera_to_world needs 16 numbers (row-major 4x4)")
        return cls(
            float(doc["fx"]), float(doc["fy"]), float(doc["cx"]), float(doc["cy"]),
            int(doc["width"]), int(doc["height"]), T.reshape(4, 4),
        )

    def to_dict(self) -> dict:
        return {
            "fx": float(self.fx), "fy": float(self.fy),
            "cx": float(self.cx), "cy": float(self.cy),
            "width": self.width, "height": self.height,
            "camera_to_world": [float(x) for x in self.camera_to_world.ravel()],
        }


@dataclass(frozen=True)
class AffordanceScene:
    """Depth + affordance images with the derived world point cloud and normals.

    Invalid pixels (zero depth) hold NaN in ``points`` and ``normals``.
    """

    depth: np.ndarray
    affordance: np.ndarray
    intrinsics: CameraIntrinsics
    points: np.ndarray
    normals: np.ndarray

    @classmethod
    def from_arrays(
        cls,
        depth: np.ndarray,
        affordance: np.ndarray,
        intrinsics: CameraIntrinsics,
        normals: Optional[np.ndarray] = None,
        normal_k: int = 16,
    ) -> "AffordanceScene":
        depth = np.asarray(depth, dtype=float)
        affordance = np.asarray(affordance, dtype=float)
        if depth.ndim != 2:
            raise ValueError(f"depth must be 2-D, got shape {depth.shape}")
        if affordance.shape != depth.shape:
            raise ValueError(
                f"affordance shape {affordance.shape} does not match depth shape {depth.shape}"
            )
        if depth.shape != (intrinsics.height, intrinsics.width):
            raise ValueError(
                f"image shape {depth.shape} does not match intrinsics "
                f"({intrinsics.height}, {intrinsics.width})"
            )
        if np.any(~np.isfinite(depth)) or np.any(depth < 0):
            raise ValueError("depth must be finite and non-negative")
        affordance = np.where(np.isfinite(affordance), affordance, 0.0)
        # affordance on invalid depth has no surface to grasp
        affordance = np.where(depth > 0, np.clip(affordance, 0.0, 1.0), 0.0)
        points = depth_to_pointcloud(depth, intrinsics)
        if normals is None:
            normals = estimate_normals(points, normal_k)
        else:
            normals = np.array(normals, dtype=float)
            normals[~np.isfinite(points).all(axis=-1)] = np.nan
        for arr in (depth, affordance, points, normals):
            arr.setflags(write=False)
        return cls(depth, affordance, intrinsics, points, normals)

    @property
    def shape(self):
        return self.depth.shape

    @property
    def valid_mask(self) -> np.ndarray:
        return np.isfinite(self.points).all(axis=-1)

    @property
    def affordance_mask(self) -> np.ndarray:
        return (self.affordance > 0) & self.valid_mask


def depth_to_pointcloud(depth: np.ndarray, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Pinhole back-projection of every pixel into world coordinates, (H, W, 3)."""
    depth = np.asarray(depth, dtype=float)
    H, W = depth.shape
    v, u = np.mgrid[0:H, 0:W].astype(float)
    with np.errstate(invalid="ignore"):
        x = (u - intrinsics.cx) * depth / intrinsics.fx
        y = (v - intrinsics.cy) * depth / intrinsics.fy
    cam = np.stack([x, y, depth], axis=-1)
    T = intrinsics.camera_to_world
    world = cam @ T[:3, :3].T + T[:3, 3]
    world[depth <= 0] = np.nan
    return world


def estimate_normals(points: np.ndarray, k: int = 16) -> np.ndarray:
    """PCA normals from the ``k`` nearest valid neighbours, flipped to world +z.

    Points without ``k`` valid neighbours in the scene get NaN normals.
    """
    if k < 3:
        raise ValueError("k must be >= 3")
    points = np.asarray(points, dtype=float)
    flat = points.reshape(-1, 3)
    valid = np.isfinite(flat).all(axis=1)
    normals = np.full_like(flat, np.nan)
    pts = flat[valid]
    if len(pts) < k:
        return normals.reshape(points.shape)
    tree = cKDTree(pts)
    _, idx = tree.query(pts, k=k)
    nbrs = pts[idx]
    centered = nbrs - nbrs.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered) / k
    _, vecs = np.linalg.eigh(cov)
    n = vecs[:, :, 0]
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    n[n[:, 2] < 0] *= -1
    normals[valid] = n
    return normals.reshape(points.shape)


def read_npy_image(path: PathLike, field: str) -> np.ndarray:
    path = Path(path)
    try:
        arr = np.load(path, allow_pickle=False)
    except FileNotFoundError:
        raise
    except (ValueError, OSError, EOFError) as exc:
        raise SceneFormatError(path, field, f"malformed NPY array: {exc}") from exc
    if not isinstance(arr, np.ndarray) or arr.dtype.kind != "f":
        raise SceneFormatError(path, field, f"expected a float array, got dtype {arr.dtype}")
    if arr.ndim != 2:
        raise SceneFormatError(path, field, f"expected shape (H, W), got {arr.shape}")
    return arr.astype(float)


def write_npy_image(path: PathLike, array: np.ndarray) -> None:
    np.save(Path(path), np.ascontiguousarray(array, dtype="<f4"), allow_pickle=False)


def read_intrinsics(path: PathLike) -> CameraIntrinsics:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SceneFormatError(path, "intrinsics", f"invalid JSON: {exc}") from exc
    for key in ("fx", "fy", "cx", "cy", "width", "height"):
        if key not in doc:
            raise SceneFormatError(path, key, "missing")
        if not isinstance(doc[key], (int, float)) or not math.isfinite(doc[key]):
            raise SceneFormatError(path, key, f"must be a finite number, got {doc[key]!r}")
    T = doc.get("camera_to_world", list(np.eye(4).ravel()))
    if len(T) != 16 or not all(isinstance(x, (int, float)) and math.isfinite(x) for x in T):
        raise SceneFormatError(path, "camera_to_world", "needs 16 finite numbers")
    try:
        return CameraIntrinsics.from_dict(doc)
    except ValueError as exc:
        raise SceneFormatError(path, "intrinsics", str(exc)) from exc


def write_intrinsics(path: PathLike, intrinsics: CameraIntrinsics) -> None:
    Path(path).write_text(json.dumps(intrinsics.to_dict(), indent=2, sort_keys=True) + "\n")


def load_scene(
    depth_file: PathLike,
    affordance_file: PathLike,
    intrinsics_file: PathLike,
    normal_k: int = 16,
) -> AffordanceScene:
    depth = read_npy_image(depth_file, "depth")
    affordance = read_npy_image(affordance_file, "affordance")
    intrinsics = read_intrinsics(intrinsics_file)
    if affordance.shape != depth.shape:
        raise SceneFormatError(
            affordance_file, "shape",
            f"affordance {affordance.shape} does not match depth {depth.shape}",
        )
    if depth.shape != (intrinsics.height, intrinsics.width):
        raise SceneFormatError(
            intrinsics_file, "width/height",
            f"({intrinsics.height}, {intrinsics.width}) does not match depth {depth.shape}",
        )
    if not np.all(np.isfinite(depth)) or np.any(depth < 0):
        raise SceneFormatError(depth_file, "depth", "values must be finite and >= 0")
    return AffordanceScene.from_arrays(depth, affordance, intrinsics, normal_k=normal_k)


def save_scene(out_dir: PathLike, scene: AffordanceScene) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "depth": out / "depth.npy",
        "affordance": out / "affordance.npy",
        "intrinsics": out / "intrinsics.json",
    }
    write_npy_image(files["depth"], scene.depth)
    write_npy_image(files["affordance"], scene.affordance)
    write_intrinsics(files["intrinsics"], scene.intrinsics)
    return files
