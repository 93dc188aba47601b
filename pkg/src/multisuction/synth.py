"""Deterministic synthetic scenes with analytic depth, normals and affordance."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core import GripperSpec
from .scene_io import AffordanceScene, CameraIntrinsics

KINDS = ("plane", "box", "sphere")


def rpy_matrix(rpy: Sequence[float]) -> np.ndarray:
    """Rotation from roll/pitch/yaw in radians, ``Rz(yaw) Ry(pitch) Rx(roll)``."""
    r, p, y = rpy
    cr, sr, cp, sp, cy, sy = math.cos(r), math.sin(r), math.cos(p), math.sin(p), math.cos(y), math.sin(y)
    Rx = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
    Ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
    Rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]])
    return Rz @ Ry @ Rx


@dataclass(frozen=True)
class Primitive:
    """A plane (rectangle, size sx x sy), box (sx x sy x sz) or sphere (radius = size[0]).

    ``center`` is the geometric center; for a plane the rectangle lies in its
    local x-y plane.
    """

    kind: str
    center: Tuple[float, float, float]
    size: Tuple[float, ...]
    rpy: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    affordable: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown primitive kind {self.kind!r}")
        need = {"plane": 2, "box": 3, "sphere": 1}[self.kind]
        if len(self.size) < need or any(s <= 0 for s in self.size[:need]):
            raise ValueError(f"{self.kind} needs {need} positive size values")

    @property
    def rotation(self) -> np.ndarray:
        return rpy_matrix(self.rpy)

    @property
    def top_center(self) -> np.ndarray:
        c = np.asarray(self.center, float)
        if self.kind == "box":
            return c + self.rotation[:, 2] * self.size[2] / 2
        if self.kind == "sphere":
            return c + np.array([0, 0, self.size[0]])
        return c

    @classmethod
    def from_dict(cls, doc: dict) -> "Primitive":
        rpy = doc.get("rpy")
        if rpy is None:
            rpy = [math.radians(a) for a in doc.get("rpy_deg", (0, 0, 0))]
        return cls(doc["type"], tuple(doc["center"]), tuple(doc["size"]), tuple(rpy),
                   bool(doc.get("affordable", True)))

    def to_dict(self) -> dict:
        return {"type": self.kind, "center": list(self.center), "size": list(self.size),
                "rpy": list(self.rpy), "affordable": self.affordable}


def top_down_camera(
    height: float = 0.4, width: int = 320, rows: int = 240, focal: float = 500.0,
    xy: Tuple[float, float] = (0.0, 0.0),
) -> CameraIntrinsics:
    """Camera at ``height`` above the world x-y plane looking straight down."""
    T = np.eye(4)
    T[:3, :3] = np.diag([1.0, -1.0, -1.0])
    T[:3, 3] = [xy[0], xy[1], height]
    return CameraIntrinsics(focal, focal, width / 2.0, rows / 2.0, width, rows, T)


@dataclass(frozen=True)
class SceneSpec:
    primitives: List[Primitive]
    camera: CameraIntrinsics = field(default_factory=top_down_camera)
    margin: float = 0.01
    ramp: bool = False
    cap_angle: float = math.radians(11.5)
    depth_noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.margin < 0:
            raise ValueError("affordance margin must be >= 0")
        if not self.primitives:
            raise ValueError("scene needs at least one primitive")

    @classmethod
    def from_dict(cls, doc: dict) -> "SceneSpec":
        cam = doc.get("camera")
        camera = CameraIntrinsics.from_dict(cam) if cam else top_down_camera()
        aff = doc.get("affordance", {})
        cap = aff.get("cap_angle_deg")
        return cls(
            [Primitive.from_dict(p) for p in doc["primitives"]],
            camera,
            float(aff.get("margin", 0.01)),
            bool(aff.get("ramp", False)),
            math.radians(cap) if cap is not None else math.radians(11.5),
            float(doc.get("depth_noise", 0.0)),
            int(doc.get("seed", 0)),
        )

    def to_dict(self) -> dict:
        return {
            "primitives": [p.to_dict() for p in self.primitives],
            "camera": self.camera.to_dict(),
            "affordance": {"margin": self.margin, "ramp": self.ramp,
                           "cap_angle_deg": math.degrees(self.cap_angle)},
            "depth_noise": self.depth_noise,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class Region:
    """Graspable area of one primitive: a rectangle or a disc, facing up."""

    primitive: int
    kind: str  # "rect" or "disc"
    center: np.ndarray
    axes: np.ndarray  # 3x2 in-plane unit axes
    half: Tuple[float, float]
    normal: np.ndarray

    def polygon(self, n: int = 32) -> np.ndarray:
        if self.kind == "rect":
            hx, hy = self.half
            corners = [(hx, hy), (-hx, hy), (-hx, -hy), (hx, -hy)]
        else:
            r = self.half[0]
            corners = [(r * math.cos(a), r * math.sin(a))
                       for a in np.linspace(0, 2 * math.pi, n, endpoint=False)]
        return np.array([self.center + self.axes @ np.array(c) for c in corners])

    def contains(self, pts: np.ndarray) -> np.ndarray:
        rel = (np.asarray(pts) - self.center) @ self.axes
        if self.kind == "rect":
            return (np.abs(rel[..., 0]) <= self.half[0]) & (np.abs(rel[..., 1]) <= self.half[1])
        return np.hypot(rel[..., 0], rel[..., 1]) <= self.half[0]


@dataclass(frozen=True)
class GroundTruth:
    regions: List[Region]
    normals: np.ndarray = field(repr=False)
    primitive_index: np.ndarray = field(repr=False)

    def expected_max_obj(
        self, gripper: GripperSpec, eps_dist: float = 0.01,
        step: float = 0.002, yaw_step_deg: float = 2.0,
    ) -> int:
        """Largest number of distinct regions a level gripper can touch with
        two or more cups at once; 0 when no multi-cup placement exists.

        Brute force over TCP positions and yaw angles for every group of
        horizontal regions at a common height.
        """
        flat = [r for r in self.regions if r.normal[2] > math.cos(math.radians(11.5))]
        best = 0
        used = set()
        for i, r in enumerate(flat):
            if i in used:
                continue
            group = [j for j, s in enumerate(flat) if abs(s.center[2] - r.center[2]) < eps_dist]
            used.update(group)
            regs = [flat[j] for j in group]
            z = float(np.mean([g.center[2] for g in regs]))
            polys = np.vstack([g.polygon() for g in regs])
            reach = gripper.max_cup_distance
            lo = polys[:, :2].min(axis=0) - reach
            hi = polys[:, :2].max(axis=0) + reach
            xs = np.arange(lo[0], hi[0] + step, step)
            ys = np.arange(lo[1], hi[1] + step, step)
            X, Y = np.meshgrid(xs, ys, indexing="ij")
            tcp = np.stack([X.ravel(), Y.ravel(), np.full(X.size, z)], axis=1)
            for yaw in np.radians(np.arange(0.0, 360.0, yaw_step_deg)):
                c, s = math.cos(yaw), math.sin(yaw)
                R = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
                cups = tcp[:, None, :] + (gripper.cup_centers_local @ R.T)[None]
                inside = np.stack([g.contains(cups) for g in regs], axis=2)  # (T, Nc, R)
                cups_on = inside.any(axis=2).sum(axis=1)
                objs = inside.any(axis=1).sum(axis=1)
                ok = cups_on >= 2
                if ok.any():
                    best = max(best, int(objs[ok].max()))
        return best


def _intersect(prim: Primitive, origin: np.ndarray, dirs: np.ndarray):
    """Ray parameter and world normal of the first hit, inf where missed."""
    R = prim.rotation
    c = np.asarray(prim.center, float)
    o = R.T @ (origin - c)
    d = dirs @ R  # local directions, row-wise R^T d
    n_rays = len(dirs)
    s = np.full(n_rays, np.inf)
    normal_local = np.zeros((n_rays, 3))
    with np.errstate(divide="ignore", invalid="ignore"):
        if prim.kind == "plane":
            t = -o[2] / d[:, 2]
            p = o + t[:, None] * d
            hit = (t > 0) & (np.abs(p[:, 0]) <= prim.size[0] / 2) & (np.abs(p[:, 1]) <= prim.size[1] / 2)
            s[hit] = t[hit]
            normal_local[:, 2] = 1.0
        elif prim.kind == "box":
            h = np.asarray(prim.size[:3]) / 2
            t1 = (-h - o) / d
            t2 = (h - o) / d
            tmin = np.minimum(t1, t2)
            tmax = np.maximum(t1, t2)
            t_near = tmin.max(axis=1)
            t_far = tmax.min(axis=1)
            hit = (t_near <= t_far) & (t_near > 0)
            s[hit] = t_near[hit]
            face = tmin.argmax(axis=1)
            sign = -np.sign(d[np.arange(n_rays), face])
            normal_local[np.arange(n_rays), face] = sign
        else:
            r = prim.size[0]
            b = d @ o
            a = np.sum(d * d, axis=1)
            disc = b * b - a * (o @ o - r * r)
            t = (-b - np.sqrt(disc)) / a
            hit = (disc >= 0) & (t > 0)
            s[hit] = t[hit]
            p = o + t[:, None] * d
            normal_local = p / r
    return s, normal_local @ R.T


def _face_coords(prim: Primitive, pts: np.ndarray) -> np.ndarray:
    return (pts - np.asarray(prim.center, float)) @ prim.rotation


def render_scene(
    spec: SceneSpec, normals: str = "analytic", normal_k: int = 16
) -> Tuple[AffordanceScene, GroundTruth]:
    """Ray-cast the primitives; ``normals`` selects analytic or PCA-estimated scene normals."""
    cam = spec.camera
    T = cam.camera_to_world
    origin = T[:3, 3]
    W2C = cam.world_to_camera
    for k, prim in enumerate(spec.primitives):
        zc = (W2C[:3, :3] @ np.asarray(prim.center, float) + W2C[:3, 3])[2]
        if zc <= 0:
            raise ValueError(f"primitive {k} ({prim.kind}) is behind the camera")
    H, W = cam.height, cam.width
    v, u = np.mgrid[0:H, 0:W].astype(float)
    rays_cam = np.stack([(u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, np.ones_like(u)], axis=-1)
    dirs = rays_cam.reshape(-1, 3) @ T[:3, :3].T
    best = np.full(len(dirs), np.inf)
    owner = np.full(len(dirs), -1)
    nrm = np.full((len(dirs), 3), np.nan)
    for k, prim in enumerate(spec.primitives):
        s, n = _intersect(prim, origin, dirs)
        closer = s < best
        best[closer] = s[closer]
        owner[closer] = k
        nrm[closer] = n[closer]
    hit = np.isfinite(best)
    depth = np.where(hit, best, 0.0)
    pts = origin + depth[:, None] * dirs

    aff = np.zeros(len(dirs))
    for k, prim in enumerate(spec.primitives):
        sel = owner == k
        if not prim.affordable or not sel.any():
            continue
        idx = np.flatnonzero(sel)
        if prim.kind == "sphere":
            tilt = np.arccos(np.clip(nrm[idx, 2], -1, 1))
            ok = tilt <= spec.cap_angle
            rho = tilt / spec.cap_angle if spec.cap_angle > 0 else np.zeros_like(tilt)
        else:
            local = _face_coords(prim, pts[idx])
            top_face = (nrm[idx] @ prim.rotation[:, 2]) > 0.5
            hx = prim.size[0] / 2 - spec.margin
            hy = prim.size[1] / 2 - spec.margin
            inner = (np.abs(local[:, 0]) <= hx) & (np.abs(local[:, 1]) <= hy)
            ok = top_face & inner & (hx > 0) & (hy > 0) & (nrm[idx, 2] > 0)
            with np.errstate(divide="ignore", invalid="ignore"):
                rho = np.hypot(local[:, 0] / hx, local[:, 1] / hy)
        vals = 1.0 - 0.5 * np.minimum(rho, 1.0) if spec.ramp else np.ones(len(idx))
        aff[idx[ok]] = vals[ok]

    if spec.depth_noise > 0:
        rng = np.random.default_rng(spec.seed)
        depth = np.where(hit, depth + rng.normal(0.0, spec.depth_noise, depth.shape), 0.0)
        depth = np.maximum(depth, 0.0)

    depth_img = depth.reshape(H, W)
    aff_img = aff.reshape(H, W)
    nrm_img = nrm.reshape(H, W, 3)
    nrm_img[nrm_img[..., 2] < 0] *= -1
    if normals == "analytic":
        scene = AffordanceScene.from_arrays(depth_img, aff_img, cam, normals=nrm_img)
    elif normals == "estimated":
        scene = AffordanceScene.from_arrays(depth_img, aff_img, cam, normal_k=normal_k)
    else:
        raise ValueError("normals must be 'analytic' or 'estimated'")
    return scene, GroundTruth(_regions(spec), nrm_img, owner.reshape(H, W))


def _regions(spec: SceneSpec) -> List[Region]:
    regions = []
    for k, prim in enumerate(spec.primitives):
        if not prim.affordable:
            continue
        R = prim.rotation
        if prim.kind == "sphere":
            r = prim.size[0]
            cap_r = r * math.sin(spec.cap_angle)
            regions.append(Region(k, "disc", prim.top_center, np.eye(3)[:, :2], (cap_r, cap_r),
                                  np.array([0.0, 0.0, 1.0])))
        else:
            hx = prim.size[0] / 2 - spec.margin
            hy = prim.size[1] / 2 - spec.margin
            if hx <= 0 or hy <= 0:
                continue
            regions.append(Region(k, "rect", prim.top_center, R[:, :2], (hx, hy), R[:, 2]))
    return regions


# canned scenes used by tests, the acceptance suite and the CLI examples

def plate_scene(size=(0.16, 0.12), height=0.02, margin=0.01, ramp=False, yaw=0.0, **kw) -> SceneSpec:
    prim = Primitive("box", (0.0, 0.0, height / 2), (size[0], size[1], height), (0.0, 0.0, yaw))
    return SceneSpec([prim], margin=margin, ramp=ramp, **kw)


def two_box_scene(box=0.06, pitch=0.08, height=0.06, margin=0.01, **kw) -> SceneSpec:
    prims = [
        Primitive("box", (-pitch / 2, 0.0, height / 2), (box, box, height)),
        Primitive("box", (pitch / 2, 0.0, height / 2), (box, box, height)),
    ]
    return SceneSpec(prims, margin=margin, **kw)


def small_blob_scene(size=0.03, height=0.04, margin=0.005, **kw) -> SceneSpec:
    prim = Primitive("box", (0.0, 0.0, height / 2), (size, size, height))
    return SceneSpec([prim], margin=margin, ramp=True, **kw)
