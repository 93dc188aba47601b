"""Plan report documents and PLY visualisation export."""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Optional

import numpy as np

from .core import GraspCandidate, GripperSpec, PlannerConfig
from .planner import PlanOutcome
from .scene_io import AffordanceScene

SCHEMA_VERSION = 1
SIG_DIGITS = 9


def canonical(obj):
    """Recursively convert to JSON types with floats fixed at 9 significant digits."""
    if isinstance(obj, dict):
        return {str(k): canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [canonical(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return canonical(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            raise ValueError("report numbers must be finite")
        x = float(f"{x:.{SIG_DIGITS}g}")
        return 0.0 if x == 0 else x
    if obj is None or isinstance(obj, str):
        return obj
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(doc: dict) -> str:
    return json.dumps(canonical(doc), sort_keys=True, indent=2) + "\n"


def grasp_dict(c: GraspCandidate) -> dict:
    return {
        "P": c.position.tolist(),
        "O": c.orientation.ravel().tolist(),
        "C": c.cup_centers_world.tolist(),
        "A": [int(a) for a in c.activation],
        "source": c.source.value,
    }


def build_report(
    outcome: PlanOutcome,
    gripper: GripperSpec,
    config: PlannerConfig,
    ranking_limit: Optional[int] = 100,
) -> dict:
    cfg = config.to_dict()
    cfg["angle_interval_deg"] = math.degrees(config.angle_interval)
    cfg["eps_normal_deg"] = math.degrees(config.eps_normal)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "config": cfg,
        "gripper": gripper.to_dict(),
        "outcome": outcome.kind,
        "optimal": None,
        "ranking": [],
        "ranking_total": 0,
        "stage_timings_ms": dict(outcome.stage_timings),
        "counters": dict(outcome.counters),
    }
    plan = outcome.plan
    if plan is None or plan.optimal is None:
        return doc
    best = grasp_dict(plan.optimal)
    ranking = plan.ranking
    if len(ranking):
        top = ranking[0]
        best.update(maxObj=top.max_obj, J=top.score, breakdown=top.breakdown.to_dict(),
                    labels=list(top.labels))
    else:
        best.update(maxObj=1, J=None, breakdown=None, labels=[])
    doc["optimal"] = best
    doc["ranking_total"] = len(ranking)
    n = len(ranking) if ranking_limit is None else min(len(ranking), ranking_limit)
    doc["ranking"] = [
        dict(grasp_dict(e.candidate), maxObj=e.max_obj, J=e.score, labels=list(e.labels))
        for e in ranking[:n]
    ]
    return doc


def write_report(path, doc: dict) -> None:
    Path(path).write_text(dumps(doc))


def report_grasps(doc: dict) -> list:
    """Grasps drawn in the PLY export: the optimum only."""
    return [doc["optimal"]] if doc.get("optimal") else []


def export_ply(path, scene: AffordanceScene, doc: dict) -> int:
    """ASCII PLY with the valid scene points plus one marker vertex per cup of
    each reported grasp (red = active, blue = inactive). Returns the vertex count."""
    pts = scene.points[scene.valid_mask]
    aff = scene.affordance[scene.valid_mask]
    grey = np.where(aff > 0, 60, 160)
    colors = np.stack([grey, np.where(aff > 0, 200, 160), grey], axis=1)
    markers, marker_colors = [], []
    grasps = report_grasps(doc)
    for g in grasps:
        for c, a in zip(g["C"], g["A"]):
            markers.append(c)
            marker_colors.append((255, 0, 0) if a else (0, 0, 255))
    if markers:
        pts = np.vstack([pts, np.asarray(markers, float)])
        colors = np.vstack([colors, np.asarray(marker_colors)])
    n_cups = len(grasps[0]["C"]) if grasps else 0
    header = "\n".join([
        "ply",
        "format ascii 1.0",
        f"comment scene_points {len(pts) - len(markers)}",
        f"comment grasps {len(grasps)} cups {n_cups}",
        f"element vertex {len(pts)}",
        "property float x",
        "property float y",
        "property float z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
        "end_header",
    ])
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for p, c in zip(pts, colors.astype(int)):
            fh.write(f"{p[0]:.6g} {p[1]:.6g} {p[2]:.6g} {c[0]} {c[1]} {c[2]}\n")
    return len(pts)
