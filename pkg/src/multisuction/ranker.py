"""Object clustering, candidate scoring and two-level ranking."""
from __future__ import annotations

from dataclasses import dataclass
from collections.abc import Sequence
from typing import List, Optional, Tuple, Union

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .core import GraspCandidate, PlannerConfig, RankEntry, RankedPlan
from .decoder import CandidateSet
from .scene_io import AffordanceScene


@dataclass(frozen=True)
class ClusterInfo:
    label: int
    centroid: np.ndarray
    axes: np.ndarray  # columns sorted by decreasing variance
    max_dist: float
    size: int


@dataclass(frozen=True)
class ClusterMaps:
    labels: np.ndarray
    dist: np.ndarray
    orient: np.ndarray
    clusters: List[ClusterInfo]

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)


@dataclass(frozen=True)
class ScoreBreakdown:
    max_obj: int
    J_dist: float
    J_var: float
    J_orient: float
    J: float
    J_dist_norm: float = 0.0
    J_var_norm: float = 0.0
    labels: Tuple[int, ...] = ()

    def to_dict(self) -> dict:
        return {
            "maxObj": self.max_obj, "J_dist": self.J_dist, "J_var": self.J_var,
            "J_orient": self.J_orient, "J": self.J, "J_dist_norm": self.J_dist_norm,
            "J_var_norm": self.J_var_norm, "labels": list(self.labels),
        }


_NEIGHBOURS = ((0, 1), (1, 0), (1, 1), (1, -1))


def _canonical_axis(v: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(np.abs(v) > 1e-12)
    return -v if len(nz) and v[nz[0]] < 0 else v


def cluster_affordance(
    scene: AffordanceScene, voxel_size: float = 0.005, min_cluster_size: int = 5
) -> ClusterMaps:
    """8-connected pixel clusters of the affordance mask, split at depth jumps.

    Neighbouring pixels join when their 3-D points are within ``2 * voxel_size``.
    Clusters smaller than ``min_cluster_size`` pixels become background (-1).
    """
    H, W = scene.shape
    mask = scene.affordance_mask
    pts = scene.points
    ids = -np.ones((H, W), dtype=np.int64)
    flat_mask = np.flatnonzero(mask.ravel())
    ids.ravel()[flat_mask] = np.arange(len(flat_mask))
    rows, cols = [], []
    for dv, du in _NEIGHBOURS:
        v0, v1 = max(0, -dv), H - max(0, dv)
        u0, u1 = max(0, -du), W - max(0, du)
        a = ids[v0:v1, u0:u1]
        b = ids[v0 + dv:v1 + dv, u0 + du:u1 + du]
        pa = pts[v0:v1, u0:u1]
        pb = pts[v0 + dv:v1 + dv, u0 + du:u1 + du]
        both = (a >= 0) & (b >= 0)
        close = np.zeros_like(both)
        close[both] = np.linalg.norm(pa[both] - pb[both], axis=1) <= 2 * voxel_size
        rows.append(a[close])
        cols.append(b[close])
    n = len(flat_mask)
    labels = -np.ones((H, W), dtype=np.int64)
    dist = np.full((H, W), np.nan)
    orient = np.full((H, W, 3), np.nan)
    clusters: List[ClusterInfo] = []
    if n == 0:
        return ClusterMaps(labels, dist, orient, clusters)
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    graph = coo_matrix((np.ones(len(r)), (r, c)), shape=(n, n))
    _, comp = connected_components(graph, directed=False)
    # renumber in raster order of each component's first pixel
    _, first = np.unique(comp, return_index=True)
    order = np.argsort(first)
    sizes = np.bincount(comp)
    next_label = 0
    flat_pts = pts.reshape(-1, 3)
    for comp_id in order:
        if sizes[comp_id] < min_cluster_size:
            continue
        members = flat_mask[comp == comp_id]
        p = flat_pts[members]
        centroid = p.mean(axis=0)
        cov = np.cov((p - centroid).T, bias=True) if len(p) > 1 else np.zeros((3, 3))
        evals, evecs = np.linalg.eigh(cov)
        axes = evecs[:, ::-1].copy()
        for k in range(3):
            axes[:, k] = _canonical_axis(axes[:, k])
        d = np.linalg.norm(p - centroid, axis=1)
        labels.ravel()[members] = next_label
        dist.ravel()[members] = d
        orient.reshape(-1, 3)[members] = axes[:, 0]
        clusters.append(ClusterInfo(next_label, centroid, axes, float(d.max()), len(members)))
        next_label += 1
    return ClusterMaps(labels, dist, orient, clusters)


def _pixels(scene: AffordanceScene, xyz: np.ndarray) -> np.ndarray:
    uv = scene.intrinsics.project(xyz)
    with np.errstate(invalid="ignore"):
        pix = np.floor(uv + 0.5)
    pix[~np.isfinite(pix)] = -1
    return pix.astype(np.int64)


_SCORE_CHUNK = 50_000


def score_set(
    cands: CandidateSet,
    maps: ClusterMaps,
    scene: AffordanceScene,
    config: Optional[PlannerConfig] = None,
) -> dict:
    """Vectorised scores for every candidate.

    Returns arrays ``max_obj``, ``J_dist``, ``J_var``, ``J_orient``, ``J``,
    ``J_dist_norm``, ``J_var_norm``, ``labels`` (ascending per row, -1 marks
    empty slots) and ``valid`` (at least one active cup over a labelled pixel).
    """
    config = config or PlannerConfig()
    if len(cands) <= _SCORE_CHUNK:
        return _score_block(cands, maps, scene, config)
    parts = [
        _score_block(cands.take(slice(s, s + _SCORE_CHUNK)), maps, scene, config)
        for s in range(0, len(cands), _SCORE_CHUNK)
    ]
    return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}


def _score_block(cands, maps, scene, config) -> dict:
    M, n_c = cands.activation.shape if len(cands) else (0, cands.activation.shape[1])
    H, W = maps.labels.shape
    cups = cands.cup_centers
    pix = _pixels(scene, cups.reshape(-1, 3)).reshape(M, n_c, 2)
    u, v = pix[..., 0], pix[..., 1]
    inside = (u >= 0) & (u < W) & (v >= 0) & (v < H) & (cands.activation > 0)
    lab = np.full((M, n_c), -1, dtype=np.int64)
    lab[inside] = maps.labels[v[inside], u[inside]]
    ok = lab >= 0
    same = ok[:, :, None] & ok[:, None, :] & (lab[:, :, None] == lab[:, None, :])
    count = same.sum(axis=2)  # group size seen from each cup
    weight = np.where(ok, 1.0 / np.maximum(count, 1), 0.0)
    max_obj_f = weight.sum(axis=1)
    max_obj = np.rint(max_obj_f).astype(np.int64)
    valid = max_obj > 0

    # mean pixel of each cup's label group
    sf = same.astype(float)
    cnt = np.maximum(count, 1)
    mu = np.floor(np.einsum("mjk,mk->mj", sf, u) / cnt + 0.5).astype(np.int64)
    mv = np.floor(np.einsum("mjk,mk->mj", sf, v) / cnt + 0.5).astype(np.int64)
    mean_xyz = np.einsum("mjk,mkd->mjd", sf, cups) / cnt[..., None]

    n_cl = max(1, maps.n_clusters)
    centroids = np.zeros((n_cl, 3))
    axes = np.zeros((n_cl, 3, 3))
    max_dist = np.ones(n_cl)
    for cl in maps.clusters:
        centroids[cl.label] = cl.centroid
        axes[cl.label] = cl.axes
        max_dist[cl.label] = cl.max_dist if cl.max_dist > 0 else 1.0
    safe_lab = np.where(ok, lab, 0)

    in_img = (mu >= 0) & (mu < W) & (mv >= 0) & (mv < H)
    map_lab = np.full((M, n_c), -2, dtype=np.int64)
    map_lab[in_img] = maps.labels[mv[in_img], mu[in_img]]
    d = np.linalg.norm(mean_xyz - centroids[safe_lab], axis=2)
    use_map = in_img & (map_lab == lab)
    d[use_map] = maps.dist[mv[use_map], mu[use_map]]
    d_norm = d / max_dist[safe_lab]

    with np.errstate(invalid="ignore", divide="ignore"):
        J_dist = np.where(valid, (weight * d).sum(axis=1) / np.maximum(max_obj_f, 1e-12), 0.0)
        J_dist_n = np.where(valid, (weight * d_norm).sum(axis=1) / np.maximum(max_obj_f, 1e-12), 0.0)
        J_var = np.where(valid, (weight * (d - J_dist[:, None]) ** 2).sum(axis=1)
                         / np.maximum(max_obj_f, 1e-12), 0.0)
        J_var_n = np.where(valid, (weight * (d_norm - J_dist_n[:, None]) ** 2).sum(axis=1)
                           / np.maximum(max_obj_f, 1e-12), 0.0)

    # polygon direction: principal axis of each label group's cup centers
    centered = cups[:, None, :, :] - mean_xyz[:, :, None, :]
    cov = np.einsum("mjk,mjka,mjkb->mjab", sf, centered, centered)
    _, evecs = np.linalg.eigh(cov.reshape(-1, 3, 3))
    poly = evecs[:, :, 2].reshape(M, n_c, 3)
    cl_axes = axes[safe_lab]  # (M, n_c, 3, 3)
    align = np.abs(np.einsum("mjd,mjdk->mjk", poly, cl_axes[..., :2])).max(axis=2)
    align = np.where(count >= 2, align, 1.0)
    J_orient = np.where(valid, (weight * align).sum(axis=1) / np.maximum(max_obj_f, 1e-12), 0.0)

    J = config.weight_orient * J_orient - config.weight_dist * J_dist_n - config.weight_var * J_var_n
    sorted_lab = np.sort(np.where(ok, lab, np.iinfo(np.int64).max), axis=1)
    dup = np.zeros_like(ok)
    dup[:, 1:] = sorted_lab[:, 1:] == sorted_lab[:, :-1]
    key = np.where(dup | (sorted_lab == np.iinfo(np.int64).max), -1, sorted_lab)
    return {
        "max_obj": max_obj, "J_dist": J_dist, "J_var": J_var, "J_orient": J_orient,
        "J": J, "J_dist_norm": J_dist_n, "J_var_norm": J_var_n, "labels": key,
        "valid": valid,
    }


def _label_key(row: np.ndarray) -> Tuple[int, ...]:
    return tuple(int(x) for x in row if x >= 0)


def _breakdown(scores: dict, r: int) -> ScoreBreakdown:
    return ScoreBreakdown(
        int(scores["max_obj"][r]), float(scores["J_dist"][r]), float(scores["J_var"][r]),
        float(scores["J_orient"][r]), float(scores["J"][r]),
        float(scores["J_dist_norm"][r]), float(scores["J_var_norm"][r]),
        _label_key(scores["labels"][r]),
    )


def score_candidate(
    G: GraspCandidate,
    maps: ClusterMaps,
    scene: AffordanceScene,
    config: Optional[PlannerConfig] = None,
) -> Optional[ScoreBreakdown]:
    """Score one candidate; None when no active cup lands on a labelled pixel."""
    cs = CandidateSet.from_list([G], len(G.activation))
    scores = score_set(cs, maps, scene, config)
    if not scores["valid"][0]:
        return None
    return _breakdown(scores, 0)


class LazyRanking(Sequence):
    """Ranking entries materialised on access; plans can hold 10^5+ candidates."""

    def __init__(self, cands: CandidateSet, scores: dict, order: np.ndarray):
        self._cands = cands
        self._scores = scores
        self._order = order

    def __len__(self) -> int:
        return len(self._order)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        r = int(self._order[i])
        s = self._scores
        return RankEntry(_label_key(s["labels"][r]), int(s["max_obj"][r]), float(s["J"][r]),
                         self._cands.candidate(r), _breakdown(s, r))

    @property
    def rows(self) -> np.ndarray:
        """Candidate-set row of each ranking position."""
        return self._order


def ranking_order(scores: dict) -> np.ndarray:
    """Rows of valid candidates ordered by (maxObj desc, J desc).

    Rows are grouped by contact-label key and sorted by J inside each key
    first; the global pass then orders groups by maxObj and J. Both sorts are
    stable, so equal scores keep candidate order.
    """
    rows = np.flatnonzero(scores["valid"])
    if len(rows) == 0:
        return rows
    _, group = np.unique(scores["labels"][rows], axis=0, return_inverse=True)
    group = np.asarray(group).ravel()
    J = scores["J"][rows]
    local = np.lexsort((np.arange(len(rows)), -J, group))
    rows, J = rows[local], J[local]
    mo = scores["max_obj"][rows]
    glob = np.lexsort((np.arange(len(rows)), -J, -mo))
    return rows[glob]


def rank_set(
    cands: CandidateSet,
    maps: ClusterMaps,
    scene: AffordanceScene,
    config: Optional[PlannerConfig] = None,
    limit: Optional[int] = None,
) -> RankedPlan:
    """Score every candidate and return G_opt plus the full ordered ranking.

    ``limit`` truncates the returned ranking."""
    if len(cands) == 0:
        return RankedPlan(None, [])
    scores = score_set(cands, maps, scene, config)
    order = ranking_order(scores)
    if len(order) == 0:
        return RankedPlan(None, [])
    if limit is not None:
        order = order[:limit]
    ranking = LazyRanking(cands, scores, order)
    return RankedPlan(cands.candidate(int(order[0])), ranking)


def rank(
    cands: Union[List[GraspCandidate], CandidateSet],
    maps: ClusterMaps,
    scene: AffordanceScene,
    config: Optional[PlannerConfig] = None,
    limit: Optional[int] = None,
) -> RankedPlan:
    if not isinstance(cands, CandidateSet):
        if not cands:
            return RankedPlan(None, [])
        cands = CandidateSet.from_list(list(cands), len(cands[0].activation))
    return rank_set(cands, maps, scene, config, limit)


def select_optimal(entries) -> Optional[RankEntry]:
    """Global pass: highest maxObj wins, ties broken by strictly higher J."""
    best = None
    for e in entries:
        if best is None or e.max_obj > best.max_obj or (
            e.max_obj == best.max_obj and e.score > best.score
        ):
            best = e
    return best
