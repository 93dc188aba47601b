import math

import numpy as np
import pytest

from multisuction import synth
from multisuction.core import CandidateSource, GripperSpec, PlannerConfig
from multisuction.estimator import MultiCupGraspPlanner, check_scene
from multisuction.planner import (
    FALLBACK, MULTI_CUP, NO_SOLUTION, PlanRequest, fallback_pixel, plan, single_cup_fallback,
)
from multisuction.scene_io import AffordanceScene

from conftest import TWO_CUP, flat_scene

L = 0.005


def test_plate_multi_cup_one_label(plate):
    scene, gt, out = plate
    assert out.kind == MULTI_CUP
    best = out.plan.ranking[0]
    assert best.candidate.activation.tolist() == [1, 1]
    assert best.labels == (0,) and best.max_obj == 1
    assert np.linalg.norm(out.optimal.position - gt.regions[0].center) <= L * math.sqrt(3)


def test_two_box_max_obj(two_box):
    scene, gt, out = two_box
    assert out.kind == MULTI_CUP
    best = out.plan.ranking[0]
    assert best.max_obj == 2 and best.labels == (0, 1)
    assert gt.expected_max_obj(GripperSpec(TWO_CUP)) == 2


def test_blob_fallback(blob):
    scene, gt, out = blob
    assert out.kind == FALLBACK
    c = out.optimal
    assert c.source is CandidateSource.SINGLE_CUP_FALLBACK
    assert c.activation.tolist() == [1, 0]
    v, u = fallback_pixel(scene)
    np.testing.assert_allclose(c.cup_centers_world[0], scene.points[v, u], atol=1e-12)


def test_counters_and_timings(two_box):
    _, _, out = two_box
    c = out.counters
    assert c["kernels"] > 0
    assert c["candidates_decoded"] >= c["candidates_normal_ok"] >= c["candidates_ranked"] > 0
    for stage in ("voxelize", "kernels", "conv3d", "decode", "normal_check", "rank"):
        assert out.stage_timings[stage] >= 0


def test_ranked_candidates_satisfy_invariants(two_box):
    _, _, out = two_box
    g = GripperSpec(TWO_CUP)
    for e in out.plan.ranking[:200]:
        c = e.candidate
        assert c.activation.sum() >= 2
        np.testing.assert_allclose(c.orientation.T @ c.orientation, np.eye(3), atol=1e-9)
        assert np.linalg.det(c.orientation) == pytest.approx(1.0)
        np.testing.assert_allclose(c.cup_centers_world, c.position + g.cup_centers_local @ c.orientation.T,
                                   atol=1e-9)


def test_empty_affordance_no_solution(gripper2, config):
    scene = flat_scene(affordance=np.zeros((48, 64)))
    out = plan(PlanRequest(scene, gripper2, config))
    assert out.kind == NO_SOLUTION and out.optimal is None


def test_fallback_cup_nearest_current_tcp(blob, gripper2):
    scene = blob[0]
    far_right = single_cup_fallback(scene, gripper2, current_tcp=[0.5, 0, 0.04])
    assert far_right.activation.tolist() == [1, 0]
    far_left = single_cup_fallback(scene, gripper2, current_tcp=[-0.5, 0, 0.04])
    assert far_left.activation.tolist() == [0, 1]
    v, u = fallback_pixel(scene)
    np.testing.assert_allclose(far_left.cup_centers_world[1], scene.points[v, u], atol=1e-12)


def test_fallback_tie_break_center():
    scene = flat_scene(width=11, height=9, f=50.0)
    assert fallback_pixel(scene) == (4, 5)


def test_one_cup_gripper_uses_fallback(config):
    spec = synth.plate_scene(size=(0.06, 0.06))
    scene, _ = synth.render_scene(spec)
    out = plan(PlanRequest(scene, GripperSpec([[0, 0, 0]]), config))
    assert out.kind == FALLBACK


def test_estimator_api(two_box):
    scene = two_box[0]
    est = MultiCupGraspPlanner(cup_centers=TWO_CUP)
    params = est.get_params()
    assert params["voxel_size"] == 0.005 and params["angle_interval_deg"] == 5.0
    with pytest.raises(Exception):
        est.predict(scene)
    est.fit()
    out = est.predict(scene)
    assert out.kind == MULTI_CUP and out.plan.ranking[0].max_obj == 2
    assert [o.kind for o in est.predict([scene])] == [MULTI_CUP]
    raw = est.predict((np.asarray(scene.depth), np.asarray(scene.affordance), scene.intrinsics))
    assert raw.kind == MULTI_CUP
    est.set_params(angle_interval_deg=120)
    with pytest.raises(ValueError):
        est.fit()


def test_check_scene_rejects():
    with pytest.raises(TypeError):
        check_scene("scene")
