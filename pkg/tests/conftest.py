import math

import numpy as np
import pytest

from multisuction import synth
from multisuction.core import GripperSpec, PlannerConfig
from multisuction.orientation import build_orientation_map
from multisuction.planner import PlanRequest, plan
from multisuction.scene_io import AffordanceScene, CameraIntrinsics

TWO_CUP = [[-0.04, 0.0, 0.0], [0.04, 0.0, 0.0]]


@pytest.fixture(scope="session")
def gripper2():
    return GripperSpec(TWO_CUP, 0.01)


@pytest.fixture(scope="session")
def config():
    return PlannerConfig()


@pytest.fixture(scope="session")
def omap(config):
    return build_orientation_map(config.angle_interval, config.eps_normal)


def _planned(spec, gripper, config, omap):
    scene, gt = synth.render_scene(spec)
    outcome = plan(PlanRequest(scene, gripper, config), omap)
    return scene, gt, outcome


@pytest.fixture(scope="session")
def two_box(gripper2, config, omap):
    return _planned(synth.two_box_scene(), gripper2, config, omap)


@pytest.fixture(scope="session")
def plate(gripper2, config, omap):
    return _planned(synth.plate_scene(size=(0.12, 0.06)), gripper2, config, omap)


@pytest.fixture(scope="session")
def blob(gripper2, config, omap):
    return _planned(synth.small_blob_scene(), gripper2, config, omap)


def identity_camera(width, height, f=1.0, cx=None, cy=None):
    return CameraIntrinsics(
        fx=f, fy=f,
        cx=(width - 1) / 2 if cx is None else cx,
        cy=(height - 1) / 2 if cy is None else cy,
        width=width, height=height, camera_to_world=np.eye(4),
    )


def flat_scene(depth=0.4, width=64, height=48, f=500.0, affordance=None, normals="up"):
    """Camera looking down at a horizontal plane, world z up."""
    cam = synth.top_down_camera(height=depth, width=width, rows=height, focal=f)
    d = np.full((height, width), depth)
    aff = np.ones_like(d) if affordance is None else affordance
    n = None
    if normals == "up":
        n = np.zeros((height, width, 3))
        n[..., 2] = 1.0
    return AffordanceScene.from_arrays(d, aff, cam, normals=n)


def rad(deg):
    return math.radians(deg)


# acceptance reporting: one pass/fail line per criterion in the terminal summary

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.fixture
def detail(request):
    """Free-text measurement attached to the current criterion's summary line."""
    marker = request.node.get_closest_marker("criterion")
    entry = _CRITERIA.setdefault(marker.args[0], {"ok": None, "detail": []})
    return entry["detail"].append


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when != "call" and not rep.failed:
        return
    entry = _CRITERIA.setdefault(marker.args[0], {"ok": None, "detail": []})
    if rep.skipped:
        entry["ok"] = "excluded"
        return
    ok = rep.passed if rep.when == "call" else False
    entry["ok"] = ok if entry["ok"] is None else (entry["ok"] and ok)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        e = _CRITERIA[n]
        if e["ok"] == "excluded":
            status = "EXCLUDED"
        else:
            status = "PASS" if e["ok"] is True else "FAIL"
        text = "; ".join(e["detail"])
        terminalreporter.write_line(f"criterion {n}: {status}" + (f" - {text}" if text else ""))
