import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from multisuction.orientation import (
    AngleLattice, NormalOrientationMap, build_orientation_map, gamma_values, load_or_build_map,
    sample_gripper_orientations, select_frequent_keys,
)

from conftest import flat_scene, rad

DA, EPS = rad(5), rad(11.5)


def lattice_vector(ii, jj, da):
    t, p = ii * da - math.pi, jj * da
    return np.array([math.cos(t) * math.sin(p), math.sin(t) * math.sin(p), math.cos(p)])


def brute_map(da, eps):
    """Direct angle test over all lattice pairs, with the pole as one key."""
    n_t, n_p = int(math.floor(2 * math.pi / da + 1e-9)), int(math.floor(math.pi / 2 / da + 1e-9))
    pole = int(round(math.pi / da))
    keys = [(pole, 0)] + [(i, j) for j in range(1, n_p + 1) for i in range(1, n_t + 1)]
    vecs = {k: lattice_vector(*k, da) for k in keys}
    out = {}
    for a in keys:
        out[a] = {b for b in keys
                  if math.acos(max(-1.0, min(1.0, float(vecs[a] @ vecs[b])))) < eps}
    return out


def as_set(arr):
    return {tuple(int(x) for x in r) for r in arr}


@pytest.fixture(scope="module")
def omap():
    return build_orientation_map(DA, EPS)


def test_lattice_counts():
    L = AngleLattice(DA)
    assert (L.n_theta, L.n_phi, L.pole_ii) == (72, 18, 36)
    assert len(L.keys()) == 1 + 72 * 18
    assert L.theta(L.pole_ii) == pytest.approx(0.0)


def test_pole_entry(omap):
    L = omap.lattice
    axes = omap.lookup((L.pole_ii, 0))
    jj = set(axes[:, 1].tolist())
    assert jj == {0, 1, 2}
    assert len(axes) == 1 + 72 + 72


def test_pole_self_match_small_eps():
    m = build_orientation_map(DA, DA * 0.4)
    assert as_set(m.lookup((36, 0))) == {(36, 0)}


def test_map_matches_bruteforce_coarse():
    da, eps = rad(15), rad(20)
    m = build_orientation_map(da, eps)
    ref = brute_map(da, eps)
    assert set(m.entries) == set(ref)
    for k, v in ref.items():
        assert as_set(m.lookup(k)) == v


def test_every_pair_satisfies_threshold(omap):
    L = omap.lattice
    for key, axes in omap.entries.items():
        n = L.vectors(np.array([key]))[0]
        vs = L.vectors(axes)
        assert (np.arccos(np.clip(vs @ n, -1, 1)) < EPS).all()


def test_key_ranges(omap):
    keys = np.array(list(omap.entries))
    assert keys[:, 0].min() >= 0 and keys[:, 0].max() <= 72
    assert keys[:, 1].min() >= 0 and keys[:, 1].max() <= 18


@settings(max_examples=50, deadline=None)
@given(st.floats(-math.pi, math.pi), st.floats(0, math.pi / 2))
def test_snap_is_nearest_on_each_axis(t, p):
    L = AngleLattice(DA)
    n = np.array([math.cos(t) * math.sin(p), math.sin(t) * math.sin(p), math.cos(p)])
    ii, jj = L.snap(n[None])[0]
    assert abs(L.phi(jj) - p) <= DA / 2 + 1e-9
    if jj > 0:
        d = (L.theta(ii) - t + math.pi) % (2 * math.pi) - math.pi
        assert abs(d) <= DA / 2 + 1e-9
    else:
        assert ii == L.pole_ii


def test_json_roundtrip_and_cache(tmp_path, omap):
    doc = omap.to_json()
    json.dumps(doc)
    back = NormalOrientationMap.from_json(doc)
    assert set(back.entries) == set(omap.entries)
    cache = tmp_path / "map.json"
    m1 = load_or_build_map(cache, DA, EPS)
    assert cache.exists()
    m2 = load_or_build_map(cache, DA, EPS)
    assert as_set(m2.lookup((36, 0))) == as_set(m1.lookup((36, 0)))
    m3 = load_or_build_map(cache, rad(10), EPS)  # stale cache is rebuilt
    assert m3.matches(rad(10), EPS)


def test_build_rejects_bad_interval():
    with pytest.raises(ValueError):
        build_orientation_map(rad(100), EPS)
    assert len(build_orientation_map(rad(90), rad(50)).entries) == 5
    with pytest.raises(ValueError):
        build_orientation_map(0.0, EPS)


def test_gamma_values():
    g = gamma_values(DA)
    assert len(g) == 72 and g.max() == pytest.approx(math.pi) and g.min() > -math.pi
    assert len(gamma_values(DA, half_turn=True)) == 36


def test_select_frequent_keys_quantile():
    keys = np.array([[1, 1]] * 10 + [[2, 2]] * 10 + [[3, 3]] * 2 + [[4, 4]])
    kept, counts = select_frequent_keys(keys, 0.10)
    assert as_set(kept) == {(1, 1), (2, 2)}
    assert list(counts) == [10, 10]
    kept, _ = select_frequent_keys(keys, 1.0)
    assert len(kept) == 4


def test_flat_scene_samples(omap):
    S = sample_gripper_orientations(flat_scene(), omap, 0.10)
    assert as_set(S.normal_keys) == {(36, 0)}
    axes = as_set(S.axis_keys)
    assert {j for _, j in axes} == {0, 1, 2}
    assert len(axes) == 145 and len(S) == 145 * 72
    # every sample's approach axis is within eps of vertical
    assert (S.rotations[:, 2, 2] > math.cos(EPS)).all()


def test_two_tilted_planes_keep_both_keys(omap):
    scene = flat_scene(width=40, height=30)
    H, W = scene.shape
    n = np.zeros((H, W, 3))
    for sign, cols in ((1, slice(0, W // 2)), (-1, slice(W // 2, W))):
        n[:, cols] = [sign * math.sin(rad(10)), 0, math.cos(rad(10))]
    from multisuction.scene_io import AffordanceScene
    tilted = AffordanceScene.from_arrays(scene.depth, scene.affordance, scene.intrinsics, normals=n)
    S = sample_gripper_orientations(tilted, omap, 0.10)
    assert as_set(S.normal_keys) == {(72, 2), (36, 2)}


def test_empty_affordance(omap):
    scene = flat_scene(affordance=np.zeros((48, 64)))
    assert len(sample_gripper_orientations(scene, omap)) == 0
