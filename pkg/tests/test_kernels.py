import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from multisuction.core import GripperSpec, zyz_rotation
from multisuction.kernels import generate_encoded_kernels, kernel_extent, quantize_offsets
from multisuction.orientation import OrientationSamples

L = 0.005
TWO = GripperSpec([[-0.04, 0, 0], [0.04, 0, 0]])


def nonzeros(K):
    c = (K.shape[0] - 1) // 2
    return {tuple(int(x) - c for x in idx): int(K[tuple(idx)]) for idx in np.argwhere(K)}


def test_identity_two_cup():
    ks = generate_encoded_kernels(OrientationSamples.from_angles([[0, 0, 0]]), TWO, L)
    assert ks.extent == 17
    assert nonzeros(ks.kernel(0)) == {(-8, 0, 0): 10, (8, 0, 0): 1}


def test_rz90_two_cup():
    R = zyz_rotation(math.pi / 2, 0, 0)
    ks = generate_encoded_kernels(OrientationSamples.from_rotations([R]), TWO, L)
    assert nonzeros(ks.kernel(0)) == {(0, -8, 0): 10, (0, 8, 0): 1}


def test_single_cup_at_tcp():
    ks = generate_encoded_kernels(OrientationSamples.from_angles([[0.3, 0.2, 0.1]]),
                                  GripperSpec([[0, 0, 0]]), L)
    assert ks.extent == 1
    assert nonzeros(ks.kernel(0)) == {(0, 0, 0): 1}


def test_extent_formula():
    assert kernel_extent(0.04, 0.005) == 17
    assert kernel_extent(0.041, 0.005) == 19
    assert kernel_extent(0.0, 0.005) == 1


def test_quantize_half_up():
    assert quantize_offsets(np.array([0.0025, -0.0025, 0.0024, -2e-18]), L).tolist() == [1, 0, 0, 0]


def test_collision_lower_index_wins():
    g = GripperSpec([[0.001, 0, 0], [0.0012, 0, 0], [0.04, 0, 0]])
    ks = generate_encoded_kernels(OrientationSamples.from_angles([[0, 0, 0]]), g, L)
    assert ks.collision_flags.tolist() == [True]
    assert ks.values[0].tolist() == [100, 0, 1]
    assert nonzeros(ks.kernel(0)) == {(0, 0, 0): 100, (8, 0, 0): 1}


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([2, 3, 4, 6, 9]))
def test_kernel_invariants(seed, n_c):
    rng = np.random.default_rng(seed)
    xy = rng.uniform(-0.05, 0.05, size=(n_c, 2))
    g = GripperSpec(np.column_stack([xy, np.zeros(n_c)]))
    angles = np.column_stack([rng.uniform(-3.1, 3.1, 6), rng.uniform(0, 1.5, 6), rng.uniform(-3.1, 3.1, 6)])
    S = OrientationSamples.from_angles(angles)
    ks = generate_encoded_kernels(S, g, L)
    assert ks.extent == 2 * math.ceil(g.max_cup_distance / L - 1e-9) + 1
    digits = [10 ** (n_c - 1 - i) for i in range(n_c)]
    for n in range(len(ks)):
        K = ks.kernel(n)
        nz = nonzeros(K)
        assert len(nz) <= n_c
        vals = sorted(nz.values(), reverse=True)
        assert set(vals) <= set(digits) and len(set(vals)) == len(vals)
        if not ks.collision_flags[n]:
            assert len(nz) == n_c
        # quantization bound per cup
        for i, off in enumerate(ks.offsets[n]):
            true = S.rotations[n] @ g.cup_centers_local[i]
            assert np.max(np.abs(off * L - true)) <= L / 2 + 1e-12
            assert np.all(np.abs(off) <= ks.center)


def test_dense_and_subset():
    S = OrientationSamples.from_angles([[0, 0, 0], [math.pi / 2, 0, 0], [0, 0.5, 0]])
    ks = generate_encoded_kernels(S, TWO, L)
    D = ks.dense()
    assert D.shape == (3, 17, 17, 17)
    sub = ks.subset(1, 3)
    np.testing.assert_array_equal(sub.dense(), D[1:])
