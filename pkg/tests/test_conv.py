import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from multisuction.conv import conv3d_dense, conv3d_sparse, iter_conv3d_sparse
from multisuction.core import GripperSpec
from multisuction.kernels import generate_encoded_kernels
from multisuction.orientation import OrientationSamples
from multisuction.voxelizer import VoxelGrid

TWO = GripperSpec([[-0.04, 0, 0], [0.04, 0, 0]])


def naive(occ, K):
    """Loop-level cross-correlation with the kernel center on the output cell."""
    c = (K.shape[0] - 1) // 2
    out = np.zeros(occ.shape, dtype=np.int64)
    nz = [(tuple(idx), int(K[tuple(idx)])) for idx in np.argwhere(K)]
    for cell in itertools.product(*map(range, occ.shape)):
        s = 0
        for idx, v in nz:
            q = tuple(cell[a] + idx[a] - c for a in range(3))
            if all(0 <= q[a] < occ.shape[a] for a in range(3)):
                s += v * int(occ[q])
        out[cell] = s
    return out


def kernels(angles, gripper=TWO, l=0.005):
    return generate_encoded_kernels(OrientationSamples.from_angles(angles), gripper, l)


def both(V, K):
    d, s = conv3d_dense(V, K), conv3d_sparse(V, K)
    np.testing.assert_array_equal(d.values, s.values)
    return d.values


def test_all_zero_grid():
    V = VoxelGrid.from_occupancy(np.zeros((10, 10, 4), bool))
    assert not both(V, kernels([[0, 0, 0]])).any()


def test_impulse_response():
    occ = np.zeros((20, 5, 3), bool)
    c = (10, 2, 1)
    occ[c] = True
    out = both(VoxelGrid.from_occupancy(occ), kernels([[0, 0, 0]]))[0]
    # cup 0 (digit 10) sits at -8, so it touches c from the TCP cell c + 8
    assert out[18, 2, 1] == 10 and out[2, 2, 1] == 1
    assert np.count_nonzero(out) == 2


def test_plane_gives_eleven_inside():
    occ = np.zeros((30, 6, 3), bool)
    occ[:, :, 1] = True
    out = both(VoxelGrid.from_occupancy(occ), kernels([[0, 0, 0]]))[0]
    assert (out[8:22, :, 1] == 11).all()
    assert (out[:8, :, 1] == 1).all() and (out[22:, :, 1] == 10).all()
    assert not out[:, :, [0, 2]].any()


def test_empty_kernel_set():
    V = VoxelGrid.from_occupancy(np.ones((4, 4, 4), bool))
    K = kernels(np.zeros((0, 3)))
    assert conv3d_sparse(V, K).values.shape == (0, 4, 4, 4)
    assert conv3d_dense(V, K).values.shape == (0, 4, 4, 4)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([1, 2, 4]))
def test_matches_naive(seed, n_c):
    rng = np.random.default_rng(seed)
    occ = rng.random(tuple(rng.integers(3, 9, size=3))) < 0.2
    xy = rng.uniform(-0.012, 0.012, size=(n_c, 2))
    g = GripperSpec(np.column_stack([xy, np.zeros(n_c)]))
    angles = np.column_stack([rng.uniform(-3, 3, 3), rng.uniform(0, 1.5, 3), rng.uniform(-3, 3, 3)])
    K = kernels(angles, g)
    V = VoxelGrid.from_occupancy(occ)
    got = both(V, K)
    for n in range(len(K)):
        np.testing.assert_array_equal(got[n], naive(occ, K.kernel(n)))


def test_random_32_grid_dense_equals_sparse():
    rng = np.random.default_rng(7)
    V = VoxelGrid.from_occupancy(rng.random((32, 32, 32)) < 0.05)
    angles = np.column_stack([rng.uniform(-3, 3, 16), rng.uniform(0, 1.5, 16), rng.uniform(-3, 3, 16)])
    both(V, kernels(angles))


def test_streaming_batches_and_threads():
    rng = np.random.default_rng(8)
    V = VoxelGrid.from_occupancy(rng.random((16, 16, 8)) < 0.1)
    angles = np.column_stack([rng.uniform(-3, 3, 10), rng.uniform(0, 1.5, 10), rng.uniform(-3, 3, 10)])
    K = kernels(angles)
    ref = conv3d_dense(V, K).values
    parts = list(iter_conv3d_sparse(V, K, batch_size=3))
    assert [p.kernel_offset for p in parts] == [0, 3, 6, 9]
    np.testing.assert_array_equal(np.concatenate([p.values for p in parts]), ref)
    np.testing.assert_array_equal(conv3d_sparse(V, K, threads=2).values, ref)


def test_nine_cups_no_overflow():
    centers = [[0.005 * math.cos(a), 0.005 * math.sin(a), 0] for a in np.linspace(0, 2 * math.pi, 9, endpoint=False)]
    centers[0] = [0.0, 0.0, 0.0]
    g = GripperSpec(centers)
    V = VoxelGrid.from_occupancy(np.ones((5, 5, 5), bool))
    out = both(V, kernels([[0, 0, 0]], g, l=0.005))
    assert out.max() <= 111111111
    assert out.dtype == np.int32
