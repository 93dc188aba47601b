"""Correlation of encoded kernels with the occupancy grid.

``values[n, m, t, p] = sum_{ijk} K_n[i, j, k] * V[m + i - c, t + j - c, p + k - c]``
with the kernel center ``c`` aligned on the output cell and zero padding
outside the grid. No kernel flip: kernel cells are cup positions relative to
the TCP.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .kernels import EncodedKernelSet
from .voxelizer import VoxelGrid

ACC_DTYPE = np.int32  # 9 cups sum to at most 111111111 < 2**31
_DENSE_CHUNK_BYTES = 64 * 2**20


@dataclass(frozen=True)
class ConvResult:
    values: np.ndarray
    kernel_offset: int = 0

    @property
    def shape(self):
        return self.values.shape


def conv3d_dense(V: VoxelGrid, kernels: EncodedKernelSet) -> ConvResult:
    """Reference correlation summing over every kernel cell, zeros included.

    Implemented as im2col over the zero-padded grid followed by a float64
    matrix product; every partial sum is an integer below 2**53, so the
    result is exact.
    """
    dims = tuple(V.dims)
    if len(kernels) == 0:
        return ConvResult(np.zeros((0,) + dims, dtype=ACC_DTYPE))
    K = kernels.extent
    c = kernels.center
    Kmat = kernels.dense().reshape(len(kernels), -1).astype(np.float64).T
    padded = np.pad(V.occupancy.astype(np.float64), c)
    windows = sliding_window_view(padded, (K, K, K))
    nx, ny, nz = dims
    out = np.empty((len(kernels),) + dims, dtype=ACC_DTYPE)
    rows_per_x = ny * nz
    step = max(1, _DENSE_CHUNK_BYTES // max(1, rows_per_x * K**3 * 8))
    for x0 in range(0, nx, step):
        x1 = min(nx, x0 + step)
        cols = windows[x0:x1].reshape(-1, K**3)
        res = cols @ Kmat
        out[:, x0:x1] = np.rint(res).astype(ACC_DTYPE).T.reshape(len(kernels), x1 - x0, ny, nz)
    return ConvResult(out)


def _sparse_block(occ: np.ndarray, dims, offsets: np.ndarray, values: np.ndarray) -> np.ndarray:
    n_k = len(offsets)
    out = np.zeros((n_k,) + tuple(dims), dtype=ACC_DTYPE)
    if n_k == 0 or len(occ) == 0:
        return out
    dims_arr = np.asarray(dims)
    flat_out = out.reshape(n_k, -1)
    for i in range(offsets.shape[1]):
        w = values[:, i]
        live = np.flatnonzero(w)
        if len(live) == 0:
            continue
        # an occupied cell x is hit by cup i from TCP cell x - offset
        tgt = occ[None, :, :] - offsets[live, i][:, None, :]
        inside = np.all((tgt >= 0) & (tgt < dims_arr), axis=2)
        k_idx, o_idx = np.nonzero(inside)
        t = tgt[k_idx, o_idx]
        flat = np.ravel_multi_index(t.T, dims)
        # targets are distinct for a fixed (kernel, cup) pair
        flat_out[live[k_idx], flat] += w[live[k_idx]].astype(ACC_DTYPE)
    return out


def iter_conv3d_sparse(
    V: VoxelGrid,
    kernels: EncodedKernelSet,
    batch_size: Optional[int] = None,
    threads: int = 1,
) -> Iterator[ConvResult]:
    """Yield the sparse correlation in kernel batches to bound memory."""
    occ = V.occupied_cells()
    dims = tuple(V.dims)
    n_cells = int(np.prod(dims))
    if batch_size is None:
        # bound both the output block and the per-cup target array
        budget = 32 * 2**20
        batch_size = max(1, min(len(kernels), budget // max(1, 4 * n_cells),
                                budget // max(1, 24 * len(occ))))
    starts = list(range(0, len(kernels), batch_size))

    def run(s):
        e = min(len(kernels), s + batch_size)
        return ConvResult(_sparse_block(occ, dims, kernels.offsets[s:e], kernels.values[s:e]), s)

    if threads == 1 or len(starts) <= 1:
        for s in starts:
            yield run(s)
        return
    with ThreadPoolExecutor(max_workers=threads if threads > 0 else None) as pool:
        yield from pool.map(run, starts)


def conv3d_sparse(V: VoxelGrid, kernels: EncodedKernelSet, threads: int = 1) -> ConvResult:
    """Same output as :func:`conv3d_dense`, visiting only occupied cells x nonzero taps."""
    dims = tuple(V.dims)
    if len(kernels) == 0:
        return ConvResult(np.zeros((0,) + dims, dtype=ACC_DTYPE))
    parts = [r.values for r in iter_conv3d_sparse(V, kernels, threads=threads)]
    return ConvResult(np.concatenate(parts, axis=0))
