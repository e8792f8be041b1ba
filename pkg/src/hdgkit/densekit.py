"""Batched small dense linear algebra.

Every block is stored column-major and blocks follow each other in memory,
so a ``DenseBatch`` with ``rows=r, cols=c, batch=b`` owns a flat buffer of
``r*c*b`` doubles. ``DenseBatch.blocks`` exposes a ``(batch, rows, cols)``
view of that buffer without copying.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, SingularBlock

PIVOT_RTOL = 1e-14

_threads = 1


def set_threads(n: int | None = None) -> int:
    """Set the width of parallel batch loops (BLAS pools included).

    ``n=None`` reads ``HDG_THREADS`` (default 1); ``n=0`` means all cores.
    """
    global _threads
    if n is None:
        n = int(os.environ.get("HDG_THREADS", "1"))
    if n < 0:
        raise ValueError("thread count must be >= 0")
    if n == 0:
        n = os.cpu_count() or 1
    _threads = n
    try:
        from threadpoolctl import threadpool_limits

        threadpool_limits(limits=n)
    except ImportError:  # pragma: no cover
        pass
    return n


def get_threads() -> int:
    return _threads


@dataclass
class DenseBatch:
    rows: int
    cols: int
    batch: int
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64).reshape(-1)
        if self.data.size != self.rows * self.cols * self.batch:
            raise DimensionMismatch(
                f"buffer has {self.data.size} entries, expected "
                f"{self.rows}x{self.cols}x{self.batch}"
            )

    @property
    def blocks(self) -> np.ndarray:
        """``(batch, rows, cols)`` view; writes go through to ``data``."""
        return self.data.reshape(self.batch, self.cols, self.rows).transpose(0, 2, 1)

    @classmethod
    def from_blocks(cls, arr) -> "DenseBatch":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[None]
        b, r, c = arr.shape
        return cls(r, c, b, np.ascontiguousarray(arr.transpose(0, 2, 1)).reshape(-1))

    @classmethod
    def zeros(cls, rows, cols, batch) -> "DenseBatch":
        return cls(rows, cols, batch, np.zeros(rows * cols * batch))

    def copy(self) -> "DenseBatch":
        return DenseBatch(self.rows, self.cols, self.batch, self.data.copy())


def lu_factor_batch(a: np.ndarray):
    """In-place style batched LU with partial pivoting.

    ``a`` has shape ``(batch, n, n)``. Returns ``(lu, perm)`` where ``lu``
    packs unit-lower L and U, and ``perm[b]`` lists the original row that
    ended up in each position. Raises ``SingularBlock`` on the first batch
    index whose pivot drops below ``PIVOT_RTOL * max|A|``.
    """
    lu = np.array(a, dtype=np.float64, copy=True)
    nb, n, _ = lu.shape
    scale = np.abs(lu).reshape(nb, -1).max(axis=1) if n else np.zeros(nb)
    thresh = PIVOT_RTOL * scale
    perm = np.tile(np.arange(n), (nb, 1))
    ib = np.arange(nb)
    for k in range(n):
        p = k + np.argmax(np.abs(lu[:, k:, k]), axis=1)
        piv = np.abs(lu[ib, p, k])
        bad = np.nonzero((piv <= thresh) | ~np.isfinite(piv))[0]
        if bad.size:
            raise SingularBlock(bad[0], f"pivot {piv[bad[0]]:.3e} in column {k}")
        swap = p != k
        if swap.any():
            s = ib[swap]
            rows_k = lu[s, k, :].copy()
            lu[s, k, :] = lu[s, p[swap], :]
            lu[s, p[swap], :] = rows_k
            pk = perm[s, k].copy()
            perm[s, k] = perm[s, p[swap]]
            perm[s, p[swap]] = pk
        lu[:, k + 1:, k] /= lu[:, k, k][:, None]
        lu[:, k + 1:, k + 1:] -= lu[:, k + 1:, k, None] * lu[:, k, None, k + 1:]
    return lu, perm


def lu_solve_batch(lu: np.ndarray, perm: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve with factors from :func:`lu_factor_batch`; ``rhs`` is (batch, n, r)."""
    nb, n, _ = lu.shape
    x = np.take_along_axis(np.asarray(rhs, dtype=np.float64), perm[:, :, None], axis=1).copy()
    for i in range(1, n):
        x[:, i, :] -= np.einsum("bj,bjr->br", lu[:, i, :i], x[:, :i, :])
    for i in range(n - 1, -1, -1):
        if i < n - 1:
            x[:, i, :] -= np.einsum("bj,bjr->br", lu[:, i, i + 1:], x[:, i + 1:, :])
        x[:, i, :] /= lu[:, i, i][:, None]
    return x


def invert_blocks(a: np.ndarray) -> np.ndarray:
    """Explicit inverses of a ``(batch, n, n)`` stack via pivoted LU."""
    a = np.asarray(a, dtype=np.float64)
    nb, n, m = a.shape
    if n != m or n < 1:
        raise DimensionMismatch(f"blocks must be square and non-empty, got {n}x{m}")
    lu, perm = lu_factor_batch(a)
    eye = np.broadcast_to(np.eye(n), (nb, n, n))
    return lu_solve_batch(lu, perm, eye)


def lu_invert_batch(a: DenseBatch) -> DenseBatch:
    if a.rows != a.cols:
        raise DimensionMismatch(f"lu_invert_batch needs square blocks, got {a.rows}x{a.cols}")
    return DenseBatch.from_blocks(invert_blocks(a.blocks))


def gemm_batch(a: DenseBatch, b: DenseBatch, transpose_a: bool = False) -> DenseBatch:
    """Per-block ``op(A) @ B``; either operand may have ``batch == 1`` (broadcast)."""
    ab = a.blocks.transpose(0, 2, 1) if transpose_a else a.blocks
    if ab.shape[2] != b.rows:
        raise DimensionMismatch(f"inner dimensions {ab.shape[2]} and {b.rows} differ")
    if a.batch != b.batch and 1 not in (a.batch, b.batch):
        raise DimensionMismatch(f"batch counts {a.batch} and {b.batch} differ")
    return DenseBatch.from_blocks(np.matmul(ab, b.blocks))


def gemv_strided_batch(a: DenseBatch, x: np.ndarray, y: np.ndarray, accumulate: bool = False) -> np.ndarray:
    """``y[b] = A[b] @ x[b]`` (or ``+=``) for strided ``x`` (stride cols) and ``y`` (stride rows).

    ``x`` and ``y`` are flat or 2-D arrays; ``y`` is updated in place and
    returned.
    """
    xs = np.asarray(x, dtype=np.float64)
    if xs.size != a.cols * a.batch or y.size != a.rows * a.batch:
        raise DimensionMismatch(
            f"gemv expects x of {a.cols * a.batch} and y of {a.rows * a.batch} entries"
        )
    prod = np.matmul(a.blocks, xs.reshape(a.batch, a.cols, 1))
    yv = y.reshape(a.batch, a.rows, 1)
    if accumulate:
        yv += prod
    else:
        yv[...] = prod
    return y


def block_gemv(blocks: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``(batch, r, c) @ (batch, c)`` convenience used by the solver kernels."""
    return np.matmul(blocks, x[..., None])[..., 0]
