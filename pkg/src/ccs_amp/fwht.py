"""Fast Walsh-Hadamard transform and implicit subsampled-Hadamard sensing operators.

The operators realise ``A x`` and ``A^T z`` without forming ``A``.  Rows are
drawn from a natural-order (Sylvester) Hadamard matrix, the all-ones row is
never used, and every column is scaled to unit Euclidean norm.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from numba import njit

from .params import ConfigError, SystemParams


@njit(cache=True)
def _fwht_kernel(x):
    n = x.shape[0]
    h = 1
    while h < n:
        for i in range(0, n, 2 * h):
            for j in range(i, i + h):
                a = x[j]
                b = x[j + h]
                x[j] = a + b
                x[j + h] = a - b
        h *= 2


@njit(cache=True)
def _fwht_rows_kernel(x):
    for r in range(x.shape[0]):
        _fwht_kernel(x[r])


def _log2_exact(n: int) -> int:
    if n < 1 or n & (n - 1):
        raise ValueError(f"length must be a power of two (got {n})")
    return n.bit_length() - 1


def fwht_inplace(x: np.ndarray) -> np.ndarray:
    """Unnormalised Walsh-Hadamard transform ``H x`` in natural (Sylvester) order.

    Operates in place on a contiguous float64 array and returns it.  A 2-D
    array is transformed row by row.  ``H`` is symmetric, so the transform is
    its own transpose, and ``fwht(fwht(x)) == len(x) * x``.
    """
    if not isinstance(x, np.ndarray) or x.dtype != np.float64:
        raise ValueError("fwht_inplace needs a float64 ndarray")
    if not x.flags.c_contiguous:
        raise ValueError("fwht_inplace needs a C-contiguous array")
    if x.ndim == 1:
        _log2_exact(x.shape[0])
        _fwht_kernel(x)
    elif x.ndim == 2:
        _log2_exact(x.shape[1])
        _fwht_rows_kernel(x)
    else:
        raise ValueError("fwht_inplace accepts 1-D or 2-D arrays")
    return x


def fwht(x) -> np.ndarray:
    """Out-of-place convenience wrapper around :func:`fwht_inplace`."""
    return fwht_inplace(np.array(x, dtype=np.float64, copy=True, order="C"))


@dataclass(frozen=True)
class HadamardPlan:
    """Selected rows of one Hadamard matrix of length ``2**order_log2``."""

    order_log2: int
    row_indices: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.row_indices, dtype=np.int64)
        size = 1 << self.order_log2
        if rows.ndim != 1 or rows.size == 0:
            raise ValueError("row_indices must be a non-empty 1-D array")
        if rows.size >= size:
            raise ValueError(f"too many rows ({rows.size}) for order 2^{self.order_log2}")
        if rows[0] < 1 or rows[-1] >= size or np.any(np.diff(rows) <= 0):
            raise ValueError("row_indices must be sorted, distinct and in [1, 2^order)")
        rows.setflags(write=False)
        object.__setattr__(self, "row_indices", rows)

    @property
    def size(self) -> int:
        return 1 << self.order_log2

    @property
    def scale(self) -> float:
        return 1.0 / np.sqrt(self.row_indices.size)

    @classmethod
    def random(cls, order_log2: int, rows: int, rng: np.random.Generator) -> "HadamardPlan":
        """Uniform draw of ``rows`` distinct row indices from ``[1, 2^order)``."""
        size = 1 << order_log2
        if rows < 1 or rows > size - 1:
            raise ValueError(f"cannot draw {rows} rows from order 2^{order_log2} (max {size - 1})")
        picked = rng.permutation(np.arange(1, size, dtype=np.int64))[:rows]
        return cls(order_log2, np.sort(picked))


class OperatorKind(enum.Enum):
    DENSE = "dense"
    BLOCK_DIAGONAL = "block"


@dataclass(frozen=True)
class SensingOperator:
    """Implicit ``n x width`` sensing matrix.

    ``DENSE`` uses a single plan whose transform length is the smallest power
    of two covering the width.  ``BLOCK_DIAGONAL`` holds one plan per section;
    section ``l`` of the input only reaches output rows ``[l*n/L, (l+1)*n/L)``.
    """

    kind: OperatorKind
    plans: tuple
    n: int
    width: int

    def __post_init__(self):
        rows = sum(p.row_indices.size for p in self.plans)
        if rows != self.n:
            raise ValueError(f"plans provide {rows} rows, expected {self.n}")
        if self.kind is OperatorKind.DENSE:
            if len(self.plans) != 1 or self.width > self.plans[0].size:
                raise ValueError("dense operator needs one plan covering the width")
        else:
            L = len(self.plans)
            if self.width % L or any(p.size != self.width // L for p in self.plans):
                raise ValueError("block plans must each span width/L columns")
            if len({p.row_indices.size for p in self.plans}) != 1:
                raise ValueError("block plans must have equal row counts")
            stacked = np.stack([p.row_indices for p in self.plans])
            stacked.setflags(write=False)
            object.__setattr__(self, "_block_rows", stacked)

    @property
    def num_blocks(self) -> int:
        return len(self.plans)

    @property
    def rows_per_block(self) -> int:
        return self.n // len(self.plans)

    def block_rows(self) -> np.ndarray:
        """``(L, n/L)`` array of selected rows (block-diagonal only)."""
        return self._block_rows

    def forward(self, x: np.ndarray, work: np.ndarray | None = None) -> np.ndarray:
        return forward(self, x, work)

    def adjoint(self, z: np.ndarray, work: np.ndarray | None = None) -> np.ndarray:
        return adjoint(self, z, work)

    def to_dense(self) -> np.ndarray:
        """Explicit matrix, built column by column.  Only for small instances."""
        A = np.empty((self.n, self.width))
        e = np.zeros(self.width)
        for j in range(self.width):
            e[j] = 1.0
            A[:, j] = forward(self, e)
            e[j] = 0.0
        return A


def make_operator(kind, params: SystemParams, seed: int) -> SensingOperator:
    """Draw a random subsampled-Hadamard operator for ``params``.

    The draw is a deterministic function of ``seed``.
    """
    kind = OperatorKind(kind)
    rng = np.random.default_rng(seed)
    width = params.width
    if kind is OperatorKind.DENSE:
        order = max(width - 1, 1).bit_length()
        if params.n > (1 << order) - 1:
            raise ValueError(f"n={params.n} exceeds the {(1 << order) - 1} usable Hadamard rows")
        plans = (HadamardPlan.random(order, params.n, rng),)
    else:
        if params.n % params.L:
            raise ConfigError("L must divide n for a block-diagonal operator")
        per = params.n // params.L
        if per > (1 << params.v) - 1:
            raise ValueError(f"n/L={per} exceeds the {(1 << params.v) - 1} usable rows per block")
        plans = tuple(HadamardPlan.random(params.v, per, rng) for _ in range(params.L))
    return SensingOperator(kind, plans, params.n, width)


def _check_len(vec: np.ndarray, expected: int, what: str) -> np.ndarray:
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape != (expected,):
        raise ValueError(f"{what} must have shape ({expected},), got {vec.shape}")
    return vec


def forward(op: SensingOperator, x: np.ndarray, work: np.ndarray | None = None) -> np.ndarray:
    """``A x``.  ``work`` is optional scratch of the transform's size."""
    x = _check_len(x, op.width, "x")
    if op.kind is OperatorKind.DENSE:
        plan = op.plans[0]
        buf = np.empty(plan.size) if work is None else work.reshape(plan.size)
        buf[: op.width] = x
        buf[op.width :] = 0.0
        fwht_inplace(buf)
        return buf[plan.row_indices] * plan.scale
    L = op.num_blocks
    buf = np.empty((L, op.width // L)) if work is None else work.reshape(L, op.width // L)
    buf[:] = x.reshape(L, -1)
    fwht_inplace(buf)
    out = np.take_along_axis(buf, op.block_rows(), axis=1)
    out *= op.plans[0].scale
    return out.reshape(-1)


def adjoint(op: SensingOperator, z: np.ndarray, work: np.ndarray | None = None) -> np.ndarray:
    """``A^T z``."""
    z = _check_len(z, op.n, "z")
    if op.kind is OperatorKind.DENSE:
        plan = op.plans[0]
        buf = np.empty(plan.size) if work is None else work.reshape(plan.size)
        buf[:] = 0.0
        buf[plan.row_indices] = z
        fwht_inplace(buf)
        out = buf[: op.width] * plan.scale
        return out
    L = op.num_blocks
    buf = np.empty((L, op.width // L)) if work is None else work.reshape(L, op.width // L)
    buf[:] = 0.0
    np.put_along_axis(buf, op.block_rows(), z.reshape(L, -1), axis=1)
    fwht_inplace(buf)
    out = buf.reshape(-1) * op.plans[0].scale
    return out
