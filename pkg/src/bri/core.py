"""Dense b-by-b block arithmetic with explicit buffer accounting.

All elements are float64 and every block buffer is a C-contiguous (b, b)
ndarray owned by a :class:`Block`. Buffers are registered with a
:class:`~bri.instrumentation.MemoryGauge` at allocation and deregistered by
an explicit ``release()``, so peak-memory assertions are deterministic
rather than GC-dependent.

Design notes
------------
* Operations are free functions matching the operand vocabulary:
  ``multiply``, ``subtract``, ``lu_factor``, ``invert_dense``. A result
  block joins the workspace of its first operand.
* ``invert_dense`` factors in place over the input buffer (the input's
  contents are unspecified afterwards) so a single inversion keeps at most
  the input plus the result alive. The factorization runs on the
  transposed view, which is Fortran-contiguous for a C-ordered buffer, so
  LAPACK works truly in place; solving against identity columns with
  trans=0 then lands the inverse directly in row-major order.
* Singularity is a growth-scaled pivot test: |u_ii| <= b * eps * max|A|.
  LAPACK wrapper scratch is not block-buffer accounting; the gauge counts
  engine-managed buffers only.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import lapack

from .errors import DimensionMismatchError, GaugeUnderflowError, SingularBlockError
from .instrumentation import MemoryGauge, OpCounters

__all__ = [
    "Block",
    "LuFactors",
    "Workspace",
    "multiply",
    "subtract",
    "lu_factor",
    "invert_dense",
]

_EPS = float(np.finfo(np.float64).eps)


class Workspace:
    """Allocation context: one op-counter tally plus one memory gauge.

    Create one per inversion run; merge counters afterwards if several
    runs need a combined tally. Not shared mutable state: concurrent runs
    each get their own workspace.
    """

    __slots__ = ("counters", "gauge")

    def __init__(self, counters: OpCounters | None = None, gauge: MemoryGauge | None = None):
        self.counters = counters if counters is not None else OpCounters()
        self.gauge = gauge if gauge is not None else MemoryGauge()

    def adopt(self, buf: np.ndarray) -> "Block":
        """Wrap an existing float64 C-contiguous square buffer without copying."""
        return Block(buf, self)

    def from_array(self, a, copy: bool = True) -> "Block":
        """Allocate a block from array-like data (defensive copy by default)."""
        buf = np.array(a, dtype=np.float64, order="C", copy=copy)
        return Block(buf, self)

    def zeros(self, order: int) -> "Block":
        return Block(np.zeros((order, order)), self)

    def identity(self, order: int) -> "Block":
        buf = np.zeros((order, order))
        np.fill_diagonal(buf, 1.0)
        return Block(buf, self)


class Block:
    """One square float64 block plus its accounting hooks.

    The buffer registers with the workspace gauge on construction and must
    be released exactly once; a second release raises GaugeUnderflowError.
    """

    __slots__ = ("data", "_ws", "_released")

    def __init__(self, buf: np.ndarray, ws: Workspace | None = None):
        if buf.ndim != 2 or buf.shape[0] != buf.shape[1]:
            raise DimensionMismatchError(f"block buffer must be square, got {buf.shape}")
        # Blocks own writable scratch: in-place subtract and the in-place
        # factorization inside invert_dense write through this buffer.
        if (
            buf.dtype != np.float64
            or not buf.flags["C_CONTIGUOUS"]
            or not buf.flags.writeable
            or not buf.flags.owndata
        ):
            buf = np.array(buf, dtype=np.float64, order="C")
        self.data = buf
        self._ws = ws
        self._released = False
        if ws is not None:
            ws.gauge.on_alloc()

    @property
    def order(self) -> int:
        return self.data.shape[0]

    @property
    def workspace(self) -> Workspace | None:
        return self._ws

    def release(self) -> None:
        """Deregister this block's buffer from the gauge."""
        if self._released:
            raise GaugeUnderflowError("block released twice")
        self._released = True
        if self._ws is not None:
            self._ws.gauge.on_release()

    def copy(self) -> "Block":
        out = np.empty_like(self.data)
        np.copyto(out, self.data)
        return Block(out, self._ws)

    def __repr__(self) -> str:  # pragma: no cover
        state = "released" if self._released else "live"
        return f"Block(order={self.order}, {state})"


class LuFactors:
    """Packed LU factorization of one block with partial pivoting.

    ``packed_lu`` stores U on and above the diagonal and the unit-lower
    multipliers below it, row-major. ``pivots`` is a 1-based permutation
    of {1..b}: row i of L@U equals row pivots[i] of the input, i.e.
    P A = L U with P selecting rows in pivot order.
    """

    __slots__ = ("packed_lu", "pivots", "_ws", "_released")

    def __init__(self, packed_lu: np.ndarray, pivots: np.ndarray, ws: Workspace | None):
        self.packed_lu = packed_lu
        self.pivots = pivots
        self._ws = ws
        self._released = False
        if ws is not None:
            ws.gauge.on_alloc()

    @property
    def order(self) -> int:
        return self.packed_lu.shape[0]

    def release(self) -> None:
        if self._released:
            raise GaugeUnderflowError("LU factors released twice")
        self._released = True
        if self._ws is not None:
            self._ws.gauge.on_release()


def _require_same_order(x: Block, y: Block) -> int:
    if x.order != y.order:
        raise DimensionMismatchError(f"operand orders differ: {x.order} vs {y.order}")
    return x.order


def _count(ws: Workspace | None, field: str) -> None:
    if ws is not None:
        setattr(ws.counters, field, getattr(ws.counters, field) + 1)


def multiply(x: Block, y: Block) -> Block:
    """Dense product x @ y. Allocates exactly one result buffer.

    Counts as one block multiplication.
    """
    _require_same_order(x, y)
    out = Block(x.data @ y.data, x._ws)
    _count(x._ws, "block_multiplications")
    return out


def subtract(x: Block, y: Block, in_place: bool = False) -> Block:
    """Difference x - y. With ``in_place`` the result overwrites x's
    buffer and no new buffer is allocated (the returned block *is* x).

    Counts as one block subtraction either way.
    """
    _require_same_order(x, y)
    if in_place:
        np.subtract(x.data, y.data, out=x.data)
        _count(x._ws, "block_subtractions")
        return x
    out = Block(x.data - y.data, x._ws)
    _count(x._ws, "block_subtractions")
    return out


def _singular_index(diag: np.ndarray, order: int, scale: float) -> int:
    """1-based index of the first pivot failing the threshold, else 0.

    NaN pivots compare false against the threshold and are flagged too.
    """
    tol = order * _EPS * scale
    ok = np.abs(diag) > tol
    if ok.all():
        return 0
    return int(np.flatnonzero(~ok)[0]) + 1


def lu_factor(x: Block) -> LuFactors:
    """Factor P A = L U with partial pivoting. The input is left intact.

    Does not bump any operation counter on its own; it is a building
    block whose cost is attributed by the caller (invert_dense counts the
    whole inversion as one).
    """
    order = x.order
    scale = float(np.abs(x.data).max()) if order else 0.0
    # f2py copies the C-ordered input to Fortran order internally; that
    # wrapper scratch is not an engine-managed buffer.
    lu, piv, info = lapack.dgetrf(x.data)
    if info < 0:  # pragma: no cover
        raise ValueError(f"illegal LAPACK argument {-info}")
    bad = _singular_index(lu.diagonal(), order, scale)
    if bad:
        raise SingularBlockError(bad, order)
    # piv is a 0-based sequence of row swaps; fold it into a permutation.
    perm = np.arange(order)
    for i, p in enumerate(piv):
        if p != i:
            perm[i], perm[p] = perm[p], perm[i]
    packed = np.ascontiguousarray(lu)
    return LuFactors(packed, perm + 1, x._ws)


def invert_dense(x: Block) -> Block:
    """Dense inverse of one block via LU with partial pivoting plus
    triangular solves against identity columns.

    The input buffer is reused as factorization workspace: after the call
    x's contents are unspecified (the caller still owns and releases x).
    Allocates exactly one result buffer. Counts as one block inversion.
    """
    order = x.order
    scale = float(np.abs(x.data).max()) if order else 0.0
    # Factor A^T in place through the F-contiguous transposed view.
    lu, piv, info = lapack.dgetrf(x.data.T, overwrite_a=1)
    if info < 0:  # pragma: no cover
        raise ValueError(f"illegal LAPACK argument {-info}")
    bad = _singular_index(lu.diagonal(), order, scale)
    if bad:
        raise SingularBlockError(bad, order)
    res = Block(np.zeros((order, order)), x._ws)
    np.fill_diagonal(res.data, 1.0)
    # Solving A^T y = e_j writes (A^T)^-1 columnwise into the F-view,
    # which reads back row-major as the inverse of A itself.
    _, info = lapack.dgetrs(lu, piv, res.data.T, trans=0, overwrite_b=1)
    if info != 0:  # pragma: no cover
        raise SingularBlockError(abs(info), order)
    _count(x._ws, "block_inversions")
    return res
