"""Block providers: uniform fetch access to M_alpha_beta from any backing.

A provider hands out one b-by-b block per fetch as a fresh buffer; nothing
is cached or kept resident between fetches (an optional bounded cache can
be layered on top, off by default). Backings: an in-memory array, a BRIM
file read by row segments, or a kernel rule evaluated on demand.

Paddings and views compose here rather than in the engine:

* augmentation embeds an order-m matrix into the order m+l block-diagonal
  extension [[M, 0], [0, I]] so every k divides the working order, and
* a permuted view exchanges block row 1 with beta and block column 1 with
  alpha, which moves the target block of the inverse into leading
  position: the (1,1) inverse block of the view equals N_alpha_beta.

One wrinkle: on a padded layout, a block-level exchange leaves padding
rows and their matching columns in different pivot minors of the
reduction, and those pivots become exactly singular no matter what M is
(they acquire zero rows or columns). Every inverted pivot of the
reduction tree covers the anchor block and, when its row and column
block sets differ at all, they differ only over blocks 3..k-1. run_view
therefore switches, whenever padding is present, to an element-level
shifted window: the b-wide row and column strips carrying the target's
real entries lead, all padding indices sit at shared positions inside
blocks 2 and k of both maps, and a finishing step places the computed
window into the padded output block. Pivots then stay generically
nonsingular and the result is unchanged. Padding wider than two blocks
cannot be tucked away like this, so k >= 5 partitions reject layouts
with l > 2b.

Fetches are deterministic: repeated fetches of the same index pair return
bit-identical buffers.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
import threading

import numpy as np

from .core import Block, Workspace
from .errors import BadPartitionError, DimensionMismatchError, IndexOutOfRangeError
from .formats import BrimReader

__all__ = [
    "BlockLayout",
    "KernelSpec",
    "BlockPermutation",
    "BlockProvider",
    "fetch_block",
    "make_memory_provider",
    "make_file_provider",
    "make_kernel_provider",
    "kernel_matrix",
    "permute_provider",
    "augment_provider",
    "cache_provider",
]


@dataclass(frozen=True)
class BlockLayout:
    """Partition bookkeeping: order m split into k block rows of width b.

    l zero-or-identity padding rows/cols make the working order n = m + l
    divisible by k; l is the smallest such non-negative integer.
    """

    m: int
    k: int
    l: int
    b: int

    @property
    def n(self) -> int:
        """Working (padded) order."""
        return self.m + self.l

    @classmethod
    def for_order(cls, m: int, k: int) -> "BlockLayout":
        if m < 1:
            raise BadPartitionError(f"matrix order must be >= 1, got {m}")
        if k < 2:
            raise BadPartitionError(f"partition needs k >= 2, got {k}")
        l = (-m) % k
        if k > m + l:  # unreachable with l as computed; kept as a guard
            raise BadPartitionError(f"k={k} exceeds padded order {m + l}")
        return cls(m=m, k=k, l=l, b=(m + l) // k)


@dataclass(frozen=True)
class KernelSpec:
    """Gaussian-kernel system matrix of order n+1 for n training inputs.

    Element rule, 1-based over order m = n + 1: entry (1,1) is 0, the rest
    of the first row and column are 1, and interior entry (i, j) is
    exp(-||x_{i-1} - x_{j-1}||^2 / (2 sigma^2)) + delta_ij / gamma.
    Elements are recomputed on every fetch; the inputs are the only state.
    """

    inputs: np.ndarray  # (n, d), read-only
    gamma: float = 1.0
    sigma: float = 1.0

    def __post_init__(self):
        x = np.ascontiguousarray(self.inputs, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[0] < 1:
            raise DimensionMismatchError(f"kernel inputs must be (n, d), got {self.inputs.shape}")
        if not (self.gamma > 0) or not (self.sigma > 0):
            raise BadPartitionError("kernel gamma and sigma must be positive")
        x.setflags(write=False)
        object.__setattr__(self, "inputs", x)

    @property
    def order(self) -> int:
        return self.inputs.shape[0] + 1


@dataclass(frozen=True)
class BlockPermutation:
    """Index exchange selecting target block (alpha, beta) of the inverse.

    Fetch mapping: rows swap 1 <-> beta, columns swap 1 <-> alpha.
    """

    alpha: int
    beta: int

    def map_row(self, i: int) -> int:
        if i == 1:
            return self.beta
        if i == self.beta:
            return 1
        return i

    def map_col(self, j: int) -> int:
        if j == 1:
            return self.alpha
        if j == self.alpha:
            return 1
        return j


# ---------------------------------------------------------------------------
# Element sources: rectangle reads over the raw (unpadded) m-by-m matrix.
# ---------------------------------------------------------------------------


class _MemorySource:
    def __init__(self, matrix: np.ndarray):
        a = np.array(matrix, dtype=np.float64, order="C", copy=True)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionMismatchError(f"matrix must be square, got shape {a.shape}")
        a.setflags(write=False)
        self.matrix = a
        self.m = a.shape[0]

    def rect(self, r0, r1, c0, c1) -> np.ndarray:
        return self.matrix[r0:r1, c0:c1]


class _FileSource:
    def __init__(self, path):
        self.reader = BrimReader(path)
        self.m = self.reader.m

    def rect(self, r0, r1, c0, c1) -> np.ndarray:
        return self.reader.read_rect(r0, r1, c0, c1)


class _KernelSource:
    def __init__(self, spec: KernelSpec):
        self.spec = spec
        self.m = spec.order

    def rect(self, r0, r1, c0, c1) -> np.ndarray:
        spec = self.spec
        out = np.empty((r1 - r0, c1 - c0))
        if r0 == 0:
            out[0, :] = 1.0
            if c0 == 0:
                out[0, 0] = 0.0
        if c0 == 0:
            out[max(r0, 1) - r0 :, 0] = 1.0
        i0, j0 = max(r0, 1), max(c0, 1)
        if i0 < r1 and j0 < c1:
            xi = spec.inputs[i0 - 1 : r1 - 1]
            xj = spec.inputs[j0 - 1 : c1 - 1]
            sq = ((xi[:, None, :] - xj[None, :, :]) ** 2).sum(axis=2)
            gram = np.exp(sq / (-2.0 * spec.sigma**2))
            # ridge term on the global diagonal only
            di = np.arange(i0, r1)
            on_diag = (di >= j0) & (di < c1)
            gram[np.flatnonzero(on_diag), di[on_diag] - j0] += 1.0 / spec.gamma
            out[i0 - r0 :, j0 - c0 :] = gram
        return out


def _index_runs(positions: np.ndarray, values: np.ndarray) -> list[tuple[int, int, int]]:
    """Maximal strips where position and element index both advance by one.

    Yields (pos_start, pos_stop, value_start) triples; each strip can be
    served by a single contiguous rectangle read.
    """
    runs = []
    start = 0
    for t in range(1, positions.size):
        if positions[t] != positions[t - 1] + 1 or values[t] != values[t - 1] + 1:
            runs.append((int(positions[start]), int(positions[t - 1]) + 1, int(values[start])))
            start = t
    if positions.size:
        runs.append((int(positions[start]), int(positions[-1]) + 1, int(values[start])))
    return runs


def _gather_rect(source, m: int, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """[[M, 0], [0, I]] gathered at arbitrary element rows x cols.

    Real-index pairs come from the source in maximal contiguous strips;
    indices at or beyond m contribute identity entries only.
    """
    out = np.zeros((rows.size, cols.size))
    rpos = np.flatnonzero(rows < m)
    cpos = np.flatnonzero(cols < m)
    for i0, i1, a0 in _index_runs(rpos, rows[rpos]):
        for j0, j1, c0 in _index_runs(cpos, cols[cpos]):
            out[i0:i1, j0:j1] = source.rect(a0, a0 + (i1 - i0), c0, c0 + (j1 - j0))
    for i in np.flatnonzero(rows >= m):
        hit = np.flatnonzero(cols == rows[i])
        if hit.size:
            out[i, hit[0]] = 1.0
    return out


def _real_window(lay: BlockLayout, j: int) -> int:
    """Start of b consecutive real indices covering block j's real span."""
    lo = (j - 1) * lay.b
    return min(lo, lay.m - lay.b)


def _run_maps(lay: BlockLayout, alpha: int, beta: int) -> tuple[np.ndarray, np.ndarray]:
    """Element row and column maps for one padded-target run.

    Both maps lead with the b-wide real window carrying the target's
    entries (beta's for rows, alpha's for cols), park up to b padding
    indices at the tail of the last block and any overflow at the tail
    of the anchor block, at identical positions in both maps, and fill
    the remaining slots with the leftover real indices, shared middle
    first so the two maps agree wherever they can.
    """
    b, m, n, l = lay.b, lay.m, lay.n, lay.l
    a0 = _real_window(lay, alpha)
    b0 = _real_window(lay, beta)
    real = np.arange(m)
    in_a = (real >= a0) & (real < a0 + b)
    in_b = (real >= b0) & (real < b0 + b)
    common = real[~in_a & ~in_b]
    pads = np.arange(m, n)
    over = max(0, l - b)  # padding beyond the last block's tail capacity

    def weave(lead: np.ndarray, rest: np.ndarray) -> np.ndarray:
        head, mid = rest[: b - over], rest[b - over :]
        return np.concatenate([lead, head, pads[:over], mid, pads[over:]])

    rmap = weave(real[in_b], np.concatenate([common, real[in_a & ~in_b]]))
    cmap = weave(real[in_a], np.concatenate([common, real[in_b & ~in_a]]))
    return rmap, cmap


# ---------------------------------------------------------------------------
# Providers
# ---------------------------------------------------------------------------


class BlockProvider:
    """Abstract block source over one layout. Read-only after construction."""

    layout: BlockLayout

    def _block(self, alpha: int, beta: int) -> np.ndarray:
        raise NotImplementedError

    def fetch_block(self, alpha: int, beta: int, ws: Workspace | None = None) -> Block:
        """Fetch block (alpha, beta), 1-based, as one freshly allocated buffer."""
        k = self.layout.k
        if not (1 <= alpha <= k and 1 <= beta <= k):
            raise IndexOutOfRangeError(f"block ({alpha}, {beta}) outside 1..{k}")
        return Block(self._block(alpha, beta), ws)

    def run_view(self, alpha: int, beta: int):
        """View to reduce for target block (alpha, beta), plus a finisher.

        Returns (provider, finish) where finish is None when the run's
        output is the target block as-is (the plain permuted view), or a
        callable mapping the computed leading window to the target block.
        """
        return permute_provider(self, alpha, beta), None


class _AugmentedSourceProvider(BlockProvider):
    """Blocks of [[M, 0], [0, I]] assembled from an element source.

    With l = 0 this degenerates to plain blocks of M itself.
    """

    def __init__(self, source, layout: BlockLayout):
        if source.m != layout.m:
            raise DimensionMismatchError(
                f"source order {source.m} does not match layout order {layout.m}"
            )
        self.source = source
        self.layout = layout

    def _block(self, alpha: int, beta: int) -> np.ndarray:
        lay = self.layout
        b, m = lay.b, lay.m
        r0, c0 = (alpha - 1) * b, (beta - 1) * b
        nrows = min(b, m - r0)
        ncols = min(b, m - c0)
        if nrows == b and ncols == b:
            # May be a read-only view (memory source); Block normalizes to
            # an owned writable buffer on adoption.
            return self.source.rect(r0, r0 + b, c0, c0 + b)
        out = np.zeros((b, b))
        if nrows > 0 and ncols > 0:
            out[:nrows, :ncols] = self.source.rect(r0, r0 + nrows, c0, c0 + ncols)
        lo = max(r0, c0, m)
        hi = min(r0 + b, c0 + b)
        if hi > lo:  # identity corner of the padding
            idx = np.arange(lo, hi)
            out[idx - r0, idx - c0] = 1.0
        return out

    def run_view(self, alpha: int, beta: int):
        lay = self.layout
        if lay.l == 0:
            return permute_provider(self, alpha, beta), None
        if lay.k >= 5 and lay.l > 2 * lay.b:
            # Deep reductions invert pivots whose row and column block
            # sets differ over blocks 3..k-1; padding caught there makes
            # them exactly singular, and blocks 2 and k can absorb at
            # most 2b padding indices between them.
            raise BadPartitionError(
                f"order {lay.m} with k={lay.k} needs {lay.l} padding indices, "
                f"more than two blocks' worth ({2 * lay.b}); use a partition "
                f"with k <= 4 or one that divides the order more evenly"
            )
        # A block-level exchange would strand padding columns away from
        # their rows (or vice versa) inside interior pivots, which are
        # then singular for every M. Run over the element-shifted window
        # instead; view rows index the *columns* of the inverse, so the
        # leading row window carries beta's span.
        a0 = _real_window(lay, alpha)
        b0 = _real_window(lay, beta)
        rmap, cmap = _run_maps(lay, alpha, beta)
        view = _ShiftedWindowProvider(self.source, lay, rmap, cmap)

        def finish(win: np.ndarray) -> np.ndarray:
            # win = inverse rows [a0, a0+b) x cols [b0, b0+b); the target
            # block's real entries lie inside it. Outside the real
            # region the inverse is the identity's padding corner.
            out = np.zeros((lay.b, lay.b))
            rg = np.arange((alpha - 1) * lay.b, alpha * lay.b)
            cg = np.arange((beta - 1) * lay.b, beta * lay.b)
            rr, cc = rg < lay.m, cg < lay.m
            if rr.any() and cc.any():
                out[np.ix_(rr, cc)] = win[np.ix_(rg[rr] - a0, cg[cc] - b0)]
            if alpha == beta:
                pad = np.flatnonzero(~rr)
                out[pad, pad] = 1.0
            return out

        return view, finish


class _ShiftedWindowProvider(BlockProvider):
    """Element-permuted view of the padded matrix for one target run.

    Block (i, j) is [[M, 0], [0, I]] gathered at element rows
    rmap[(i-1)b : ib] and columns cmap[(j-1)b : jb]. The maps keep every
    padding index at one shared position, so reduction pivots see padding
    rows and columns together and stay generically nonsingular.
    """

    def __init__(self, source, layout: BlockLayout, rmap: np.ndarray, cmap: np.ndarray):
        self.source = source
        self.layout = layout
        self._rmap = rmap
        self._cmap = cmap

    def _block(self, alpha: int, beta: int) -> np.ndarray:
        b = self.layout.b
        return _gather_rect(
            self.source,
            self.layout.m,
            self._rmap[(alpha - 1) * b : alpha * b],
            self._cmap[(beta - 1) * b : beta * b],
        )


class _PermutedProvider(BlockProvider):
    """Lazy index-mapped view; owns no element data."""

    def __init__(self, base: BlockProvider, perm: BlockPermutation):
        self.base = base
        self.perm = perm
        self.layout = base.layout

    def _block(self, alpha: int, beta: int) -> np.ndarray:
        return self.base._block(self.perm.map_row(alpha), self.perm.map_col(beta))


class _CachedProvider(BlockProvider):
    """Bounded LRU cache wrapper. Fetches still return fresh buffers."""

    def __init__(self, base: BlockProvider, capacity: int):
        if capacity < 1:
            raise BadPartitionError(f"cache capacity must be >= 1, got {capacity}")
        self.base = base
        self.layout = base.layout
        self.capacity = capacity
        self._cache: OrderedDict[tuple[int, int], np.ndarray] = OrderedDict()
        self._lock = threading.Lock()

    def _block(self, alpha: int, beta: int) -> np.ndarray:
        key = (alpha, beta)
        with self._lock:
            hit = self._cache.get(key)
            if hit is not None:
                self._cache.move_to_end(key)
                return hit.copy()
        data = self.base._block(alpha, beta)
        with self._lock:
            self._cache[key] = data
            self._cache.move_to_end(key)
            while len(self._cache) > self.capacity:
                self._cache.popitem(last=False)
        return data.copy()

    def run_view(self, alpha: int, beta: int):
        view, finish = self.base.run_view(alpha, beta)
        if finish is None:
            # plain permuted run: keep cached fetches in the loop
            return permute_provider(self, alpha, beta), None
        # shifted-window runs read elements the block cache cannot serve
        return view, finish


def fetch_block(provider: BlockProvider, alpha: int, beta: int, ws: Workspace | None = None) -> Block:
    """Free-function form of ``provider.fetch_block``."""
    return provider.fetch_block(alpha, beta, ws)


def augment_provider(source, layout: BlockLayout) -> BlockProvider:
    """Wrap an element source (``.m``, ``.rect``) as a padded block provider.

    The view is over [[M, 0], [0, I]] of order layout.n; with layout.l == 0
    it is exactly the blocks of M.
    """
    return _AugmentedSourceProvider(source, layout)


def make_memory_provider(matrix, k: int) -> BlockProvider:
    """Provider over an in-memory square matrix (copied, then read-only)."""
    source = _MemorySource(matrix)
    return augment_provider(source, BlockLayout.for_order(source.m, k))


def make_file_provider(path, k: int) -> BlockProvider:
    """Provider over a BRIM file; each fetch reads at most b row segments."""
    source = _FileSource(path)
    return augment_provider(source, BlockLayout.for_order(source.m, k))


def make_kernel_provider(spec: KernelSpec, k: int) -> BlockProvider:
    """Provider over a kernel system matrix, elements recomputed per fetch."""
    source = _KernelSource(spec)
    return augment_provider(source, BlockLayout.for_order(spec.order, k))


def kernel_matrix(spec: KernelSpec) -> np.ndarray:
    """The full order-(n+1) kernel system matrix as one dense array."""
    return _KernelSource(spec).rect(0, spec.order, 0, spec.order)


def permute_provider(provider: BlockProvider, alpha: int, beta: int) -> BlockProvider:
    """View with block row 1 <-> beta and block column 1 <-> alpha exchanged.

    The (1,1) block of the view's inverse is block (alpha, beta) of the
    base matrix's inverse. Applying the same permutation twice yields a
    view equivalent to the base. alpha = beta = 1 is the identity view.
    """
    k = provider.layout.k
    if not (1 <= alpha <= k and 1 <= beta <= k):
        raise IndexOutOfRangeError(f"target block ({alpha}, {beta}) outside 1..{k}")
    return _PermutedProvider(provider, BlockPermutation(alpha=alpha, beta=beta))


def cache_provider(provider: BlockProvider, capacity: int) -> BlockProvider:
    """Optional bounded LRU cache around any provider (off by default)."""
    return _CachedProvider(provider, capacity)
