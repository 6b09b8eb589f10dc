"""Operation counters, memory gauge, and benchmark records.

Counting conventions
--------------------
One *block operation* is one call on b-by-b operands: an inversion, a
multiplication, or a subtraction. The recursive engine performs, per block
run, exactly

    schur_nodes            = (4**(k-1) - 1) // 3
    block_inversions       = schur_nodes + 1      (one per node + final)
    block_multiplications  = 2 * schur_nodes
    block_subtractions     = schur_nodes

and :func:`predicted_counts` returns those closed forms so tests can assert
integer equality against measured counters.

The memory gauge counts *live engine-managed block buffers* (b*b float64
each), not heap bytes: provider-internal file buffers and BLAS scratch are
outside it. Counters and gauges are plain per-run objects, merged by the
caller; nothing in this module is global state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import BadPartitionError, GaugeUnderflowError

__all__ = [
    "OpCounters",
    "MemoryGauge",
    "BenchRecord",
    "predicted_counts",
    "gauge_scope",
]


@dataclass
class OpCounters:
    """Tally of block operations for one run (or several merged runs)."""

    block_inversions: int = 0
    block_multiplications: int = 0
    block_subtractions: int = 0
    schur_nodes: int = 0

    def merge(self, other: "OpCounters") -> "OpCounters":
        """Accumulate another tally into this one and return self."""
        self.block_inversions += other.block_inversions
        self.block_multiplications += other.block_multiplications
        self.block_subtractions += other.block_subtractions
        self.schur_nodes += other.schur_nodes
        return self

    def copy(self) -> "OpCounters":
        return OpCounters(
            self.block_inversions,
            self.block_multiplications,
            self.block_subtractions,
            self.schur_nodes,
        )

    def reset(self) -> None:
        self.block_inversions = 0
        self.block_multiplications = 0
        self.block_subtractions = 0
        self.schur_nodes = 0


class MemoryGauge:
    """High-water mark of concurrently live block buffers.

    Every allocation of a block-sized buffer registers here and every
    release deregisters; releasing more than was registered raises
    :class:`GaugeUnderflowError`.
    """

    __slots__ = ("live_blocks", "peak_blocks")

    def __init__(self) -> None:
        self.live_blocks = 0
        self.peak_blocks = 0

    def on_alloc(self, n: int = 1) -> None:
        self.live_blocks += n
        if self.live_blocks > self.peak_blocks:
            self.peak_blocks = self.live_blocks

    def on_release(self, n: int = 1) -> None:
        if self.live_blocks - n < 0:
            raise GaugeUnderflowError(
                f"release of {n} buffer(s) with only {self.live_blocks} live"
            )
        self.live_blocks -= n

    def reset_peak(self) -> None:
        """Start a new measurement window at the current live count."""
        self.peak_blocks = self.live_blocks


class gauge_scope:
    """Context manager bracketing one run's peak measurement.

    Resets the gauge's peak on entry so back-to-back runs measure
    independently; on exit ``peak_blocks`` holds the run's high-water mark.

        with gauge_scope(ws.gauge) as scope:
            invert_block(...)
        assert scope.peak_blocks <= 2 * k + 4
    """

    def __init__(self, gauge: MemoryGauge):
        self.gauge = gauge
        self.peak_blocks = 0

    def __enter__(self) -> "gauge_scope":
        self.gauge.reset_peak()
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        self.peak_blocks = self.gauge.peak_blocks


def predicted_counts(k: int) -> OpCounters:
    """Exact block-operation counts for one single-block inversion run.

    The reduction tree has (4**(k-1) - 1) / 3 nodes: levels of 4**j nodes
    for j = 0 .. k-2. Each node costs 1 inversion + 2 multiplications +
    1 subtraction, and the run finishes with one more dense inversion.
    """
    if k < 2:
        raise BadPartitionError(f"partition needs k >= 2, got {k}")
    nodes = (4 ** (k - 1) - 1) // 3
    return OpCounters(
        block_inversions=nodes + 1,
        block_multiplications=2 * nodes,
        block_subtractions=nodes,
        schur_nodes=nodes,
    )


@dataclass(frozen=True)
class BenchRecord:
    """One benchmark measurement, serializable as one CSV row."""

    method: str  # "bri" or "lu"
    m: int
    k: int
    wall_ms: float
    peak_bytes: int
    n_block_inv: int
    n_block_mul: int
    seed: int

    def row(self) -> list:
        return [
            self.method,
            self.m,
            self.k,
            f"{self.wall_ms:.3f}",
            self.peak_bytes,
            self.n_block_inv,
            self.n_block_mul,
            self.seed,
        ]
