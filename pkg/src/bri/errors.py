"""Exception types shared across the package.

Every error raised by the library derives from :class:`BriError` so callers
can catch one base class. The CLI maps these onto process exit codes.
"""

from __future__ import annotations


class BriError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatchError(BriError):
    """Operands or buffers do not have compatible orders."""


class BadPartitionError(BriError):
    """Requested block partition is not usable (k < 2 or k > padded order)."""


class IndexOutOfRangeError(BriError):
    """Block index outside 1..k."""


class SingularBlockError(BriError):
    """A dense factorization hit a pivot below the singularity threshold.

    ``pivot_index`` is the 1-based elimination step at which the pivot
    failed the growth-scaled test |u_ii| <= order * eps * max|A|.
    """

    def __init__(self, pivot_index: int, order: int | None = None):
        self.pivot_index = int(pivot_index)
        self.order = order
        msg = f"singular block: pivot {self.pivot_index} below threshold"
        if order is not None:
            msg += f" (order {order})"
        super().__init__(msg)


class SingularMatrixError(BriError):
    """The full dense matrix handed to the baseline is numerically singular."""

    def __init__(self, pivot_index: int, order: int):
        self.pivot_index = int(pivot_index)
        self.order = int(order)
        super().__init__(
            f"singular matrix of order {order}: pivot {pivot_index} below threshold"
        )


class SingularPivotError(BriError):
    """A pivot block inside the recursive reduction was singular.

    Carries the branch path from the root frame to the failing node so the
    failure can be replayed: ``path`` is a tuple of quadrant labels,
    ``pivot_block`` the 1-based (row, col) block index pair of the pivot
    whose inversion failed (anchor position of the failing frame).
    """

    def __init__(self, path: tuple, pivot_block: tuple[int, int]):
        self.path = tuple(path)
        self.pivot_block = (int(pivot_block[0]), int(pivot_block[1]))
        labels = "/".join(q.name for q in self.path)
        super().__init__(
            f"singular pivot at branch {labels} "
            f"(depth {len(self.path)}, block {self.pivot_block})"
        )


class FrameTooSmallError(BriError):
    """split_frame called on a frame with fewer than 3 block rows."""


class GaugeUnderflowError(BriError):
    """A block buffer was released more times than it was registered."""


class FormatError(BriError):
    """Matrix file does not conform to the BRIM layout."""


class MissingBlocksError(BriError):
    """Inverse sink finalized before all k*k blocks were submitted."""

    def __init__(self, missing: list[tuple[int, int]]):
        self.missing = list(missing)
        shown = ", ".join(map(str, self.missing[:8]))
        extra = "" if len(self.missing) <= 8 else f" and {len(self.missing) - 8} more"
        super().__init__(f"sink finalized with missing blocks: {shown}{extra}")


class MaterializeLimitError(BriError):
    """Guard against accidentally materializing a huge operand."""

    def __init__(self, order: int, limit: int):
        self.order = order
        self.limit = limit
        super().__init__(
            f"refusing to materialize order {order} > configured ceiling {limit}"
        )


class UsageError(BriError):
    """Bad CLI flag combination or unusable input path."""
