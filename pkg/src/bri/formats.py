"""Matrix file format (BRIM), streaming inverse sinks, and the bench CSV schema.

BRIM layout, little-endian throughout:

    bytes 0..3    magic ``b"BRIM"``
    bytes 4..7    format version, u32 (currently 1)
    bytes 8..15   matrix order m, u64
    byte  16      element dtype tag, u8 (1 = float64)
    bytes 17..23  reserved, zero
    bytes 24..    m*m float64 elements, row-major

A sink writes the header with version 0 first and stamps version 1 only on
a successful ``finalize()``, so an aborted or partial write is detectable:
readers reject version 0 files.
"""

from __future__ import annotations

import csv
import io
import os
import struct
import threading
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import DimensionMismatchError, FormatError, IndexOutOfRangeError, MissingBlocksError
from .instrumentation import BenchRecord

__all__ = [
    "MAGIC",
    "VERSION",
    "DTYPE_F64",
    "HEADER_BYTES",
    "BrimHeader",
    "write_matrix",
    "read_header",
    "read_matrix",
    "BrimReader",
    "BrimSink",
    "MemorySink",
    "CSV_COLUMNS",
    "write_bench_csv",
    "read_bench_csv",
]

MAGIC = b"BRIM"
VERSION = 1
DTYPE_F64 = 1
HEADER_BYTES = 24
_HEADER_FMT = "<4sIQB7x"  # magic, version, order, dtype tag, reserved


@dataclass(frozen=True)
class BrimHeader:
    """Decoded file header."""

    m: int
    version: int = VERSION
    dtype_tag: int = DTYPE_F64

    def pack(self) -> bytes:
        return struct.pack(_HEADER_FMT, MAGIC, self.version, self.m, self.dtype_tag)

    @property
    def payload_bytes(self) -> int:
        return 8 * self.m * self.m

    @property
    def total_bytes(self) -> int:
        return HEADER_BYTES + self.payload_bytes


def _decode_header(raw: bytes, origin: str) -> BrimHeader:
    if len(raw) < HEADER_BYTES:
        raise FormatError(f"{origin}: truncated header ({len(raw)} of {HEADER_BYTES} bytes)")
    magic, version, m, dtype_tag = struct.unpack(_HEADER_FMT, raw[:HEADER_BYTES])
    if magic != MAGIC:
        raise FormatError(f"{origin}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        note = " (version 0 marks a partial or aborted write)" if version == 0 else ""
        raise FormatError(f"{origin}: unsupported version {version}{note}")
    if dtype_tag != DTYPE_F64:
        raise FormatError(f"{origin}: unsupported dtype tag {dtype_tag}, expected {DTYPE_F64}")
    return BrimHeader(m=int(m), version=version, dtype_tag=dtype_tag)


def read_header(path) -> BrimHeader:
    """Read and validate a BRIM header, including total file size."""
    path = os.fspath(path)
    with open(path, "rb") as fh:
        header = _decode_header(fh.read(HEADER_BYTES), path)
        fh.seek(0, io.SEEK_END)
        actual = fh.tell()
    if actual != header.total_bytes:
        raise FormatError(
            f"{path}: expected {header.total_bytes} bytes for order {header.m}, "
            f"found {actual}"
        )
    return header


def write_matrix(path, matrix) -> None:
    """Write a dense square matrix as a BRIM file."""
    a = np.ascontiguousarray(matrix, dtype="<f8")
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatchError(f"matrix must be square, got shape {a.shape}")
    header = BrimHeader(m=a.shape[0])
    with open(os.fspath(path), "wb") as fh:
        fh.write(header.pack())
        a.tofile(fh)


def read_matrix(path) -> np.ndarray:
    """Read a whole BRIM file into an m-by-m float64 array."""
    header = read_header(path)
    with open(os.fspath(path), "rb") as fh:
        fh.seek(HEADER_BYTES)
        flat = np.fromfile(fh, dtype="<f8", count=header.m * header.m)
    if flat.size != header.m * header.m:
        raise FormatError(f"{path}: payload shorter than advertised order {header.m}")
    return flat.astype(np.float64, copy=False).reshape(header.m, header.m)


class BrimReader:
    """Random-access rectangle reads from a BRIM file.

    A rectangle of r rows is read as r separate row segments, so resident
    buffering per call stays at the output rectangle plus one row segment.
    Seeks are serialized by an internal lock, making one reader safe for
    concurrent callers.
    """

    def __init__(self, path):
        self.path = os.fspath(path)
        self.header = read_header(self.path)
        self._fh = open(self.path, "rb")
        self._lock = threading.Lock()

    @property
    def m(self) -> int:
        return self.header.m

    def read_rect(self, r0: int, r1: int, c0: int, c1: int) -> np.ndarray:
        m = self.header.m
        if not (0 <= r0 <= r1 <= m and 0 <= c0 <= c1 <= m):
            raise IndexOutOfRangeError(f"rectangle [{r0}:{r1}, {c0}:{c1}] outside order {m}")
        rows, cols = r1 - r0, c1 - c0
        out = np.empty((rows, cols))
        ncols_bytes = cols * 8
        with self._lock:
            for i in range(rows):
                offset = HEADER_BYTES + ((r0 + i) * m + c0) * 8
                try:
                    self._fh.seek(offset)
                    raw = self._fh.read(ncols_bytes)
                except OSError as e:
                    raise OSError(f"{self.path}: read failed at byte {offset}: {e}") from e
                if len(raw) != ncols_bytes:
                    raise FormatError(
                        f"{self.path}: short read at byte {offset}: "
                        f"expected {ncols_bytes} bytes, got {len(raw)}"
                    )
                out[i] = np.frombuffer(raw, dtype="<f8")
        return out

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "BrimReader":
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        self.close()


class BrimSink:
    """Stream inverse blocks to a BRIM file, trimming augmentation padding.

    Blocks may arrive in any order and from concurrent submitters (puts
    are serialized internally). ``finalize`` requires all k*k blocks and
    only then stamps the header valid; without it the file keeps version
    0 as a partial-output marker.
    """

    def __init__(self, path, layout):
        self.path = os.fspath(path)
        self.layout = layout
        self._received: set[tuple[int, int]] = set()
        self._lock = threading.Lock()
        self._fh = open(self.path, "w+b")
        self._fh.write(BrimHeader(m=layout.m, version=0).pack())
        self._fh.truncate(HEADER_BYTES + 8 * layout.m * layout.m)
        self._finalized = False

    def put(self, alpha: int, beta: int, block) -> None:
        lay = self.layout
        if not (1 <= alpha <= lay.k and 1 <= beta <= lay.k):
            raise IndexOutOfRangeError(f"block ({alpha}, {beta}) outside 1..{lay.k}")
        data = np.asarray(getattr(block, "data", block))
        if data.shape != (lay.b, lay.b):
            raise DimensionMismatchError(
                f"block ({alpha}, {beta}) has shape {data.shape}, expected ({lay.b}, {lay.b})"
            )
        r0 = (alpha - 1) * lay.b
        c0 = (beta - 1) * lay.b
        nrows = min(lay.b, lay.m - r0)
        ncols = min(lay.b, lay.m - c0)
        with self._lock:
            if nrows > 0 and ncols > 0:
                for i in range(nrows):
                    self._fh.seek(HEADER_BYTES + ((r0 + i) * lay.m + c0) * 8)
                    self._fh.write(np.ascontiguousarray(data[i, :ncols], dtype="<f8").tobytes())
            self._received.add((alpha, beta))

    def finalize(self) -> None:
        lay = self.layout
        missing = sorted(
            (a, b)
            for a in range(1, lay.k + 1)
            for b in range(1, lay.k + 1)
            if (a, b) not in self._received
        )
        if missing:
            raise MissingBlocksError(missing)
        self._fh.seek(0)
        self._fh.write(BrimHeader(m=lay.m, version=VERSION).pack())
        self._fh.flush()
        self._finalized = True

    def close(self) -> None:
        if not self._fh.closed:
            self._fh.close()

    def __enter__(self) -> "BrimSink":
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        # On a clean exit finalize; on error leave the version-0 marker.
        try:
            if exc_type is None and not self._finalized:
                self.finalize()
        finally:
            self.close()


class MemorySink:
    """Collect inverse blocks into an in-memory m-by-m array (tests, verify)."""

    def __init__(self, layout):
        self.layout = layout
        self.canvas = np.zeros((layout.m, layout.m))
        self._received: set[tuple[int, int]] = set()
        self._lock = threading.Lock()

    def put(self, alpha: int, beta: int, block) -> None:
        lay = self.layout
        if not (1 <= alpha <= lay.k and 1 <= beta <= lay.k):
            raise IndexOutOfRangeError(f"block ({alpha}, {beta}) outside 1..{lay.k}")
        data = np.asarray(getattr(block, "data", block))
        r0 = (alpha - 1) * lay.b
        c0 = (beta - 1) * lay.b
        nrows = min(lay.b, lay.m - r0)
        ncols = min(lay.b, lay.m - c0)
        with self._lock:
            if nrows > 0 and ncols > 0:
                self.canvas[r0 : r0 + nrows, c0 : c0 + ncols] = data[:nrows, :ncols]
            self._received.add((alpha, beta))

    def finalize(self) -> np.ndarray:
        lay = self.layout
        missing = sorted(
            (a, b)
            for a in range(1, lay.k + 1)
            for b in range(1, lay.k + 1)
            if (a, b) not in self._received
        )
        if missing:
            raise MissingBlocksError(missing)
        return self.canvas


CSV_COLUMNS = ("method", "m", "k", "wall_ms", "peak_bytes", "n_block_inv", "n_block_mul", "seed")


def write_bench_csv(path, records: Iterable[BenchRecord]) -> None:
    """Write benchmark records with the fixed column order of CSV_COLUMNS."""
    with open(os.fspath(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for rec in records:
            writer.writerow(rec.row())


def read_bench_csv(path) -> list[BenchRecord]:
    with open(os.fspath(path), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != CSV_COLUMNS:
            raise FormatError(f"{path}: bad bench CSV header {header}")
        out = []
        for row in reader:
            method, m, k, wall_ms, peak_bytes, n_inv, n_mul, seed = row
            out.append(
                BenchRecord(
                    method=method,
                    m=int(m),
                    k=int(k),
                    wall_ms=float(wall_ms),
                    peak_bytes=int(peak_bytes),
                    n_block_inv=int(n_inv),
                    n_block_mul=int(n_mul),
                    seed=int(seed),
                )
            )
        return out
