"""Binary snapshot format for marginals and hierarchy states.

Layout (little-endian): magic "GPH1" (4 bytes), format version u32,
d u32, M u32, L f64, k u32.  k > 0 is a single level-k marginal; k = 0 is
a full state header followed by the level count (u32) and the levels
1..count concatenated.  Entries are row-major complex values stored as
interleaved IEEE-754 f64 (re, im) pairs, axis order (x_1..x_k, x'_1..x'_k).
Round-trips are bit-exact.
"""

from __future__ import annotations

import struct

import numpy as np

from .grid import make_grid
from .marginal import HierarchyState, Marginal

MAGIC = b"GPH1"
VERSION = 1


class SnapshotError(IOError):
    pass


class BadMagicError(SnapshotError):
    pass


class VersionMismatchError(SnapshotError):
    pass


class TruncatedPayloadError(SnapshotError):
    pass


def _level_bytes(gamma: Marginal) -> bytes:
    data = np.ascontiguousarray(gamma.data.astype("<c16", copy=False))
    return data.tobytes()


def snapshot_write(obj: Marginal | HierarchyState, path: str) -> None:
    """Write a marginal or a full hierarchy state to `path`."""
    if isinstance(obj, Marginal):
        grid, header_k, levels = obj.grid, obj.k, [obj]
    elif isinstance(obj, HierarchyState):
        grid, header_k, levels = obj.grid, 0, obj.levels
    else:
        raise TypeError(f"cannot snapshot object of type {type(obj).__name__}")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", VERSION, grid.d, grid.M))
        fh.write(struct.pack("<d", grid.L))
        fh.write(struct.pack("<I", header_k))
        if header_k == 0:
            fh.write(struct.pack("<I", len(levels)))
        for gamma in levels:
            fh.write(_level_bytes(gamma))


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise TruncatedPayloadError(f"truncated payload while reading {what}")
    return buf


def snapshot_read(path: str, p: int = 2, mu: int = 1) -> Marginal | HierarchyState:
    """Read a snapshot; full states need the interaction order and coupling
    supplied (the format does not store them)."""
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != MAGIC:
            raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
        version, d, M = struct.unpack("<III", _read_exact(fh, 12, "header"))
        if version != VERSION:
            raise VersionMismatchError(f"format version {version}, expected {VERSION}")
        (L,) = struct.unpack("<d", _read_exact(fh, 8, "header"))
        (k,) = struct.unpack("<I", _read_exact(fh, 4, "header"))
        grid = make_grid(d, M, L)

        def read_level(level_k: int) -> Marginal:
            n_el = M ** (2 * d * level_k)
            raw = _read_exact(fh, 16 * n_el, f"level-{level_k} entries")
            data = np.frombuffer(raw, dtype="<c16").reshape((M,) * (2 * d * level_k)).copy()
            return Marginal(grid, level_k, data)

        if k > 0:
            gamma = read_level(k)
            if fh.read(1):
                raise TruncatedPayloadError("trailing bytes after marginal payload")
            return gamma
        (count,) = struct.unpack("<I", _read_exact(fh, 4, "level count"))
        if count < 1:
            raise TruncatedPayloadError("state snapshot with zero levels")
        levels = [read_level(n) for n in range(1, count + 1)]
        if fh.read(1):
            raise TruncatedPayloadError("trailing bytes after state payload")
        return HierarchyState(grid, levels, p, mu)
