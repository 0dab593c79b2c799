"""Fragment stores: per-pixel lists, per-octant lists, per-octant arrays.

All three layouts share one pre-allocated fragment pool (36-byte packed
records).  The per-pixel layout keys chains by raster position; the octree
layouts key by the Morton code of the fragment's cell in a 2^L-per-axis
leaf grid over [0,1)^3, with coarser levels holding 8-bit child-occupancy
masks for empty-space skipping.  The array layout is built in two capture
passes: count per leaf, prefix-sum the offsets, then scatter fragments
into their cell's contiguous range.
"""
from __future__ import annotations

import struct
import threading
from dataclasses import dataclass

import numpy as np

from . import _backend
from .raster import CaptureStats, CaptureStrategy, EmittedFragment, RasterConfig, capture_pass
from .scene import Material, Scene

__all__ = [
    "FhvError",
    "FhvPofa",
    "FhvPofl",
    "FhvPpfl",
    "FragmentPool",
    "FragmentRecord",
    "OccupancyPyramid",
    "PixelDirectory",
    "PofaBuildError",
    "PofaDirectory",
    "PoflDirectory",
    "RECORD_DTYPE",
    "RECORD_SIZE_ALIGNED",
    "RECORD_SIZE_PACKED",
    "build_pofl",
    "build_ppfl",
    "cell_box",
    "cell_code",
    "cell_of",
    "load_snapshot",
    "memory_report",
    "morton_decode",
    "morton_encode",
    "pofa_build",
    "pofl_insert",
    "ppfl_insert",
    "rebuild_pofl_as_pofa",
    "save_snapshot",
    "snapshot_bytes",
]

MAX_LEVELS = 20

RECORD_DTYPE = np.dtype([
    ("position", "<f4", (3,)),
    ("normal", "<f4", (3,)),
    ("material_id", "<u4"),
    ("object_id", "<u4"),
    ("prev_index", "<i4"),
])
RECORD_SIZE_PACKED = 36
RECORD_SIZE_ALIGNED = 48
assert RECORD_DTYPE.itemsize == RECORD_SIZE_PACKED


class FhvError(ValueError):
    """Invalid storage parameters or corrupted structure."""


class PofaBuildError(FhvError):
    """The two capture passes of an array build disagreed."""


# ---------------------------------------------------------------------------
# Morton codes

_U = np.uint64


def _spread3(v: np.ndarray) -> np.ndarray:
    v = v & _U(0x1FFFFF)
    v = (v | (v << _U(32))) & _U(0x1F00000000FFFF)
    v = (v | (v << _U(16))) & _U(0x1F0000FF0000FF)
    v = (v | (v << _U(8))) & _U(0x100F00F00F00F00F)
    v = (v | (v << _U(4))) & _U(0x10C30C30C30C30C3)
    v = (v | (v << _U(2))) & _U(0x1249249249249249)
    return v


def _compact3(v: np.ndarray) -> np.ndarray:
    v = v & _U(0x1249249249249249)
    v = (v | (v >> _U(2))) & _U(0x10C30C30C30C30C3)
    v = (v | (v >> _U(4))) & _U(0x100F00F00F00F00F)
    v = (v | (v >> _U(8))) & _U(0x1F0000FF0000FF)
    v = (v | (v >> _U(16))) & _U(0x1F00000000FFFF)
    v = (v | (v >> _U(32))) & _U(0x1FFFFF)
    return v


def _check_levels(levels: int) -> None:
    if not 0 <= levels <= MAX_LEVELS:
        raise FhvError(f"levels {levels} outside [0, {MAX_LEVELS}]")


def morton_encode(x, y, z, levels: int):
    """Interleave cell indices: x occupies bit 3i, y bit 3i+1, z bit 3i+2."""
    _check_levels(levels)
    scalar = np.isscalar(x) and np.isscalar(y) and np.isscalar(z)
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    z = np.asarray(z, dtype=np.int64)
    hi = np.int64(1) << (3 * levels)  # codes < 8^levels
    side = np.int64(1) << levels
    for name, v in (("x", x), ("y", y), ("z", z)):
        if np.any(v < 0) or np.any(v >= side):
            raise FhvError(f"{name} cell index outside [0, 2^{levels})")
    code = (_spread3(x.astype(np.uint64))
            | (_spread3(y.astype(np.uint64)) << _U(1))
            | (_spread3(z.astype(np.uint64)) << _U(2))).astype(np.int64)
    assert np.all(code < hi)
    return int(code) if scalar else code


def morton_decode(code, levels: int):
    """Inverse of morton_encode."""
    _check_levels(levels)
    scalar = np.isscalar(code)
    c = np.asarray(code, dtype=np.int64)
    if np.any(c < 0) or np.any(c >= (np.int64(1) << (3 * levels))):
        raise FhvError(f"code outside [0, 8^{levels})")
    u = c.astype(np.uint64)
    x = _compact3(u).astype(np.int64)
    y = _compact3(u >> _U(1)).astype(np.int64)
    z = _compact3(u >> _U(2)).astype(np.int64)
    if scalar:
        return int(x), int(y), int(z)
    return x, y, z


def cell_of(position, levels: int) -> np.ndarray:
    """Leaf cell indices floor(p * 2^L); p = 1.0 clamps into the last cell.

    Positions may stray up to 1e-6 outside [0,1] (float round-off of
    fragments interpolated on the cube boundary); anything further out or
    non-finite is rejected.
    """
    _check_levels(levels)
    p = np.asarray(position, dtype=np.float64)
    if not np.all(np.isfinite(p)):
        raise FhvError("non-finite position")
    if np.any(p < -1e-6) or np.any(p > 1.0 + 1e-6):
        raise FhvError("position outside [0,1]^3")
    side = np.int64(1) << levels
    idx = np.floor(p * float(side)).astype(np.int64)
    return np.clip(idx, 0, side - 1)


def cell_code(position, levels: int):
    """Morton code(s) of the cell(s) containing position(s)."""
    idx = cell_of(position, levels)
    return morton_encode(idx[..., 0], idx[..., 1], idx[..., 2], levels)


def cell_box(code: int, level: int) -> tuple[np.ndarray, np.ndarray]:
    """World-space AABB of a node at the given octree level."""
    x, y, z = morton_decode(int(code), level)
    size = 1.0 / (1 << level)
    lo = np.array([x, y, z], dtype=np.float64) * size
    return lo, lo + size


# ---------------------------------------------------------------------------
# Pool and directories


@dataclass
class FragmentRecord:
    position: np.ndarray
    normal: np.ndarray
    material_id: int
    object_id: int
    prev_index: int


class FragmentPool:
    """Pre-allocated fragment storage with a monotone allocation counter.

    The counter keeps counting past capacity; insertions that land beyond
    it are dropped and ``overflowed`` is set, so a host can re-allocate
    with ``next_free`` as the required size.
    """

    def __init__(self, capacity: int):
        if capacity < 0:
            raise FhvError("capacity must be >= 0")
        self.capacity = int(capacity)
        self.position = np.zeros((capacity, 3), dtype=np.float32)
        self.normal = np.zeros((capacity, 3), dtype=np.float32)
        self.material_id = np.zeros(capacity, dtype=np.uint32)
        self.object_id = np.zeros(capacity, dtype=np.uint32)
        self.prev_index = np.full(capacity, -1, dtype=np.int32)
        self.next_free = 0
        self.overflowed = False
        self._lock = threading.Lock()

    def alloc_block(self, n: int) -> int:
        with self._lock:
            start = self.next_free
            self.next_free += n
            if self.next_free > self.capacity:
                self.overflowed = True
            return start

    @property
    def stored_count(self) -> int:
        return min(self.next_free, self.capacity)

    def record(self, i: int) -> FragmentRecord:
        if not 0 <= i < self.stored_count:
            raise FhvError(f"record index {i} out of range")
        return FragmentRecord(
            self.position[i].copy(), self.normal[i].copy(),
            int(self.material_id[i]), int(self.object_id[i]),
            int(self.prev_index[i]))

    def to_struct_array(self) -> np.ndarray:
        n = self.stored_count
        out = np.empty(n, dtype=RECORD_DTYPE)
        out["position"] = self.position[:n]
        out["normal"] = self.normal[:n]
        out["material_id"] = self.material_id[:n]
        out["object_id"] = self.object_id[:n]
        out["prev_index"] = self.prev_index[:n]
        return out

    @staticmethod
    def from_struct_array(arr: np.ndarray) -> "FragmentPool":
        pool = FragmentPool(len(arr))
        pool.position[:] = arr["position"]
        pool.normal[:] = arr["normal"]
        pool.material_id[:] = arr["material_id"]
        pool.object_id[:] = arr["object_id"]
        pool.prev_index[:] = arr["prev_index"]
        pool.next_free = len(arr)
        return pool


@dataclass
class PixelDirectory:
    width: int
    height: int
    heads: np.ndarray  # int32 (h*w,), -1 = empty

    @staticmethod
    def empty(width: int, height: int) -> "PixelDirectory":
        return PixelDirectory(width, height, np.full(width * height, -1, dtype=np.int32))

    def head(self, x: int, y: int) -> int:
        return int(self.heads[y * self.width + x])


@dataclass
class PoflDirectory:
    levels: int
    heads: np.ndarray  # int32 (8^L,), -1 = empty

    @staticmethod
    def empty(levels: int) -> "PoflDirectory":
        return PoflDirectory(levels, np.full(8 ** levels, -1, dtype=np.int32))


@dataclass
class PofaDirectory:
    levels: int
    offsets: np.ndarray  # uint32 (8^L,), exclusive prefix sum of counts
    counts: np.ndarray  # uint32 (8^L,)


class OccupancyPyramid:
    """Levels 0..L-1 of 8-bit child-occupancy masks over the leaf grid."""

    def __init__(self, leaf_levels: int, levels: list[np.ndarray] | None = None):
        _check_levels(leaf_levels)
        if leaf_levels < 1:
            raise FhvError("octree needs at least one level")
        self.leaf_levels = leaf_levels
        if levels is None:
            levels = [np.zeros(8 ** k, dtype=np.uint8) for k in range(leaf_levels)]
        self.levels = levels

    def set_paths(self, codes: np.ndarray) -> None:
        """Mark the root paths of the given leaf codes as occupied."""
        codes = np.asarray(codes, dtype=np.int64)
        L = self.leaf_levels
        for k in range(L):
            node = codes >> (3 * (L - k))
            child = (codes >> (3 * (L - k - 1))) & 7
            np.bitwise_or.at(self.levels[k], node, (1 << child).astype(np.uint8))

    def mask(self, level: int, node: int) -> int:
        return int(self.levels[level][node])

    def leaf_occupancy(self) -> np.ndarray:
        """Boolean occupancy of every leaf, expanded from the last mask level."""
        masks = self.levels[self.leaf_levels - 1]
        bits = (masks[:, None] >> np.arange(8, dtype=np.uint8)) & 1
        return bits.astype(bool).ravel()

    def occupied_leaves(self) -> np.ndarray:
        return np.nonzero(self.leaf_occupancy())[0].astype(np.int64)

    @staticmethod
    def from_leaf_occupancy(occupied: np.ndarray, leaf_levels: int) -> "OccupancyPyramid":
        occupied = np.asarray(occupied, dtype=bool)
        if len(occupied) != 8 ** leaf_levels:
            raise FhvError("occupancy length != 8^levels")
        levels: list[np.ndarray] = [None] * leaf_levels  # type: ignore[list-item]
        bits = 1 << np.arange(8, dtype=np.uint32)
        occ = occupied
        for k in range(leaf_levels - 1, -1, -1):
            grouped = occ.reshape(-1, 8).astype(np.uint32)
            masks = (grouped * bits).sum(axis=1).astype(np.uint8)
            levels[k] = masks
            occ = masks > 0
        return OccupancyPyramid(leaf_levels, levels)

    def equals(self, other: "OccupancyPyramid") -> bool:
        return (self.leaf_levels == other.leaf_levels
                and all(np.array_equal(a, b) for a, b in zip(self.levels, other.levels)))


# ---------------------------------------------------------------------------
# Insertion

def _store_split(pool: FragmentPool, n: int) -> tuple[int, int]:
    """Allocate n slots; return (start, how many actually fit)."""
    start = pool.alloc_block(n)
    stored = min(n, max(0, pool.capacity - start))
    return start, stored


def _write_pool(pool: FragmentPool, start: int, batch, stored: int) -> np.ndarray:
    """Write batch[:stored] at [start, start+stored); returns f32 positions."""
    pos32 = batch.world_position[:stored].astype(np.float32)
    end = start + stored
    pool.position[start:end] = pos32
    pool.normal[start:end] = batch.world_normal[:stored].astype(np.float32)
    pool.material_id[start:end] = batch.material_id
    pool.object_id[start:end] = batch.object_id
    return pos32


class PpflSink:
    """Inserts capture batches into a per-pixel linked-list layout."""

    def __init__(self, directory: PixelDirectory, pool: FragmentPool):
        self.directory = directory
        self.pool = pool
        self._lock = threading.Lock()

    def __call__(self, batch) -> None:
        with self._lock:
            start, stored = _store_split(self.pool, len(batch))
            if stored == 0:
                return
            _write_pool(self.pool, start, batch, stored)
            keys = (batch.raster_y[:stored].astype(np.int64) * self.directory.width
                    + batch.raster_x[:stored].astype(np.int64))
            _backend.kernels().linked_insert(
                keys, self.directory.heads, self.pool.prev_index, start)


class PoflSink:
    """Inserts capture batches into a per-octant linked-list layout."""

    def __init__(self, directory: PoflDirectory, pyramid: OccupancyPyramid,
                 pool: FragmentPool):
        self.directory = directory
        self.pyramid = pyramid
        self.pool = pool
        self._lock = threading.Lock()

    def __call__(self, batch) -> None:
        with self._lock:
            start, stored = _store_split(self.pool, len(batch))
            if stored == 0:
                return
            pos32 = _write_pool(self.pool, start, batch, stored)
            codes = cell_code(pos32.astype(np.float64), self.directory.levels)
            _backend.kernels().linked_insert(
                codes, self.directory.heads, self.pool.prev_index, start)
            self.pyramid.set_paths(codes)


class CountingSink:
    """First array-build pass: count fragments per leaf octant."""

    def __init__(self, levels: int):
        self.levels = levels
        self.counts = np.zeros(8 ** levels, dtype=np.int64)
        self._lock = threading.Lock()

    def __call__(self, batch) -> None:
        pos32 = batch.world_position.astype(np.float32)
        codes = cell_code(pos32.astype(np.float64), self.levels)
        with self._lock:
            np.add.at(self.counts, codes, 1)


class PofaWriteSink:
    """Second array-build pass: scatter fragments to per-leaf ranges."""

    def __init__(self, directory: PofaDirectory, pool: FragmentPool):
        self.directory = directory
        self.pool = pool
        self.cursors = np.zeros_like(directory.counts)
        self._lock = threading.Lock()

    def __call__(self, batch) -> None:
        with self._lock:
            n = len(batch)
            pos32 = batch.world_position.astype(np.float32)
            codes = cell_code(pos32.astype(np.float64), self.directory.levels)
            dest = np.empty(n, dtype=np.int64)
            bad = _backend.kernels().pofa_scatter(
                codes, self.directory.offsets, self.directory.counts,
                self.cursors, dest)
            if bad >= 0:
                raise PofaBuildError(
                    f"octant {int(codes[bad])} received more fragments than counted")
            self.pool.alloc_block(n)
            self.pool.position[dest] = pos32
            self.pool.normal[dest] = batch.world_normal.astype(np.float32)
            self.pool.material_id[dest] = batch.material_id
            self.pool.object_id[dest] = batch.object_id
            self.pool.prev_index[dest] = -1


def ppfl_insert(directory: PixelDirectory, pool: FragmentPool,
                frag: EmittedFragment) -> int | None:
    """Insert one fragment; returns its pool index or None on overflow."""
    x, y = frag.raster_xy
    if not (0 <= x < directory.width and 0 <= y < directory.height):
        raise FhvError(f"raster position {frag.raster_xy} out of range")
    idx = pool.alloc_block(1)
    if idx >= pool.capacity:
        return None
    pool.position[idx] = np.asarray(frag.world_position, dtype=np.float32)
    pool.normal[idx] = np.asarray(frag.world_normal, dtype=np.float32)
    pool.material_id[idx] = frag.material_id
    pool.object_id[idx] = frag.object_id
    key = y * directory.width + x
    pool.prev_index[idx] = directory.heads[key]
    directory.heads[key] = idx
    return idx


def pofl_insert(directory: PoflDirectory, pyramid: OccupancyPyramid,
                pool: FragmentPool, frag: EmittedFragment) -> int | None:
    """Insert one fragment keyed by its Morton cell; updates occupancy."""
    idx = pool.alloc_block(1)
    if idx >= pool.capacity:
        return None
    pos32 = np.asarray(frag.world_position, dtype=np.float32)
    pool.position[idx] = pos32
    pool.normal[idx] = np.asarray(frag.world_normal, dtype=np.float32)
    pool.material_id[idx] = frag.material_id
    pool.object_id[idx] = frag.object_id
    code = int(cell_code(pos32.astype(np.float64), directory.levels))
    pool.prev_index[idx] = directory.heads[code]
    directory.heads[code] = idx
    pyramid.set_paths(np.array([code]))
    return idx


def chain_indices(heads: np.ndarray, prev: np.ndarray, code: int) -> np.ndarray:
    """Pool indices reachable from a head, most recent first."""
    out = []
    i = int(heads[code])
    while i >= 0:
        out.append(i)
        i = int(prev[i])
    return np.asarray(out, dtype=np.int64)


# ---------------------------------------------------------------------------
# Built volumes


@dataclass
class FhvPpfl:
    directory: PixelDirectory
    pool: FragmentPool
    capture_resolution: int
    stats: CaptureStats | None = None
    materials: list[Material] | None = None
    layout = "PPFL"

    def pixel_indices(self, x: int, y: int) -> np.ndarray:
        return chain_indices(self.directory.heads, self.pool.prev_index,
                             y * self.directory.width + x)


@dataclass
class FhvPofl:
    directory: PoflDirectory
    pyramid: OccupancyPyramid
    pool: FragmentPool
    capture_resolution: int
    stats: CaptureStats | None = None
    materials: list[Material] | None = None
    layout = "POFL"

    @property
    def levels(self) -> int:
        return self.directory.levels

    def leaf_indices(self, code: int) -> np.ndarray:
        """Fragments of one leaf, most recently inserted first."""
        return chain_indices(self.directory.heads, self.pool.prev_index, code)

    def occupied_leaves(self) -> np.ndarray:
        return np.nonzero(self.directory.heads >= 0)[0].astype(np.int64)


@dataclass
class FhvPofa:
    directory: PofaDirectory
    pyramid: OccupancyPyramid
    pool: FragmentPool
    capture_resolution: int
    stats: CaptureStats | None = None
    materials: list[Material] | None = None
    layout = "POFA"

    @property
    def levels(self) -> int:
        return self.directory.levels

    def leaf_indices(self, code: int) -> np.ndarray:
        """Fragments of one leaf in emission order (contiguous range)."""
        off = int(self.directory.offsets[code])
        cnt = int(self.directory.counts[code])
        return np.arange(off, off + cnt, dtype=np.int64)

    def occupied_leaves(self) -> np.ndarray:
        return np.nonzero(self.directory.counts > 0)[0].astype(np.int64)


def build_ppfl(scene: Scene, cfg: RasterConfig,
               strategy: CaptureStrategy | None = None,
               capacity: int | None = None, overalloc: float = 10.0,
               threads: int = 1) -> FhvPpfl:
    """Capture into a per-pixel layout.

    Only single-view capture makes sense here: the pixel directory is tied
    to one raster grid.
    """
    strategy = strategy or CaptureStrategy.one_view()
    if strategy.kind != "one_view":
        raise FhvError("per-pixel layout requires the single-view strategy")
    w, h = cfg.resolution
    if capacity is None:
        capacity = int(w * h * overalloc)
    directory = PixelDirectory.empty(w, h)
    pool = FragmentPool(capacity)
    stats = capture_pass(scene, strategy, cfg, PpflSink(directory, pool), threads)
    return FhvPpfl(directory, pool, h, stats, scene.materials)


def build_pofl(scene: Scene, strategy: CaptureStrategy, cfg: RasterConfig,
               levels: int, capacity: int | None = None,
               overalloc: float = 10.0, threads: int = 1) -> FhvPofl:
    """Capture into a per-octant linked-list layout."""
    if levels < 1:
        raise FhvError("octree needs at least one level")
    w, h = cfg.resolution
    if capacity is None:
        capacity = int(w * h * overalloc)
    directory = PoflDirectory.empty(levels)
    pyramid = OccupancyPyramid(levels)
    pool = FragmentPool(capacity)
    stats = capture_pass(scene, strategy, cfg, PoflSink(directory, pyramid, pool), threads)
    return FhvPofl(directory, pyramid, pool, h, stats, scene.materials)


def pofa_build(scene: Scene, strategy: CaptureStrategy, cfg: RasterConfig,
               levels: int, threads: int = 1) -> FhvPofa:
    """Two-pass capture into a per-octant contiguous-array layout.

    Pass one counts fragments per leaf; offsets are the exclusive prefix
    sum of the counts in Morton order and the pool is allocated exactly.
    Pass two re-captures and writes each fragment at its cell's cursor.
    A disagreement between the passes means the rasterizer was not
    deterministic and is a hard error.
    """
    if levels < 1:
        raise FhvError("octree needs at least one level")
    counting = CountingSink(levels)
    stats1 = capture_pass(scene, strategy, cfg, counting, threads)
    total = int(counting.counts.sum())
    if total >= 2 ** 32:
        raise FhvError("fragment count exceeds 32-bit directory range")
    counts = counting.counts.astype(np.uint32)
    offsets = np.concatenate(([0], np.cumsum(counts[:-1], dtype=np.int64))).astype(np.uint32)

    directory = PofaDirectory(levels, offsets, counts)
    pool = FragmentPool(total)
    sink = PofaWriteSink(directory, pool)
    stats2 = capture_pass(scene, strategy, cfg, sink, threads)
    if stats2.fragments_emitted != stats1.fragments_emitted:
        raise PofaBuildError(
            f"pass 2 emitted {stats2.fragments_emitted} fragments, "
            f"pass 1 counted {stats1.fragments_emitted}")
    if not np.array_equal(sink.cursors, counts):
        raise PofaBuildError("per-octant cursors do not match counted sizes")
    pyramid = OccupancyPyramid.from_leaf_occupancy(counts > 0, levels)
    return FhvPofa(directory, pyramid, pool, cfg.resolution[1], stats2, scene.materials)


def rebuild_pofl_as_pofa(fhv: FhvPofl) -> FhvPofa:
    """Repack a linked-list volume into the contiguous-array layout.

    Fragments are grouped by leaf in Morton order, keeping emission order
    within each leaf, which reproduces what a direct two-pass array build
    of the same capture would have produced.
    """
    pool = fhv.pool
    n = pool.stored_count
    levels = fhv.levels
    if n:
        codes = cell_code(pool.position[:n].astype(np.float64), levels)
    else:
        codes = np.empty(0, dtype=np.int64)
    counts64 = np.bincount(codes, minlength=8 ** levels)
    counts = counts64.astype(np.uint32)
    offsets = np.concatenate(([0], np.cumsum(counts[:-1], dtype=np.int64))).astype(np.uint32)
    perm = np.lexsort((np.arange(n), codes))

    new_pool = FragmentPool(n)
    new_pool.position[:] = pool.position[:n][perm]
    new_pool.normal[:] = pool.normal[:n][perm]
    new_pool.material_id[:] = pool.material_id[:n][perm]
    new_pool.object_id[:] = pool.object_id[:n][perm]
    new_pool.next_free = n
    pyramid = OccupancyPyramid.from_leaf_occupancy(counts > 0, levels)
    directory = PofaDirectory(levels, offsets, counts)
    return FhvPofa(directory, pyramid, new_pool, fhv.capture_resolution,
                   fhv.stats, fhv.materials)


# ---------------------------------------------------------------------------
# Memory accounting


def memory_report(layout: str, *, resolution: tuple[int, int] | None = None,
                  levels: int | None = None, record_size: int = RECORD_SIZE_ALIGNED,
                  capacity: int | None = None, exact_count: int | None = None,
                  overalloc: float = 10.0, gbuffer_payload_bytes: int = 28) -> dict:
    """Byte-exact size formulas for each layout.

    Per-pixel/per-octant list layouts over-allocate the pool by
    ``overalloc`` (an assumed average depth complexity) unless an explicit
    capacity is given; the array layout sizes the pool exactly.  Octree
    nodes cost 4 bytes; array leaves cost 8 (offset + count).
    """
    if record_size not in (RECORD_SIZE_PACKED, RECORD_SIZE_ALIGNED):
        raise FhvError(f"record_size must be 36 or 48, got {record_size}")
    components: dict[str, int] = {}
    params: dict = {"record_size": record_size}

    if layout == "DS":
        if resolution is None:
            raise FhvError("DS report needs a resolution")
        w, h = resolution
        components["gbuffer"] = w * h * gbuffer_payload_bytes
        params["gbuffer_payload_bytes"] = gbuffer_payload_bytes
        params["resolution"] = [w, h]
    elif layout == "PPFL":
        if resolution is None:
            raise FhvError("PPFL report needs a resolution")
        w, h = resolution
        if capacity is None:
            capacity = int(w * h * overalloc)
        components["pixel_directory"] = 4 * w * h
        components["fragment_pool"] = record_size * capacity
        params.update(resolution=[w, h], capacity=capacity, overalloc=overalloc)
    elif layout == "POFL":
        if levels is None:
            raise FhvError("POFL report needs levels")
        if capacity is None:
            if resolution is None:
                raise FhvError("POFL report needs a capacity or a resolution")
            w, h = resolution
            capacity = int(w * h * overalloc)
        components["octree_nodes"] = 4 * sum(8 ** k for k in range(levels + 1))
        components["fragment_pool"] = record_size * capacity
        params.update(levels=levels, capacity=capacity, overalloc=overalloc)
    elif layout == "POFA":
        if levels is None or exact_count is None:
            raise FhvError("POFA report needs levels and an exact count")
        components["octree_inner_nodes"] = 4 * sum(8 ** k for k in range(levels))
        components["leaf_directory"] = 8 * (8 ** levels)
        components["fragment_pool"] = record_size * exact_count
        params.update(levels=levels, exact_count=exact_count)
    else:
        raise FhvError(f"unknown layout {layout!r}")

    total = sum(components.values())
    return {
        "layout": layout,
        "params": params,
        "components": components,
        "total_bytes": total,
        "total_mib": total / (1024.0 * 1024.0),
    }


# ---------------------------------------------------------------------------
# Snapshots

SNAPSHOT_MAGIC = b"FHV1"
_HEADER = struct.Struct("<4s4sIIIIQ")  # magic, layout, levels, w, h, record, count


def snapshot_bytes(fhv) -> bytes:
    """Serialize a volume: header, directories, then packed records."""
    pool: FragmentPool = fhv.pool
    count = pool.stored_count
    parts: list[bytes] = []
    if fhv.layout == "PPFL":
        d: PixelDirectory = fhv.directory
        parts.append(_HEADER.pack(SNAPSHOT_MAGIC, b"PPFL", 0, d.width, d.height,
                                  RECORD_SIZE_PACKED, count))
        parts.append(d.heads.astype("<i4").tobytes())
    elif fhv.layout == "POFL":
        parts.append(_HEADER.pack(SNAPSHOT_MAGIC, b"POFL", fhv.levels,
                                  fhv.capture_resolution, fhv.capture_resolution,
                                  RECORD_SIZE_PACKED, count))
        parts.append(fhv.directory.heads.astype("<i4").tobytes())
        for level in fhv.pyramid.levels:
            parts.append(level.tobytes())
    elif fhv.layout == "POFA":
        parts.append(_HEADER.pack(SNAPSHOT_MAGIC, b"POFA", fhv.levels,
                                  fhv.capture_resolution, fhv.capture_resolution,
                                  RECORD_SIZE_PACKED, count))
        parts.append(fhv.directory.offsets.astype("<u4").tobytes())
        parts.append(fhv.directory.counts.astype("<u4").tobytes())
        for level in fhv.pyramid.levels:
            parts.append(level.tobytes())
    else:
        raise FhvError(f"cannot snapshot layout {fhv.layout!r}")
    parts.append(fhv.pool.to_struct_array().tobytes())
    return b"".join(parts)


def save_snapshot(fhv, path) -> None:
    with open(path, "wb") as fh:
        fh.write(snapshot_bytes(fhv))


def load_snapshot(path, materials: list[Material] | None = None):
    """Load a snapshot; returns the matching volume type.

    Materials are not serialized (records only carry ids); pass the scene's
    table to shade correctly.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise FhvError("snapshot truncated")
    magic, layout, levels, w, h, record_size, count = _HEADER.unpack_from(blob)
    if magic != SNAPSHOT_MAGIC:
        raise FhvError("bad snapshot magic")
    if record_size != RECORD_SIZE_PACKED:
        raise FhvError(f"unsupported record size {record_size}")
    offset = _HEADER.size

    def take(dtype, n):
        nonlocal offset
        arr = np.frombuffer(blob, dtype=dtype, count=n, offset=offset).copy()
        offset += arr.nbytes
        return arr

    if layout == b"PPFL":
        heads = take("<i4", w * h)
        records = take(RECORD_DTYPE, count)
        pool = FragmentPool.from_struct_array(records)
        return FhvPpfl(PixelDirectory(w, h, heads), pool, h, materials=materials)
    if layout in (b"POFL", b"POFA"):
        if layout == b"POFL":
            heads = take("<i4", 8 ** levels)
        else:
            offsets_arr = take("<u4", 8 ** levels)
            counts_arr = take("<u4", 8 ** levels)
        pyr_levels = [take(np.uint8, 8 ** k) for k in range(levels)]
        records = take(RECORD_DTYPE, count)
        pool = FragmentPool.from_struct_array(records)
        pyramid = OccupancyPyramid(levels, pyr_levels)
        if layout == b"POFL":
            return FhvPofl(PoflDirectory(levels, heads), pyramid, pool, h,
                           materials=materials)
        return FhvPofa(PofaDirectory(levels, offsets_arr, counts_arr), pyramid,
                       pool, h, materials=materials)
    raise FhvError(f"unknown snapshot layout {layout!r}")
