"""Deterministic software rasterization and the four capture strategies.

Coverage samples pixel centers with a top-left tie rule, so edges shared by
two triangles emit exactly once and the three-axis strategies produce the
same fragments whether run as three passes or one.  Capture projections are
orthographic; rasterization applies no culling, scissor, or depth test, so
every covered sample of every triangle becomes a fragment.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _backend
from .scene import Camera, Scene, SceneError, Triangle, capture_camera

__all__ = [
    "CAPTURE_STRATEGIES",
    "CaptureStats",
    "CaptureStrategy",
    "EmittedFragment",
    "FragmentBatch",
    "ListSink",
    "RasterConfig",
    "capture_pass",
    "ortho_projection",
    "perspective_projection",
    "rasterize_triangle",
    "tangent_basis",
    "world_pixel_footprint",
]


def ortho_projection(camera: Camera) -> np.ndarray:
    """World -> clip for an orthographic camera (w stays 1, z maps to [0,1])."""
    r, u, f = camera.basis()
    half_h = camera.extent_or_fov / 2.0
    half_w = half_h * camera.aspect
    zs = 1.0 / (camera.far - camera.near)
    m = np.zeros((4, 4))
    m[0, :3] = r / half_w
    m[0, 3] = -float(camera.eye @ r) / half_w
    m[1, :3] = u / half_h
    m[1, 3] = -float(camera.eye @ u) / half_h
    m[2, :3] = f * zs
    m[2, 3] = -(float(camera.eye @ f) + camera.near) * zs
    m[3, 3] = 1.0
    return m


def perspective_projection(camera: Camera) -> np.ndarray:
    """World -> clip for a perspective camera; w is the view-space distance."""
    r, u, f = camera.basis()
    t = math.tan(math.radians(camera.extent_or_fov) / 2.0)
    zs = camera.far / (camera.far - camera.near)
    m = np.zeros((4, 4))
    m[0, :3] = r / (t * camera.aspect)
    m[0, 3] = -float(camera.eye @ r) / (t * camera.aspect)
    m[1, :3] = u / t
    m[1, 3] = -float(camera.eye @ u) / t
    m[2, :3] = f * zs
    m[2, 3] = -(float(camera.eye @ f) + camera.near) * zs
    m[3, :3] = f
    m[3, 3] = -float(camera.eye @ f)
    return m


@dataclass
class RasterConfig:
    """Raster state for one pass: resolution, projection, depth range.

    ``extent`` is the world-space height of the orthographic view volume
    (None for perspective projections); it defines the capture footprint.
    """

    resolution: tuple[int, int]
    projection: np.ndarray
    extent: float | None = 1.0
    depth_range: tuple[float, float] = (0.0, 1.0)
    fill_rule: str = "top-left"

    def __post_init__(self):
        w, h = self.resolution
        if w < 1 or h < 1:
            raise SceneError("raster resolution must be >= 1")
        self.projection = np.asarray(self.projection, dtype=np.float64)
        if self.projection.shape != (4, 4):
            raise SceneError("projection must be 4x4")
        if abs(np.linalg.det(self.projection)) < 1e-30:
            raise SceneError("projection must be invertible")

    @property
    def is_orthographic(self) -> bool:
        return bool(np.array_equal(self.projection[3], (0.0, 0.0, 0.0, 1.0)))

    @staticmethod
    def from_camera(camera: Camera) -> "RasterConfig":
        if camera.kind == "orthographic":
            return RasterConfig(camera.resolution, ortho_projection(camera),
                                extent=camera.extent_or_fov)
        return RasterConfig(camera.resolution, perspective_projection(camera), extent=None)


def world_pixel_footprint(cfg: RasterConfig) -> float:
    """World units per pixel of an orthographic raster setup."""
    if cfg.extent is None:
        raise SceneError("pixel footprint requires an orthographic config")
    return cfg.extent / cfg.resolution[1]


@dataclass
class EmittedFragment:
    raster_xy: tuple[int, int]
    world_position: np.ndarray
    world_normal: np.ndarray
    depth: float
    material_id: int
    object_id: int


@dataclass
class FragmentBatch:
    """All fragments of one triangle rasterization (struct-of-arrays)."""

    raster_x: np.ndarray
    raster_y: np.ndarray
    world_position: np.ndarray
    world_normal: np.ndarray
    depth: np.ndarray
    material_id: int
    object_id: int

    def __len__(self) -> int:
        return len(self.raster_x)

    def fragments(self):
        for i in range(len(self.raster_x)):
            yield EmittedFragment(
                (int(self.raster_x[i]), int(self.raster_y[i])),
                self.world_position[i], self.world_normal[i],
                float(self.depth[i]), self.material_id, self.object_id)


def tangent_basis(n) -> np.ndarray:
    """Orthonormal rows (tangent, bitangent, normal) for a unit normal.

    Deterministic: equal inputs give equal bases, and t x b = n.
    """
    n = np.asarray(n, dtype=np.float64)
    norm = float(np.linalg.norm(n))
    if norm < 1e-12:
        raise ValueError("tangent_basis: zero-length normal")
    if abs(norm - 1.0) > 1e-3:
        raise ValueError(f"tangent_basis: |n| = {norm}, expected unit")
    n = n / norm
    h = np.array([1.0, 0.0, 0.0]) if abs(n[0]) <= 0.6 else np.array([0.0, 1.0, 0.0])
    t = h - float(h @ n) * n
    t = t / np.linalg.norm(t)
    b = np.cross(n, t)
    return np.stack([t, b, n])


def _interpolate(verts: np.ndarray, normals: np.ndarray, face_normal: np.ndarray,
                 lam: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pos = lam @ verts
    nrm = lam @ normals
    lengths = np.sqrt(np.einsum("ij,ij->i", nrm, nrm))
    ok = lengths > 1e-12
    nrm[ok] /= lengths[ok, None]
    nrm[~ok] = face_normal
    return pos, nrm


def _batch_from_coverage(tri: Triangle, order, px, py, lam, depth) -> FragmentBatch:
    verts = tri.positions[order, :]
    normals = tri.normals[order, :]
    pos, nrm = _interpolate(verts, normals, tri.face_normal, lam)
    return FragmentBatch(px, py, pos, nrm, depth, tri.material_id, tri.object_id)


def _raster_screen(tri: Triangle, cfg: RasterConfig) -> FragmentBatch | None:
    """Project one triangle through cfg and rasterize its coverage."""
    w, h = cfg.resolution
    clip = tri.positions @ cfg.projection[:, :3].T + cfg.projection[:, 3]
    ortho = cfg.is_orthographic
    if not ortho and np.any(clip[:, 3] <= 1e-9):
        return None  # behind the eye; this rasterizer does not clip
    ndc = clip[:, :3] / clip[:, 3:4]
    xr = (ndc[:, 0] + 1.0) * 0.5 * w
    yr = (1.0 - ndc[:, 1]) * 0.5 * h

    area2 = (xr[1] - xr[0]) * (yr[2] - yr[0]) - (yr[1] - yr[0]) * (xr[2] - xr[0])
    if area2 == 0.0 or not math.isfinite(area2):
        return None
    order = (0, 1, 2) if area2 > 0.0 else (0, 2, 1)
    ox, oy = xr[list(order)], yr[list(order)]
    px, py, l0, l1, l2 = _backend.kernels().coverage(
        ox[0], oy[0], ox[1], oy[1], ox[2], oy[2], w, h)
    if len(px) == 0:
        return None
    lam = np.stack([l0, l1, l2], axis=1)
    depth = lam @ ndc[list(order), 2]  # affine in screen space for z
    if not ortho:
        lw = lam / clip[list(order), 3]
        lam = lw / lw.sum(axis=1, keepdims=True)
    return _batch_from_coverage(tri, list(order), px, py, lam, depth)


def _raster_tangent(tri: Triangle, pitch: float) -> FragmentBatch | None:
    """Rasterize one triangle in its own tangent-space window.

    The window is the triangle's tangent-plane bounding box sampled at
    ``pitch`` world units per pixel, so fragment density matches the
    global capture resolution regardless of orientation.  Fragment depth
    is a constant 0.5 (there is no view axis in this parameterization).
    """
    if not tri.face_normal.any():
        return None  # degenerate face
    basis = tangent_basis(tri.face_normal)
    tb = tri.positions @ basis[:2].T  # (3, 2) tangent coords
    tmin, bmin = tb.min(axis=0)
    tmax, bmax = tb.max(axis=0)
    nx = max(1, math.ceil((tmax - tmin) / pitch))
    ny = max(1, math.ceil((bmax - bmin) / pitch))
    xr = (tb[:, 0] - tmin) / pitch
    yr = (bmax - tb[:, 1]) / pitch

    area2 = (xr[1] - xr[0]) * (yr[2] - yr[0]) - (yr[1] - yr[0]) * (xr[2] - xr[0])
    if area2 == 0.0 or not math.isfinite(area2):
        return None
    order = (0, 1, 2) if area2 > 0.0 else (0, 2, 1)
    ox, oy = xr[list(order)], yr[list(order)]
    px, py, l0, l1, l2 = _backend.kernels().coverage(
        ox[0], oy[0], ox[1], oy[1], ox[2], oy[2], nx, ny)
    if len(px) == 0:
        return None
    lam = np.stack([l0, l1, l2], axis=1)
    depth = np.full(len(px), 0.5)
    return _batch_from_coverage(tri, list(order), px, py, lam, depth)


def rasterize_triangle(tri: Triangle, cfg: RasterConfig, sink=None) -> int:
    """Rasterize one triangle; emits a FragmentBatch to sink. Returns count."""
    batch = _raster_screen(tri, cfg)
    if batch is None:
        return 0
    if sink is not None:
        sink(batch)
    return len(batch)


# ---------------------------------------------------------------------------
# Capture strategies

CAPTURE_STRATEGIES = ("one_view", "three_separate", "three_way_geometry", "normal_space")


@dataclass(frozen=True)
class CaptureStrategy:
    kind: str
    axis: str = "+z"

    def __post_init__(self):
        if self.kind not in CAPTURE_STRATEGIES:
            raise SceneError(f"unknown capture strategy {self.kind!r}")

    @staticmethod
    def one_view(axis: str = "+z") -> "CaptureStrategy":
        return CaptureStrategy("one_view", axis)

    @staticmethod
    def three_separate() -> "CaptureStrategy":
        return CaptureStrategy("three_separate")

    @staticmethod
    def three_way_geometry() -> "CaptureStrategy":
        return CaptureStrategy("three_way_geometry")

    @staticmethod
    def normal_space() -> "CaptureStrategy":
        return CaptureStrategy("normal_space")

    @staticmethod
    def parse(name: str, axis: str = "+z") -> "CaptureStrategy":
        key = name.replace("-", "_")
        aliases = {"three_way": "three_way_geometry", "normal": "normal_space"}
        return CaptureStrategy(aliases.get(key, key), axis)


@dataclass
class CaptureStats:
    fragments_emitted: int = 0
    triangles_processed: int = 0
    passes: int = 0
    draw_batches: int = 0

    def as_dict(self) -> dict:
        return {
            "fragments_emitted": self.fragments_emitted,
            "triangles_processed": self.triangles_processed,
            "passes": self.passes,
            "draw_batches": self.draw_batches,
        }


class ListSink:
    """Collects emitted batches (test/inspection helper)."""

    def __init__(self):
        self.batches: list[FragmentBatch] = []

    def __call__(self, batch: FragmentBatch) -> None:
        self.batches.append(batch)

    @property
    def total(self) -> int:
        return sum(len(b) for b in self.batches)


def _run_jobs(jobs, sink, threads: int) -> int:
    """Run raster jobs, forwarding non-empty batches to sink. Returns count.

    Sequential order is canonical; with threads > 1 the sink must accept
    concurrent emission and only multiset invariants hold.
    """
    emitted = 0
    if threads <= 1:
        for job in jobs:
            batch = job()
            if batch is not None and len(batch):
                sink(batch)
                emitted += len(batch)
        return emitted

    def run(job):
        batch = job()
        if batch is not None and len(batch):
            sink(batch)
            return len(batch)
        return 0

    with ThreadPoolExecutor(max_workers=threads) as pool:
        emitted = sum(pool.map(run, jobs))
    return emitted


def capture_pass(scene: Scene, strategy: CaptureStrategy, cfg: RasterConfig,
                 sink, threads: int = 1) -> CaptureStats:
    """Run one capture strategy over the scene, emitting fragments to sink.

    cfg supplies the capture resolution and extent; axis projections are
    derived from capture cameras over the scene bounds.
    """
    if cfg.extent is None:
        raise SceneError("capture requires an orthographic config")
    res = cfg.resolution[1]
    stats = CaptureStats()

    def axis_cfg(axis: str) -> RasterConfig:
        return RasterConfig.from_camera(capture_camera(scene, axis, res))

    jobs = []
    if strategy.kind == "one_view":
        c = axis_cfg(strategy.axis)
        jobs = [(lambda t=t, c=c: _raster_screen(t, c)) for t in scene.triangles]
        stats.passes = 1
    elif strategy.kind == "three_separate":
        for axis in ("+x", "+y", "+z"):
            c = axis_cfg(axis)
            jobs.extend((lambda t=t, c=c: _raster_screen(t, c)) for t in scene.triangles)
        stats.passes = 3
    elif strategy.kind == "three_way_geometry":
        configs = [axis_cfg(a) for a in ("+x", "+y", "+z")]
        for t in scene.triangles:
            jobs.extend((lambda t=t, c=c: _raster_screen(t, c)) for c in configs)
        stats.passes = 1
    else:  # normal_space
        pitch = world_pixel_footprint(cfg)
        jobs = [(lambda t=t: _raster_tangent(t, pitch)) for t in scene.triangles]
        stats.passes = 1

    stats.fragments_emitted = _run_jobs(jobs, sink, threads)
    stats.triangles_processed = len(jobs)
    stats.draw_batches = stats.passes * scene.n_objects
    return stats
