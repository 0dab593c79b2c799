"""Image-order reconstruction: octree traversal, per-leaf hit sorting,
front-to-back compositing with early termination, and shadow rays.

Traversal descends the occupancy pyramid, visiting children ordered by
their entry distance and skipping subtrees with empty masks, so leaves are
reached nearest-first.  Hits are sorted within each leaf only (ties by
pool index); with the default splat radius capped at half a leaf edge the
per-leaf lists concatenate into a globally sorted sequence.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _backend
from .render import ImageBuffer, Light, material_arrays, resolve_over_background
from .scene import Camera, Material, SceneError
from .storage import FhvPofa, FhvPofl, OccupancyPyramid

__all__ = [
    "HitRecord",
    "Ray",
    "RaycastConfig",
    "RaycastStats",
    "default_raycast_config",
    "gather_ray_hits",
    "gen_primary_ray",
    "intersect_fragment",
    "primary_rays",
    "raycast_pixel",
    "render_raycast",
    "shadow_transmittance",
    "traverse_octree",
]

RAYCAST_MODES = ("opaque_nearest", "transparency", "transparency_shadows")


@dataclass
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    t_min: float = 0.0
    t_max: float = math.inf

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float64)
        self.direction = np.asarray(self.direction, dtype=np.float64)
        n = float(np.linalg.norm(self.direction))
        if abs(n - 1.0) > 1e-9:
            if n == 0.0:
                raise SceneError("zero ray direction")
            self.direction = self.direction / n
        if not self.t_min < self.t_max:
            raise SceneError("ray needs t_min < t_max")


@dataclass
class HitRecord:
    t: float
    fragment_index: int
    leaf: int


@dataclass(frozen=True)
class RaycastConfig:
    """Splat radius, termination threshold, evaluation mode, shadow offset.

    ``alpha_cutoff`` of None disables early termination entirely.
    """

    splat_radius_world: float
    alpha_cutoff: float | None = 1.0
    mode: str = "transparency"
    shadow_epsilon: float = 1e-3

    def __post_init__(self):
        if self.splat_radius_world <= 0.0:
            raise SceneError("splat radius must be > 0")
        if self.alpha_cutoff is not None and not 0.0 < self.alpha_cutoff <= 1.0:
            raise SceneError("alpha_cutoff must be in (0,1] or None")
        if self.mode not in RAYCAST_MODES:
            raise SceneError(f"unknown raycast mode {self.mode!r}")


def default_raycast_config(fhv, mode: str = "transparency",
                           alpha_cutoff: float | None = 1.0,
                           splat_radius: float | None = None,
                           shadow_epsilon: float | None = None) -> RaycastConfig:
    """Radius defaults to capture footprint / sqrt(2), capped at half the
    leaf edge so per-leaf sorting stays globally consistent."""
    footprint = 1.0 / fhv.capture_resolution
    cap = 0.5 / (1 << fhv.levels)
    r = footprint / math.sqrt(2.0) if splat_radius is None else splat_radius
    r = min(r, cap) if splat_radius is None else r
    eps = 2.0 * r if shadow_epsilon is None else shadow_epsilon
    return RaycastConfig(r, alpha_cutoff, mode, eps)


@dataclass
class RaycastStats:
    visited_leaves: int = 0
    tested_fragments: int = 0
    hits: int = 0
    early_terminations: int = 0

    def merge(self, other: "RaycastStats") -> None:
        self.visited_leaves += other.visited_leaves
        self.tested_fragments += other.tested_fragments
        self.hits += other.hits
        self.early_terminations += other.early_terminations

    def as_dict(self) -> dict:
        return {
            "visited_leaves": self.visited_leaves,
            "tested_fragments": self.tested_fragments,
            "hits": self.hits,
            "early_terminations": self.early_terminations,
        }


# ---------------------------------------------------------------------------
# Rays


def gen_primary_ray(camera: Camera, px: tuple[int, int]) -> Ray:
    """Ray through the center of pixel (ix, iy)."""
    ix, iy = px
    w, h = camera.resolution
    if not (0 <= ix < w and 0 <= iy < h):
        raise SceneError(f"pixel {px} outside resolution")
    r, u, f = camera.basis()
    ndc_x = (ix + 0.5) / w * 2.0 - 1.0
    ndc_y = 1.0 - (iy + 0.5) / h * 2.0
    if camera.kind == "orthographic":
        half_h = camera.extent_or_fov / 2.0
        half_w = half_h * camera.aspect
        origin = camera.eye + ndc_x * half_w * r + ndc_y * half_h * u + camera.near * f
        return Ray(origin, f.copy())
    t = math.tan(math.radians(camera.extent_or_fov) / 2.0)
    direction = f + ndc_x * t * camera.aspect * r + ndc_y * t * u
    return Ray(camera.eye.copy(), direction)


def primary_rays(camera: Camera) -> tuple[np.ndarray, np.ndarray]:
    """(origins, directions) for every pixel, row-major; matches
    gen_primary_ray exactly."""
    w, h = camera.resolution
    rr, uu, ff = camera.basis()
    xs = (np.arange(w, dtype=np.float64) + 0.5) / w * 2.0 - 1.0
    ys = 1.0 - (np.arange(h, dtype=np.float64) + 0.5) / h * 2.0
    ndc_x = np.broadcast_to(xs[None, :], (h, w)).ravel()
    ndc_y = np.broadcast_to(ys[:, None], (h, w)).ravel()
    if camera.kind == "orthographic":
        half_h = camera.extent_or_fov / 2.0
        half_w = half_h * camera.aspect
        origins = (camera.eye[None, :]
                   + ndc_x[:, None] * (half_w * rr)[None, :]
                   + ndc_y[:, None] * (half_h * uu)[None, :]
                   + (camera.near * ff)[None, :])
        dirs = np.broadcast_to(ff, origins.shape).copy()
        return origins, dirs
    t = math.tan(math.radians(camera.extent_or_fov) / 2.0)
    dirs = (ff[None, :]
            + ndc_x[:, None] * (t * camera.aspect * rr)[None, :]
            + ndc_y[:, None] * (t * uu)[None, :])
    dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    origins = np.broadcast_to(camera.eye, dirs.shape).copy()
    return origins, dirs


# ---------------------------------------------------------------------------
# Traversal


def _slab(o: np.ndarray, d: np.ndarray, lo, hi, t0: float, t1: float):
    """Ray/AABB overlap clipped to [t0, t1]; None on miss.

    Rays parallel to a slab count as inside when the origin is within it
    (boundary inclusive).
    """
    for a in range(3):
        da = d[a]
        oa = o[a]
        if da == 0.0:
            if oa < lo[a] or oa > hi[a]:
                return None
        else:
            ta = (lo[a] - oa) / da
            tb = (hi[a] - oa) / da
            if ta > tb:
                ta, tb = tb, ta
            if ta > t0:
                t0 = ta
            if tb < t1:
                t1 = tb
    if t0 > t1:
        return None
    return t0, t1


def traverse_octree(pyramid: OccupancyPyramid, ray: Ray, visit) -> int:
    """Visit occupied leaves the ray crosses, nearest entry first.

    ``visit(code, t_enter, t_exit) -> bool`` (False stops the traversal).
    Subtrees with empty occupancy masks are skipped.  Returns the number
    of leaves visited.
    """
    L = pyramid.leaf_levels
    o, d = ray.origin, ray.direction
    root = _slab(o, d, (0.0, 0.0, 0.0), (1.0, 1.0, 1.0), ray.t_min, ray.t_max)
    if root is None:
        return 0
    visited = 0
    # stack entries: (level, code, box lo, t_enter, t_exit); children are
    # pushed farthest-first so pops come nearest-first (DFS order).
    stack = [(0, 0, np.zeros(3), root[0], root[1])]
    while stack:
        level, code, lo, te, tx = stack.pop()
        if level == L:
            visited += 1
            if not visit(code, te, tx):
                break
            continue
        mask = int(pyramid.levels[level][code])
        if mask == 0:
            continue
        half = 0.5 / (1 << level)
        children = []
        for c in range(8):
            if not (mask >> c) & 1:
                continue
            clo = lo + np.array([(c & 1) * half, ((c >> 1) & 1) * half, ((c >> 2) & 1) * half])
            hit = _slab(o, d, clo, clo + half, ray.t_min, ray.t_max)
            if hit is not None:
                children.append((hit[0], c, code * 8 + c, clo, hit[1]))
        children.sort(key=lambda e: (e[0], e[1]))
        for cte, _, ccode, clo, ctx in reversed(children):
            stack.append((level + 1, ccode, clo, cte, ctx))
    return visited


def intersect_fragment(ray: Ray, position, radius: float) -> float | None:
    """Hit parameter of a point fragment within the splat radius, or None.

    ``t`` is the projection of the fragment onto the ray; a hit requires
    t inside the ray interval and perpendicular distance <= radius.
    """
    p = np.asarray(position, dtype=np.float64)
    o, d = ray.origin, ray.direction
    t = float((p - o) @ d)
    if t < ray.t_min or t > ray.t_max:
        return None
    closest = o + t * d
    delta = p - closest
    if float(delta @ delta) <= radius * radius:
        return t
    return None


# ---------------------------------------------------------------------------
# Per-pixel evaluation (reference implementation; the compiled kernel in
# fhv._ckern mirrors this logic operation for operation)


def _leaf_hits(fhv, code: int, o, d, t_min: float, t_max: float, radius: float,
               stats: RaycastStats | None) -> list[tuple[float, int]]:
    """Sorted (t, pool index) hits among one leaf's fragments."""
    pool = fhv.pool
    r2 = radius * radius
    hits: list[tuple[float, int]] = []
    idxs = fhv.leaf_indices(code)
    if stats is not None:
        stats.tested_fragments += len(idxs)
    for i in idxs:
        px = float(pool.position[i, 0])
        py = float(pool.position[i, 1])
        pz = float(pool.position[i, 2])
        t = (px - o[0]) * d[0] + (py - o[1]) * d[1] + (pz - o[2]) * d[2]
        if t < t_min or t > t_max:
            continue
        ex = px - o[0] - t * d[0]
        ey = py - o[1] - t * d[1]
        ez = pz - o[2] - t * d[2]
        if ex * ex + ey * ey + ez * ez <= r2:
            hits.append((t, int(i)))
    hits.sort()
    return hits


def gather_ray_hits(fhv, ray: Ray, radius: float,
                    stats: RaycastStats | None = None) -> list[HitRecord]:
    """All hits along a ray, ordered leaf-by-leaf (sorted inside each leaf)."""
    out: list[HitRecord] = []

    def visit(code, te, tx):
        for t, i in _leaf_hits(fhv, code, ray.origin, ray.direction,
                               ray.t_min, ray.t_max, radius, stats):
            out.append(HitRecord(t, i, code))
        return True

    visited = traverse_octree(fhv.pyramid, ray, visit)
    if stats is not None:
        stats.visited_leaves += visited
    return out


def _shade_hit(fhv, i: int, mats, lights: list[Light], eye: np.ndarray,
               shadows: bool, cfg: RaycastConfig, leaf: int,
               stats: RaycastStats | None) -> np.ndarray:
    """Shade one stored fragment, optionally attenuating by shadow rays."""
    pool = fhv.pool
    p = pool.position[i].astype(np.float64)
    n = pool.normal[i].astype(np.float64)
    m = int(pool.material_id[i])
    diffuse = mats["diffuse"][m]
    specular = mats["specular"][m]
    shininess = mats["shininess"][m]

    v = eye - p
    vlen = math.sqrt(float(v @ v))
    v = v / vlen if vlen > 0.0 else np.zeros(3)
    out = np.zeros(3)
    for light in lights:
        if light.kind == "directional":
            l = light.direction
        else:
            l = light.position - p
            llen = math.sqrt(float(l @ l))
            l = l / llen if llen > 0.0 else np.zeros(3)
        h = l + v
        hlen = math.sqrt(float(h @ h))
        h = h / hlen if hlen > 0.0 else np.zeros(3)
        ndl = max(0.0, float(n @ l))
        ndh = max(0.0, float(n @ h))
        tau = 1.0
        if shadows:
            tau = shadow_transmittance(fhv, p, light, cfg,
                                       exclude_object_id=int(pool.object_id[i]),
                                       exclude_cell=leaf, stats=stats,
                                       alpha_table=mats["alpha"])
        out += np.asarray(light.ambient) * diffuse
        out += tau * ndl * diffuse * np.asarray(light.color)
        out += tau * (ndh ** shininess) * specular * np.asarray(light.color)
    return np.clip(out, 0.0, 1.0)


def raycast_pixel(fhv, ray: Ray, lights: list[Light], cfg: RaycastConfig,
                  materials: list[Material] | None = None,
                  background=(0.0, 0.0, 0.0, 0.0), eye: np.ndarray | None = None,
                  stats: RaycastStats | None = None,
                  hit_out: list | None = None) -> np.ndarray:
    """Evaluate one ray against a per-octant volume; returns rgba.

    Hits are composited front to back per visited leaf; traversal stops
    once accumulated coverage reaches the cutoff.  ``opaque_nearest``
    returns the first hit's shaded color with alpha 1.
    """
    if materials is None:
        materials = fhv.materials or [Material()]
    mats = materials if isinstance(materials, dict) else material_arrays(materials)
    if eye is None:
        eye = ray.origin
    shadows = cfg.mode == "transparency_shadows"
    state = np.zeros(4)
    first_hit: list = []

    def visit(code, te, tx):
        hits = _leaf_hits(fhv, code, ray.origin, ray.direction,
                          ray.t_min, ray.t_max, cfg.splat_radius_world, stats)
        for t, i in hits:
            if stats is not None:
                stats.hits += 1
            if hit_out is not None:
                hit_out.append(HitRecord(t, i, code))
            if cfg.mode == "opaque_nearest":
                color = _shade_hit(fhv, i, mats, lights, eye, shadows, cfg, code, stats)
                state[:3] = color
                state[3] = 1.0
                first_hit.append(i)
                return False
            a = float(mats["alpha"][int(fhv.pool.material_id[i])])
            color = _shade_hit(fhv, i, mats, lights, eye, shadows, cfg, code, stats)
            tcov = (1.0 - state[3]) * a
            state[0] += tcov * color[0]
            state[1] += tcov * color[1]
            state[2] += tcov * color[2]
            state[3] += tcov
        if cfg.alpha_cutoff is not None and state[3] >= cfg.alpha_cutoff:
            if stats is not None:
                stats.early_terminations += 1
            return False
        return True

    visited = traverse_octree(fhv.pyramid, ray, visit)
    if stats is not None:
        stats.visited_leaves += visited
    if cfg.mode == "opaque_nearest":
        if first_hit:
            return state.copy()
        return np.asarray(background, dtype=np.float64).copy()
    return resolve_over_background(state, background)


def shadow_transmittance(fhv, point, light: Light, cfg: RaycastConfig,
                         exclude_object_id: int | None = None,
                         exclude_cell: int | None = None,
                         stats: RaycastStats | None = None,
                         alpha_table: np.ndarray | None = None) -> float:
    """Product of (1 - alpha) over fragments between a point and a light.

    The ray starts ``shadow_epsilon`` along the light direction; fragments
    sharing the originating fragment's object id AND leaf cell are skipped
    (point fragments have no extent, so they would self-shadow otherwise).
    """
    point = np.asarray(point, dtype=np.float64)
    if light.kind == "directional":
        l = light.direction
        t_max = math.inf
    else:
        lvec = light.position - point
        dist = math.sqrt(float(lvec @ lvec))
        if dist == 0.0:
            return 1.0
        l = lvec / dist
        t_max = dist
    origin = point + cfg.shadow_epsilon * l
    ray = Ray(origin, l, 0.0, t_max)
    if alpha_table is None:
        alpha_table = material_arrays(fhv.materials or [Material()])["alpha"]
    pool = fhv.pool
    tau = [1.0]

    def visit(code, te, tx):
        hits = _leaf_hits(fhv, code, ray.origin, ray.direction,
                          ray.t_min, ray.t_max, cfg.splat_radius_world, stats)
        for _, i in hits:
            if (exclude_object_id is not None and exclude_cell is not None
                    and int(pool.object_id[i]) == exclude_object_id
                    and code == exclude_cell):
                continue
            tau[0] *= 1.0 - float(alpha_table[int(pool.material_id[i])])
            if tau[0] == 0.0:
                return False
        return True

    visited = traverse_octree(fhv.pyramid, ray, visit)
    if stats is not None:
        stats.visited_leaves += visited
    return tau[0]


# ---------------------------------------------------------------------------
# Whole-image rendering


def _lights_arrays(lights: list[Light]):
    kind = np.array([0 if l.kind == "directional" else 1 for l in lights], dtype=np.uint8)
    vec = np.stack([l.direction if l.kind == "directional" else l.position
                    for l in lights]).astype(np.float64)
    color = np.array([l.color for l in lights], dtype=np.float64)
    ambient = np.array([l.ambient for l in lights], dtype=np.float64)
    return kind, vec, color, ambient


def render_raycast(fhv, camera: Camera, lights: list[Light],
                   cfg: RaycastConfig | None = None,
                   materials: list[Material] | None = None,
                   background=(0.0, 0.0, 0.0, 0.0), threads: int = 1,
                   collect_ids: bool = False):
    """Ray-cast every pixel; returns (ImageBuffer, RaycastStats[, ids]).

    Dispatches to the compiled kernel when available; the NumPy backend
    evaluates raycast_pixel per pixel with identical results.
    """
    if not isinstance(fhv, (FhvPofl, FhvPofa)):
        raise SceneError("ray casting requires a per-octant layout")
    if cfg is None:
        cfg = default_raycast_config(fhv)
    if materials is None:
        materials = fhv.materials or [Material()]
    w, h = camera.resolution
    image = ImageBuffer.new(w, h, background)
    stats = RaycastStats()
    origins, dirs = primary_rays(camera)
    ids = np.full(w * h, -1, dtype=np.int32) if collect_ids else None

    kern = _backend.kernels()
    kernel = getattr(kern, "raycast_image", None)
    if kernel is not None:
        _render_compiled(kernel, fhv, camera, lights, cfg, materials,
                         background, threads, image, stats, origins, dirs, ids)
    else:
        mats = material_arrays(materials)
        rgba = image.pixels.reshape(-1, 4)
        bg = np.asarray(background, dtype=np.float64)

        def run_rows(row0, row1):
            local = RaycastStats()
            for k in range(row0 * w, row1 * w):
                ray = Ray(origins[k], dirs[k])
                hit_out: list = [] if ids is not None else None
                rgba[k] = raycast_pixel(fhv, ray, lights, cfg, mats, bg,
                                        camera.eye, local, hit_out)
                if ids is not None and hit_out:
                    ids[k] = int(fhv.pool.object_id[hit_out[0].fragment_index])
            return local

        if threads <= 1:
            stats.merge(run_rows(0, h))
        else:
            chunk = max(1, h // (threads * 4))
            spans = [(r, min(h, r + chunk)) for r in range(0, h, chunk)]
            with ThreadPoolExecutor(max_workers=threads) as pool_:
                for local in pool_.map(lambda s: run_rows(*s), spans):
                    stats.merge(local)

    if collect_ids:
        return image, stats, ids.reshape(h, w)
    return image, stats


def _render_compiled(kernel, fhv, camera, lights, cfg, materials, background,
                     threads, image, stats, origins, dirs, ids):
    mats = material_arrays(materials)
    lkind, lvec, lcolor, lambient = _lights_arrays(lights)
    w, h = camera.resolution
    if fhv.layout == "POFL":
        layout_kind = 1
        arr_a = fhv.directory.heads.astype(np.int64)
        arr_b = fhv.pool.prev_index.astype(np.int64)
    else:
        layout_kind = 0
        arr_a = fhv.directory.offsets.astype(np.int64)
        arr_b = fhv.directory.counts.astype(np.int64)
    pyr = np.concatenate(fhv.pyramid.levels) if fhv.levels > 0 else np.zeros(0, np.uint8)
    pyr_off = np.zeros(fhv.levels, dtype=np.int64)
    acc = 0
    for k in range(fhv.levels):
        pyr_off[k] = acc
        acc += 8 ** k
    rgba = image.pixels.reshape(-1, 4)
    out_ids = ids if ids is not None else np.full(0, -1, dtype=np.int32)
    bg = np.asarray(background, dtype=np.float64)
    mode = RAYCAST_MODES.index(cfg.mode)
    cutoff = -1.0 if cfg.alpha_cutoff is None else cfg.alpha_cutoff

    def run(row0, row1):
        counters = np.zeros(4, dtype=np.int64)
        kernel(
            row0 * w, row1 * w, origins, dirs,
            layout_kind, fhv.levels, arr_a, arr_b, pyr, pyr_off,
            fhv.pool.position, fhv.pool.normal,
            fhv.pool.material_id.astype(np.int64), fhv.pool.object_id.astype(np.int64),
            mats["diffuse"], mats["specular"], mats["shininess"], mats["alpha"],
            lkind, lvec, lcolor, lambient,
            camera.eye.astype(np.float64), bg,
            cfg.splat_radius_world, cutoff, mode, cfg.shadow_epsilon,
            rgba, out_ids, counters)
        return counters

    if threads <= 1:
        counters = run(0, h)
    else:
        chunk = max(1, h // (threads * 4))
        spans = [(r, min(h, r + chunk)) for r in range(0, h, chunk)]
        counters = np.zeros(4, dtype=np.int64)
        with ThreadPoolExecutor(max_workers=threads) as pool_:
            for c in pool_.map(lambda s: run(*s), spans):
                counters += c
    stats.visited_leaves += int(counters[0])
    stats.tested_fragments += int(counters[1])
    stats.hits += int(counters[2])
    stats.early_terminations += int(counters[3])
