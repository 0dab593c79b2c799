"""Shading, compositing, point-splat reconstruction, and the deferred baseline.

The splat path projects every stored fragment, rasterizes a screen-aligned
square per fragment, and keeps the nearest fragment per pixel before a
single shading pass; it emulates deferred shading from captured data and
treats fragments as opaque.  The deferred baseline rasterizes the scene
with a depth test into per-pixel attribute buffers and shades survivors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .raster import RasterConfig, _raster_screen
from .scene import Camera, Material, Scene, SceneError

__all__ = [
    "GBuffer",
    "ImageBuffer",
    "Light",
    "composite_over",
    "deferred_baseline",
    "front_to_back_accumulate",
    "material_arrays",
    "read_float_dump",
    "shade",
    "shade_many",
    "splat_render",
    "srgb_encode",
    "write_float_dump",
    "write_ppm",
]


@dataclass
class Light:
    """Directional or point light with its own ambient term.

    For directional lights ``direction`` points from the surface toward
    the light (the shading ``l`` vector directly).
    """

    kind: str = "directional"
    direction: np.ndarray | None = None
    position: np.ndarray | None = None
    color: tuple[float, float, float] = (1.0, 1.0, 1.0)
    ambient: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.kind == "directional":
            if self.direction is None:
                raise SceneError("directional light needs a direction")
            d = np.asarray(self.direction, dtype=np.float64)
            n = float(np.linalg.norm(d))
            if n == 0.0:
                raise SceneError("zero light direction")
            self.direction = d / n
        elif self.kind == "point":
            if self.position is None:
                raise SceneError("point light needs a position")
            self.position = np.asarray(self.position, dtype=np.float64)
        else:
            raise SceneError(f"unknown light kind {self.kind!r}")


def headlight(camera: Camera, color=(1.0, 1.0, 1.0), ambient=(0.1, 0.1, 0.1)) -> Light:
    """Directional light shining along the camera's view direction."""
    return Light("directional", direction=-camera.view_dir, color=color, ambient=ambient)


@dataclass
class ImageBuffer:
    width: int
    height: int
    pixels: np.ndarray  # (h, w, 4) float64, linear RGB + alpha
    depth: np.ndarray  # (h, w) float64, +inf where empty

    @staticmethod
    def new(width: int, height: int, background=(0.0, 0.0, 0.0, 0.0)) -> "ImageBuffer":
        pixels = np.empty((height, width, 4), dtype=np.float64)
        pixels[:] = np.asarray(background, dtype=np.float64)
        return ImageBuffer(width, height, pixels, np.full((height, width), np.inf))


@dataclass
class GBuffer:
    position: np.ndarray  # (h, w, 3)
    normal: np.ndarray  # (h, w, 3)
    material_id: np.ndarray  # (h, w) int32
    object_id: np.ndarray  # (h, w) int32
    valid: np.ndarray  # (h, w) bool

    @staticmethod
    def new(width: int, height: int) -> "GBuffer":
        return GBuffer(
            np.zeros((height, width, 3)),
            np.zeros((height, width, 3)),
            np.full((height, width), -1, dtype=np.int32),
            np.full((height, width), -1, dtype=np.int32),
            np.zeros((height, width), dtype=bool),
        )


def material_arrays(materials: list[Material]) -> dict[str, np.ndarray]:
    """Material table as flat arrays for vectorized shading."""
    return {
        "diffuse": np.array([m.diffuse for m in materials], dtype=np.float64),
        "specular": np.array([m.specular for m in materials], dtype=np.float64),
        "shininess": np.array([m.shininess for m in materials], dtype=np.float64),
        "alpha": np.array([m.alpha for m in materials], dtype=np.float64),
    }


# ---------------------------------------------------------------------------
# Shading


def shade_many(points: np.ndarray, normals: np.ndarray, material_id: np.ndarray,
               mats: dict[str, np.ndarray], lights: list[Light],
               eye: np.ndarray) -> np.ndarray:
    """Blinn-Phong over fragment arrays; channels clamped to [0,1].

    Per light: ambient*diffuse + max(0,n.l)*diffuse*color
    + max(0,n.h)^shininess * specular * color with h = normalize(l+v).
    """
    points = np.atleast_2d(points)
    normals = np.atleast_2d(normals)
    material_id = np.atleast_1d(material_id)
    diffuse = mats["diffuse"][material_id]
    specular = mats["specular"][material_id]
    shininess = mats["shininess"][material_id]

    v = eye[None, :] - points
    vlen = np.linalg.norm(v, axis=1, keepdims=True)
    v = np.divide(v, vlen, out=np.zeros_like(v), where=vlen > 0)

    out = np.zeros_like(points)
    for light in lights:
        if light.kind == "directional":
            l = np.broadcast_to(light.direction, points.shape)
        else:
            l = light.position[None, :] - points
            llen = np.linalg.norm(l, axis=1, keepdims=True)
            l = np.divide(l, llen, out=np.zeros_like(l), where=llen > 0)
        h = l + v
        hlen = np.linalg.norm(h, axis=1, keepdims=True)
        h = np.divide(h, hlen, out=np.zeros_like(h), where=hlen > 0)
        ndl = np.maximum(0.0, np.einsum("ij,ij->i", normals, l))
        ndh = np.maximum(0.0, np.einsum("ij,ij->i", normals, h))
        color = np.asarray(light.color, dtype=np.float64)
        out += np.asarray(light.ambient, dtype=np.float64) * diffuse
        out += ndl[:, None] * diffuse * color
        out += (ndh ** shininess)[:, None] * specular * color
    return np.clip(out, 0.0, 1.0)


def shade(position, normal, material: Material, light: Light, eye) -> np.ndarray:
    """Blinn-Phong for a single fragment and light."""
    mats = material_arrays([material])
    return shade_many(np.asarray(position, dtype=np.float64),
                      np.asarray(normal, dtype=np.float64),
                      np.array([0]), mats, [light],
                      np.asarray(eye, dtype=np.float64))[0]


# ---------------------------------------------------------------------------
# Compositing


def composite_over(front, back) -> np.ndarray:
    """Porter-Duff over for straight-alpha rgba."""
    front = np.asarray(front, dtype=np.float64)
    back = np.asarray(back, dtype=np.float64)
    fa, ba = front[3], back[3]
    out_a = fa + (1.0 - fa) * ba
    if out_a == 0.0:
        return np.zeros(4)
    rgb = (fa * front[:3] + (1.0 - fa) * ba * back[:3]) / out_a
    return np.array([rgb[0], rgb[1], rgb[2], out_a])


def front_to_back_accumulate(state, rgba_next) -> np.ndarray:
    """One step of front-to-back accumulation.

    ``state`` is (premultiplied rgb, coverage A); each new fragment adds
    (1-A)*a*c to the color and (1-A)*a to the coverage.
    """
    state = np.asarray(state, dtype=np.float64).copy()
    nxt = np.asarray(rgba_next, dtype=np.float64)
    t = (1.0 - state[3]) * nxt[3]
    state[:3] += t * nxt[:3]
    state[3] += t
    return state


def resolve_over_background(state, background) -> np.ndarray:
    """Final pixel from an accumulation state over a background color."""
    bg = np.asarray(background, dtype=np.float64)
    out = np.empty(4)
    out[:3] = state[:3] + (1.0 - state[3]) * bg[3] * bg[:3]
    out[3] = state[3] + (1.0 - state[3]) * bg[3]
    return out


# ---------------------------------------------------------------------------
# Camera projection of points (shared by the splat path)


def project_points(camera: Camera, points: np.ndarray):
    """Raster coords, [0,1] depth, and view distance for world points."""
    r, u, f = camera.basis()
    w, h = camera.resolution
    rel = points - camera.eye
    xc = rel @ r
    yc = rel @ u
    zc = rel @ f
    if camera.kind == "orthographic":
        half_h = camera.extent_or_fov / 2.0
        half_w = half_h * camera.aspect
        ndc_x = xc / half_w
        ndc_y = yc / half_h
        depth = (zc - camera.near) / (camera.far - camera.near)
    else:
        t = math.tan(math.radians(camera.extent_or_fov) / 2.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            ndc_x = xc / (zc * t * camera.aspect)
            ndc_y = yc / (zc * t)
            depth = camera.far * (zc - camera.near) / ((camera.far - camera.near) * zc)
    xr = (ndc_x + 1.0) * 0.5 * w
    yr = (1.0 - ndc_y) * 0.5 * h
    return xr, yr, depth, zc


def _pixel_radius(camera: Camera, r_world: float, zc: np.ndarray) -> np.ndarray:
    """Projected splat radius in pixels."""
    h = camera.resolution[1]
    if camera.kind == "orthographic":
        return np.full_like(zc, r_world * h / camera.extent_or_fov)
    t = math.tan(math.radians(camera.extent_or_fov) / 2.0)
    return r_world * h / (2.0 * t * zc)


# ---------------------------------------------------------------------------
# Point-splat reconstruction


def splat_render(pool, camera: Camera, lights: list[Light],
                 splat_radius_world: float, materials: list[Material],
                 background=(0.0, 0.0, 0.0, 0.0),
                 id_buffer: GBuffer | None = None) -> ImageBuffer:
    """Render a fragment pool by z-tested point splatting.

    Every stored fragment becomes a screen-aligned square of at least one
    pixel; the nearest fragment wins each pixel (ties keep the first
    stored) and winners are shaded once.  Fragments are treated as opaque.
    """
    if splat_radius_world <= 0.0:
        raise SceneError("splat radius must be > 0")
    w, h = camera.resolution
    image = ImageBuffer.new(w, h, background)
    n = pool.stored_count
    if n == 0:
        return image

    points = pool.position[:n].astype(np.float64)
    xr, yr, depth, zc = project_points(camera, points)
    half = np.maximum(0.5, _pixel_radius(camera, splat_radius_world, zc))
    live = np.isfinite(depth)
    if camera.kind == "perspective":
        live &= zc > 1e-9

    x0 = np.maximum(0, np.ceil(xr - half - 0.5)).astype(np.int64)
    x1 = np.minimum(w - 1, np.floor(xr + half - 0.5)).astype(np.int64)
    y0 = np.maximum(0, np.ceil(yr - half - 0.5)).astype(np.int64)
    y1 = np.minimum(h - 1, np.floor(yr + half - 0.5)).astype(np.int64)
    live &= (x1 >= x0) & (y1 >= y0)
    idx = np.nonzero(live)[0]
    if len(idx) == 0:
        return image

    kx = int((x1[idx] - x0[idx]).max()) + 1
    ky = int((y1[idx] - y0[idx]).max()) + 1
    if kx * ky > 4096:
        raise SceneError("splat footprint too large; reduce the radius")
    ox = np.arange(kx, dtype=np.int64)
    oy = np.arange(ky, dtype=np.int64)
    px = x0[idx, None] + ox[None, :]  # (n, kx)
    py = y0[idx, None] + oy[None, :]  # (n, ky)
    mask = ((px[:, None, :] <= x1[idx, None, None])
            & (py[:, :, None] <= y1[idx, None, None]))  # (n, ky, kx)
    pix = (py[:, :, None] * w + px[:, None, :])[mask]
    frag = np.broadcast_to(idx[:, None, None], mask.shape)[mask]

    # nearest depth wins; among equal depths the lowest pool index wins
    depth_flat = image.depth.ravel()
    cand_d = depth[frag]
    np.minimum.at(depth_flat, pix, cand_d)
    at_min = cand_d == depth_flat[pix]
    winner = np.full(w * h, np.iinfo(np.int64).max, dtype=np.int64)
    np.minimum.at(winner, pix[at_min], frag[at_min])

    covered = np.nonzero(winner != np.iinfo(np.int64).max)[0]
    win = winner[covered]
    mats = material_arrays(materials)
    colors = shade_many(points[win], pool.normal[win].astype(np.float64),
                        pool.material_id[win].astype(np.int64), mats, lights,
                        camera.eye)
    flat_pixels = image.pixels.reshape(-1, 4)
    flat_pixels[covered, :3] = colors
    flat_pixels[covered, 3] = 1.0

    if id_buffer is not None:
        id_buffer.object_id.ravel()[covered] = pool.object_id[win].astype(np.int32)
        id_buffer.material_id.ravel()[covered] = pool.material_id[win].astype(np.int32)
        id_buffer.position.reshape(-1, 3)[covered] = points[win]
        id_buffer.normal.reshape(-1, 3)[covered] = pool.normal[win].astype(np.float64)
        id_buffer.valid.ravel()[covered] = True
    return image


# ---------------------------------------------------------------------------
# Deferred baseline


def deferred_baseline(scene: Scene, camera: Camera, lights: list[Light],
                      background=(0.0, 0.0, 0.0, 0.0)) -> tuple[ImageBuffer, GBuffer]:
    """Two-phase reference renderer: depth-tested geometry, then shading.

    The geometry pass keeps only the nearest fragment per pixel in the
    attribute buffers; the lighting pass shades each surviving pixel once.
    """
    w, h = camera.resolution
    cfg = RasterConfig.from_camera(camera)
    image = ImageBuffer.new(w, h, background)
    gbuf = GBuffer.new(w, h)

    depth_flat = image.depth.ravel()
    order = np.full(w * h, np.iinfo(np.int64).max, dtype=np.int64)
    pos_flat = gbuf.position.reshape(-1, 3)
    nrm_flat = gbuf.normal.reshape(-1, 3)
    mat_flat = gbuf.material_id.ravel()
    obj_flat = gbuf.object_id.ravel()
    emitted = 0

    for tri in scene.triangles:
        batch = _raster_screen(tri, cfg)
        if batch is None:
            continue
        pix = batch.raster_y.astype(np.int64) * w + batch.raster_x.astype(np.int64)
        d = batch.depth
        old = depth_flat[pix]
        np.minimum.at(depth_flat, pix, d)
        new = depth_flat[pix]
        improved = (d == new) & (new < old)  # strict: equal depth keeps first
        if improved.any():
            cand = np.nonzero(improved)[0]
            upix = pix[cand]
            # previous winners at these pixels are strictly farther now
            order[upix] = np.iinfo(np.int64).max
            emission = emitted + cand
            np.minimum.at(order, upix, emission)
            sel = cand[emission == order[upix]]
            pp = pix[sel]
            pos_flat[pp] = batch.world_position[sel]
            nrm_flat[pp] = batch.world_normal[sel]
            mat_flat[pp] = batch.material_id
            obj_flat[pp] = batch.object_id
            gbuf.valid.ravel()[pp] = True
        emitted += len(batch)

    valid = np.nonzero(gbuf.valid.ravel())[0]
    if len(valid):
        mats = material_arrays(scene.materials)
        colors = shade_many(pos_flat[valid], nrm_flat[valid],
                            mat_flat[valid].astype(np.int64), mats, lights,
                            camera.eye)
        flat_pixels = image.pixels.reshape(-1, 4)
        flat_pixels[valid, :3] = colors
        flat_pixels[valid, 3] = 1.0
    return image, gbuf


# ---------------------------------------------------------------------------
# Image output


def srgb_encode(linear: np.ndarray) -> np.ndarray:
    """Linear [0,1] -> 8-bit sRGB."""
    c = np.clip(linear, 0.0, 1.0)
    lo = 12.92 * c
    hi = 1.055 * np.power(c, 1.0 / 2.4) - 0.055
    enc = np.where(c <= 0.0031308, lo, hi)
    return np.rint(enc * 255.0).astype(np.uint8)


def write_ppm(image: ImageBuffer, path) -> None:
    """Binary P6 with sRGB-encoded 8-bit channels (alpha dropped)."""
    data = srgb_encode(image.pixels[:, :, :3])
    with open(path, "wb") as fh:
        fh.write(f"P6\n{image.width} {image.height}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def write_float_dump(image: ImageBuffer, path) -> None:
    """Lossless dump: u32 width, u32 height, then raw little-endian rgba f32."""
    with open(path, "wb") as fh:
        fh.write(np.array([image.width, image.height], dtype="<u4").tobytes())
        fh.write(image.pixels.astype("<f4").tobytes())


def read_float_dump(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    w, h = np.frombuffer(blob, dtype="<u4", count=2)
    return np.frombuffer(blob, dtype="<f4", offset=8).reshape(int(h), int(w), 4)


def read_ppm(path) -> np.ndarray:
    """Read back a binary P6 image as (h, w, 3) uint8."""
    with open(path, "rb") as fh:
        if fh.readline().strip() != b"P6":
            raise ValueError("not a binary PPM")
        dims = fh.readline().split()
        maxval = fh.readline().strip()
        w, h = int(dims[0]), int(dims[1])
        if maxval != b"255":
            raise ValueError("unsupported max value")
        data = np.frombuffer(fh.read(w * h * 3), dtype=np.uint8)
    return data.reshape(h, w, 3)
