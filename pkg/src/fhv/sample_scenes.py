"""Bundled test scenes, all pre-normalized into the unit cube.

Each is small enough for brute-force oracles: the three overlapping
translucent quads used by the compositing tests, an opaque icosphere, a
nearly view-parallel plane that demonstrates capture-direction bias, and a
cornell-style box with several distinct objects.
"""
from __future__ import annotations

import math

import numpy as np

from .scene import Material, Scene, Triangle, make_quad, make_triangle

__all__ = ["builtin_names", "builtin_scene", "edge_plane", "icosphere",
           "overlap_quads", "cornell_box", "unit_quad"]


def unit_quad(z: float = 0.5, alpha: float = 1.0) -> Scene:
    """A quad spanning the full [0,1]^2 cross-section at height z, facing +z."""
    mat = Material(diffuse=(0.8, 0.8, 0.8), alpha=alpha)
    tris = make_quad((0, 0, z), (1, 0, z), (1, 1, z), (0, 1, z))
    return Scene.from_triangles(tris, [mat])


def overlap_quads() -> Scene:
    """Three translucent axis-facing quads with a shared overlap region.

    Insertion order is green, red, blue while the depth order seen from the
    +z direction is red (nearest), green, blue; each quad has alpha 1/3.
    The region x,y in [0.35, 0.65] is covered by all three.
    """
    green = Material(diffuse=(0.0, 1.0, 0.0), alpha=1.0 / 3.0)
    red = Material(diffuse=(1.0, 0.0, 0.0), alpha=1.0 / 3.0)
    blue = Material(diffuse=(0.0, 0.0, 1.0), alpha=1.0 / 3.0)

    def quad(x0, x1, y0, y1, z, mat_id, obj_id):
        return make_quad((x0, y0, z), (x1, y0, z), (x1, y1, z), (x0, y1, z),
                         material_id=mat_id, object_id=obj_id)

    tris = []
    tris += quad(0.25, 0.75, 0.25, 0.75, 0.5, 0, 0)  # green, middle
    tris += quad(0.15, 0.65, 0.35, 0.85, 0.8, 1, 1)  # red, nearest from +z
    tris += quad(0.35, 0.85, 0.15, 0.65, 0.2, 2, 2)  # blue, farthest
    return Scene.from_triangles(tris, [green, red, blue])


def icosphere(subdivisions: int = 2, radius: float = 0.35,
              center=(0.5, 0.5, 0.5), alpha: float = 1.0) -> Scene:
    """Subdivided icosahedron with radial vertex normals (one object)."""
    phi = (1.0 + math.sqrt(5.0)) / 2.0
    verts = [
        (-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
        (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
        (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1),
    ]
    verts = [np.array(v, dtype=np.float64) / np.linalg.norm(v) for v in verts]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        faces = [t for (a, b, c) in faces
                 for t in ((a, midpoint(a, b), midpoint(c, a)),
                           (b, midpoint(b, c), midpoint(a, b)),
                           (c, midpoint(c, a), midpoint(b, c)),
                           (midpoint(a, b), midpoint(b, c), midpoint(c, a)))]

    center = np.asarray(center, dtype=np.float64)
    mat = Material(diffuse=(0.75, 0.75, 0.78), specular=(0.3, 0.3, 0.3),
                   shininess=32.0, alpha=alpha)
    tris = []
    for a, b, c in faces:
        pa, pb, pc = (center + radius * verts[i] for i in (a, b, c))
        tris.append(make_triangle(pa, pb, pc, verts[a], verts[b], verts[c]))
    return Scene.from_triangles(tris, [mat])


def edge_plane(tilt: float = 0.025) -> Scene:
    """A plane nearly parallel to the +z capture direction.

    Seen along -z it projects to a sliver a pixel or two wide; seen along
    its own normal it covers its full area.  ``tilt`` is the x drift across
    the z span (a perfectly parallel plane would project to zero area).
    """
    def x_at(z: float) -> float:
        return 0.5 - tilt / 2.0 + tilt * (z - 0.1) / 0.8

    mat = Material(diffuse=(0.9, 0.7, 0.2), alpha=1.0)
    tris = make_quad(
        (x_at(0.1), 0.1, 0.1), (x_at(0.1), 0.9, 0.1),
        (x_at(0.9), 0.9, 0.9), (x_at(0.9), 0.1, 0.9))
    return Scene.from_triangles(tris, [mat])


def cornell_box() -> Scene:
    """Five walls and two boxes, distinct object and material ids, opaque.

    Open toward +z; inward-facing normals so a +z viewpoint sees lit
    surfaces.
    """
    white = Material(diffuse=(0.85, 0.85, 0.85))
    red = Material(diffuse=(0.8, 0.15, 0.15))
    green = Material(diffuse=(0.15, 0.8, 0.15))
    gray = Material(diffuse=(0.6, 0.6, 0.65), specular=(0.2, 0.2, 0.2))
    lo, hi = 0.05, 0.95

    tris: list[Triangle] = []
    # floor (+y normal), ceiling (-y), back wall (+z), left (+x, red), right (-x, green)
    tris += make_quad((lo, lo, lo), (hi, lo, lo), (hi, lo, hi), (lo, lo, hi),
                      material_id=0, object_id=0)
    tris += make_quad((lo, hi, lo), (lo, hi, hi), (hi, hi, hi), (hi, hi, lo),
                      material_id=0, object_id=1)
    tris += make_quad((lo, lo, lo), (lo, hi, lo), (hi, hi, lo), (hi, lo, lo),
                      material_id=0, object_id=2)
    tris += make_quad((lo, lo, lo), (lo, lo, hi), (lo, hi, hi), (lo, hi, lo),
                      material_id=1, object_id=3)
    tris += make_quad((hi, lo, lo), (hi, hi, lo), (hi, hi, hi), (hi, lo, hi),
                      material_id=2, object_id=4)

    def box(x0, x1, y0, y1, z0, z1, obj):
        quads = [
            ((x0, y0, z1), (x1, y0, z1), (x1, y1, z1), (x0, y1, z1)),  # +z
            ((x1, y0, z0), (x0, y0, z0), (x0, y1, z0), (x1, y1, z0)),  # -z
            ((x0, y0, z0), (x0, y0, z1), (x0, y1, z1), (x0, y1, z0)),  # -x
            ((x1, y0, z1), (x1, y0, z0), (x1, y1, z0), (x1, y1, z1)),  # +x
            ((x0, y1, z1), (x1, y1, z1), (x1, y1, z0), (x0, y1, z0)),  # +y
            ((x0, y0, z0), (x1, y0, z0), (x1, y0, z1), (x0, y0, z1)),  # -y
        ]
        out = []
        for q in quads:
            out += make_quad(*q, material_id=3, object_id=obj)
        return out

    tris += box(0.15, 0.45, lo, 0.55, 0.15, 0.45, 5)  # tall box, left back
    tris += box(0.55, 0.85, lo, 0.35, 0.45, 0.75, 6)  # short box, right front
    return Scene.from_triangles(tris, [white, red, green, gray])


_BUILTIN = {
    "three-quads": overlap_quads,
    "icosphere": icosphere,
    "edge-plane": edge_plane,
    "cornell": cornell_box,
}


def builtin_names() -> list[str]:
    return sorted(_BUILTIN)


def builtin_scene(name: str) -> Scene:
    """Scene by builtin name (see builtin_names)."""
    try:
        return _BUILTIN[name]()
    except KeyError:
        raise ValueError(f"unknown builtin scene {name!r}; "
                         f"available: {', '.join(builtin_names())}") from None
