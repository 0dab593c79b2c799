"""Triangle scenes, materials, and cameras.

The loader accepts a minimal line-oriented mesh format:

    v  x y z        vertex position
    vn x y z        vertex normal
    f  i[//k] ...   polygon face, 1-based indices, fan-triangulated
    g  name         start a named object group
    usemtl name     select a material from the sidecar table

Materials live in a separate table, one record per line:
``name dr dg db sr sg sb shininess alpha``.  Scenes are normalized into the
unit cube before capture so the spatial index has a fixed [0,1)^3 domain.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

__all__ = [
    "Aabb",
    "Camera",
    "Material",
    "Scene",
    "SceneError",
    "SceneLoadError",
    "SceneTransform",
    "Triangle",
    "Vertex",
    "capture_camera",
    "load_material_table",
    "load_scene",
    "make_quad",
    "make_triangle",
    "normalize_scene",
    "save_material_table",
    "save_scene",
    "viewpoint_camera",
]

DEFAULT_MATERIAL_NAME = "_default"

# Capture view frames: looking along the negative axis, with a fixed up vector
# so raster orientation is pinned for reproducible images.
AXIS_VIEWS = {
    "+x": ((-1.0, 0.0, 0.0), (0.0, 1.0, 0.0)),
    "+y": ((0.0, -1.0, 0.0), (0.0, 0.0, 1.0)),
    "+z": ((0.0, 0.0, -1.0), (0.0, 1.0, 0.0)),
}


class SceneError(ValueError):
    """Invalid scene content or geometry."""


class SceneLoadError(SceneError):
    """Parse failure, carrying file and line context."""

    def __init__(self, path, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


def _vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=np.float64)
    if a.shape != (3,):
        raise SceneError(f"expected 3-vector, got shape {a.shape}")
    return a


def _unit(v: np.ndarray) -> np.ndarray:
    n = math.sqrt(float(v @ v))
    if n == 0.0:
        raise SceneError("zero-length direction")
    return v / n


@dataclass(frozen=True)
class Material:
    diffuse: tuple[float, float, float] = (0.8, 0.8, 0.8)
    specular: tuple[float, float, float] = (0.0, 0.0, 0.0)
    shininess: float = 32.0
    alpha: float = 1.0

    def __post_init__(self):
        for channel in (*self.diffuse, *self.specular):
            if not 0.0 <= channel <= 1.0:
                raise SceneError(f"material channel {channel} outside [0,1]")
        if not self.shininess > 0.0:
            raise SceneError("shininess must be > 0")
        if not 0.0 <= self.alpha <= 1.0:
            raise SceneError(f"alpha {self.alpha} outside [0,1]")


@dataclass
class Vertex:
    position: np.ndarray
    normal: np.ndarray


@dataclass
class Triangle:
    v0: Vertex
    v1: Vertex
    v2: Vertex
    material_id: int = 0
    object_id: int = 0
    face_normal: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @property
    def positions(self) -> np.ndarray:
        return np.stack([self.v0.position, self.v1.position, self.v2.position])

    @property
    def normals(self) -> np.ndarray:
        return np.stack([self.v0.normal, self.v1.normal, self.v2.normal])

    @property
    def area(self) -> float:
        e1 = self.v1.position - self.v0.position
        e2 = self.v2.position - self.v0.position
        return 0.5 * float(np.linalg.norm(np.cross(e1, e2)))


def make_triangle(p0, p1, p2, n0=None, n1=None, n2=None,
                  material_id: int = 0, object_id: int = 0) -> Triangle:
    """Build a triangle; vertex normals default to the face normal.

    Zero-area faces are kept (face_normal = 0) but emit no fragments
    downstream.
    """
    p0, p1, p2 = _vec3(p0), _vec3(p1), _vec3(p2)
    cross = np.cross(p1 - p0, p2 - p0)
    norm = float(np.linalg.norm(cross))
    face_normal = cross / norm if norm > 0.0 else np.zeros(3)
    verts = []
    for p, n in ((p0, n0), (p1, n1), (p2, n2)):
        vn = face_normal if n is None else _unit(_vec3(n))
        verts.append(Vertex(p, vn))
    return Triangle(*verts, material_id=material_id, object_id=object_id,
                    face_normal=face_normal)


def make_quad(p00, p10, p11, p01, material_id: int = 0, object_id: int = 0) -> list[Triangle]:
    """Two triangles sharing the (p00, p11) diagonal, corners in cycle order."""
    return [
        make_triangle(p00, p10, p11, material_id=material_id, object_id=object_id),
        make_triangle(p00, p11, p01, material_id=material_id, object_id=object_id),
    ]


@dataclass(frozen=True)
class Aabb:
    lo: np.ndarray
    hi: np.ndarray

    @staticmethod
    def from_points(points: np.ndarray) -> "Aabb":
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return Aabb(points.min(axis=0), points.max(axis=0))

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def extent(self) -> np.ndarray:
        return self.hi - self.lo

    def contains(self, points: np.ndarray) -> bool:
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return bool(np.all(points >= self.lo) and np.all(points <= self.hi))


@dataclass
class Scene:
    triangles: list[Triangle]
    materials: list[Material]
    bounds: Aabb

    @staticmethod
    def from_triangles(triangles: list[Triangle], materials: list[Material] | None = None) -> "Scene":
        if not triangles:
            raise SceneError("scene has no triangles")
        materials = list(materials) if materials else [Material()]
        for tri in triangles:
            if tri.material_id >= len(materials):
                raise SceneError(f"material_id {tri.material_id} out of range")
        points = np.concatenate([t.positions for t in triangles])
        return Scene(triangles, materials, Aabb.from_points(points))

    @property
    def n_objects(self) -> int:
        return len({t.object_id for t in self.triangles})


@dataclass
class Camera:
    """Orthographic or perspective camera.

    ``extent_or_fov`` is the world-space height of the view volume for
    orthographic cameras and the vertical field of view in degrees for
    perspective ones.  Raster origin is top-left; ``up`` maps to decreasing
    raster y.
    """

    kind: str
    eye: np.ndarray
    view_dir: np.ndarray
    up: np.ndarray
    extent_or_fov: float
    resolution: tuple[int, int]
    near: float
    far: float

    def __post_init__(self):
        if self.kind not in ("orthographic", "perspective"):
            raise SceneError(f"unknown camera kind {self.kind!r}")
        self.eye = _vec3(self.eye)
        self.view_dir = _unit(_vec3(self.view_dir))
        self.up = _unit(_vec3(self.up))
        w, h = self.resolution
        if w < 1 or h < 1:
            raise SceneError("resolution must be >= 1")
        if not self.near < self.far:
            raise SceneError("near must be < far")
        if self.extent_or_fov <= 0.0:
            raise SceneError("extent/fov must be > 0")

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Orthonormal (right, up, forward); up re-orthogonalized."""
        f = self.view_dir
        r = _unit(np.cross(f, self.up))
        u = np.cross(r, f)
        return r, u, f

    @property
    def aspect(self) -> float:
        w, h = self.resolution
        return w / h


# ---------------------------------------------------------------------------
# Loading


def load_material_table(path) -> tuple[list[Material], dict[str, int]]:
    """Parse a material table. Returns (materials, name -> index)."""
    materials: list[Material] = []
    names: dict[str, int] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 9:
                raise SceneLoadError(path, line_no, f"expected 9 fields, got {len(parts)}")
            name = parts[0]
            try:
                vals = [float(p) for p in parts[1:]]
            except ValueError as exc:
                raise SceneLoadError(path, line_no, str(exc)) from None
            if not all(math.isfinite(v) for v in vals):
                raise SceneLoadError(path, line_no, "non-finite value")
            if name in names:
                raise SceneLoadError(path, line_no, f"duplicate material {name!r}")
            try:
                mat = Material(tuple(vals[0:3]), tuple(vals[3:6]), vals[6], vals[7])
            except SceneError as exc:
                raise SceneLoadError(path, line_no, str(exc)) from None
            names[name] = len(materials)
            materials.append(mat)
    return materials, names


def _parse_floats(parts: list[str], path, line_no: int) -> list[float]:
    try:
        vals = [float(p) for p in parts]
    except ValueError as exc:
        raise SceneLoadError(path, line_no, str(exc)) from None
    if not all(math.isfinite(v) for v in vals):
        raise SceneLoadError(path, line_no, "non-finite coordinate")
    return vals


def load_scene(path, material_table=None) -> Scene:
    """Load a scene file, fan-triangulating faces.

    Faces carry the object id of their enclosing named group and the
    material selected by the last ``usemtl``; both default to 0 / the
    default material.
    """
    materials: list[Material]
    mat_names: dict[str, int]
    if material_table is not None:
        materials, mat_names = load_material_table(material_table)
    else:
        materials, mat_names = [], {}

    positions: list[np.ndarray] = []
    normals: list[np.ndarray] = []
    triangles: list[Triangle] = []
    object_ids: dict[str, int] = {}
    current_group = ""
    current_material: int | None = None
    default_material: int | None = None

    def object_index(name: str) -> int:
        if name not in object_ids:
            object_ids[name] = len(object_ids)
        return object_ids[name]

    def material_index() -> int:
        nonlocal default_material
        if current_material is not None:
            return current_material
        if default_material is None:
            default_material = len(materials)
            materials.append(Material())
            mat_names[DEFAULT_MATERIAL_NAME] = default_material
        return default_material

    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, *parts = line.split()
            if key == "v":
                if len(parts) != 3:
                    raise SceneLoadError(path, line_no, "v needs 3 coordinates")
                positions.append(np.array(_parse_floats(parts, path, line_no)))
            elif key == "vn":
                if len(parts) != 3:
                    raise SceneLoadError(path, line_no, "vn needs 3 coordinates")
                n = np.array(_parse_floats(parts, path, line_no))
                norm = float(np.linalg.norm(n))
                if norm == 0.0:
                    raise SceneLoadError(path, line_no, "zero-length normal")
                normals.append(n / norm)
            elif key == "g":
                current_group = parts[0] if parts else ""
            elif key == "usemtl":
                if len(parts) != 1:
                    raise SceneLoadError(path, line_no, "usemtl needs a name")
                if parts[0] not in mat_names:
                    raise SceneLoadError(path, line_no, f"unknown material {parts[0]!r}")
                current_material = mat_names[parts[0]]
            elif key == "f":
                if len(parts) < 3:
                    raise SceneLoadError(path, line_no, "face needs >= 3 vertices")
                corners = []
                for token in parts:
                    fields = token.split("/")
                    if len(fields) not in (1, 3) or (len(fields) == 3 and fields[1]):
                        raise SceneLoadError(path, line_no, f"bad face token {token!r}")
                    try:
                        vi = int(fields[0])
                        ni = int(fields[2]) if len(fields) == 3 and fields[2] else None
                    except ValueError:
                        raise SceneLoadError(path, line_no, f"bad face token {token!r}") from None
                    if not 1 <= vi <= len(positions):
                        raise SceneLoadError(path, line_no, f"vertex index {vi} out of range")
                    if ni is not None and not 1 <= ni <= len(normals):
                        raise SceneLoadError(path, line_no, f"normal index {ni} out of range")
                    corners.append((positions[vi - 1], None if ni is None else normals[ni - 1]))
                mat_id = material_index()
                obj_id = object_index(current_group)
                for i in range(1, len(corners) - 1):
                    (p0, n0), (p1, n1), (p2, n2) = corners[0], corners[i], corners[i + 1]
                    triangles.append(make_triangle(p0, p1, p2, n0, n1, n2,
                                                   material_id=mat_id, object_id=obj_id))
            else:
                raise SceneLoadError(path, line_no, f"unknown keyword {key!r}")

    if not triangles:
        raise SceneLoadError(path, 0, "empty scene (no faces)")
    if not materials:
        materials.append(Material())
    return Scene.from_triangles(triangles, materials)


def save_material_table(materials: list[Material], names: list[str], path) -> None:
    lines = []
    for name, m in zip(names, materials):
        lines.append(" ".join(
            [name]
            + [f"{v:.9g}" for v in (*m.diffuse, *m.specular, m.shininess, m.alpha)]
        ))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def save_scene(scene: Scene, path, material_path=None) -> None:
    """Write a scene back out in the loader's format.

    Vertices are deduplicated exactly; material names are synthesized as
    ``m<i>``.  When ``material_path`` is given the table is written there.
    """
    pos_index: dict[tuple, int] = {}
    nrm_index: dict[tuple, int] = {}
    v_lines: list[str] = []
    vn_lines: list[str] = []
    f_lines: list[str] = []

    def pos_id(p: np.ndarray) -> int:
        key = tuple(p.tolist())
        if key not in pos_index:
            pos_index[key] = len(pos_index) + 1
            v_lines.append("v " + " ".join(f"{c:.17g}" for c in key))
        return pos_index[key]

    def nrm_id(n: np.ndarray) -> int:
        key = tuple(n.tolist())
        if key not in nrm_index:
            nrm_index[key] = len(nrm_index) + 1
            vn_lines.append("vn " + " ".join(f"{c:.17g}" for c in key))
        return nrm_index[key]

    current = (None, None)
    for tri in scene.triangles:
        if current != (tri.object_id, tri.material_id):
            f_lines.append(f"g obj{tri.object_id}")
            f_lines.append(f"usemtl m{tri.material_id}")
            current = (tri.object_id, tri.material_id)
        toks = [f"{pos_id(v.position)}//{nrm_id(v.normal)}" for v in (tri.v0, tri.v1, tri.v2)]
        f_lines.append("f " + " ".join(toks))

    Path(path).write_text("\n".join(v_lines + vn_lines + f_lines) + "\n", encoding="utf-8")
    if material_path is not None:
        save_material_table(scene.materials, [f"m{i}" for i in range(len(scene.materials))], material_path)


# ---------------------------------------------------------------------------
# Normalization and cameras


@dataclass(frozen=True)
class SceneTransform:
    """Uniform scale followed by translation: p' = scale * p + offset."""

    scale: float
    offset: np.ndarray

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) * self.scale + self.offset

    def invert(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - self.offset) / self.scale

    @property
    def is_identity(self) -> bool:
        return self.scale == 1.0 and not self.offset.any()


def normalize_scene(scene: Scene, margin: float = 0.0) -> tuple[Scene, SceneTransform]:
    """Map scene bounds into [margin, 1-margin]^3, preserving aspect ratio.

    The longest axis spans the full target interval; the others are
    centered.  Returns the normalized scene and the applied transform.
    """
    if not 0.0 <= margin < 0.25:
        raise SceneError(f"margin {margin} outside [0, 0.25)")
    extent = scene.bounds.extent
    longest = float(extent.max())
    if longest == 0.0:
        raise SceneError("degenerate scene bounds (zero extent on all axes)")
    scale = (1.0 - 2.0 * margin) / longest
    offset = 0.5 - scale * scene.bounds.center  # target centers at 0.5 per axis
    transform = SceneTransform(scale, offset)

    triangles = []
    for tri in scene.triangles:
        triangles.append(Triangle(
            Vertex(transform.apply(tri.v0.position), tri.v0.normal),
            Vertex(transform.apply(tri.v1.position), tri.v1.normal),
            Vertex(transform.apply(tri.v2.position), tri.v2.normal),
            material_id=tri.material_id,
            object_id=tri.object_id,
            face_normal=tri.face_normal,
        ))
    points = np.concatenate([t.positions for t in triangles])
    return Scene(triangles, scene.materials, Aabb.from_points(points)), transform


def capture_camera(scene: Scene, axis: str = "+z", resolution: int = 256) -> Camera:
    """Orthographic capture camera at the bounds center, looking along -axis.

    The extent always covers the full normalized cube and near/far span it
    entirely, so nothing is clipped during capture.
    """
    if axis not in AXIS_VIEWS:
        raise SceneError(f"unknown capture axis {axis!r}")
    view_dir, up = AXIS_VIEWS[axis]
    return Camera(
        kind="orthographic",
        eye=scene.bounds.center,
        view_dir=np.array(view_dir),
        up=np.array(up),
        extent_or_fov=1.0,
        resolution=(resolution, resolution),
        near=-1.0,
        far=1.0,
    )


def viewpoint_camera(axis: str = "+z", resolution: tuple[int, int] = (256, 256),
                     kind: str = "orthographic", fov_deg: float = 45.0,
                     distance: float = 1.5, center=(0.5, 0.5, 0.5)) -> Camera:
    """Camera outside the unit cube looking back at its center along -axis."""
    if axis not in AXIS_VIEWS:
        raise SceneError(f"unknown axis {axis!r}")
    view_dir, up = AXIS_VIEWS[axis]
    direction = -np.array(view_dir)
    eye = _vec3(center) + distance * direction
    if kind == "orthographic":
        return Camera(kind, eye, np.array(view_dir), np.array(up), 1.0,
                      resolution, near=0.0, far=distance + 1.0)
    return Camera(kind, eye, np.array(view_dir), np.array(up), fov_deg,
                  resolution, near=1e-3, far=distance + 1.0)
