"""Fragment-history volumes: capture a triangle scene once into
view-independent per-octant fragment stores, then reconstruct images for
arbitrary viewpoints by point splatting or octree ray casting.

Hot kernels (triangle coverage, per-pixel ray casting) run in a compiled
extension when available; a NumPy fallback with identical semantics is
selected automatically otherwise (or force it with FHV_PURE_PYTHON=1).
"""
from ._backend import HAVE_COMPILED, active_backend
from .raster import (CaptureStats, CaptureStrategy, EmittedFragment, FragmentBatch,
                     RasterConfig, capture_pass, rasterize_triangle, tangent_basis,
                     world_pixel_footprint)
from .raycast import (HitRecord, Ray, RaycastConfig, RaycastStats,
                      default_raycast_config, gen_primary_ray, intersect_fragment,
                      raycast_pixel, render_raycast, shadow_transmittance,
                      traverse_octree)
from .render import (GBuffer, ImageBuffer, Light, composite_over, deferred_baseline,
                     front_to_back_accumulate, shade, splat_render, write_float_dump,
                     write_ppm)
from .scene import (Aabb, Camera, Material, Scene, SceneError, SceneLoadError,
                    Triangle, Vertex, capture_camera, load_scene, normalize_scene,
                    viewpoint_camera)
from .storage import (FhvPofa, FhvPofl, FhvPpfl, FragmentPool, FragmentRecord,
                      OccupancyPyramid, build_pofl, build_ppfl, cell_of,
                      load_snapshot, memory_report, morton_decode, morton_encode,
                      pofa_build, pofl_insert, ppfl_insert, rebuild_pofl_as_pofa,
                      save_snapshot)

__version__ = "0.1.0"
