"""Per-pixel baking of occlusion-aware transport and ambient occlusion.

Transport and AO are estimated from one shared stratified sample set per
pixel (uniform over the sphere, 4 pi weight, below-horizon samples
contribute zero):

    T_i = (4 pi / N) sum_k  V(w_k) max(n.w_k, 0) Y_i(w_k)
    AO  = (1 / pi) (4 pi / N) sum_k  V(w_k) max(n.w_k, 0)

Per-pixel seeds are a 64-bit hash of (global seed, x, y), so results are
byte-identical for any worker count.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import _kernels, sh
from .errors import DimensionError, FormatError
from .maps import MapImage, MapKind, write_map
from .scene import GBuffer, Scene, TriMesh, build_scene, load_mesh


@dataclass
class BakeConfig:
    samples: int = 256
    seed: int = 7
    ray_epsilon_scale: float = 1e-4

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("samples must be >= 1")


def _check_gbuffer(gbuffer: GBuffer) -> None:
    for name in ("mask", "normal", "position"):
        layer = getattr(gbuffer, name, None)
        if layer is None:
            raise DimensionError(f"gbuffer is missing the {name} layer")
    if not (gbuffer.mask.same_size(gbuffer.normal)
            and gbuffer.mask.same_size(gbuffer.position)):
        raise DimensionError("gbuffer layers disagree in size")


def bake_joint(scene: Scene, gbuffer: GBuffer,
               config: BakeConfig = BakeConfig()) -> tuple[MapImage, MapImage]:
    """Bake transport and AO from one sample set; the pair satisfies
    dot(T, constant light) = pi * AO to float32 rounding."""
    _check_gbuffer(gbuffer)
    h, w = gbuffer.mask.height, gbuffer.mask.width
    out_t = np.zeros((h, w, 9), dtype=np.float32)
    out_ao = np.zeros((h, w), dtype=np.float32)
    eps = config.ray_epsilon_scale * scene.bvh.diagonal
    _kernels.bake_kernel(
        gbuffer.position.data, gbuffer.normal.data, gbuffer.mask.data[:, :, 0],
        config.samples, np.uint64(config.seed), eps,
        *scene.bvh.arrays(), out_t, out_ao)
    return (MapImage(out_t, MapKind.TRANSPORT),
            MapImage(out_ao[:, :, None], MapKind.AO))


def bake_transport(scene: Scene, gbuffer: GBuffer,
                   config: BakeConfig = BakeConfig()) -> MapImage:
    return bake_joint(scene, gbuffer, config)[0]


def bake_ao(scene: Scene, gbuffer: GBuffer,
            config: BakeConfig = BakeConfig()) -> MapImage:
    return bake_joint(scene, gbuffer, config)[1]


def transport_from_normals(normal: MapImage, mask: MapImage) -> MapImage:
    """Occlusion-ignored analytic transport per pixel (the baseline that
    Table-1-style comparisons compute from normal maps)."""
    if not normal.same_size(mask):
        raise DimensionError("normal and mask maps disagree in size")
    n = normal.data.astype(np.float64)
    m = mask.data[:, :, 0] > 0.0
    lens = np.linalg.norm(n, axis=2)
    if m.any() and np.abs(lens[m] - 1.0).max() > 1e-3:
        raise FormatError("normal map is not unit length under the mask")
    out = np.zeros(n.shape[:2] + (9,), dtype=np.float32)
    if m.any():
        nm = n[m]
        basis = np.empty((len(nm), 9))
        x, y, z = nm[:, 0], nm[:, 1], nm[:, 2]
        basis[:, 0] = sh.C0
        basis[:, 1] = sh.C1 * y
        basis[:, 2] = sh.C1 * z
        basis[:, 3] = sh.C1 * x
        basis[:, 4] = sh.C2A * x * y
        basis[:, 5] = sh.C2A * y * z
        basis[:, 6] = sh.C2B * (3.0 * z * z - 1.0)
        basis[:, 7] = sh.C2A * x * z
        basis[:, 8] = sh.C2C * (x * x - y * y)
        out[m] = (basis * sh.A_HAT[sh.BAND_OF_INDEX]).astype(np.float32)
    return MapImage(out, MapKind.TRANSPORT)


def apply_ao_to_transport(transport: MapImage, ao: MapImage) -> MapImage:
    """Scale all 9 coefficients by the scalar AO (the AO-darkened baseline)."""
    if not transport.same_size(ao):
        raise DimensionError("transport and AO maps disagree in size")
    return MapImage(transport.data * ao.data, MapKind.TRANSPORT)


def reference_render(scene: Scene, gbuffer: GBuffer, env: np.ndarray,
                     samples: int = 2048, seed: int = 7,
                     ray_epsilon_scale: float = 1e-4) -> MapImage:
    """Shadowed Monte Carlo irradiance against the full panorama (no SH)."""
    _check_gbuffer(gbuffer)
    h, w = gbuffer.mask.height, gbuffer.mask.width
    out = np.zeros((h, w, 3), dtype=np.float32)
    eps = ray_epsilon_scale * scene.bvh.diagonal
    _kernels.reference_kernel(
        gbuffer.position.data, gbuffer.normal.data, gbuffer.mask.data[:, :, 0],
        np.ascontiguousarray(env, dtype=np.float32),
        samples, np.uint64(seed), eps,
        *scene.bvh.arrays(), out)
    return MapImage(out, MapKind.SHADING)


# ---------------------------------------------------------------------------
# Full bake to a dataset directory
# ---------------------------------------------------------------------------

BAKE_FILES = {
    "mask": "mask.png",
    "albedo": "albedo.mapb",
    "normal": "normal.mapb",
    "transport": "transport.mapb",
    "ao": "ao.pfm",
}


def bake_all(mesh, out_dir, config: BakeConfig = BakeConfig(),
             size: int = 1024, padding: float = 0.05,
             preview: bool = False) -> dict:
    """Bake the full map set for a mesh (path or TriMesh) into out_dir.

    Writes mask.png, albedo.mapb, normal.mapb, transport.mapb, ao.pfm and a
    manifest.json with config and content hashes. Deterministic: same mesh,
    config and seed give byte-identical outputs.
    """
    if not isinstance(mesh, TriMesh):
        mesh_name = Path(mesh).name
        mesh = load_mesh(mesh)
    else:
        mesh_name = "<in-memory>"
    scene = build_scene(mesh, size=size, padding=padding)
    gbuf = _rasterize(scene)
    transport, ao = bake_joint(scene, gbuf, config)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_map(gbuf.mask, out_dir / BAKE_FILES["mask"])
    write_map(gbuf.albedo, out_dir / BAKE_FILES["albedo"])
    write_map(gbuf.normal, out_dir / BAKE_FILES["normal"])
    write_map(transport, out_dir / BAKE_FILES["transport"])
    write_map(ao, out_dir / BAKE_FILES["ao"])
    files = dict(BAKE_FILES)
    if preview:
        write_map(MapImage(gbuf.albedo.data, MapKind.RGB),
                  out_dir / "albedo_preview.png")
        files["albedo_preview"] = "albedo_preview.png"

    manifest = {
        "files": files,
        "config": {
            "mesh": mesh_name,
            "size": size,
            "padding": padding,
            **asdict(config),
        },
        "hashes": {
            name: hashlib.sha256((out_dir / name).read_bytes()).hexdigest()
            for name in sorted(files.values())
        },
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def _rasterize(scene: Scene) -> GBuffer:
    from .scene import rasterize_gbuffer

    return rasterize_gbuffer(scene.mesh, scene.camera, scene.bvh)
