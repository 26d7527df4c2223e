"""Mesh ingestion, BVH ray casting, and orthographic G-buffer rasterization.

The camera looks along -z with +y up, so camera space coincides with world
space: a normal facing the viewer is (0,0,1). Framing follows the fixed
vertical-padding rule (mesh height fills 1 - 2*padding of the image).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import _kernels
from .errors import MeshError
from .maps import MapImage, MapKind

DEFAULT_SIZE = 1024
DEFAULT_PADDING = 0.05
RAY_EPS_SCALE = 1e-4


@dataclass
class TriMesh:
    """Triangle mesh with per-corner shading attributes.

    positions: (n,3) float64; triangles: (m,3) int32 indices into positions.
    corner_normals: (m,3,3) unit vectors. Albedo comes from either
    corner_colors (m,3,3) or corner_uvs (m,3,2) + texture (th,tw,3 linear).
    """

    positions: np.ndarray
    triangles: np.ndarray
    corner_normals: np.ndarray
    corner_colors: np.ndarray | None = None
    corner_uvs: np.ndarray | None = None
    texture: np.ndarray | None = None

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, dtype=np.float64)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int32)
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3 or len(self.triangles) == 0:
            raise MeshError("mesh must have at least one triangle")
        if self.triangles.min() < 0 or self.triangles.max() >= len(self.positions):
            raise MeshError("triangle index out of range")
        self.corner_normals = np.ascontiguousarray(self.corner_normals, dtype=np.float64)
        if self.corner_colors is None and self.texture is None:
            self.corner_colors = np.full((len(self.triangles), 3, 3), 0.75)
        if self.corner_colors is not None:
            self.corner_colors = np.ascontiguousarray(self.corner_colors, dtype=np.float64)
        if self.corner_uvs is not None:
            self.corner_uvs = np.ascontiguousarray(self.corner_uvs, dtype=np.float64)
        if self.texture is not None:
            self.texture = np.ascontiguousarray(self.texture, dtype=np.float32)

    @property
    def triangle_count(self) -> int:
        return len(self.triangles)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        used = self.positions[np.unique(self.triangles)]
        return used.min(axis=0), used.max(axis=0)

    def bounds_diagonal(self) -> float:
        lo, hi = self.bounds()
        return float(np.linalg.norm(hi - lo))


@dataclass
class Bvh:
    """Flat-array bounding volume hierarchy over a mesh's triangles."""

    node_min: np.ndarray
    node_max: np.ndarray
    node_child: np.ndarray   # (k,2) int32, -1 marks a leaf
    node_start: np.ndarray
    node_count: np.ndarray
    tri_order: np.ndarray    # element -> original triangle index
    p0: np.ndarray           # gathered triangle vertices, element order
    p1: np.ndarray
    p2: np.ndarray
    diagonal: float
    leaf_size: int = 4

    def arrays(self):
        return (self.node_min, self.node_max, self.node_child,
                self.node_start, self.node_count, self.p0, self.p1, self.p2)


def build_bvh(mesh: TriMesh, leaf_size: int = 4) -> Bvh:
    tris = mesh.triangles
    a = mesh.positions[tris[:, 0]]
    b = mesh.positions[tris[:, 1]]
    c = mesh.positions[tris[:, 2]]
    tri_lo = np.minimum(np.minimum(a, b), c)
    tri_hi = np.maximum(np.maximum(a, b), c)
    centroid = (a + b + c) / 3.0
    m = len(tris)
    order = np.arange(m, dtype=np.int32)

    node_min, node_max, node_child, node_start, node_count = [], [], [], [], []

    def new_node():
        node_min.append(None)
        node_max.append(None)
        node_child.append([-1, -1])
        node_start.append(0)
        node_count.append(0)
        return len(node_min) - 1

    # Iterative median split on the centroid's largest axis.
    root = new_node()
    stack = [(root, 0, m)]
    while stack:
        node, lo, hi = stack.pop()
        span = order[lo:hi]
        node_min[node] = tri_lo[span].min(axis=0)
        node_max[node] = tri_hi[span].max(axis=0)
        cmin = centroid[span].min(axis=0)
        cmax = centroid[span].max(axis=0)
        extent = cmax - cmin
        if hi - lo <= leaf_size or extent.max() <= 0.0:
            node_start[node] = lo
            node_count[node] = hi - lo
            continue
        axis = int(np.argmax(extent))
        mid = (hi - lo) // 2
        part = np.argpartition(centroid[span, axis], mid)
        order[lo:hi] = span[part]
        left = new_node()
        right = new_node()
        node_child[node] = [left, right]
        stack.append((left, lo, lo + mid))
        stack.append((right, lo + mid, hi))

    lo_b, hi_b = mesh.bounds()
    return Bvh(
        node_min=np.array(node_min, dtype=np.float64),
        node_max=np.array(node_max, dtype=np.float64),
        node_child=np.array(node_child, dtype=np.int32),
        node_start=np.array(node_start, dtype=np.int32),
        node_count=np.array(node_count, dtype=np.int32),
        tri_order=order,
        p0=np.ascontiguousarray(a[order]),
        p1=np.ascontiguousarray(b[order]),
        p2=np.ascontiguousarray(c[order]),
        diagonal=float(np.linalg.norm(hi_b - lo_b)),
        leaf_size=leaf_size,
    )


def occluded(bvh: Bvh, origin, direction, eps: float | None = None) -> bool:
    """True iff any triangle lies along the ray beyond a small offset.

    The origin is nudged eps along the direction (default 1e-4 x scene
    diagonal) so rays leaving a surface do not hit their own triangle.
    """
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    if eps is None:
        eps = RAY_EPS_SCALE * bvh.diagonal
    o = o + eps * d
    return bool(_kernels.bvh_any_hit(
        o[0], o[1], o[2], d[0], d[1], d[2], 0.0, 1e300, *bvh.arrays()))


@dataclass
class CameraFrame:
    """Orthographic frame: view -z, up +y, uniform pixels-per-unit scale."""

    width: int
    height: int
    scale: float        # pixels per world unit
    center_x: float     # world point mapped to image center
    center_y: float
    z_origin: float     # ray start depth, in front of the whole mesh

    def pixel_to_world(self, px: float, py: float) -> tuple[float, float]:
        wx = self.center_x + (px + 0.5 - self.width * 0.5) / self.scale
        wy = self.center_y + (self.height * 0.5 - (py + 0.5)) / self.scale
        return wx, wy


class GBuffer(NamedTuple):
    mask: MapImage
    normal: MapImage
    albedo: MapImage
    position: MapImage


def frame_camera(mesh: TriMesh, size: int = DEFAULT_SIZE,
                 padding: float = DEFAULT_PADDING) -> CameraFrame:
    """Frame the mesh so its vertical extent fills 1-2*padding of the image,
    horizontally centered. Falls back to width-fitting if the mesh is too
    wide for the square frame at that scale."""
    if not 0.0 <= padding <= 0.45:
        raise ValueError(f"padding must be in [0, 0.45], got {padding}")
    lo, hi = mesh.bounds()
    mesh_h = hi[1] - lo[1]
    if mesh_h <= 0.0:
        raise MeshError("mesh has zero vertical extent, cannot frame")
    scale = (1.0 - 2.0 * padding) * size / mesh_h
    mesh_w = hi[0] - lo[0]
    if mesh_w * scale > size:
        scale = size / mesh_w
    diag = float(np.linalg.norm(hi - lo))
    return CameraFrame(
        width=size,
        height=size,
        scale=float(scale),
        center_x=float((lo[0] + hi[0]) / 2.0),
        center_y=float((lo[1] + hi[1]) / 2.0),
        z_origin=float(hi[2] + 0.5 * diag + 1e-6),
    )


@dataclass
class Scene:
    """Mesh plus its acceleration structure and camera framing."""

    mesh: TriMesh
    bvh: Bvh
    camera: CameraFrame


def build_scene(mesh: TriMesh, size: int = DEFAULT_SIZE,
                padding: float = DEFAULT_PADDING) -> Scene:
    return Scene(mesh=mesh, bvh=build_bvh(mesh), camera=frame_camera(mesh, size, padding))


def rasterize_gbuffer(mesh: TriMesh, camera: CameraFrame,
                      bvh: Bvh | None = None) -> GBuffer:
    """Front-most surface per pixel center; zeros outside the silhouette."""
    if bvh is None:
        bvh = build_bvh(mesh)
    h, w = camera.height, camera.width
    out_mask = np.zeros((h, w), dtype=np.float32)
    out_normal = np.zeros((h, w, 3), dtype=np.float32)
    out_albedo = np.zeros((h, w, 3), dtype=np.float32)
    out_pos = np.zeros((h, w, 3), dtype=np.float32)
    has_tex = mesh.texture is not None
    corner_uv = mesh.corner_uvs if has_tex else np.zeros((1, 3, 2))
    corner_col = mesh.corner_colors if mesh.corner_colors is not None \
        else np.full((mesh.triangle_count, 3, 3), 0.75)
    tex = mesh.texture if has_tex else np.zeros((1, 1, 3), dtype=np.float32)
    _kernels.raster_kernel(
        w, h, camera.center_x, camera.center_y, camera.scale, camera.z_origin,
        *bvh.arrays(), bvh.tri_order,
        mesh.corner_normals, corner_col, corner_uv, tex, has_tex,
        out_mask, out_normal, out_albedo, out_pos)
    return GBuffer(
        mask=MapImage(out_mask, MapKind.MASK),
        normal=MapImage(out_normal, MapKind.NORMAL),
        albedo=MapImage(out_albedo, MapKind.ALBEDO),
        position=MapImage(out_pos, MapKind.RGB),
    )


# ---------------------------------------------------------------------------
# OBJ / MTL loading
# ---------------------------------------------------------------------------

def load_mesh(path) -> TriMesh:
    """Load an OBJ file, optionally with MTL diffuse color or texture.

    Missing normals are computed as area-weighted vertex normals; missing
    albedo defaults to constant 0.75 gray. Polygons are fan-triangulated.
    Non-manifold input is accepted.
    """
    path = Path(path)
    try:
        text = path.read_text(errors="replace")
    except OSError as exc:
        raise MeshError(f"cannot read mesh file {path}: {exc}") from exc

    positions: list[list[float]] = []
    vcolors: list[list[float]] = []
    normals: list[list[float]] = []
    uvs: list[list[float]] = []
    faces: list[tuple] = []   # ((vi, ti, ni) x3, material)
    materials: dict[str, dict] = {}
    current_mtl = None

    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        tag = parts[0]
        if tag == "v":
            positions.append([float(x) for x in parts[1:4]])
            vcolors.append([float(x) for x in parts[4:7]] if len(parts) >= 7 else None)
        elif tag == "vn":
            normals.append([float(x) for x in parts[1:4]])
        elif tag == "vt":
            uvs.append([float(x) for x in parts[1:3]])
        elif tag == "f":
            corners = [_parse_corner(tok, len(positions), len(uvs), len(normals))
                       for tok in parts[1:]]
            for k in range(1, len(corners) - 1):
                faces.append((corners[0], corners[k], corners[k + 1], current_mtl))
        elif tag == "mtllib":
            materials.update(_load_mtl(path.parent / " ".join(parts[1:])))
        elif tag == "usemtl":
            current_mtl = parts[1] if len(parts) > 1 else None
        # o/g/s and anything else are ignored

    if not faces:
        raise MeshError(f"{path.name}: no triangles")

    pos = np.asarray(positions, dtype=np.float64)
    tris = np.array([[f[0][0], f[1][0], f[2][0]] for f in faces], dtype=np.int32)

    corner_normals = _corner_normals(pos, tris, normals, faces)
    corner_colors, corner_uvs, texture = _corner_albedo(
        path, faces, vcolors, uvs, materials, tris)

    return TriMesh(
        positions=pos,
        triangles=tris,
        corner_normals=corner_normals,
        corner_colors=corner_colors,
        corner_uvs=corner_uvs,
        texture=texture,
    )


def _parse_corner(token: str, nv: int, nt: int, nn: int) -> tuple:
    """OBJ face corner 'v', 'v/t', 'v//n' or 'v/t/n'; 1-based, negatives wrap."""
    fields = token.split("/")
    vi = int(fields[0])
    vi = vi - 1 if vi > 0 else nv + vi
    ti = ni = -1
    if len(fields) > 1 and fields[1]:
        ti = int(fields[1])
        ti = ti - 1 if ti > 0 else nt + ti
    if len(fields) > 2 and fields[2]:
        ni = int(fields[2])
        ni = ni - 1 if ni > 0 else nn + ni
    return vi, ti, ni


def _corner_normals(pos, tris, normals, faces) -> np.ndarray:
    have_all = all(f[k][2] >= 0 for f in faces for k in range(3)) and normals
    if have_all:
        nrm = np.asarray(normals, dtype=np.float64)
        out = np.empty((len(faces), 3, 3))
        for i, f in enumerate(faces):
            for k in range(3):
                out[i, k] = nrm[f[k][2]]
    else:
        smooth = _vertex_normals(pos, tris)
        out = smooth[tris]
    lens = np.linalg.norm(out, axis=2, keepdims=True)
    return out / np.maximum(lens, 1e-12)


def _vertex_normals(pos: np.ndarray, tris: np.ndarray) -> np.ndarray:
    """Area-weighted vertex normals (the cross product carries the area)."""
    a, b, c = pos[tris[:, 0]], pos[tris[:, 1]], pos[tris[:, 2]]
    fn = np.cross(b - a, c - a)
    out = np.zeros_like(pos)
    for k in range(3):
        np.add.at(out, tris[:, k], fn)
    lens = np.linalg.norm(out, axis=1, keepdims=True)
    return out / np.maximum(lens, 1e-12)


def _corner_albedo(path, faces, vcolors, uvs, materials, tris):
    """Pick an albedo source: texture > per-vertex color > material Kd > gray."""
    from .maps import read_map, srgb_to_linear

    textured = {name: m for name, m in materials.items() if m.get("map_kd")}
    face_mtls = {f[3] for f in faces}
    uv_ok = all(f[k][1] >= 0 for f in faces for k in range(3)) and uvs
    if textured and uv_ok and face_mtls and all(m in textured for m in face_mtls):
        # single texture per mesh; the first referenced one wins
        tex_name = textured[next(iter(face_mtls))]["map_kd"]
        tex_path = path.parent / tex_name
        tex_img = read_map(tex_path, kind=MapKind.RGB)
        uv = np.asarray(uvs, dtype=np.float64)
        corner_uvs = np.empty((len(faces), 3, 2))
        for i, f in enumerate(faces):
            for k in range(3):
                corner_uvs[i, k] = uv[f[k][1]]
        return None, corner_uvs, tex_img.data

    if any(c is not None for c in vcolors):
        vc = np.array([c if c is not None else [0.75, 0.75, 0.75] for c in vcolors])
        return vc[tris], None, None

    if face_mtls and any(m in materials for m in face_mtls if m):
        out = np.empty((len(faces), 3, 3))
        for i, f in enumerate(faces):
            kd = materials.get(f[3], {}).get("kd", (0.75, 0.75, 0.75))
            out[i, :, :] = kd
        return out, None, None

    return np.full((len(faces), 3, 3), 0.75), None, None


def _load_mtl(path: Path) -> dict:
    materials: dict[str, dict] = {}
    current = None
    try:
        text = Path(path).read_text(errors="replace")
    except OSError:
        return materials
    for line in text.splitlines():
        parts = line.strip().split()
        if not parts:
            continue
        if parts[0] == "newmtl" and len(parts) > 1:
            current = parts[1]
            materials[current] = {}
        elif parts[0] == "Kd" and current and len(parts) >= 4:
            materials[current]["kd"] = tuple(float(x) for x in parts[1:4])
        elif parts[0] == "map_Kd" and current and len(parts) > 1:
            materials[current]["map_kd"] = " ".join(parts[1:])
    return materials
