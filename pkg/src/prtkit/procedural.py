"""Procedural demo geometry and environment maps.

The demo pipeline cannot ship scanned human figures, so it uses a sphere
(convex, self-unoccluded), a 90-degree wedge (the canonical half-blocked
test case), and a crude capsule figure with armpit and crotch concavities.
"""

from __future__ import annotations

import numpy as np

from .scene import TriMesh


def merge_meshes(meshes: list[TriMesh]) -> TriMesh:
    """Concatenate meshes into one triangle soup."""
    offsets = np.cumsum([0] + [len(m.positions) for m in meshes[:-1]])
    positions = np.vstack([m.positions for m in meshes])
    triangles = np.vstack([m.triangles + off for m, off in zip(meshes, offsets)])
    corner_normals = np.vstack([m.corner_normals for m in meshes])
    colors = np.vstack([
        m.corner_colors if m.corner_colors is not None
        else np.full((m.triangle_count, 3, 3), 0.75)
        for m in meshes
    ])
    return TriMesh(positions, triangles, corner_normals, corner_colors=colors)


def quad_mesh(p00, p10, p11, p01, color=None) -> TriMesh:
    """Two triangles spanning a quad; normal follows the CCW winding."""
    pos = np.array([p00, p10, p11, p01], dtype=np.float64)
    tris = np.array([[0, 1, 2], [0, 2, 3]], dtype=np.int32)
    n = np.cross(pos[1] - pos[0], pos[3] - pos[0])
    n = n / np.linalg.norm(n)
    corner_normals = np.tile(n, (2, 3, 1))
    colors = None if color is None else np.tile(np.asarray(color, float), (2, 3, 1))
    return TriMesh(pos, tris, corner_normals, corner_colors=colors)


def sphere_mesh(radius=1.0, center=(0.0, 0.0, 0.0), rings=32, segments=64) -> TriMesh:
    """UV sphere with exact per-vertex normals."""
    center = np.asarray(center, dtype=np.float64)
    vs, ns = [], []
    for i in range(rings + 1):
        theta = np.pi * i / rings
        for j in range(segments):
            phi = 2.0 * np.pi * j / segments
            n = np.array([np.sin(theta) * np.cos(phi),
                          np.cos(theta),
                          np.sin(theta) * np.sin(phi)])
            ns.append(n)
            vs.append(center + radius * n)
    tris = []
    for i in range(rings):
        for j in range(segments):
            a = i * segments + j
            b = i * segments + (j + 1) % segments
            c = (i + 1) * segments + j
            d = (i + 1) * segments + (j + 1) % segments
            if i > 0:
                tris.append([a, b, c])
            if i < rings - 1:
                tris.append([b, d, c])
    pos = np.asarray(vs)
    tri = np.asarray(tris, dtype=np.int32)
    nrm = np.asarray(ns)
    return TriMesh(pos, tri, nrm[tri])


def wedge_mesh(size=20.0, tilt_deg=0.0) -> TriMesh:
    """Two large perpendicular quads meeting along the x axis.

    Untilted: floor in the z=0 plane (normal +z) over y in [-size, 0], wall
    in the y=0 plane (normal -y) over z in [0, size]. A point on the floor
    near the corner sees exactly half its cosine-weighted hemisphere.
    tilt_deg rotates about x; -45 turns the groove toward a -z-looking camera.
    """
    s = float(size)
    floor = quad_mesh([-s, -s, 0], [s, -s, 0], [s, 0, 0], [-s, 0, 0])
    wall = quad_mesh([-s, 0, s], [s, 0, s], [s, 0, 0], [-s, 0, 0])
    mesh = merge_meshes([floor, wall])
    if tilt_deg:
        a = np.deg2rad(tilt_deg)
        rot = np.array([[1, 0, 0],
                        [0, np.cos(a), -np.sin(a)],
                        [0, np.sin(a), np.cos(a)]])
        mesh = TriMesh(mesh.positions @ rot.T, mesh.triangles,
                       mesh.corner_normals @ rot.T, corner_colors=mesh.corner_colors)
    return mesh


def capsule_mesh(p0, p1, radius, segments=24, rings=8) -> TriMesh:
    """Capsule from p0 to p1 with hemispherical caps and exact normals."""
    p0 = np.asarray(p0, dtype=np.float64)
    p1 = np.asarray(p1, dtype=np.float64)
    axis = p1 - p0
    h = np.linalg.norm(axis)
    w = axis / h
    # any stable orthonormal frame around w
    up = np.array([1.0, 0.0, 0.0]) if abs(w[1]) > 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(up, w)
    u /= np.linalg.norm(u)
    v = np.cross(w, u)

    rows = []  # (z offset along axis, ring radius, normal z component)
    for i in range(rings + 1):
        a = -np.pi / 2 + (np.pi / 2) * i / rings
        rows.append((radius * np.sin(a), radius * np.cos(a), np.sin(a)))
    for i in range(rings + 1):
        a = (np.pi / 2) * i / rings
        rows.append((h + radius * np.sin(a), radius * np.cos(a), np.sin(a)))

    vs, ns = [], []
    for z, r, nz in rows:
        for j in range(segments):
            phi = 2.0 * np.pi * j / segments
            radial = np.cos(phi) * u + np.sin(phi) * v
            vs.append(p0 + z * w + r * radial)
            nrm = np.sqrt(max(0.0, 1.0 - nz * nz)) * radial + nz * w
            ns.append(nrm / np.linalg.norm(nrm))
    tris = []
    nrows = len(rows)
    for i in range(nrows - 1):
        for j in range(segments):
            a = i * segments + j
            b = i * segments + (j + 1) % segments
            c = (i + 1) * segments + j
            d = (i + 1) * segments + (j + 1) % segments
            if rows[i][1] > 1e-12:
                tris.append([a, b, d])
            if rows[i + 1][1] > 1e-12:
                tris.append([a, d, c])
    pos = np.asarray(vs)
    tri = np.asarray(tris, dtype=np.int32)
    nrm = np.asarray(ns)
    return TriMesh(pos, tri, nrm[tri])


def figure_mesh(detail=1.0) -> TriMesh:
    """Crude standing humanoid from capsules: torso, head, arms, legs.

    The armpits and crotch give genuine self-occlusion. detail scales the
    tessellation; detail=1 is about 7k triangles, detail=5 about 116k.
    """
    seg = max(8, int(round(24 * detail)))
    rng = max(4, int(round(8 * detail)))
    parts = [
        capsule_mesh((-0.11, 0.09, 0.0), (-0.13, 0.95, 0.0), 0.09, seg, rng),   # legs
        capsule_mesh((0.11, 0.09, 0.0), (0.13, 0.95, 0.0), 0.09, seg, rng),
        capsule_mesh((0.0, 0.92, 0.0), (0.0, 1.42, 0.0), 0.17, seg, rng),       # torso
        capsule_mesh((-0.30, 0.88, 0.0), (-0.21, 1.36, 0.0), 0.06, seg, rng),   # arms
        capsule_mesh((0.30, 0.88, 0.0), (0.21, 1.36, 0.0), 0.06, seg, rng),
        sphere_mesh(0.12, (0.0, 1.66, 0.0), rings=2 * rng, segments=seg),       # head
    ]
    return merge_meshes(parts)


def cube_mesh(size=1.0, center=(0.0, 0.0, 0.0)) -> TriMesh:
    """Axis-aligned cube, 12 triangles, flat face normals."""
    c = np.asarray(center, dtype=np.float64)
    s = size / 2.0
    quads = [
        ([-s, -s, s], [s, -s, s], [s, s, s], [-s, s, s]),      # +z
        ([s, -s, -s], [-s, -s, -s], [-s, s, -s], [s, s, -s]),  # -z
        ([s, -s, s], [s, -s, -s], [s, s, -s], [s, s, s]),      # +x
        ([-s, -s, -s], [-s, -s, s], [-s, s, s], [-s, s, -s]),  # -x
        ([-s, s, s], [s, s, s], [s, s, -s], [-s, s, -s]),      # +y
        ([-s, -s, -s], [s, -s, -s], [s, -s, s], [-s, -s, s]),  # -y
    ]
    return merge_meshes([
        quad_mesh(np.add(a, c), np.add(b, c), np.add(d, c), np.add(e, c))
        for a, b, d, e in quads
    ])


# ---------------------------------------------------------------------------
# Procedural environment maps (linear radiance, equirectangular)
# ---------------------------------------------------------------------------

def _equirect_dirs(width: int, height: int) -> np.ndarray:
    """Unit direction per pixel center: theta from +y, center column at +z."""
    v = (np.arange(height) + 0.5) / height
    u = (np.arange(width) + 0.5) / width
    theta = np.pi * v[:, None]
    phi = 2.0 * np.pi * u[None, :]
    sin_t = np.sin(theta)
    return np.stack([
        np.broadcast_to(sin_t * np.sin(phi), (height, width)),
        np.broadcast_to(np.cos(theta), (height, width)),
        np.broadcast_to(-sin_t * np.cos(phi), (height, width)),
    ], axis=-1)


def lobe_env(width=256, ambient=(0.3, 0.3, 0.3), gradient=(0.2, 0.2, 0.2),
             sun_dir=(0.0, 0.6, 0.8), sun_color=(1.2, 1.1, 0.9), sun_power=2):
    """Smooth panorama: ambient + vertical gradient + clamped-cosine^n lobe.

    Low-frequency by construction, so a 9-coefficient SH projection captures
    nearly all of its irradiance.
    """
    height = width // 2
    d = _equirect_dirs(width, height)
    s = np.asarray(sun_dir, dtype=np.float64)
    s = s / np.linalg.norm(s)
    lobe = np.maximum(d @ s, 0.0) ** sun_power
    up = 0.5 + 0.5 * d[:, :, 1]
    out = (np.asarray(ambient)[None, None, :]
           + np.asarray(gradient)[None, None, :] * up[:, :, None]
           + np.asarray(sun_color)[None, None, :] * lobe[:, :, None])
    return out.astype(np.float32)


def curated_envs(width=256) -> dict[str, np.ndarray]:
    """Three smooth panoramas used by the demo and reference comparisons."""
    return {
        "meadow": lobe_env(width, ambient=(0.26, 0.28, 0.30),
                           gradient=(0.22, 0.24, 0.20),
                           sun_dir=(0.4, 0.55, 0.73), sun_color=(1.3, 1.15, 0.85)),
        "sunset": lobe_env(width, ambient=(0.24, 0.20, 0.18),
                           gradient=(0.10, 0.10, 0.14),
                           sun_dir=(0.55, 0.18, 0.82), sun_color=(1.5, 0.95, 0.55)),
        "studio": lobe_env(width, ambient=(0.30, 0.30, 0.32),
                           gradient=(0.16, 0.16, 0.16),
                           sun_dir=(0.0, 0.75, 0.66), sun_color=(0.9, 0.9, 0.96)),
    }
