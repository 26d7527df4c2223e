"""Forward composition (albedo * transport.light), sweeps, light transfer.

Relighting is a pure streaming pass: nine multiply-adds per pixel per
channel, so a 1024x1024 image composes in tens of milliseconds. Negative
dot products are kept in float outputs; clamping happens only at PNG
encoding.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError
from .maps import MapImage, MapKind, ShLight, read_map, write_map


def shade_map(transport: MapImage, light: ShLight, mask: MapImage) -> MapImage:
    """Per-pixel per-channel dot product; zero outside the mask."""
    if not (transport.same_size(mask)):
        raise DimensionError(
            f"transport is {transport.width}x{transport.height} but mask is "
            f"{mask.width}x{mask.height}")
    coeffs = np.ascontiguousarray(light.coeffs, dtype=np.float32)
    h, w = transport.height, transport.width
    out = transport.data.reshape(h * w, 9) @ coeffs
    out = out.reshape(h, w, 3) * mask.data
    return MapImage(out, MapKind.SHADING)


def compose(albedo: MapImage, shading: MapImage, mask: MapImage) -> MapImage:
    """Element-wise product of albedo and shading, masked."""
    if not (albedo.same_size(shading) and albedo.same_size(mask)):
        raise DimensionError(
            f"albedo {albedo.width}x{albedo.height}, shading "
            f"{shading.width}x{shading.height}, mask {mask.width}x{mask.height} "
            "must all agree")
    return MapImage(albedo.data * shading.data * mask.data, MapKind.RGB)


def relight(albedo_path, transport_path, mask_path, light: ShLight, out_path,
            encoding: str | None = None) -> None:
    """Compose a relit image from map files and write it.

    encoding: "srgb-png" (clamped, display-referred) or "linear-pfm";
    inferred from the output extension when omitted.
    """
    albedo = read_map(albedo_path, kind=MapKind.ALBEDO)
    transport = read_map(transport_path, kind=MapKind.TRANSPORT)
    mask = read_map(mask_path, kind=MapKind.MASK)
    img = compose(albedo, shade_map(transport, light, mask), mask)
    out_path = Path(out_path)
    if encoding is None:
        encoding = "srgb-png" if out_path.suffix.lower() == ".png" else "linear-pfm"
    if encoding == "srgb-png":
        write_map(img, out_path.with_suffix(".png"))
    elif encoding == "linear-pfm":
        write_map(MapImage(img.data, MapKind.SHADING), out_path.with_suffix(".pfm"))
    else:
        raise ValueError(f"unknown encoding {encoding!r}")


@dataclass
class Decomposition:
    """One image's factorization: albedo, transport, mask and light."""

    albedo: MapImage
    transport: MapImage
    mask: MapImage
    light: ShLight

    def check(self) -> None:
        if not (self.albedo.same_size(self.transport)
                and self.albedo.same_size(self.mask)):
            raise DimensionError("decomposition maps disagree in size")

    def render(self, light: ShLight | None = None) -> MapImage:
        light = self.light if light is None else light
        return compose(self.albedo, shade_map(self.transport, light, self.mask),
                       self.mask)


def transfer_light(a: Decomposition, b: Decomposition) -> tuple[MapImage, MapImage]:
    """Render each decomposition under the other's light."""
    a.check()
    b.check()
    return a.render(b.light), b.render(a.light)


def rotate_light_y(light: ShLight, degrees: float) -> ShLight:
    """Rotate the light field about +y by the given angle.

    Uses the closed-form block-diagonal real-SH rotation: band 0 identity,
    band 1 mixes the (z, x) terms, band 2 mixes (xy, yz) and
    (3z^2-1, xz, x^2-y^2) groups. Band L2 norms are preserved.
    """
    a = np.deg2rad(degrees)
    c, s = np.cos(a), np.sin(a)
    r3 = np.sqrt(3.0)
    m = np.zeros((9, 9))
    m[0, 0] = 1.0
    m[1, 1] = 1.0                    # y term is invariant
    m[2, 2], m[2, 3] = c, -s         # z' row
    m[3, 2], m[3, 3] = s, c          # x' row
    m[4, 4], m[4, 5] = c, s
    m[5, 4], m[5, 5] = -s, c
    m[6, 6], m[6, 7], m[6, 8] = c * c - s * s / 2.0, -r3 * s * c, r3 / 2.0 * s * s
    m[7, 6], m[7, 7], m[7, 8] = r3 * s * c, c * c - s * s, -s * c
    m[8, 6], m[8, 7], m[8, 8] = r3 / 2.0 * s * s, s * c, (1.0 + c * c) / 2.0
    return ShLight(m @ light.coeffs, id=light.id)


def sweep(albedo: MapImage, transport: MapImage, mask: MapImage, light: ShLight,
          out_dir, frames: int = 36, step_degrees: float = 10.0,
          encoding: str = "srgb-png") -> list[Path]:
    """Write a turntable of relit frames under a rotating light."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    suffix = ".png" if encoding == "srgb-png" else ".pfm"
    paths = []
    for k in range(frames):
        lit = rotate_light_y(light, step_degrees * k)
        img = compose(albedo, shade_map(transport, lit, mask), mask)
        path = out_dir / f"frame_{k:03d}{suffix}"
        if encoding == "srgb-png":
            write_map(img, path)
        else:
            write_map(MapImage(img.data, MapKind.SHADING), path)
        paths.append(path)
    return paths
