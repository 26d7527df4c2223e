"""Raster containers and file formats for every map the pipeline produces.

Map kinds and channel counts:
    albedo (3), normal (3), transport (9), ao (1), shading (1 or 3),
    mask (1), rgb (3)

Supported containers:
    MAPB  custom 9-channel-capable float container (bit-exact, see below)
    PFM   1/3-channel float, rows bottom-to-top, scale -1.0 = little-endian
    PNG   8-bit, only for masks, albedo/relit previews and AO previews;
          sRGB-encoded on disk, linear in memory

MAPB layout, all little-endian:
    magic b"MAPB" | u32 version=1 | u32 width | u32 height | u32 channels
    | u8 kind tag | width*height*channels float32, row-major, top-to-bottom
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np

from .errors import DimensionError, FormatError

MAPB_MAGIC = b"MAPB"
MAPB_VERSION = 1


class MapKind(IntEnum):
    """Channel semantics of a map; the int value is the MAPB kind tag."""

    ALBEDO = 0
    NORMAL = 1
    TRANSPORT = 2
    AO = 3
    SHADING = 4
    MASK = 5
    RGB = 6


# Channel counts each kind accepts.
_KIND_CHANNELS = {
    MapKind.ALBEDO: (3,),
    MapKind.NORMAL: (3,),
    MapKind.TRANSPORT: (9,),
    MapKind.AO: (1,),
    MapKind.SHADING: (1, 3),
    MapKind.MASK: (1,),
    MapKind.RGB: (3,),
}

# Filename-stem keywords used to infer a kind when the container has no tag.
_NAME_HINTS = [
    ("mask", MapKind.MASK),
    ("albedo", MapKind.ALBEDO),
    ("normal", MapKind.NORMAL),
    ("transport", MapKind.TRANSPORT),
    ("shading", MapKind.SHADING),
    ("ao", MapKind.AO),
]


@dataclass
class MapImage:
    """W x H x C float32 raster in linear radiometric units.

    ``data`` has shape (height, width, channels), C-contiguous. Values are
    immutable by convention: operations return new instances.
    """

    data: np.ndarray
    kind: MapKind = MapKind.RGB

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise DimensionError(f"map data must be HxWxC, got shape {self.data.shape}")
        self.data = arr
        self.kind = MapKind(self.kind)
        if arr.shape[2] not in _KIND_CHANNELS[self.kind]:
            raise DimensionError(
                f"{self.kind.name} map expects {_KIND_CHANNELS[self.kind]} channels, "
                f"got {arr.shape[2]}"
            )

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def validate(self, mask: "MapImage | None" = None) -> None:
        """Check kind-specific invariants; raises FormatError on violation."""
        d = self.data
        if not np.all(np.isfinite(d)):
            raise FormatError(f"{self.kind.name} map contains non-finite samples")
        if self.kind == MapKind.MASK:
            if not np.all((d == 0.0) | (d == 1.0)):
                raise FormatError("mask samples must be exactly 0.0 or 1.0")
        elif self.kind == MapKind.AO:
            if d.min() < 0.0 or d.max() > 1.0:
                raise FormatError("AO samples must lie in [0, 1]")
        elif self.kind == MapKind.NORMAL and mask is not None:
            m = mask.data[:, :, 0] == 1.0
            norms = np.linalg.norm(d, axis=2)
            if m.any() and np.abs(norms[m] - 1.0).max() > 1e-4:
                raise FormatError("normals must be unit length where mask=1")
            if (~m).any() and np.abs(norms[~m]).max() != 0.0:
                raise FormatError("normals must be (0,0,0) where mask=0")

    def same_size(self, other: "MapImage") -> bool:
        return self.data.shape[:2] == other.data.shape[:2]


@dataclass
class ShLight:
    """Second-order SH illumination: 9 coefficients per RGB channel.

    Row order is i = l(l+1)+m for l in {0,1,2}; columns are R,G,B.
    """

    coeffs: np.ndarray
    id: str = ""

    def __post_init__(self):
        arr = np.asarray(self.coeffs, dtype=np.float64)
        if arr.shape == (9,):  # single-channel light, broadcast to gray
            arr = np.repeat(arr[:, None], 3, axis=1)
        if arr.shape != (9, 3):
            raise DimensionError(f"light coefficients must be 9x3, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise FormatError("light coefficients must be finite")
        self.coeffs = arr

    def scaled(self, s: float) -> "ShLight":
        return ShLight(self.coeffs * float(s), id=self.id)

    def to_dict(self) -> dict:
        return {"id": self.id, "coeffs": [[float(v) for v in row] for row in self.coeffs]}

    @classmethod
    def from_dict(cls, d: dict) -> "ShLight":
        return cls(np.asarray(d["coeffs"], dtype=np.float64), id=str(d.get("id", "")))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "ShLight":
        return cls.from_dict(json.loads(Path(path).read_text()))


def constant_light(radiance=1.0) -> ShLight:
    """SH projection of a constant environment: coefficient 0 = 2*sqrt(pi)*value."""
    rgb = np.broadcast_to(np.asarray(radiance, dtype=np.float64), (3,))
    coeffs = np.zeros((9, 3))
    coeffs[0] = 2.0 * np.sqrt(np.pi) * rgb
    return ShLight(coeffs, id="constant")


# ---------------------------------------------------------------------------
# sRGB transfer (PNG boundaries only; all internal math is linear)
# ---------------------------------------------------------------------------

def srgb_to_linear(s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=np.float64)
    return np.where(s <= 0.04045, s / 12.92, ((s + 0.055) / 1.055) ** 2.4)


def linear_to_srgb(lin: np.ndarray) -> np.ndarray:
    lin = np.clip(np.asarray(lin, dtype=np.float64), 0.0, 1.0)
    return np.where(lin <= 0.0031308, lin * 12.92, 1.055 * lin ** (1 / 2.4) - 0.055)


# ---------------------------------------------------------------------------
# Read / write
# ---------------------------------------------------------------------------

def _infer_kind(path: Path, channels: int) -> MapKind:
    stem = path.stem.lower()
    for key, kind in _NAME_HINTS:
        if key in stem and channels in _KIND_CHANNELS[kind]:
            return kind
    if channels == 9:
        return MapKind.TRANSPORT
    if channels == 1:
        # PNG carries masks; float containers carry scalar shading/AO data.
        return MapKind.MASK if path.suffix.lower() == ".png" else MapKind.SHADING
    return MapKind.RGB


def read_map(path, kind: MapKind | None = None) -> MapImage:
    """Read a map from MAPB/PFM/PNG, inferring kind when not given.

    PNG values are decoded sRGB->linear except for masks, which threshold
    at 0.5 to exact {0.0, 1.0}.
    """
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".mapb":
        img = _read_mapb(path)
        if kind is not None and MapKind(kind) != img.kind:
            img = MapImage(img.data, MapKind(kind))
        return img
    if suffix == ".pfm":
        data = _read_pfm(path)
        k = MapKind(kind) if kind is not None else _infer_kind(path, data.shape[2])
        return MapImage(data, k)
    if suffix == ".png":
        return _read_png(path, kind)
    raise FormatError(f"unsupported map container: {path.name}")


def write_map(img: MapImage, path) -> None:
    """Serialize a map; deterministic, byte-exact for float containers."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".mapb":
        _write_mapb(img, path)
    elif suffix == ".pfm":
        if img.channels not in (1, 3):
            raise FormatError(f"PFM supports 1 or 3 channels, not {img.channels}")
        _write_pfm(img.data, path)
    elif suffix == ".png":
        _write_png(img, path)
    else:
        raise FormatError(f"unsupported map container: {path.name}")


def apply_mask(img: MapImage, mask: MapImage) -> MapImage:
    """Multiply every channel by the binary mask; out-of-mask pixels become 0."""
    if not img.same_size(mask):
        raise DimensionError(
            f"map is {img.width}x{img.height} but mask is {mask.width}x{mask.height}"
        )
    if mask.kind != MapKind.MASK:
        raise DimensionError(f"second argument must be a mask, got {mask.kind.name}")
    return MapImage(img.data * mask.data, img.kind)


# ---------------------------------------------------------------------------
# MAPB
# ---------------------------------------------------------------------------

_MAPB_HEADER = struct.Struct("<4sIIIIB")


def _write_mapb(img: MapImage, path: Path) -> None:
    header = _MAPB_HEADER.pack(
        MAPB_MAGIC, MAPB_VERSION, img.width, img.height, img.channels, int(img.kind)
    )
    payload = np.ascontiguousarray(img.data, dtype="<f4").tobytes()
    path.write_bytes(header + payload)


def _read_mapb(path: Path) -> MapImage:
    raw = path.read_bytes()
    if len(raw) < _MAPB_HEADER.size:
        raise FormatError(f"{path.name}: truncated MAPB header")
    magic, version, width, height, channels, tag = _MAPB_HEADER.unpack_from(raw)
    if magic != MAPB_MAGIC:
        raise FormatError(f"{path.name}: bad magic {magic!r}")
    if version != MAPB_VERSION:
        raise FormatError(f"{path.name}: unsupported MAPB version {version}")
    try:
        kind = MapKind(tag)
    except ValueError:
        raise FormatError(f"{path.name}: unknown kind tag {tag}") from None
    if channels not in _KIND_CHANNELS[kind]:
        raise FormatError(
            f"{path.name}: {channels} channels inconsistent with kind {kind.name}"
        )
    expected = width * height * channels * 4
    body = raw[_MAPB_HEADER.size:]
    if len(body) != expected:
        raise FormatError(
            f"{path.name}: payload is {len(body)} bytes, expected {expected}"
        )
    data = np.frombuffer(body, dtype="<f4").reshape(height, width, channels)
    return MapImage(data.copy(), kind)


# ---------------------------------------------------------------------------
# PFM (rows stored bottom-to-top per the format spec)
# ---------------------------------------------------------------------------

def _write_pfm(data: np.ndarray, path: Path) -> None:
    h, w, c = data.shape
    ident = b"PF" if c == 3 else b"Pf"
    header = ident + b"\n" + f"{w} {h}\n".encode() + b"-1.0\n"
    flipped = np.ascontiguousarray(data[::-1], dtype="<f4")
    if c == 1:
        flipped = flipped[:, :, 0]
    path.write_bytes(header + flipped.tobytes())


def _read_pfm(path: Path) -> np.ndarray:
    with open(path, "rb") as f:
        ident = _read_token(f)
        if ident == b"PF":
            channels = 3
        elif ident == b"Pf":
            channels = 1
        else:
            raise FormatError(f"{path.name}: not a PFM file (header {ident!r})")
        try:
            width = int(_read_token(f))
            height = int(_read_token(f))
            scale = float(_read_token(f))
        except ValueError:
            raise FormatError(f"{path.name}: malformed PFM header") from None
        dtype = "<f4" if scale < 0 else ">f4"
        count = width * height * channels
        body = f.read(count * 4)
        if len(body) != count * 4:
            raise FormatError(f"{path.name}: truncated PFM payload")
    data = np.frombuffer(body, dtype=dtype).reshape(height, width, channels)
    return data[::-1].astype(np.float32)


def _read_token(f) -> bytes:
    """Read one whitespace-delimited PFM header token."""
    tok = b""
    while True:
        ch = f.read(1)
        if not ch:
            raise FormatError("unexpected end of PFM header")
        if ch.isspace():
            if tok:
                return tok
            continue
        tok += ch


# ---------------------------------------------------------------------------
# PNG (8-bit; display-referred on disk)
# ---------------------------------------------------------------------------

def _write_png(img: MapImage, path: Path) -> None:
    from PIL import Image

    if img.kind in (MapKind.TRANSPORT, MapKind.NORMAL):
        raise FormatError(f"cannot write {img.kind.name} ({img.channels}ch) map to PNG")
    if img.kind == MapKind.MASK:
        buf = (img.data[:, :, 0] >= 0.5).astype(np.uint8) * 255
        Image.fromarray(buf, mode="L").save(path)
        return
    encoded = np.round(linear_to_srgb(img.data) * 255.0).astype(np.uint8)
    if img.channels == 1:
        Image.fromarray(encoded[:, :, 0], mode="L").save(path)
    else:
        Image.fromarray(encoded, mode="RGB").save(path)


def _read_png(path: Path, kind: MapKind | None) -> MapImage:
    from PIL import Image

    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB" if len(im.getbands()) >= 3 else "L")
        arr = np.asarray(im, dtype=np.uint8)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    k = MapKind(kind) if kind is not None else _infer_kind(path, arr.shape[2])
    if arr.shape[2] not in _KIND_CHANNELS[k]:
        raise FormatError(
            f"{path.name}: {arr.shape[2]} channels inconsistent with kind {k.name}"
        )
    if k == MapKind.MASK:
        data = (arr[:, :, :1] >= 128).astype(np.float32)
    else:
        data = srgb_to_linear(arr / 255.0).astype(np.float32)
    return MapImage(data, k)
