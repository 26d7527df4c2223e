"""Illumination dataset pipeline: HDR panoramas to curated SH light sets.

Steps mirror the dataset recipe: project panoramas to 9x3 SH, reject dark
environments (reference brightness < 0.2), scale the rest into a target
brightness band, augment with azimuth rotations (exact column shifts),
deduplicate with k-means over the 27-dim coefficient vectors, drop
back-lights and over-contrasty lights with numeric heuristics, and split
train/test with a fixed seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import sh
from .errors import FormatError
from .maps import ShLight

REC709 = np.array([0.2126, 0.7152, 0.0722])

BRIGHT_REJECT = 0.2
BRIGHT_LOW = 0.7
BRIGHT_HIGH = 0.9
BACKLIGHT_RATIO_MAX = 2.0
CONTRAST_MAX = 10.0


@dataclass
class EnvMap:
    """Equirectangular HDR radiance panorama, linear float32 RGB."""

    radiance: np.ndarray
    name: str = ""

    def __post_init__(self):
        arr = np.ascontiguousarray(self.radiance, dtype=np.float32)
        if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise FormatError(f"panorama must be HxWx3, got {arr.shape}")
        if not np.all(np.isfinite(arr)) or arr.min() < 0.0:
            raise FormatError("panorama radiance must be finite and >= 0")
        self.radiance = arr

    @property
    def width(self) -> int:
        return self.radiance.shape[1]

    @property
    def height(self) -> int:
        return self.radiance.shape[0]

    def scaled(self, s: float) -> "EnvMap":
        return EnvMap(self.radiance * np.float32(s), name=self.name)


# ---------------------------------------------------------------------------
# Projection
# ---------------------------------------------------------------------------

def env_to_sh(env: EnvMap) -> ShLight:
    """Project the panorama onto the 9 SH bases.

    Pixel (row v, col u) maps to theta = pi (v+.5)/H from +y and
    phi = 2 pi (u+.5)/W with direction (sin t sin p, cos t, -sin t cos p),
    i.e. the image's center column looks toward +z (the viewer); solid
    angle per pixel is (2 pi / W)(pi / H) sin theta.
    """
    h, w = env.height, env.width
    v = (np.arange(h) + 0.5) / h
    u = (np.arange(w) + 0.5) / w
    theta = np.pi * v
    phi = 2.0 * np.pi * u
    sin_t = np.sin(theta)
    # row-dependent pieces of the basis; column-dependent trig
    cos_p, sin_p = np.cos(phi), np.sin(phi)
    x = sin_t[:, None] * sin_p[None, :]
    y = np.broadcast_to(np.cos(theta)[:, None], (h, w))
    z = -sin_t[:, None] * cos_p[None, :]
    basis = np.empty((h, w, 9))
    basis[..., 0] = sh.C0
    basis[..., 1] = sh.C1 * y
    basis[..., 2] = sh.C1 * z
    basis[..., 3] = sh.C1 * x
    basis[..., 4] = sh.C2A * x * y
    basis[..., 5] = sh.C2A * y * z
    basis[..., 6] = sh.C2B * (3.0 * z * z - 1.0)
    basis[..., 7] = sh.C2A * x * z
    basis[..., 8] = sh.C2C * (x * x - y * y)
    domega = (2.0 * np.pi / w) * (np.pi / h) * sin_t  # per row
    weighted = env.radiance.astype(np.float64) * domega[:, None, None]
    coeffs = np.einsum("hwc,hwi->ic", weighted, basis)
    return ShLight(coeffs, id=env.name)


def reference_brightness(light: ShLight) -> float:
    """Luminance of the front-facing unshadowed shading divided by pi,
    so a unit-radiance constant environment scores exactly 1."""
    rgb = sh.shade(sh.analytic_transport((0.0, 0.0, 1.0)), light)
    return float(rgb @ REC709 / np.pi)


def normalize_brightness(light: ShLight, low: float = BRIGHT_LOW,
                         high: float = BRIGHT_HIGH,
                         reject_below: float = BRIGHT_REJECT) -> ShLight | None:
    """Reject dark lights; scale out-of-band ones to the band midpoint.

    Returns None for rejected lights (rejection is a result, not an error).
    """
    if low >= high:
        raise ValueError("low must be below high")
    b = reference_brightness(light)
    if b < reject_below:
        return None
    if low <= b <= high:
        return light
    return light.scaled((low + high) / 2.0 / b)


# ---------------------------------------------------------------------------
# Rotation augmentation (exact azimuth column shift)
# ---------------------------------------------------------------------------

def rotate_env(env: EnvMap, degrees: float) -> EnvMap:
    """Rotate the panorama about the vertical axis by the given angle.

    A feature at azimuth phi moves to phi + degrees (right-handed about +y,
    matching rotate_light_y on the projected coefficients). Exact column
    permutation when the shift is integral; bilinear column resample
    otherwise.
    """
    w = env.width
    shift = degrees / 360.0 * w
    k = int(round(shift))
    if abs(shift - k) < 1e-9:
        data = np.roll(env.radiance, -k, axis=1)
    else:
        base = int(np.floor(shift))
        frac = shift - base
        lo = np.roll(env.radiance, -base, axis=1)
        hi = np.roll(env.radiance, -(base + 1), axis=1)
        data = (1.0 - frac) * lo + frac * hi
    return EnvMap(data.astype(np.float32), name=env.name)


def rotate_augment(env: EnvMap, count: int = 35, step_degrees: float = 10.0) -> list[EnvMap]:
    """count rotated copies at multiples of step_degrees; original excluded."""
    return [rotate_env(env, step_degrees * (k + 1)) for k in range(count)]


# ---------------------------------------------------------------------------
# Deduplication, filtering, split
# ---------------------------------------------------------------------------

@dataclass
class LightSet:
    """Curated lights with a disjoint train/test split and provenance."""

    lights: list[ShLight]
    train: list[str]
    test: list[str]
    provenance: dict[str, dict] = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        ids = [l.id for l in self.lights]
        if len(set(ids)) != len(ids):
            raise FormatError("light ids must be unique")
        split = self.train + self.test
        if sorted(split) != sorted(ids) or set(self.train) & set(self.test):
            raise FormatError("train/test must partition the light ids")

    def get(self, light_id: str) -> ShLight:
        for l in self.lights:
            if l.id == light_id:
                return l
        raise KeyError(light_id)

    def to_json_dict(self) -> dict:
        return {
            "lights": [
                {
                    "id": l.id,
                    "coeffs": [[float(v) for v in row] for row in l.coeffs],
                    "source": self.provenance.get(l.id, {}).get("source", ""),
                    "rotation_deg": self.provenance.get(l.id, {}).get("rotation_deg", 0.0),
                }
                for l in self.lights
            ],
            "train": list(self.train),
            "test": list(self.test),
            "config": self.config,
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "LightSet":
        d = json.loads(Path(path).read_text())
        lights = [ShLight(np.asarray(e["coeffs"]), id=e["id"]) for e in d["lights"]]
        prov = {e["id"]: {"source": e.get("source", ""),
                          "rotation_deg": e.get("rotation_deg", 0.0)}
                for e in d["lights"]}
        return cls(lights=lights, train=list(d["train"]), test=list(d["test"]),
                   provenance=prov, config=d.get("config", {}))


def _kmeans(points: np.ndarray, k: int, seed: int, iters: int = 100) -> np.ndarray:
    """Plain k-means with k-means++ seeding; returns centroids (k, dim)."""
    rng = np.random.default_rng(seed)
    n = len(points)
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    d2 = np.sum((points - centers[0]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            centers[i:] = points[rng.integers(n, size=k - i)]
            break
        centers[i] = points[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, np.sum((points - centers[i]) ** 2, axis=1))
    assign = np.zeros(n, dtype=np.int64)
    for _ in range(iters):
        dist = np.sum((points[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        new_assign = dist.argmin(axis=1)
        if np.array_equal(new_assign, assign) and _ > 0:
            break
        assign = new_assign
        for c in range(k):
            members = points[assign == c]
            if len(members):
                centers[c] = members.mean(axis=0)
    return centers


def backlight_ratio(light: ShLight) -> float:
    """Luminance of back-facing over front-facing unshadowed shading."""
    front = sh.shade(sh.analytic_transport((0.0, 0.0, 1.0)), light) @ REC709
    back = sh.shade(sh.analytic_transport((0.0, 0.0, -1.0)), light) @ REC709
    if front <= 1e-12:
        return np.inf
    return float(back / front)


_GRID = np.array([
    [i, j, k]
    for i in (-1, 0, 1) for j in (-1, 0, 1) for k in (-1, 0, 1)
    if (i, j, k) != (0, 0, 0)
], dtype=np.float64)
SPHERE_26 = _GRID / np.linalg.norm(_GRID, axis=1, keepdims=True)


def shading_contrast(light: ShLight) -> float:
    """Max/min shading luminance over the 26 grid directions; infinite when
    the SH shading dips to zero or below anywhere."""
    lum = np.array([
        sh.shade(sh.analytic_transport(n), light) @ REC709 for n in SPHERE_26
    ])
    if lum.min() <= 0.0:
        return np.inf
    return float(lum.max() / lum.min())


def dedup_and_filter(lights: list[ShLight], clusters: int = 50, seed: int = 7,
                     provenance: dict[str, dict] | None = None,
                     backlight_max: float = BACKLIGHT_RATIO_MAX,
                     contrast_max: float = CONTRAST_MAX) -> LightSet:
    """k-means dedup + heuristic filters + seeded train/test split.

    Keeps the light nearest each k-means centroid, then drops back-lights
    (ratio > backlight_max) and harsh lights (contrast > contrast_max).
    Exactly 50 survivors split 40/10; otherwise an 80/20 split.
    """
    if clusters > len(lights):
        raise ValueError(f"{clusters} clusters but only {len(lights)} lights")
    points = np.stack([l.coeffs.reshape(27) for l in lights])
    centers = _kmeans(points, clusters, seed=seed)
    picked: list[ShLight] = []
    seen: set[str] = set()
    for c in centers:
        idx = int(np.argmin(np.sum((points - c) ** 2, axis=1)))
        light = lights[idx]
        if light.id not in seen:
            seen.add(light.id)
            picked.append(light)

    survivors = [l for l in picked
                 if backlight_ratio(l) <= backlight_max
                 and shading_contrast(l) <= contrast_max]

    rng = np.random.default_rng(seed)
    order = list(rng.permutation(len(survivors)))
    n = len(survivors)
    n_test = 10 if n == 50 else (min(max(1, round(0.2 * n)), n - 1) if n >= 2 else 0)
    test_ids = [survivors[i].id for i in order[:n_test]]
    train_ids = [survivors[i].id for i in order[n_test:]]
    prov = {l.id: (provenance or {}).get(l.id, {}) for l in survivors}
    return LightSet(
        lights=survivors,
        train=sorted(train_ids),
        test=sorted(test_ids),
        provenance=prov,
        config={
            "clusters": clusters,
            "seed": seed,
            "backlight_max": backlight_max,
            "contrast_max": contrast_max,
        },
    )


def curate_lights(envs: list[EnvMap], rotations: int = 35, step_degrees: float = 10.0,
                  clusters: int = 50, seed: int = 7,
                  reject_below: float = BRIGHT_REJECT,
                  low: float = BRIGHT_LOW, high: float = BRIGHT_HIGH) -> LightSet:
    """Full pipeline from panoramas to a curated, split light set."""
    pool: list[ShLight] = []
    provenance: dict[str, dict] = {}
    for env in envs:
        b = reference_brightness(env_to_sh(env))
        if b < reject_below:
            continue
        scale = 1.0 if low <= b <= high else (low + high) / 2.0 / b
        scaled_env = env.scaled(scale)
        for k in range(rotations + 1):
            deg = step_degrees * k
            rotated = rotate_env(scaled_env, deg) if k else scaled_env
            light = env_to_sh(rotated)
            light.id = f"{env.name or 'env'}_r{int(round(deg)):03d}"
            pool.append(light)
            provenance[light.id] = {"source": env.name, "rotation_deg": deg}
    clusters = min(clusters, len(pool))
    if clusters == 0:
        raise ValueError("no lights survive the brightness filter")
    out = dedup_and_filter(pool, clusters=clusters, seed=seed, provenance=provenance)
    out.config.update({
        "rotations": rotations,
        "step_degrees": step_degrees,
        "reject_below": reject_below,
        "brightness_band": [low, high],
    })
    return out


# ---------------------------------------------------------------------------
# Radiance HDR (RGBE) reading
# ---------------------------------------------------------------------------

def read_env(path) -> EnvMap:
    """Read a panorama from Radiance .hdr (RGBE, RLE or flat) or .pfm."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".hdr":
        return EnvMap(_read_radiance_hdr(path), name=path.stem)
    if suffix == ".pfm":
        from .maps import _read_pfm

        data = _read_pfm(path)
        if data.shape[2] == 1:
            data = np.repeat(data, 3, axis=2)
        return EnvMap(data, name=path.stem)
    raise FormatError(f"unsupported panorama format: {path.name}")


def _read_radiance_hdr(path: Path) -> np.ndarray:
    with open(path, "rb") as f:
        first = f.readline().strip()
        if not first.startswith(b"#?"):
            raise FormatError(f"{path.name}: missing Radiance signature")
        while True:
            line = f.readline()
            if not line:
                raise FormatError(f"{path.name}: truncated header")
            if line.strip() == b"":
                break
        res = f.readline().split()
        if len(res) != 4 or res[0] != b"-Y" or res[2] != b"+X":
            raise FormatError(f"{path.name}: unsupported resolution line {res}")
        height, width = int(res[1]), int(res[3])
        rgbe = np.empty((height, width, 4), dtype=np.uint8)
        for yrow in range(height):
            rgbe[yrow] = _read_hdr_scanline(f, width, path)
    return _rgbe_to_float(rgbe)


def _read_hdr_scanline(f, width: int, path: Path) -> np.ndarray:
    head = f.read(4)
    if len(head) < 4:
        raise FormatError(f"{path.name}: truncated scanline")
    if head[0] == 2 and head[1] == 2 and (head[2] << 8 | head[3]) == width and width >= 8:
        # new-style: 4 RLE-compressed channel planes
        out = np.empty((width, 4), dtype=np.uint8)
        for ch in range(4):
            plane = bytearray()
            while len(plane) < width:
                count = f.read(1)[0]
                if count > 128:
                    plane.extend(f.read(1) * (count - 128))
                else:
                    plane.extend(f.read(count))
            out[:, ch] = np.frombuffer(bytes(plane[:width]), dtype=np.uint8)
        return out
    # old-style flat RGBE (possibly with run markers, unsupported for brevity)
    rest = f.read((width - 1) * 4)
    if len(rest) != (width - 1) * 4:
        raise FormatError(f"{path.name}: truncated flat scanline")
    return np.frombuffer(head + rest, dtype=np.uint8).reshape(width, 4)


def _rgbe_to_float(rgbe: np.ndarray) -> np.ndarray:
    exp = rgbe[:, :, 3].astype(np.int32)
    scale = np.where(exp > 0, np.ldexp(1.0, exp - 136), 0.0)
    return (rgbe[:, :, :3].astype(np.float32) * scale[:, :, None].astype(np.float32))
