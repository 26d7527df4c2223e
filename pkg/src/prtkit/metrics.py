"""Evaluation suite: the 15 L1 losses, masked RMSE, and bounding-box SSIM.

All metrics operate on linear-light values. L1 losses and RMSE are means
over mask pixels only; SSIM is computed over the tight bounding box of the
mask. Lights enter RMSE as 27-vectors and SSIM as sphere renderings.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from . import sh
from .errors import DimensionError, PrtError
from .maps import MapImage, MapKind, ShLight, read_map
from .relight import Decomposition, compose, shade_map

SSIM_SIGMA = 1.5
SSIM_RADIUS = 5          # 11x11 window
SSIM_K1 = 0.01
SSIM_K2 = 0.03

LOSS_NAMES = (
    "albedo", "transport", "light", "recon_full",
    "tv_albedo", "tv_transport",
    "shading_pred_transport", "shading_pred_light", "shading_pred_both",
    "recon_light", "recon_transport", "recon_transport_light",
    "recon_albedo", "recon_albedo_light", "recon_albedo_transport",
)


@dataclass
class DecompositionPair:
    """Predicted and ground-truth factors sharing one mask and input image."""

    predicted: Decomposition
    truth: Decomposition
    mask: MapImage
    image: MapImage

    def __post_init__(self):
        maps = [self.predicted.albedo, self.predicted.transport,
                self.truth.albedo, self.truth.transport, self.image]
        if not all(m.same_size(self.mask) for m in maps):
            raise DimensionError("all maps in a pair must share dimensions")


@dataclass
class EvalReport:
    """Per-component RMSE/SSIM plus the 15 loss values; None means N/A."""

    rmse: dict = field(default_factory=dict)
    ssim: dict = field(default_factory=dict)
    losses15: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        def na(d):
            return {k: ("N/A" if v is None else v) for k, v in d.items()}

        return {"rmse": na(self.rmse), "ssim": na(self.ssim),
                "losses15": na(self.losses15)}

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2) + "\n")


# ---------------------------------------------------------------------------
# Core metrics
# ---------------------------------------------------------------------------

def l1_masked(a: MapImage, b: MapImage, mask: MapImage) -> float:
    """Mean absolute difference over mask pixels and channels."""
    if not (a.same_size(b) and a.same_size(mask)):
        raise DimensionError("maps must share dimensions")
    m = mask.data[:, :, 0] > 0.0
    if not m.any():
        raise PrtError("mask is empty")
    diff = a.data.astype(np.float64)[m] - b.data.astype(np.float64)[m]
    return float(np.abs(diff).mean())


def rmse_masked(a: MapImage, b: MapImage, mask: MapImage) -> float:
    """Root mean squared difference over mask pixels and channels."""
    if not (a.same_size(b) and a.same_size(mask)):
        raise DimensionError("maps must share dimensions")
    m = mask.data[:, :, 0] > 0.0
    if not m.any():
        raise PrtError("mask is empty")
    diff = a.data.astype(np.float64)[m] - b.data.astype(np.float64)[m]
    return float(np.sqrt((diff ** 2).mean()))


def tv_masked(a: MapImage, mask: MapImage) -> float:
    """Anisotropic L1 total variation: mean |forward difference| over
    neighbor pairs lying entirely inside the mask."""
    m = mask.data[:, :, 0] > 0.0
    d = a.data.astype(np.float64)
    sums, counts = 0.0, 0
    pair_x = m[:, 1:] & m[:, :-1]
    if pair_x.any():
        sums += np.abs(d[:, 1:] - d[:, :-1])[pair_x].sum()
        counts += pair_x.sum() * a.channels
    pair_y = m[1:, :] & m[:-1, :]
    if pair_y.any():
        sums += np.abs(d[1:, :] - d[:-1, :])[pair_y].sum()
        counts += pair_y.sum() * a.channels
    return float(sums / counts) if counts else 0.0


def _ssim_channel(x: np.ndarray, y: np.ndarray) -> float:
    opts = dict(sigma=SSIM_SIGMA, radius=SSIM_RADIUS, mode="reflect")
    c1 = (SSIM_K1 * 1.0) ** 2
    c2 = (SSIM_K2 * 1.0) ** 2
    ux = gaussian_filter(x, **opts)
    uy = gaussian_filter(y, **opts)
    uxx = gaussian_filter(x * x, **opts)
    uyy = gaussian_filter(y * y, **opts)
    uxy = gaussian_filter(x * y, **opts)
    vx = uxx - ux * ux
    vy = uyy - uy * uy
    vxy = uxy - ux * uy
    num = (2 * ux * uy + c1) * (2 * vxy + c2)
    den = (ux ** 2 + uy ** 2 + c1) * (vx + vy + c2)
    ssim_map = num / den
    r = SSIM_RADIUS
    if ssim_map.shape[0] > 2 * r + 1 and ssim_map.shape[1] > 2 * r + 1:
        ssim_map = ssim_map[r:-r, r:-r]  # drop window-tainted borders
    return float(ssim_map.mean())


def ssim_bbox(a: MapImage, b: MapImage, mask: MapImage) -> float:
    """Channel-averaged SSIM (11x11 Gaussian window, sigma 1.5, K1=0.01,
    K2=0.03, dynamic range 1) inside the tight bounding box of the mask."""
    if not (a.same_size(b) and a.same_size(mask)):
        raise DimensionError("maps must share dimensions")
    m = mask.data[:, :, 0] > 0.0
    if not m.any():
        raise PrtError("mask is empty")
    ys, xs = np.nonzero(m)
    y0, y1 = ys.min(), ys.max() + 1
    x0, x1 = xs.min(), xs.max() + 1
    if (y1 - y0) <= 2 * SSIM_RADIUS + 1 or (x1 - x0) <= 2 * SSIM_RADIUS + 1:
        y0, y1, x0, x1 = 0, a.height, 0, a.width  # box smaller than the window
    da = a.data.astype(np.float64)[y0:y1, x0:x1]
    db = b.data.astype(np.float64)[y0:y1, x0:x1]
    return float(np.mean([
        _ssim_channel(da[:, :, c], db[:, :, c]) for c in range(a.channels)
    ]))


# ---------------------------------------------------------------------------
# The 15 losses
# ---------------------------------------------------------------------------

def losses15(pair: DecompositionPair) -> dict[str, float]:
    """All 15 L1 losses, keyed by LOSS_NAMES; see the docstring order."""
    p, g = pair.predicted, pair.truth
    mask, image = pair.mask, pair.image

    def shading(transport, light):
        return shade_map(transport, light, mask)

    def recon(albedo, transport, light):
        return compose(albedo, shading(transport, light), mask)

    light_l1 = float(np.abs(p.light.coeffs - g.light.coeffs).mean())
    s_gg = shading(g.transport, g.light)
    vals = {
        "albedo": l1_masked(p.albedo, g.albedo, mask),
        "transport": l1_masked(p.transport, g.transport, mask),
        "light": light_l1,
        "recon_full": l1_masked(recon(p.albedo, p.transport, p.light), image, mask),
        "tv_albedo": tv_masked(p.albedo, mask),
        "tv_transport": tv_masked(p.transport, mask),
        "shading_pred_transport": l1_masked(shading(p.transport, g.light), s_gg, mask),
        "shading_pred_light": l1_masked(shading(g.transport, p.light), s_gg, mask),
        "shading_pred_both": l1_masked(shading(p.transport, p.light), s_gg, mask),
        "recon_light": l1_masked(recon(g.albedo, g.transport, p.light), image, mask),
        "recon_transport": l1_masked(recon(g.albedo, p.transport, g.light), image, mask),
        "recon_transport_light": l1_masked(recon(g.albedo, p.transport, p.light), image, mask),
        "recon_albedo": l1_masked(recon(p.albedo, g.transport, g.light), image, mask),
        "recon_albedo_light": l1_masked(recon(p.albedo, g.transport, p.light), image, mask),
        "recon_albedo_transport": l1_masked(recon(p.albedo, p.transport, g.light), image, mask),
    }
    assert tuple(vals) == LOSS_NAMES
    return vals


# ---------------------------------------------------------------------------
# Directory-level evaluation
# ---------------------------------------------------------------------------

_COMPONENT_FILES = {
    "mask": ("mask.png",),
    "albedo": ("albedo.mapb", "albedo.png"),
    "normal": ("normal.mapb",),
    "transport": ("transport.mapb",),
    "ao": ("ao.pfm", "ao.mapb"),
}


def _load_dir(path: Path) -> dict:
    out = {}
    manifest = path / "manifest.json"
    names = {}
    if manifest.exists():
        names = json.loads(manifest.read_text()).get("files", {})
    for comp, candidates in _COMPONENT_FILES.items():
        fname = names.get(comp)
        cands = (fname,) if fname else candidates
        for c in cands:
            if c and (path / c).exists():
                out[comp] = read_map(path / c)
                break
    if (path / "light.json").exists():
        out["light"] = ShLight.load(path / "light.json")
    return out


def render_light_sphere(light: ShLight, size: int = 256) -> tuple[MapImage, MapImage]:
    """Shade an orthographic sphere with the light (how light maps are
    visualized); returns (shading, disc mask)."""
    ax = (np.arange(size) + 0.5) / size * 2.0 - 1.0
    xx, yy = np.meshgrid(ax, ax)
    yy = -yy  # image rows grow downward; +y is up
    rr = xx * xx + yy * yy
    inside = rr <= 1.0
    nz = np.sqrt(np.clip(1.0 - rr, 0.0, 1.0))
    normals = np.stack([xx, yy, nz], axis=-1)
    shading = np.zeros((size, size, 3), dtype=np.float32)
    flat = normals[inside]
    basis = np.stack([
        np.full(len(flat), sh.C0),
        sh.C1 * flat[:, 1], sh.C1 * flat[:, 2], sh.C1 * flat[:, 0],
        sh.C2A * flat[:, 0] * flat[:, 1], sh.C2A * flat[:, 1] * flat[:, 2],
        sh.C2B * (3 * flat[:, 2] ** 2 - 1), sh.C2A * flat[:, 0] * flat[:, 2],
        sh.C2C * (flat[:, 0] ** 2 - flat[:, 1] ** 2),
    ], axis=1) * sh.A_HAT[sh.BAND_OF_INDEX]
    shading[inside] = (basis @ light.coeffs).astype(np.float32)
    mask = MapImage(inside.astype(np.float32)[:, :, None], MapKind.MASK)
    return MapImage(shading, MapKind.SHADING), mask


def evaluate(pred_dir, gt_dir, out_path=None) -> EvalReport:
    """Score a predicted map directory against ground truth.

    Components follow Table-1 style: RMSE within the GT mask and SSIM within
    the mask's bounding box for shading, transport, normal, AO and albedo;
    the light as 27-vector RMSE and rendered-sphere SSIM. Missing
    components become N/A. Writes a JSON report when out_path is given.
    """
    pred = _load_dir(Path(pred_dir))
    gt = _load_dir(Path(gt_dir))
    if "mask" not in gt:
        raise PrtError(f"{gt_dir} has no mask")
    mask = gt["mask"]

    report = EvalReport()

    def score(name, key=None):
        key = key or name
        if key in pred and key in gt:
            report.rmse[name] = rmse_masked(pred[key], gt[key], mask)
            report.ssim[name] = ssim_bbox(pred[key], gt[key], mask)
        else:
            report.rmse[name] = None
            report.ssim[name] = None

    for comp in ("transport", "normal", "ao", "albedo"):
        score(comp)

    p_light = pred.get("light")
    g_light = gt.get("light")
    if p_light is not None and g_light is not None:
        report.rmse["light"] = float(np.sqrt(
            np.mean((p_light.coeffs - g_light.coeffs) ** 2)))
        sp, disc = render_light_sphere(p_light)
        sg, _ = render_light_sphere(g_light)
        report.ssim["light"] = ssim_bbox(sp, sg, disc)
    else:
        report.rmse["light"] = None
        report.ssim["light"] = None

    # shading: each side rendered under its own light (GT light as fallback)
    if "transport" in pred and "transport" in gt and g_light is not None:
        s_pred = shade_map(pred["transport"], p_light or g_light, mask)
        s_gt = shade_map(gt["transport"], g_light, mask)
        report.rmse["shading"] = rmse_masked(s_pred, s_gt, mask)
        report.ssim["shading"] = ssim_bbox(s_pred, s_gt, mask)
    else:
        report.rmse["shading"] = None
        report.ssim["shading"] = None

    can_lose = all(k in pred for k in ("albedo", "transport")) \
        and all(k in gt for k in ("albedo", "transport")) \
        and p_light is not None and g_light is not None
    if can_lose:
        truth = Decomposition(gt["albedo"], gt["transport"], mask, g_light)
        predicted = Decomposition(pred["albedo"], pred["transport"], mask, p_light)
        image = truth.render()
        report.losses15 = losses15(
            DecompositionPair(predicted, truth, mask, image))
    else:
        report.losses15 = {name: None for name in LOSS_NAMES}

    if out_path is not None:
        report.save(out_path)
    return report
