import json

import numpy as np
import pytest

from prtkit.errors import PrtError
from prtkit.maps import MapImage, MapKind, ShLight, constant_light, write_map
from prtkit.metrics import (
    DecompositionPair,
    LOSS_NAMES,
    evaluate,
    l1_masked,
    losses15,
    render_light_sphere,
    rmse_masked,
    ssim_bbox,
    tv_masked,
)
from prtkit.relight import Decomposition, compose, shade_map


def sphere_pair(seed=0, size=24, perturb=0.0):
    from prtkit.baker import transport_from_normals
    from prtkit.illum import EnvMap, env_to_sh
    from prtkit.procedural import lobe_env

    rng = np.random.default_rng(seed)
    ax = (np.arange(size) + 0.5) / size * 2.0 - 1.0
    xx, yy = np.meshgrid(ax, ax)
    rr = xx ** 2 + yy ** 2
    inside = rr <= 0.95
    nz = np.sqrt(np.clip(1 - rr, 0, 1))
    normal = np.stack([xx, -yy, nz], axis=-1) * inside[..., None]
    mask = MapImage(inside.astype(np.float32)[:, :, None], MapKind.MASK)
    transport = transport_from_normals(
        MapImage(normal.astype(np.float32), MapKind.NORMAL), mask)
    albedo = MapImage((0.2 + 0.6 * rng.random((size, size, 3),
                                              dtype=np.float32)) * mask.data,
                      MapKind.ALBEDO)
    light = env_to_sh(EnvMap(lobe_env(48, sun_dir=(0.2, 0.5, 0.84)), name="gt"))
    truth = Decomposition(albedo, transport, mask, light)
    image = truth.render()
    if perturb:
        pred_albedo = MapImage(albedo.data + np.float32(perturb) * mask.data,
                               MapKind.ALBEDO)
    else:
        pred_albedo = MapImage(albedo.data.copy(), MapKind.ALBEDO)
    pred = Decomposition(pred_albedo,
                         MapImage(transport.data.copy(), MapKind.TRANSPORT),
                         mask, ShLight(light.coeffs.copy(), id="pred"))
    return DecompositionPair(pred, truth, mask, image), truth


# --- rmse / l1 ---------------------------------------------------------------

def test_rmse_identical_is_zero():
    pair, _ = sphere_pair()
    assert rmse_masked(pair.predicted.albedo, pair.truth.albedo, pair.mask) == 0.0


def test_rmse_uniform_offset_inside_mask():
    pair, _ = sphere_pair(perturb=0.1)
    val = rmse_masked(pair.predicted.albedo, pair.truth.albedo, pair.mask)
    assert val == pytest.approx(0.1, abs=1e-6)
    val = l1_masked(pair.predicted.albedo, pair.truth.albedo, pair.mask)
    assert val == pytest.approx(0.1, abs=1e-6)


def test_outside_mask_differences_ignored():
    pair, _ = sphere_pair()
    outside = pair.mask.data[:, :, 0] == 0
    junk = pair.predicted.albedo.data.copy()
    junk[outside] = 123.0
    messy = MapImage(junk, MapKind.ALBEDO)
    assert rmse_masked(messy, pair.truth.albedo, pair.mask) == 0.0
    assert l1_masked(messy, pair.truth.albedo, pair.mask) == 0.0


def test_empty_mask_errors():
    a = MapImage(np.zeros((4, 4, 3), dtype=np.float32), MapKind.ALBEDO)
    empty = MapImage(np.zeros((4, 4, 1), dtype=np.float32), MapKind.MASK)
    with pytest.raises(PrtError):
        rmse_masked(a, a, empty)


# --- TV ----------------------------------------------------------------------

def test_tv_constant_map_is_zero():
    mask = MapImage(np.ones((6, 6, 1), dtype=np.float32), MapKind.MASK)
    flat = MapImage(np.full((6, 6, 3), 0.4, dtype=np.float32), MapKind.ALBEDO)
    assert tv_masked(flat, mask) == 0.0


def test_tv_counts_only_in_mask_pairs():
    mask = np.ones((1, 4, 1), dtype=np.float32)
    mask[0, 2] = 0.0  # pairs (0,1) valid; (1,2) and (2,3) straddle the hole
    data = np.array([[0.0, 1.0, 5.0, 9.0]], dtype=np.float32)[:, :, None]
    val = tv_masked(MapImage(data, MapKind.SHADING),
                    MapImage(mask, MapKind.MASK))
    assert val == pytest.approx(1.0)


def test_tv_known_gradient():
    mask = MapImage(np.ones((2, 3, 1), dtype=np.float32), MapKind.MASK)
    data = np.array([[0.0, 1.0, 2.0], [0.0, 1.0, 2.0]], dtype=np.float32)[:, :, None]
    # 4 horizontal pairs of |1| + 3 vertical pairs of |0| -> mean 4/7
    val = tv_masked(MapImage(data, MapKind.SHADING), mask)
    assert val == pytest.approx(4.0 / 7.0)


# --- SSIM ---------------------------------------------------------------------

def test_ssim_self_similarity():
    pair, _ = sphere_pair(seed=1)
    assert ssim_bbox(pair.truth.albedo, pair.truth.albedo, pair.mask) == pytest.approx(1.0)


def test_ssim_constant_offset_closed_form():
    # constant images: variance terms vanish, SSIM reduces to the luminance
    # term (2 mx my + C1) / (mx^2 + my^2 + C1)
    h = w = 32
    mask = MapImage(np.ones((h, w, 1), dtype=np.float32), MapKind.MASK)
    a = MapImage(np.full((h, w, 3), 0.4, dtype=np.float32), MapKind.ALBEDO)
    b = MapImage(np.full((h, w, 3), 0.5, dtype=np.float32), MapKind.ALBEDO)
    c1 = 1e-4
    expected = (2 * 0.4 * 0.5 + c1) / (0.4 ** 2 + 0.5 ** 2 + c1)
    assert ssim_bbox(a, b, mask) == pytest.approx(expected, abs=1e-6)


def test_ssim_structural_dissimilarity():
    pair, _ = sphere_pair(seed=2)
    a = pair.truth.albedo
    inverted = MapImage((1.0 - a.data) * pair.mask.data, MapKind.ALBEDO)
    assert ssim_bbox(a, inverted, pair.mask) < 0.5


def test_ssim_small_bbox_falls_back_to_image():
    h = w = 16
    mask = np.zeros((h, w, 1), dtype=np.float32)
    mask[7:9, 7:9] = 1.0  # 2x2 box, smaller than the 11x11 window
    rng = np.random.default_rng(7)
    a = MapImage(rng.random((h, w, 3), dtype=np.float32), MapKind.ALBEDO)
    val = ssim_bbox(a, a, MapImage(mask, MapKind.MASK))
    assert val == pytest.approx(1.0)


# --- the 15 losses --------------------------------------------------------------

def test_perfect_prediction_zeroes_the_difference_losses():
    pair, _ = sphere_pair(seed=3)
    vals = losses15(pair)
    assert tuple(vals) == LOSS_NAMES
    for name in LOSS_NAMES:
        if name.startswith("tv_"):
            continue
        assert vals[name] == pytest.approx(0.0, abs=1e-6), name
    assert vals["tv_albedo"] == pytest.approx(
        tv_masked(pair.truth.albedo, pair.mask))
    assert vals["tv_transport"] == pytest.approx(
        tv_masked(pair.truth.transport, pair.mask))


def test_uniform_albedo_offset_hits_loss_exactly():
    pair, _ = sphere_pair(seed=4, perturb=0.1)
    vals = losses15(pair)
    assert vals["albedo"] == pytest.approx(0.1, abs=1e-6)
    assert vals["transport"] == 0.0
    assert vals["light"] == 0.0


def test_constant_albedo_has_zero_tv():
    pair, _ = sphere_pair(seed=5)
    flat = MapImage(np.full_like(pair.predicted.albedo.data, 0.5)
                    * pair.mask.data, MapKind.ALBEDO)
    pred = Decomposition(flat, pair.predicted.transport, pair.mask,
                         pair.predicted.light)
    vals = losses15(DecompositionPair(pred, pair.truth, pair.mask, pair.image))
    assert vals["tv_albedo"] == 0.0


def test_difference_losses_symmetric_reconstruction_not():
    pair, truth = sphere_pair(seed=6)
    rng = np.random.default_rng(8)
    bumpy = MapImage(pair.predicted.albedo.data
                     + (0.1 * rng.random(pair.predicted.albedo.data.shape))
                     .astype(np.float32) * pair.mask.data, MapKind.ALBEDO)
    light2 = ShLight(pair.predicted.light.coeffs * 0.9, id="p")
    pred = Decomposition(bumpy, pair.predicted.transport, pair.mask, light2)
    fwd = losses15(DecompositionPair(pred, truth, pair.mask, pair.image))
    swapped_truth = Decomposition(pred.albedo, pred.transport, pair.mask, pred.light)
    swapped_pred = Decomposition(truth.albedo, truth.transport, pair.mask, truth.light)
    rev = losses15(DecompositionPair(swapped_pred, swapped_truth, pair.mask, pair.image))
    for name in ("albedo", "transport", "light", "shading_pred_transport"):
        assert fwd[name] == pytest.approx(rev[name], rel=1e-6), name
    assert fwd["recon_albedo"] != pytest.approx(rev["recon_albedo"], rel=1e-3)


def test_all_losses_nonnegative():
    pair, _ = sphere_pair(seed=7, perturb=0.05)
    assert all(v >= 0.0 for v in losses15(pair).values())


# --- directory evaluation ---------------------------------------------------------

def write_decomposition(path, albedo, transport, mask, light, normal=None, ao=None):
    path.mkdir(parents=True, exist_ok=True)
    write_map(albedo, path / "albedo.mapb")
    write_map(transport, path / "transport.mapb")
    write_map(mask, path / "mask.png")
    if normal is not None:
        write_map(normal, path / "normal.mapb")
    if ao is not None:
        write_map(ao, path / "ao.pfm")
    light.save(path / "light.json")


def test_evaluate_identical_dirs(tmp_path):
    pair, truth = sphere_pair(seed=8)
    for sub in ("pred", "gt"):
        write_decomposition(tmp_path / sub, truth.albedo, truth.transport,
                            pair.mask, truth.light)
    report = evaluate(tmp_path / "pred", tmp_path / "gt", tmp_path / "report.json")
    assert report.rmse["albedo"] == 0.0
    assert report.rmse["transport"] == 0.0
    assert report.rmse["light"] == 0.0
    assert report.rmse["shading"] == 0.0
    assert report.ssim["albedo"] == pytest.approx(1.0)
    assert report.ssim["light"] == pytest.approx(1.0)
    assert report.losses15["albedo"] == pytest.approx(0.0, abs=1e-7)
    on_disk = json.loads((tmp_path / "report.json").read_text())
    assert on_disk["rmse"]["normal"] == "N/A"  # normals were not written


def test_evaluate_missing_ao_is_na(tmp_path):
    pair, truth = sphere_pair(seed=9)
    ao = MapImage(np.ones_like(pair.mask.data) * pair.mask.data, MapKind.AO)
    write_decomposition(tmp_path / "pred", truth.albedo, truth.transport,
                        pair.mask, truth.light)
    write_decomposition(tmp_path / "gt", truth.albedo, truth.transport,
                        pair.mask, truth.light, ao=ao)
    report = evaluate(tmp_path / "pred", tmp_path / "gt")
    assert report.rmse["ao"] is None
    assert report.to_json_dict()["rmse"]["ao"] == "N/A"


def test_evaluate_detects_baseline_gap(tmp_path):
    # occlusion-free transport vs a darker baked-style GT must show a gap
    pair, truth = sphere_pair(seed=10)
    darker = MapImage(truth.transport.data * 0.8, MapKind.TRANSPORT)
    write_decomposition(tmp_path / "pred", truth.albedo, truth.transport,
                        pair.mask, truth.light)
    write_decomposition(tmp_path / "gt", truth.albedo, darker,
                        pair.mask, truth.light)
    report = evaluate(tmp_path / "pred", tmp_path / "gt")
    assert report.rmse["shading"] > 0.0
    assert report.rmse["transport"] > 0.0


def test_render_light_sphere_front_brightness():
    light = constant_light(1.0)
    shading, disc = render_light_sphere(light, size=64)
    c = 32
    assert disc.data[c, c, 0] == 1.0
    assert shading.data[c, c, 0] == pytest.approx(np.pi, rel=1e-3)
