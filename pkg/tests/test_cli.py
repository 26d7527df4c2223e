import json
import subprocess
import sys

import numpy as np
import pytest

from prtkit.cli import main
from prtkit.maps import MapImage, MapKind, ShLight, constant_light, read_map, write_map

CUBE_OBJ = """\
v -0.5 -0.5 -0.5
v  0.5 -0.5 -0.5
v  0.5  0.5 -0.5
v -0.5  0.5 -0.5
v -0.5 -0.5  0.5
v  0.5 -0.5  0.5
v  0.5  0.5  0.5
v -0.5  0.5  0.5
f 1 2 3
f 1 3 4
f 5 7 6
f 5 8 7
f 1 5 6
f 1 6 2
f 2 6 7
f 2 7 3
f 3 7 8
f 3 8 4
f 4 8 5
f 4 5 1
"""


@pytest.fixture
def cube_obj(tmp_path):
    path = tmp_path / "cube.obj"
    path.write_text(CUBE_OBJ)
    return path


def small_decomposition(tmp_path, seed=0):
    from prtkit.baker import transport_from_normals

    rng = np.random.default_rng(seed)
    size = 16
    ax = (np.arange(size) + 0.5) / size * 2.0 - 1.0
    xx, yy = np.meshgrid(ax, ax)
    rr = xx ** 2 + yy ** 2
    inside = rr <= 0.9
    nz = np.sqrt(np.clip(1 - rr, 0, 1))
    normal = np.stack([xx, -yy, nz], axis=-1) * inside[..., None]
    mask = MapImage(inside.astype(np.float32)[:, :, None], MapKind.MASK)
    transport = transport_from_normals(
        MapImage(normal.astype(np.float32), MapKind.NORMAL), mask)
    albedo = MapImage((0.3 + 0.5 * rng.random((size, size, 3), dtype=np.float32))
                      * mask.data, MapKind.ALBEDO)
    tmp_path.mkdir(parents=True, exist_ok=True)
    write_map(albedo, tmp_path / "albedo.mapb")
    write_map(transport, tmp_path / "transport.mapb")
    write_map(mask, tmp_path / "mask.png")
    light = constant_light((0.8, 0.75, 0.7))
    light.save(tmp_path / "light.json")
    return tmp_path


def test_bake_exit_zero_and_files(cube_obj, tmp_path):
    out = tmp_path / "baked"
    code = main(["bake", "--mesh", str(cube_obj), "--out", str(out),
                 "--size", "24", "--samples", "8", "--quiet"])
    assert code == 0
    for name in ("mask.png", "albedo.mapb", "normal.mapb", "transport.mapb",
                 "ao.pfm", "manifest.json"):
        assert (out / name).exists()


def test_bake_missing_mesh_is_data_error(tmp_path):
    code = main(["bake", "--mesh", str(tmp_path / "nope.obj"),
                 "--out", str(tmp_path / "o"), "--quiet"])
    assert code == 2


def test_unknown_flag_rejected(cube_obj, tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["bake", "--mesh", str(cube_obj), "--out", str(tmp_path / "o"),
              "--frobnicate"])
    assert exc.value.code == 1


def test_missing_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 1


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert "prtkit" in capsys.readouterr().out


def test_relight_dimension_mismatch_names_both_sizes(tmp_path, capsys):
    d = small_decomposition(tmp_path / "d")
    bad_mask = MapImage(np.ones((8, 8, 1), dtype=np.float32), MapKind.MASK)
    write_map(bad_mask, d / "small_mask.png")
    code = main(["relight", "--albedo", str(d / "albedo.mapb"),
                 "--transport", str(d / "transport.mapb"),
                 "--mask", str(d / "small_mask.png"),
                 "--light", str(d / "light.json"),
                 "--out", str(d / "out.png"), "--quiet"])
    assert code == 2
    err = capsys.readouterr().err
    assert "16x16" in err and "8x8" in err


def test_relight_and_shade_round_trip(tmp_path):
    d = small_decomposition(tmp_path / "d")
    assert main(["shade", "--transport", str(d / "transport.mapb"),
                 "--mask", str(d / "mask.png"),
                 "--light", str(d / "light.json"),
                 "--out", str(d / "shading.pfm"), "--quiet"]) == 0
    assert main(["estimate-light", "--shading", str(d / "shading.pfm"),
                 "--transport", str(d / "transport.mapb"),
                 "--mask", str(d / "mask.png"),
                 "--out", str(d / "estimated.json"), "--quiet"]) == 0
    est = ShLight.load(d / "estimated.json")
    truth = ShLight.load(d / "light.json")
    assert np.abs(est.coeffs - truth.coeffs).max() < 1e-5
    assert main(["relight", "--albedo", str(d / "albedo.mapb"),
                 "--transport", str(d / "transport.mapb"),
                 "--mask", str(d / "mask.png"),
                 "--light", str(d / "estimated.json"),
                 "--out", str(d / "relit.png"), "--quiet"]) == 0
    assert (d / "relit.png").exists()


def test_bake_deterministic_across_threads(cube_obj, tmp_path):
    base = ["--mesh", str(cube_obj), "--size", "24", "--samples", "8",
            "--seed", "3", "--quiet"]
    assert main(["bake", *base, "--out", str(tmp_path / "t1"), "--threads", "1"]) == 0
    assert main(["bake", *base, "--out", str(tmp_path / "tn")]) == 0
    for name in ("transport.mapb", "ao.pfm", "manifest.json"):
        assert ((tmp_path / "t1" / name).read_bytes()
                == (tmp_path / "tn" / name).read_bytes())


def test_envprep_cli(tmp_path):
    from prtkit.procedural import lobe_env

    envs = tmp_path / "envs"
    envs.mkdir()
    for i, zdir in enumerate([(0.2, 0.5, 0.84), (-0.3, 0.6, 0.74)]):
        data = lobe_env(36, sun_dir=zdir)
        write_map(MapImage(data, MapKind.RGB), envs / f"env{i}.pfm")
    out = tmp_path / "lights.json"
    code = main(["envprep", "--in", str(envs), "--out", str(out),
                 "--rotations", "3", "--step", "90", "--clusters", "6",
                 "--seed", "7", "--quiet"])
    assert code == 0
    data = json.loads(out.read_text())
    assert data["lights"]
    assert set(data["train"]) | set(data["test"]) == {l["id"] for l in data["lights"]}
    # reruns are byte-identical
    out2 = tmp_path / "lights2.json"
    main(["envprep", "--in", str(envs), "--out", str(out2),
          "--rotations", "3", "--step", "90", "--clusters", "6",
          "--seed", "7", "--quiet"])
    assert out.read_bytes() == out2.read_bytes()


def test_envprep_empty_dir_is_data_error(tmp_path):
    (tmp_path / "empty").mkdir()
    assert main(["envprep", "--in", str(tmp_path / "empty"),
                 "--out", str(tmp_path / "l.json"), "--quiet"]) == 2


def test_sweep_cli(tmp_path):
    d = small_decomposition(tmp_path / "d")
    out = tmp_path / "frames"
    code = main(["sweep", "--albedo", str(d / "albedo.mapb"),
                 "--transport", str(d / "transport.mapb"),
                 "--mask", str(d / "mask.png"),
                 "--light", str(d / "light.json"),
                 "--out", str(out), "--frames", "6", "--step", "60", "--quiet"])
    assert code == 0
    assert len(list(out.glob("frame_*.png"))) == 6


def test_transfer_cli(tmp_path):
    a = small_decomposition(tmp_path / "a", seed=1)
    b = small_decomposition(tmp_path / "b", seed=2)
    out = tmp_path / "out"
    assert main(["transfer", "--a", str(a), "--b", str(b),
                 "--out", str(out), "--quiet"]) == 0
    assert (out / "a_under_b.png").exists()
    assert (out / "b_under_a.png").exists()


def test_evaluate_cli(tmp_path):
    d = small_decomposition(tmp_path / "same")
    out = tmp_path / "report.json"
    assert main(["evaluate", "--pred", str(d), "--gt", str(d),
                 "--out", str(out), "--quiet"]) == 0
    report = json.loads(out.read_text())
    assert report["rmse"]["transport"] == 0.0
    assert report["ssim"]["albedo"] == pytest.approx(1.0)


def test_lightset_reference_requires_id(tmp_path):
    d = small_decomposition(tmp_path / "d")
    lights = {"lights": [{"id": "a", "coeffs": [[0.5, 0.5, 0.5]] + [[0, 0, 0]] * 8,
                          "source": "", "rotation_deg": 0}],
              "train": ["a"], "test": [], "config": {}}
    path = tmp_path / "set.json"
    path.write_text(json.dumps(lights))
    code = main(["shade", "--transport", str(d / "transport.mapb"),
                 "--mask", str(d / "mask.png"), "--light", str(path),
                 "--out", str(d / "s.pfm"), "--quiet"])
    assert code == 2  # missing #ID
    code = main(["shade", "--transport", str(d / "transport.mapb"),
                 "--mask", str(d / "mask.png"), "--light", f"{path}#a",
                 "--out", str(d / "s.pfm"), "--quiet"])
    assert code == 0


def test_demo_cli(tmp_path):
    out = tmp_path / "demo"
    code = main(["demo", "--out", str(out), "--size", "48", "--samples", "8",
                 "--frames", "4", "--seed", "5", "--quiet"])
    assert code == 0
    assert (out / "lights.json").exists()
    assert (out / "report.json").exists()
    for mesh in ("sphere", "wedge", "figure"):
        assert (out / mesh / "transport.mapb").exists()
        assert (out / "compare" / f"{mesh}_occluded.png").exists()
        assert (out / "compare" / f"{mesh}_occlusion_free.png").exists()
    assert len(list((out / "sweep").glob("frame_*.png"))) == 4
    report = json.loads((out / "report.json").read_text())
    assert report["rmse"]["shading"] > 0.0  # occlusion-free baseline differs


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "prtkit.cli", "--version"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "prtkit" in proc.stdout
