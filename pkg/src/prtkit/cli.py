"""Command-line interface: bake, envprep, shade, relight, sweep, transfer,
estimate-light, evaluate, and an end-to-end demo on procedural meshes.

Exit codes: 0 success, 1 usage error, 2 data error. Every run logs its
configuration and the content hashes of produced files so results can be
reproduced and compared byte-for-byte.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import PrtError
from .maps import MapImage, MapKind, ShLight, read_map, write_map

log = logging.getLogger("prtkit")


class _Parser(argparse.ArgumentParser):
    """argparse that exits 1 on usage errors (2 is reserved for data errors)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _hash_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _log_outputs(paths) -> None:
    for p in sorted(Path(p) for p in paths):
        if p.is_file():
            log.info("wrote %s sha256=%s", p, _hash_file(p))


def _load_light(ref: str) -> ShLight:
    """Light reference: 'light.json' or 'lights.json#ID' for a LightSet."""
    from .illum import LightSet

    path, _, frag = ref.partition("#")
    data = json.loads(Path(path).read_text())
    if "lights" in data:
        lights = LightSet.load(path)
        if not frag:
            raise PrtError(f"{path} is a light set; pick one as {path}#ID "
                           f"(ids: {', '.join(l.id for l in lights.lights)})")
        return lights.get(frag)
    if frag:
        raise PrtError(f"{path} holds a single light; drop the #{frag} suffix")
    return ShLight.from_dict(data)


def _apply_common(args) -> None:
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s")
    import numba

    limit = numba.config.NUMBA_NUM_THREADS
    if args.threads is not None:
        if args.threads < 1:
            raise PrtError("--threads must be >= 1")
        if args.threads > limit:
            log.info("clamping --threads %d to the %d available", args.threads, limit)
        numba.set_num_threads(min(args.threads, limit))
    log.info("prtkit %s | %s | seed=%s threads=%s", __version__,
             " ".join(sys.argv[1:2]), args.seed, args.threads or limit)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=7, help="global RNG seed")
    p.add_argument("--threads", type=int, default=None, help="worker count bound")
    p.add_argument("--quiet", action="store_true", help="suppress progress logs")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_bake(args) -> int:
    from .baker import BakeConfig, bake_all

    config = BakeConfig(samples=args.samples, seed=args.seed)
    manifest = bake_all(args.mesh, args.out, config, size=args.size,
                        padding=args.padding, preview=args.preview)
    log.info("baked %d maps into %s", len(manifest["files"]), args.out)
    _log_outputs([Path(args.out) / n for n in manifest["files"].values()]
                 + [Path(args.out) / "manifest.json"])
    return 0


def cmd_envprep(args) -> int:
    from .illum import curate_lights, read_env

    low, _, high = args.target.partition(":")
    env_dir = Path(args.in_dir)
    paths = sorted(list(env_dir.glob("*.hdr")) + list(env_dir.glob("*.pfm")))
    if not paths:
        raise PrtError(f"no .hdr or .pfm panoramas in {env_dir}")
    envs = [read_env(p) for p in paths]
    lights = curate_lights(
        envs, rotations=args.rotations, step_degrees=args.step,
        clusters=args.clusters, seed=args.seed,
        reject_below=args.bright_min, low=float(low), high=float(high))
    lights.save(args.out)
    log.info("curated %d lights (%d train / %d test) from %d panoramas",
             len(lights.lights), len(lights.train), len(lights.test), len(envs))
    _log_outputs([args.out])
    return 0


def cmd_shade(args) -> int:
    from .relight import shade_map

    transport = read_map(args.transport, kind=MapKind.TRANSPORT)
    mask = read_map(args.mask, kind=MapKind.MASK)
    light = _load_light(args.light)
    shading = shade_map(transport, light, mask)
    write_map(shading, args.out)
    _log_outputs([args.out])
    return 0


def cmd_relight(args) -> int:
    from .relight import relight

    relight(args.albedo, args.transport, args.mask, _load_light(args.light),
            args.out, encoding=args.encoding)
    _log_outputs([args.out])
    return 0


def cmd_sweep(args) -> int:
    from .relight import sweep

    albedo = read_map(args.albedo, kind=MapKind.ALBEDO)
    transport = read_map(args.transport, kind=MapKind.TRANSPORT)
    mask = read_map(args.mask, kind=MapKind.MASK)
    paths = sweep(albedo, transport, mask, _load_light(args.light), args.out,
                  frames=args.frames, step_degrees=args.step)
    log.info("wrote %d sweep frames to %s", len(paths), args.out)
    _log_outputs(paths)
    return 0


def _read_decomposition_dir(path: Path):
    from .relight import Decomposition

    return Decomposition(
        albedo=read_map(path / "albedo.mapb"),
        transport=read_map(path / "transport.mapb"),
        mask=read_map(path / "mask.png"),
        light=ShLight.load(path / "light.json"),
    )


def cmd_transfer(args) -> int:
    from .relight import transfer_light

    a = _read_decomposition_dir(Path(args.a))
    b = _read_decomposition_dir(Path(args.b))
    img_ab, img_ba = transfer_light(a, b)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_map(img_ab, out / "a_under_b.png")
    write_map(img_ba, out / "b_under_a.png")
    _log_outputs([out / "a_under_b.png", out / "b_under_a.png"])
    return 0


def cmd_estimate_light(args) -> int:
    from .inverse import estimate_light

    shading = read_map(args.shading, kind=MapKind.SHADING)
    transport = read_map(args.transport, kind=MapKind.TRANSPORT)
    mask = read_map(args.mask, kind=MapKind.MASK)
    light, residual = estimate_light(shading, transport, mask)
    light.save(args.out)
    log.info("estimated light with RMS residual %.3e", residual)
    _log_outputs([args.out])
    return 0


def cmd_evaluate(args) -> int:
    from .metrics import evaluate

    report = evaluate(args.pred, args.gt, args.out)
    for name, value in report.rmse.items():
        shown = "N/A" if value is None else f"{value:.4f}"
        log.info("rmse %-10s %s", name, shown)
    _log_outputs([args.out])
    return 0


def cmd_demo(args) -> int:
    from .baker import (BakeConfig, bake_all, transport_from_normals)
    from .illum import EnvMap, curate_lights
    from .inverse import estimate_light
    from .metrics import evaluate
    from .procedural import curated_envs, figure_mesh, sphere_mesh, wedge_mesh
    from .relight import shade_map, compose, sweep

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = BakeConfig(samples=args.samples, seed=args.seed)

    log.info("curating demo lights")
    envs = [EnvMap(data, name=name) for name, data in curated_envs(128).items()]
    lights = curate_lights(envs, rotations=2, step_degrees=120.0,
                           clusters=min(9, 3 * len(envs)), seed=args.seed)
    lights.save(out / "lights.json")
    key_light = lights.lights[0]

    meshes = {
        "sphere": sphere_mesh(radius=0.9, rings=48, segments=96),
        "wedge": wedge_mesh(4.0, tilt_deg=-45.0),
        "figure": figure_mesh(detail=1.0),
    }
    for name, mesh in meshes.items():
        log.info("baking %s (%d triangles)", name, mesh.triangle_count)
        bake_all(mesh, out / name, config, size=args.size, preview=True)

    log.info("relighting and comparing occluded vs occlusion-free shading")
    compare = out / "compare"
    compare.mkdir(exist_ok=True)
    for name in meshes:
        d = out / name
        mask = read_map(d / "mask.png")
        albedo = read_map(d / "albedo.mapb")
        normal = read_map(d / "normal.mapb")
        baked = read_map(d / "transport.mapb")
        analytic = transport_from_normals(normal, mask)
        s_baked = shade_map(baked, key_light, mask)
        s_analytic = shade_map(analytic, key_light, mask)
        write_map(compose(albedo, s_baked, mask), compare / f"{name}_occluded.png")
        write_map(compose(albedo, s_analytic, mask),
                  compare / f"{name}_occlusion_free.png")
        m = mask.data[:, :, 0] > 0
        gap = float(np.mean(np.abs(s_baked.data[m] - s_analytic.data[m])))
        log.info("%s: mean |occluded - occlusion-free| shading gap = %.4f", name, gap)

        est, residual = estimate_light(s_baked, baked, mask)
        est.save(d / "light.json")
        log.info("%s: light re-estimated with residual %.2e", name, residual)

    log.info("scoring the occlusion-free baseline against the baked maps")
    baseline = out / "figure_baseline"
    baseline.mkdir(exist_ok=True)
    d = out / "figure"
    mask = read_map(d / "mask.png")
    normal = read_map(d / "normal.mapb")
    for src in ("mask.png", "albedo.mapb", "normal.mapb", "light.json"):
        (baseline / src).write_bytes((d / src).read_bytes())
    write_map(transport_from_normals(normal, mask), baseline / "transport.mapb")
    report = evaluate(baseline, d, out / "report.json")
    log.info("baseline transport RMSE %.4f, shading RMSE %.4f",
             report.rmse["transport"], report.rmse["shading"])

    log.info("rendering a %d-frame light sweep of the figure", args.frames)
    sweep(read_map(d / "albedo.mapb"), read_map(d / "transport.mapb"), mask,
          key_light, out / "sweep", frames=args.frames, step_degrees=360.0 / args.frames)

    _log_outputs([out / "lights.json", out / "report.json"])
    log.info("demo artifacts in %s", out)
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="prtkit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version",
                        version=f"prtkit {__version__} (numpy {np.__version__})")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bake", help="bake mask/albedo/normal/transport/AO maps")
    p.add_argument("--mesh", required=True, help="OBJ mesh path")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--size", type=int, default=1024)
    p.add_argument("--padding", type=float, default=0.05)
    p.add_argument("--samples", type=int, default=256)
    p.add_argument("--preview", action="store_true",
                   help="also write an sRGB albedo preview PNG")
    _add_common(p)
    p.set_defaults(fn=cmd_bake)

    p = sub.add_parser("envprep", help="curate SH lights from HDR panoramas")
    p.add_argument("--in", dest="in_dir", required=True, help="panorama directory")
    p.add_argument("--out", required=True, help="lights.json path")
    p.add_argument("--rotations", type=int, default=35)
    p.add_argument("--step", type=float, default=10.0)
    p.add_argument("--clusters", type=int, default=50)
    p.add_argument("--bright-min", type=float, default=0.2)
    p.add_argument("--target", default="0.7:0.9", help="brightness band LOW:HIGH")
    _add_common(p)
    p.set_defaults(fn=cmd_envprep)

    p = sub.add_parser("shade", help="transport . light dot-product shading map")
    p.add_argument("--transport", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--light", required=True, help="light.json or lights.json#ID")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(fn=cmd_shade)

    p = sub.add_parser("relight", help="compose albedo * (transport . light)")
    p.add_argument("--albedo", required=True)
    p.add_argument("--transport", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--light", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--encoding", choices=["srgb-png", "linear-pfm"], default=None)
    _add_common(p)
    p.set_defaults(fn=cmd_relight)

    p = sub.add_parser("sweep", help="turntable of relit frames under a rotating light")
    p.add_argument("--albedo", required=True)
    p.add_argument("--transport", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--light", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--frames", type=int, default=36)
    p.add_argument("--step", type=float, default=10.0)
    _add_common(p)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("transfer", help="swap the lights of two decompositions")
    p.add_argument("--a", required=True, help="decomposition directory A")
    p.add_argument("--b", required=True, help="decomposition directory B")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(fn=cmd_transfer)

    p = sub.add_parser("estimate-light", help="least-squares SH light from shading")
    p.add_argument("--shading", required=True)
    p.add_argument("--transport", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(fn=cmd_estimate_light)

    p = sub.add_parser("evaluate", help="RMSE/SSIM/15-loss report for a map dir")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("demo", help="end-to-end pipeline on procedural meshes")
    p.add_argument("--out", required=True)
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--samples", type=int, default=128)
    p.add_argument("--frames", type=int, default=12)
    _add_common(p)
    p.set_defaults(fn=cmd_demo)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_common(args)
        return args.fn(args)
    except (PrtError, OSError) as exc:
        print(f"prtkit: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
