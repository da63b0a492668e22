"""Command line interface.

Subcommands: dataset gen, train, optimize, render, eval, serve, bench.
Every command validates its inputs, writes outputs under the requested
directory and exits nonzero with a machine-readable ERROR line on failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import load_config, save_config
from .errors import FovnerfError

SCENES = {}


def _register_scenes():
    from .scenes import default_scene

    SCENES["studio"] = default_scene


def fail(exc: Exception, code: int = 2) -> int:
    print(json.dumps({"error": type(exc).__name__, "detail": str(exc)}),
          file=sys.stderr)
    return code


def get_scene(name: str):
    _register_scenes()
    if name not in SCENES:
        raise FovnerfError(f"unknown scene {name!r}; options: {sorted(SCENES)}")
    return SCENES[name]()


def layer_for(tag: str, scale: float = 1.0):
    from .foveation import scaled_layers

    layers = scaled_layers(scale)
    if tag not in layers:
        raise FovnerfError(f"unknown layer {tag!r}")
    return layers[tag]


# ------------------------------------------------------------- subcommands

def cmd_dataset_gen(args) -> int:
    from .datasets import generate_dataset

    scene = get_scene(args.scene)
    layer = layer_for(args.layer, args.layer_scale)
    out = Path(args.out)
    ds = generate_dataset(
        scene, layer, out, step=args.step,
        width=args.width, height=args.height,
        max_positions=args.max_positions, max_rotations=args.max_rotations,
    )
    print(f"dataset: {len(ds)} views -> {out}")
    return 0


def cmd_train(args) -> int:
    from .datasets import build_ray_pool, read_manifest
    from .encoding import EncodingConfig
    from .field import NeuralField
    from .mlp import MlpConfig
    from .model_io import save_field_file
    from .sphgeom import ConcentricGrid
    from .training import TrainSchedule, train

    dataset = read_manifest(Path(args.dataset))
    scene = get_scene(args.scene)
    r_near, r_far = (args.r_near, args.r_far)
    if not (r_near and r_far):
        r_near, r_far = scene.radial_bounds()
    grid = ConcentricGrid.uniform(args.spheres, r_near, r_far)
    field = NeuralField.create(
        grid, layer_tag=dataset.layer_tag,
        encoding=EncodingConfig(bands_per_coord=args.bands),
        mlp_cfg=MlpConfig(args.mlp_layers, args.channels),
        seed=args.seed,
    )
    pool = build_ray_pool(dataset, limit_views=args.limit_views)
    schedule = TrainSchedule(
        epochs=args.epochs, learning_rate=args.lr, batch_rays=args.batch,
        seed=args.seed, checkpoint_dir=args.checkpoints,
        time_budget_s=args.time_budget_s, lr_warmup_steps=args.warmup,
    )
    res = train(field, pool, schedule, expected_fov_deg=dataset.fov_deg)
    size = save_field_file(field, Path(args.out))
    print(f"trained {res.steps} steps in {res.wall_time_s:.1f}s; "
          f"final loss {res.loss_curve[-1]:.6f}; wrote {size} bytes -> {args.out}")
    return 0


def cmd_optimize(args) -> int:
    from .datasets import look_rotation
    from .encoding import EncodingConfig
    from .field import NeuralField
    from .latency import calibrate_latency, make_march_bench
    from .mlp import MlpConfig
    from .optimizer import (
        CandidateConfig,
        SearchSpace,
        color_discrepancy,
        objective_e,
        plot_heatmaps,
        search,
        sinusoidal_trajectory,
        stratified_sphere_probes,
        write_results_csv,
    )
    from .precision import e_image
    from .raymarch import PinholeCamera
    from .sphgeom import ConcentricGrid
    from .training import RayPool, TrainSchedule, train

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scene = get_scene(args.scene)
    r_near, r_far = scene.radial_bounds()
    enc_width = EncodingConfig(bands_per_coord=args.bands).width

    space = SearchSpace(
        n_options=[int(x) for x in args.n_options.split(",")],
        nm_options=[int(x) for x in args.nm_options.split(",")],
        nc_options=[int(x) for x in args.nc_options.split(",")],
        budget_ms=args.budget,
    )

    # latency model fitted on this machine at the probe workload
    bench = make_march_bench(r_near, r_far, bands_per_coord=args.bands)
    calib_configs = sorted({
        (n, m, c)
        for n in space.n_options for m in space.nm_options for c in space.nc_options
    })
    model = calibrate_latency(bench, calib_configs, rays=args.probe_rays,
                              enc_width=enc_width)
    print(f"latency model: a={model.a:.3e} ms/unit, b={model.b:.3f} ms, "
          f"r2={model.r2:.4f}")

    # reprojection-precision ladder (reported in the CSV companion)
    rng = np.random.default_rng(args.seed)
    cams = []
    for _ in range(4):
        pos = rng.uniform(-0.15, 0.15, 3)
        fwd = rng.normal(size=3)
        fwd /= np.linalg.norm(fwd)
        cams.append(PinholeCamera(pos, look_rotation(fwd), 20.0, 128, 128))
    with open(out / "e_image_ladder.csv", "w") as fh:
        fh.write("n_spheres,e_image_px,stderr\n")
        for n in space.n_options:
            grid_n = ConcentricGrid.uniform(n, r_near, r_far)
            est, _ = e_image(grid_n, scene, cams, n_points_per_camera=256,
                             seed=args.seed)
            fh.write(f"{n},{est.mean:.6f},{est.stderr:.6f}\n")

    # color discrepancy per network size on a shared grid, tiny budget
    common_grid = ConcentricGrid.uniform(space.reference.n_spheres, r_near, r_far)
    probes = stratified_sphere_probes(common_grid, args.probes, seed=args.seed)
    pool = _make_probe_pool(scene, rng, n_rays=args.discrepancy_rays)

    def train_net(n_m: int, n_c: int) -> NeuralField:
        f = NeuralField.create(
            common_grid, "fovea", EncodingConfig(bands_per_coord=args.bands),
            MlpConfig(n_m, n_c), seed=args.seed,
        )
        train(f, pool, TrainSchedule(epochs=args.discrepancy_epochs,
                                     learning_rate=2e-3, batch_rays=1024,
                                     seed=args.seed))
        return f

    reference = train_net(space.reference.n_layers, space.reference.n_channels)
    discrepancy = {}
    for m in space.nm_options:
        for c in space.nc_options:
            discrepancy[(m, c)] = color_discrepancy(train_net(m, c), reference, probes)
            print(f"discrepancy N_m={m} N_c={c}: {discrepancy[(m, c)]:.5f}")

    trajectory = sinusoidal_trajectory(duration_s=args.trajectory_s)
    cam_proto = PinholeCamera(np.zeros(3), np.eye(3), 110.0, 230, 256)

    def latency_fn(cfg: CandidateConfig) -> float:
        return model.predict_ms(args.probe_rays, cfg.n_spheres, cfg.n_layers,
                                cfg.n_channels)

    grids = {n: ConcentricGrid.uniform(n, r_near, r_far) for n in space.n_options}

    def objective_fn(cfg: CandidateConfig) -> float:
        return objective_e(
            cfg, trajectory, latency_fn(cfg), discrepancy[(cfg.n_layers, cfg.n_channels)],
            scene, grids[cfg.n_spheres], cam_proto, n_points=args.objective_points,
            seed=args.seed,
        )

    result = search(space, objective_fn, latency_fn)
    write_results_csv(result, out / "search_table.csv")
    plot_heatmaps(result, out / "search")
    if result.chosen is None:
        print(f"INFEASIBLE under {space.budget_ms} ms; fastest: {result.fastest}")
        return 1
    cfg = load_config(None)
    cfg.fovea.n_spheres = result.chosen.n_spheres
    cfg.fovea.n_layers = result.chosen.n_layers
    cfg.fovea.n_channels = result.chosen.n_channels
    save_config(cfg, out / "chosen_config.yaml")
    print(f"chosen: {result.chosen} -> {out / 'chosen_config.yaml'}")
    return 0


def _make_probe_pool(scene, rng, n_rays: int = 4096):
    """Small reference-render ray pool for the discrepancy mini-trainings."""
    from .raymarch import build_rays
    from .scenes import render_reference
    from .raymarch import PinholeCamera
    from .datasets import look_rotation
    from .training import RayPool

    origins, dirs, targets = [], [], []
    n_views = 8
    for _ in range(n_views):
        pos = rng.uniform(-0.15, 0.15, 3)
        fwd = rng.normal(size=3)
        fwd /= np.linalg.norm(fwd)
        side = int(np.sqrt(n_rays / n_views))
        cam = PinholeCamera(pos, look_rotation(fwd), 20.0, side, side)
        res = render_reference(scene, cam)
        batch = build_rays(cam)
        origins.append(batch.origins)
        dirs.append(batch.directions)
        targets.append(res.rgb.reshape(-1, 3))
    return RayPool(
        origins=np.concatenate(origins), directions=np.concatenate(dirs),
        targets=np.concatenate(targets), fov_deg=20.0, layer_tag="fovea",
    )


def _load_engine(args):
    from .engine import Engine, build_fields_from_config

    cfg = load_config(args.config)
    if args.layer_scale is not None:
        cfg.layer_scale = args.layer_scale
    if getattr(args, "mode", None):
        cfg.mode = args.mode
    if getattr(args, "display_scale", None):
        cfg.display.width = max(2, int(cfg.display.width * args.display_scale))
        cfg.display.height = max(2, int(cfg.display.height * args.display_scale))
    if args.models:
        models = Path(args.models)
        return Engine.from_model_files(
            cfg, models / "fovea.fnrf", models / "mid.fnrf", models / "far.fnrf"
        )
    if not args.random_fields:
        raise FovnerfError("pass --models DIR or --random-fields")
    scene = get_scene(args.scene)
    r_near, r_far = scene.radial_bounds()
    return Engine(cfg, build_fields_from_config(cfg, r_near, r_far, seed=0))


def _parse_rig(args, engine):
    from .foveation import StereoRig
    from .service import gaze_uv_to_direction

    pos = np.asarray([float(v) for v in args.pose.split(",")])
    yaw = np.radians(args.yaw)
    c, s = np.cos(yaw), np.sin(yaw)
    rot = np.asarray([[c, 0, s], [0, 1, 0], [-s, 0, c]])
    u, v = (float(x) for x in args.gaze.split(","))
    gaze = gaze_uv_to_direction(u, v, engine.display)
    return StereoRig(position=pos, rotation=rot, ipd=engine.config.ipd_m,
                     gaze_dir=gaze)


def cmd_render(args) -> int:
    from .compositor import anaglyph
    from .datasets import save_png

    engine = _load_engine(args)
    rig = _parse_rig(args, engine)
    frame = engine.render_frame(rig)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_png(out / "left.png", frame.left)
    save_png(out / "right.png", frame.right)
    save_png(out / "anaglyph.png", anaglyph(frame))
    t = frame.timings_ms
    print(json.dumps({
        "fovea_per_eye_ms": round(t["fovea_per_eye"], 3),
        "periphery_per_eye_ms": round(t["periphery_per_eye"], 3),
        "blend_contrast_ms": round(t["blend_contrast"], 3),
        "total_ms": round(t["total"], 3),
        "gaze_px": [round(v, 2) for v in frame.gaze_px],
        "out": str(out),
    }))
    return 0


def cmd_eval(args) -> int:
    from .datasets import save_png
    from .metrics import banded_quality, psnr, ssim
    from .scenes import render_reference

    engine = _load_engine(args)
    scene = get_scene(args.scene)
    rig = _parse_rig(args, engine)
    frame = engine.render_frame(rig)
    cam = engine.display.camera(rig.eye_position("left"), rig.rotation)
    ref = render_reference(scene, cam)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_png(out / "render_left.png", frame.left)
    save_png(out / "reference_left.png", ref.rgb)
    report = banded_quality(frame.left, ref.rgb, engine.display,
                            gaze_px=frame.gaze_px)
    with open(out / "banded_quality.csv", "w") as fh:
        fh.write("ecc_lo_deg,ecc_hi_deg,psnr_db,ssim,pixels\n")
        for (lo, hi), p, s, n in zip(report.bands(), report.psnr_db,
                                     report.ssim_scores, report.pixel_counts):
            fh.write(f"{lo},{hi},{p:.4f},{s:.5f},{n}\n")
    print(json.dumps({
        "psnr_db": round(psnr(frame.left, ref.rgb), 3),
        "ssim": round(ssim(frame.left, ref.rgb), 5),
        "banded_csv": str(out / "banded_quality.csv"),
    }))
    return 0


def cmd_serve(args) -> int:
    from .service import serve

    engine = _load_engine(args)
    serve(engine, host=args.host, port=args.port, encoding=args.encoding)
    return 0


def cmd_bench(args) -> int:
    from .metrics import time_pipeline

    engine = _load_engine(args)
    modes = args.mode or ["adaptive", "naive-stereo"]
    rows = []
    for mode in modes:
        tb = time_pipeline(engine, n_frames=args.frames, mode=mode,
                           warmup=args.warmup)
        rows.append(tb)
        print(f"{mode}: total {tb.total_ms:.2f} ms "
              f"(fovea/eye {tb.foveal_infer_per_eye_ms:.2f}, "
              f"periphery/pass {tb.periphery_infer_per_eye_ms:.2f}, "
              f"blend {tb.blend_and_contrast_ms:.2f})")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w") as fh:
        fh.write("mode,foveal_per_eye_ms,periphery_per_eye_ms,"
                 "blend_contrast_ms,total_ms,p95_total_ms,n_frames\n")
        for tb in rows:
            fh.write(f"{tb.mode},{tb.foveal_infer_per_eye_ms:.4f},"
                     f"{tb.periphery_infer_per_eye_ms:.4f},"
                     f"{tb.blend_and_contrast_ms:.4f},{tb.total_ms:.4f},"
                     f"{tb.p95_total_ms:.4f},{tb.n_frames}\n")
    if len(rows) == 2:
        ratio = max(rows[0].total_ms, rows[1].total_ms) / max(
            1e-9, min(rows[0].total_ms, rows[1].total_ms))
        print(f"mode ratio: {ratio:.3f}")
    return 0


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="fovnerf",
        description="Gaze-contingent neural scene synthesis on concentric spheres",
    )
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    ds = sub.add_parser("dataset", help="dataset utilities")
    ds_sub = ds.add_subparsers(dest="dataset_command", required=True)
    gen = ds_sub.add_parser("gen", help="render a reference view dataset")
    gen.add_argument("--out", required=True)
    gen.add_argument("--scene", default="studio")
    gen.add_argument("--layer", default="fovea", choices=["fovea", "mid", "far"])
    gen.add_argument("--step", type=float, default=0.05)
    gen.add_argument("--layer-scale", type=float, default=1.0)
    gen.add_argument("--width", type=int, default=None)
    gen.add_argument("--height", type=int, default=None)
    gen.add_argument("--max-positions", type=int, default=None)
    gen.add_argument("--max-rotations", type=int, default=None)
    gen.set_defaults(func=cmd_dataset_gen)

    tr = sub.add_parser("train", help="train a layer field on a dataset")
    tr.add_argument("--dataset", required=True)
    tr.add_argument("--out", required=True)
    tr.add_argument("--scene", default="studio")
    tr.add_argument("--spheres", type=int, default=32)
    tr.add_argument("--mlp-layers", type=int, default=4)
    tr.add_argument("--channels", type=int, default=128)
    tr.add_argument("--bands", type=int, default=10)
    tr.add_argument("--epochs", type=int, default=20)
    tr.add_argument("--lr", type=float, default=5e-4)
    tr.add_argument("--batch", type=int, default=4096)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--warmup", type=int, default=0)
    tr.add_argument("--limit-views", type=int, default=None)
    tr.add_argument("--checkpoints", default=None)
    tr.add_argument("--time-budget-s", type=float, default=None)
    tr.add_argument("--r-near", type=float, default=0.0)
    tr.add_argument("--r-far", type=float, default=0.0)
    tr.set_defaults(func=cmd_train)

    op = sub.add_parser("optimize", help="latency-quality configuration search")
    op.add_argument("--out", required=True)
    op.add_argument("--scene", default="studio")
    op.add_argument("--budget", type=float, default=24.0)
    op.add_argument("--n-options", default="8,16,32")
    op.add_argument("--nm-options", default="2,4")
    op.add_argument("--nc-options", default="32,64,128")
    op.add_argument("--bands", type=int, default=10)
    op.add_argument("--probe-rays", type=int, default=512)
    op.add_argument("--probes", type=int, default=4096)
    op.add_argument("--discrepancy-epochs", type=int, default=2)
    op.add_argument("--discrepancy-rays", type=int, default=4096)
    op.add_argument("--objective-points", type=int, default=48)
    op.add_argument("--trajectory-s", type=float, default=0.5)
    op.add_argument("--seed", type=int, default=0)
    op.set_defaults(func=cmd_optimize)

    def add_engine_args(sp):
        sp.add_argument("--config", default=None)
        sp.add_argument("--models", default=None)
        sp.add_argument("--random-fields", action="store_true")
        sp.add_argument("--scene", default="studio")
        sp.add_argument("--layer-scale", type=float, default=None)
        sp.add_argument("--display-scale", type=float, default=None)

    rd = sub.add_parser("render", help="render one frame to PNGs")
    add_engine_args(rd)
    rd.add_argument("--pose", default="0,0,0")
    rd.add_argument("--yaw", type=float, default=0.0)
    rd.add_argument("--gaze", default="0.5,0.5")
    rd.add_argument("--out", required=True)
    rd.set_defaults(func=cmd_render)

    ev = sub.add_parser("eval", help="score a frame against the reference render")
    add_engine_args(ev)
    ev.add_argument("--pose", default="0,0,0")
    ev.add_argument("--yaw", type=float, default=0.0)
    ev.add_argument("--gaze", default="0.5,0.5")
    ev.add_argument("--out", required=True)
    ev.set_defaults(func=cmd_eval)

    sv = sub.add_parser("serve", help="run the frame-streaming service")
    add_engine_args(sv)
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--port", type=int, default=8765)
    sv.add_argument("--encoding", default="png", choices=["png", "raw"])
    sv.set_defaults(func=cmd_serve)

    bn = sub.add_parser("bench", help="time the pipeline per mode")
    add_engine_args(bn)
    bn.add_argument("--mode", action="append", default=None,
                    choices=["adaptive", "naive-stereo"])
    bn.add_argument("--frames", type=int, default=30)
    bn.add_argument("--warmup", type=int, default=5)
    bn.add_argument("--out", default="bench.csv")
    bn.set_defaults(func=cmd_bench)

    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FovnerfError, FileNotFoundError, ValueError) as exc:
        return fail(exc)


if __name__ == "__main__":
    sys.exit(main())
