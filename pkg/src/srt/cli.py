"""Command-line entry points for the whole pipeline.

    srt gen-data | train | train-semantic | eval | render | benchmark
        | noise-sweep | epi | attention | serve

Every subcommand takes --seed and --config (JSON or TOML; sections named
after the subcommand override parser defaults, explicit flags win).
Environment variables SRT_CHECKPOINT and SRT_BIND supply the default
checkpoint path and serve address when flags are omitted.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from .geometry import RigidPose, Intrinsics
from .scenes import (SceneConfig, generate_dataset, read_dataset, read_meta,
                     read_scene)
from .model import SrtConfig, SceneModel, desk_config, load_model, save_model
from .training import (TrainConfig, TrainState, fit, save_state, load_state,
                       train_semantic_head)
from .evaluation import (evaluate_model, render_panel, benchmark, noise_sweep,
                         lateral_path, build_epi, row_shift_estimates,
                         shift_correlation, export_attention, psnr)
from . import service as service_mod


def _load_config_file(path) -> dict:
    path = Path(path)
    text = path.read_bytes()
    if path.suffix in (".toml", ".tml"):
        import tomllib
        return tomllib.loads(text.decode())
    return json.loads(text.decode())


def _scene_config(args) -> SceneConfig:
    return SceneConfig(
        num_objects=(args.min_objects, args.max_objects),
        width=args.width, height=args.height,
        n_input=args.inputs, n_target=args.targets,
    )


def _model_config_from_meta(meta: dict, args) -> SrtConfig:
    overrides = dict(
        image_height=meta["height"], image_width=meta["width"],
        near=meta["near"], far=meta["far"],
        posed=(args.variant == "posed"),
        lightfield=not args.volumetric,
        encoder_on=not args.no_encoder,
        set_latent=not args.flat_latent,
        appearance=args.appearance,
    )
    if args.patch_factor:
        overrides["patch_factor"] = args.patch_factor
    return desk_config(**overrides)


def _add_variant_flags(p):
    p.add_argument("--variant", choices=["posed", "unposed"], default="posed")
    p.add_argument("--volumetric", action="store_true",
                   help="volumetric sampling + compositing instead of per-ray decode")
    p.add_argument("--no-encoder", action="store_true",
                   help="ablation: decoder attends straight into CNN tokens")
    p.add_argument("--flat-latent", action="store_true",
                   help="ablation: mean token + deep MLP decoder")
    p.add_argument("--appearance", action="store_true")
    p.add_argument("--patch-factor", type=int, default=0)


def _add_train_flags(p):
    p.add_argument("--steps", type=int, default=5000)
    p.add_argument("--batch-scenes", type=int, default=4)
    p.add_argument("--rays", type=int, default=1024)
    p.add_argument("--lr", type=float, default=3e-4)
    p.add_argument("--lr-final", type=float, default=5e-5)
    p.add_argument("--warmup", type=int, default=200)
    p.add_argument("--noise-sigma", type=float, default=0.0)
    p.add_argument("--checkpoint-every", type=int, default=2000)


def _train_config(args, total=None) -> TrainConfig:
    return TrainConfig(
        batch_scenes=args.batch_scenes, rays_per_batch=args.rays,
        total_steps=total if total is not None else args.steps,
        lr_init=args.lr, lr_final=args.lr_final, warmup_steps=args.warmup,
        pose_noise_sigma=args.noise_sigma, seed=args.seed,
        checkpoint_every=args.checkpoint_every,
    )


def _checkpoint_path(args) -> str:
    ckpt = getattr(args, "checkpoint", None) or os.environ.get("SRT_CHECKPOINT")
    if not ckpt:
        sys.exit("no checkpoint: pass --checkpoint or set SRT_CHECKPOINT")
    return ckpt


def _echo(obj):
    print(json.dumps(obj))


# -- subcommand implementations ----------------------------------------------

def cmd_gen_data(args) -> int:
    cfg = _scene_config(args)
    t0 = time.monotonic()
    samples = generate_dataset(args.out, args.scenes, base_seed=args.seed,
                               cfg=cfg, split=args.split)
    print(f"wrote {len(samples)} scenes to {args.out} "
          f"({time.monotonic() - t0:.1f}s, split={args.split})")
    return 0


def cmd_train(args) -> int:
    samples = read_dataset(args.data)
    meta = read_meta(args.data)
    tcfg = _train_config(args)
    out = Path(args.out)
    if args.resume:
        state = load_state(args.resume)
        print(f"resumed at step {state.step}")
    else:
        mcfg = _model_config_from_meta(meta, args)
        state = TrainState.fresh(mcfg, tcfg, world_scale=meta["world_scale"])
    t0 = time.monotonic()

    def log(m):
        m["wall"] = round(time.monotonic() - t0, 1)
        print(json.dumps(m))

    fit(state, samples, steps=args.steps - state.step, out_dir=out, log=log)
    model = SceneModel(state.model_cfg, state.params, world_scale=state.world_scale)
    model.save(out / "model.srt", extra={"step": state.step})
    save_state(out / "state_final.srt", state)
    print(f"saved {out / 'model.srt'}")
    return 0


def cmd_train_semantic(args) -> int:
    samples = read_dataset(args.data)
    meta = read_meta(args.data)
    cfg, params, ck_meta = load_model(_checkpoint_path(args))
    tcfg = _train_config(args)
    sem = train_semantic_head(params, cfg, samples, tcfg,
                              num_classes=meta["num_classes"],
                              world_scale=meta["world_scale"], steps=args.steps,
                              log=lambda m: print(json.dumps(m)))
    merged = dict(params)
    merged.update(sem)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_model(out / "model_semantic.srt",
               cfg.with_overrides(semantic_classes=meta["num_classes"]), merged,
               extra={"world_scale": meta["world_scale"], "semantic": True})
    print(f"saved {out / 'model_semantic.srt'}")
    return 0


def cmd_eval(args) -> int:
    model = SceneModel.from_checkpoint(_checkpoint_path(args), force=args.force)
    scenes = read_dataset(args.data, limit=args.limit or None)
    rng = np.random.default_rng(args.seed) if args.shuffle_canonical else None
    report = evaluate_model(model, scenes, rng=rng, keep_renders=bool(args.panels))
    if args.panels:
        panel_dir = Path(args.panels)
        panel_dir.mkdir(parents=True, exist_ok=True)
        for scene, entry in zip(scenes, report.per_scene):
            render_panel(scene, entry.pop("renders"), panel_dir / f"{scene.scene_id}.png")
    if args.out:
        report.to_json(args.out)
    _echo({"psnr": report.psnr_mean, "ssim": report.ssim_mean,
           "oracle_psnr": report.oracle_psnr_mean, "scenes": len(report.per_scene)})
    return 0


def cmd_render(args) -> int:
    model = SceneModel.from_checkpoint(_checkpoint_path(args), force=args.force)
    scene = read_scene(args.scene)
    latent = model.encode_scene(np.stack([v.image for v in scene.input_views]),
                                [v.pose for v in scene.input_views],
                                [v.intrinsics for v in scene.input_views])
    if args.poses:
        cams = json.loads(Path(args.poses).read_text())
        views = [(RigidPose.from_matrix(c["camera_to_world"]),
                  Intrinsics.from_matrix(c["intrinsics"]), None) for c in cams]
    else:
        views = [(tv.pose, tv.intrinsics, tv.image) for tv in scene.target_views]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    h = args.height or scene.input_views[0].image.shape[0]
    w = args.width or scene.input_views[0].image.shape[1]
    from PIL import Image
    scores = []
    for k, (pose, intr, truth) in enumerate(views):
        img, _ = model.render_image(latent, pose, intr, w, h)
        Image.fromarray(np.clip(np.round(img * 255), 0, 255).astype(np.uint8)).save(
            out / f"frame_{k:04d}.png")
        if truth is not None:
            scores.append(psnr(img, truth))
    msg = {"frames": len(views), "out": str(out)}
    if scores:
        msg["psnr"] = float(np.mean(scores))
    _echo(msg)
    return 0


def cmd_benchmark(args) -> int:
    model = SceneModel.from_checkpoint(_checkpoint_path(args), force=args.force)
    scenes = read_dataset(args.data, limit=args.scenes)
    result = benchmark(model, scenes, frames=args.frames)
    out = result.to_dict()
    out["batching_beats_per_frame"] = bool(
        result.video_seconds < result.encode_seconds_median
        + result.frames * result.frame_seconds_mean)
    if args.out:
        Path(args.out).write_text(json.dumps(out, indent=1))
    _echo(out)
    return 0


def cmd_noise_sweep(args) -> int:
    train_scenes = read_dataset(args.data)
    eval_scenes = read_dataset(args.eval_data, limit=args.eval_limit or None)
    meta = read_meta(args.data)
    mcfg = _model_config_from_meta(meta, args)
    tcfg = _train_config(args)
    sigmas = [float(s) for s in args.sigmas.split(",")]
    result = noise_sweep(mcfg, tcfg, train_scenes, eval_scenes,
                         world_scale=meta["world_scale"], sigmas=sigmas,
                         steps=args.steps, include_unposed=not args.skip_unposed,
                         out_path=args.out, log=lambda m: print(json.dumps(m)))
    _echo(result)
    return 0


def cmd_epi(args) -> int:
    from PIL import Image
    from .scenes.procedural import render_reference
    model = SceneModel.from_checkpoint(_checkpoint_path(args), force=args.force)
    scene = read_scene(args.scene)
    latent = model.encode_scene(np.stack([v.image for v in scene.input_views]),
                                [v.pose for v in scene.input_views],
                                [v.intrinsics for v in scene.input_views])
    h, w = scene.input_views[0].image.shape[:2]
    base = scene.target_views[0]
    poses = lateral_path(base.pose, extent=args.extent, frames=args.frames)
    row = args.row if args.row >= 0 else h // 2
    epi_model = build_epi(
        lambda p: model.render_image(latent, p, base.intrinsics, w, h)[0], poses, row)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    Image.fromarray((np.clip(epi_model, 0, 1) * 255).astype(np.uint8)).save(out / "epi_model.png")
    _echo({"rows": epi_model.shape[0], "width": epi_model.shape[1], "row": row,
           "out": str(out)})
    return 0


def cmd_attention(args) -> int:
    model = SceneModel.from_checkpoint(_checkpoint_path(args), force=args.force)
    scene = read_scene(args.scene)
    u, v = (int(x) for x in args.pixel.split(","))
    maps = export_attention(model, scene, args.out, query_pixel=(u, v))
    _echo({"enc_layers": len(maps["enc"]), "dec_layers": len(maps["dec"]),
           "out": str(args.out)})
    return 0


def cmd_serve(args) -> int:
    model = SceneModel.from_checkpoint(_checkpoint_path(args), force=args.force)
    bind = args.bind or os.environ.get("SRT_BIND", "127.0.0.1:8008")
    host, _, port = bind.partition(":")
    ui = args.ui
    if ui is None:
        bundled = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        ui = bundled if bundled.is_dir() else None
    service_mod.serve(model, host=host or "127.0.0.1", port=int(port or 8008),
                      ui_dir=ui, max_sessions=args.max_sessions)
    return 0


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="srt", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--config", help="JSON/TOML config file with per-subcommand sections")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a procedural multi-view dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--scenes", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split", choices=["train", "test"], default="train")
    p.add_argument("--width", type=int, default=48)
    p.add_argument("--height", type=int, default=48)
    p.add_argument("--inputs", type=int, default=5)
    p.add_argument("--targets", type=int, default=3)
    p.add_argument("--min-objects", type=int, default=4)
    p.add_argument("--max-objects", type=int, default=8)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train end to end on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--resume", help="training state to continue from")
    _add_variant_flags(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("train-semantic", help="train the class decoder on a frozen encoder")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--seed", type=int, default=0)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train_semantic)

    p = sub.add_parser("eval", help="PSNR/SSIM report over a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--out")
    p.add_argument("--panels", help="directory for comparison panel PNGs")
    p.add_argument("--limit", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shuffle-canonical", action="store_true")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render", help="render poses against an encoded scene")
    p.add_argument("--scene", required=True, help="one scene directory")
    p.add_argument("--checkpoint")
    p.add_argument("--poses", help="JSON list of camera_to_world + intrinsics")
    p.add_argument("--out", required=True)
    p.add_argument("--width", type=int, default=0)
    p.add_argument("--height", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("benchmark", help="encode/render timing protocol")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--frames", type=int, default=100)
    p.add_argument("--scenes", type=int, default=5)
    p.add_argument("--out")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("noise-sweep", help="retrain per pose-noise level and evaluate")
    p.add_argument("--data", required=True)
    p.add_argument("--eval-data", required=True)
    p.add_argument("--out")
    p.add_argument("--sigmas", default="0,0.01,0.03,0.1,0.3")
    p.add_argument("--eval-limit", type=int, default=0)
    p.add_argument("--skip-unposed", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    _add_variant_flags(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_noise_sweep)

    p = sub.add_parser("epi", help="epipolar image over a lateral dolly path")
    p.add_argument("--scene", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--out", required=True)
    p.add_argument("--row", type=int, default=-1)
    p.add_argument("--frames", type=int, default=32)
    p.add_argument("--extent", type=float, default=3.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_epi)

    p = sub.add_parser("attention", help="export attention heatmaps for one query")
    p.add_argument("--scene", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--out", required=True)
    p.add_argument("--pixel", default="24,24")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_attention)

    p = sub.add_parser("serve", help="start the HTTP render service")
    p.add_argument("--checkpoint")
    p.add_argument("--bind", help="host:port (default SRT_BIND or 127.0.0.1:8008)")
    p.add_argument("--ui", help="static viewer bundle directory")
    p.add_argument("--max-sessions", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    # config file values become defaults; explicit flags still win
    if args.config:
        sections = _load_config_file(args.config)
        section = sections.get(args.command.replace("-", "_"), {})
        section.update(sections.get("common", {}))
        known = set(vars(args))
        stated = {a.lstrip("-").replace("-", "_").split("=")[0] for a in argv}
        for key, value in section.items():
            if key in known and key not in stated:
                setattr(args, key, value)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
