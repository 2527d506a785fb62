"""Command-line entry point: scene generation, planning, benchmarking, dataset export, blocker removal."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .config import CONFIG_ENV, RunConfig, load_config
from .scene import PlacementError, Scene, TargetNotFoundError, canonical_json, crop_target, load_scene, render_cloud


class CLIError(RuntimeError):
    pass


def _emit(text: str, out) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _grasp_dict(sg) -> dict:
    q, t = sg.grasp.pose.as_list()
    return {"quaternion_wxyz": q, "translation_xyz": t, "quality": sg.quality, "collision": sg.collision, "score": sg.score}


def _observe(scene: Scene, target: int, cfg: RunConfig, rng: np.random.Generator):
    """Render the scene and crop around ``target``; missing or invisible targets are errors."""
    if target not in scene.instance_ids:
        raise TargetNotFoundError(target)
    if scene.camera is None:
        raise CLIError("scene has no camera")
    cloud = render_cloud(scene, depth_noise=cfg.scene.depth_noise, rng=rng)
    sc = cfg.scene
    return crop_target(cloud, target, sc.crop_box, sc.crop_noise, sc.crop_points, rng)


# --------------------------------------------------------------------------- subcommands


def cmd_gen_scenes(args, cfg: RunConfig) -> None:
    from .assets import asset_library
    from .scene import generate_scene, save_scene, write_ply

    sc = cfg.scene
    if args.n < 0 or args.objects < 1:
        raise CLIError("--n must be >= 0 and --objects >= 1")
    library = asset_library(sc.library_size, sc.library_seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, ss in enumerate(np.random.SeedSequence(args.seed).spawn(args.n)):
        rng = np.random.default_rng(ss)
        scene = generate_scene(library, args.objects, rng, sc.table_extent, sc.table_height, sc.max_attempts, tuple(sc.resolution))
        save_scene(scene, out / f"scene_{i:04d}.json")
        write_ply(render_cloud(scene, depth_noise=sc.depth_noise, rng=rng), out / f"scene_{i:04d}.ply")
    print(f"wrote {args.n} scene(s) to {out}", file=sys.stderr)


def cmd_plan(args, cfg: RunConfig) -> None:
    from .scoring import ScoringContext, plan_grasps

    scene = load_scene(args.scene)
    obs_ss, plan_ss = np.random.SeedSequence(args.seed).spawn(2)
    X, _ = _observe(scene, args.target, cfg, np.random.default_rng(obs_ss))
    c = cfg.collision
    ctx = ScoringContext(cfg.gripper.build(), args.target, scene, cfg.cascade.friction_mu, c.soft, c.voxel_size, c.voxel_points_per_object)
    result = plan_grasps(X, args.target, ctx, cfg.cascade, args.evaluator, args.collider, np.random.default_rng(plan_ss))
    doc = {
        "scene": Path(args.scene).name,
        "target": args.target,
        "evaluator": args.evaluator,
        "collider": args.collider,
        "candidates": len(result.candidates),
        "grasps": [_grasp_dict(sg) for sg in result.ranked],
    }
    _emit(canonical_json(doc), args.out)


def cmd_bench(args, cfg: RunConfig) -> None:
    from .bench import run_ablation

    variants = [v.strip() for v in args.variants.split(",") if v.strip()] if args.variants else None
    report = run_ablation(cfg, variants, args.scenes, args.seed, record_timings=args.timings)
    for path in report.write(args.out):
        print(f"wrote {path}", file=sys.stderr)
    for c in report.comparisons:
        print(
            f"{c['better']} vs {c['worse']}: AUC difference {c['auc_difference']:.4f} "
            f"95% CI [{c['ci95'][0]:.4f}, {c['ci95'][1]:.4f}]",
            file=sys.stderr,
        )


def cmd_export_dataset(args, cfg: RunConfig) -> None:
    from .dataset import export_dataset

    paths = sorted(Path(args.scenes).glob("*.json"))
    if not paths:
        raise CLIError(f"no scene files in {args.scenes}")
    if args.batch < 1:
        raise CLIError("--batch must be positive")
    info = export_dataset(paths, args.out, cfg, args.batch, args.n_batches, args.seed)
    sys.stdout.write(canonical_json(info))
    if info["audit"]["agreement"] < 1.0:
        raise CLIError(f"label audit disagreed on records {info['audit']['mismatches']}")


def cmd_remove_blockers(args, cfg: RunConfig) -> None:
    from .blocker import TargetBlockedError, plan_scene_removal

    scene = load_scene(args.scene)
    obs_ss, plan_ss = np.random.SeedSequence(args.seed).spawn(2)
    X, _ = _observe(scene, args.target, cfg, np.random.default_rng(obs_ss))
    seed = int(plan_ss.generate_state(1)[0])
    try:
        plan = plan_scene_removal(X, args.target, scene, cfg, seed)
    except TargetBlockedError as e:
        _emit(canonical_json({"scene": Path(args.scene).name, **e.plan.to_dict(), "error": str(e)}), args.out)
        raise CLIError(str(e)) from e
    _emit(canonical_json({"scene": Path(args.scene).name, **plan.to_dict()}), args.out)


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="graspclutter", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("--config", default=None, help=f"JSON or YAML run config (default: ${CONFIG_ENV})")
        if seed:
            sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("gen-scenes", help="generate random tabletop scenes (JSON + PLY)")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--objects", type=int, required=True)
    sp.add_argument("--out", required=True)
    common(sp)
    sp.set_defaults(func=cmd_gen_scenes)

    sp = sub.add_parser("plan", help="rank grasps on one object of a scene")
    sp.add_argument("--scene", required=True)
    sp.add_argument("--target", type=int, required=True)
    sp.add_argument("--evaluator", default="antipodal")
    sp.add_argument("--collider", default="soft_collision")
    sp.add_argument("--out", default=None, help="output file (default: stdout)")
    common(sp)
    sp.set_defaults(func=cmd_plan)

    sp = sub.add_parser("bench", help="run the method ablation and write report, curves and figure")
    sp.add_argument("--variants", default=None, help="comma-separated labeling/collider names")
    sp.add_argument("--out", required=True)
    sp.add_argument("--scenes", type=int, default=None, help="override the number of scenes")
    sp.add_argument("--timings", action="store_true", help="include wall-clock timings in the report")
    sp.add_argument("--config", default=None, help=f"JSON or YAML run config (default: ${CONFIG_ENV})")
    sp.add_argument("--seed", type=int, default=None, help="override the config seed")
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("export-dataset", help="label scenes and write balanced JSON-lines batches")
    sp.add_argument("--scenes", required=True, help="directory of scene JSON files")
    sp.add_argument("--out", required=True)
    sp.add_argument("--batch", type=int, required=True)
    sp.add_argument("--n-batches", type=int, default=1)
    common(sp)
    sp.set_defaults(func=cmd_export_dataset)

    sp = sub.add_parser("remove-blockers", help="plan which objects to remove before grasping a target")
    sp.add_argument("--scene", required=True)
    sp.add_argument("--target", type=int, required=True)
    sp.add_argument("--out", default=None, help="output file (default: stdout)")
    common(sp)
    sp.set_defaults(func=cmd_remove_blockers)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        args.func(args, cfg)
    except TargetNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (CLIError, PlacementError, ValueError, OSError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
