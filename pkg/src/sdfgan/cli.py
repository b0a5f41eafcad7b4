"""Command-line entry point: render, fit, train-gan, mesh, bench.

Every subcommand reads an optional INI config (see :mod:`.config`) and
applies flag overrides on top, writes its artifacts to files, and exits
0 on success, 1 on runtime failures (missing files, bad checkpoints),
or 2 on usage errors (bad flags, malformed config, unknown scenes).
Verbosity comes from the ``SDFGAN_LOG`` environment variable (debug,
info, warning, error); artifacts depend only on flags and seeds, never
on the clock.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import time

import numpy as np

from . import bench as bench_mod
from . import checkpoint as ckpt
from . import config as config_mod
from . import geometry, images, render, scenes, train
from . import mesh as mesh_mod
from .network import GeneratorNetwork, NetworkConfig

LOG = logging.getLogger("sdfgan")


class UsageError(Exception):
    """Invalid user input discovered after argparse; exits with code 2."""


def _setup_logging():
    name = os.environ.get("SDFGAN_LOG", "info").upper()
    level = getattr(logging, name, None)
    if not isinstance(level, int):
        level = logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


# === config plumbing ===

def _load_tree(args) -> dict:
    if getattr(args, "config", None):
        return config_mod.load_config(args.config)
    return config_mod.defaults()


def _network_config(tree: dict) -> NetworkConfig:
    n = tree["network"]
    return NetworkConfig(n_freqs_x=n["n_freqs_x"], n_freqs_d=n["n_freqs_d"],
                         z_dim=n["z_dim"], width=n["width"], depth=n["depth"],
                         color_hidden=n["color_hidden"], radius=n["radius"])


def _camera_pose(cam: dict) -> geometry.CameraPose:
    az, el, r = cam["azimuth"], cam["elevation"], cam["distance"]
    position = (r * np.cos(el) * np.cos(az),
                r * np.cos(el) * np.sin(az),
                r * np.sin(el))
    try:
        return geometry.CameraPose(position=position, fov=cam["fov"])
    except ValueError as exc:
        raise UsageError(str(exc))


def _render_config(r: dict) -> render.RenderConfig:
    cfg = render.RenderConfig(
        width=r["width"], height=r["height"], strategy=r["strategy"],
        n_coarse=r["n_coarse"], n_fine=r["n_fine"], beta=r["beta"],
        delta=r["delta"], march_eps=r["march_eps"],
        max_march_iters=r["max_march_iters"],
        background=tuple(r["background"]), seed=r["seed"],
        threads=r["threads"], stratified=r["stratified"])
    try:
        cfg.validate()
    except ValueError as exc:
        raise UsageError(str(exc))
    return cfg


def _scene_field(tree: dict) -> scenes.AnalyticSdf:
    sc = tree["scene"]
    try:
        return scenes.resolve_scene(sc["name"], sc["radius"])
    except ValueError as exc:
        raise UsageError(str(exc))


def _latent(net, z_seed) -> np.ndarray:
    if z_seed is None:
        return np.zeros(net.cfg.z_dim, dtype=net.cfg.dtype)
    rng = np.random.default_rng(int(z_seed))
    return rng.normal(size=net.cfg.z_dim).astype(net.cfg.dtype)


def _field_from_args(args, tree):
    """Scene or checkpoint field plus the checkpoint's sharpness, if any.

    A checkpoint rebuilds the network from its stored architecture
    unless an explicit config overrides it.
    """
    if args.checkpoint is not None:
        explicit = _network_config(tree) if getattr(args, "config", None) \
            else None
        net, beta, _ = train.load_generator(args.checkpoint, explicit)
        return render.NetworkField(net, _latent(net, args.z_seed)), beta
    if args.scene is None and not getattr(args, "config", None):
        raise UsageError("pass --scene NAME or --checkpoint FILE")
    return _scene_field(tree), None


# === subcommands ===

def cmd_render(args) -> int:
    tree = _load_tree(args)
    config_mod.merge_overrides(tree, "scene", name=args.scene,
                               radius=args.radius)
    config_mod.merge_overrides(
        tree, "camera", azimuth=args.azimuth, elevation=args.elevation,
        distance=args.distance, fov=args.fov)
    config_mod.merge_overrides(
        tree, "render", width=args.width, height=args.height,
        strategy=args.strategy, n_coarse=args.n_coarse, n_fine=args.n_fine,
        beta=args.beta, delta=args.delta, seed=args.seed,
        threads=args.threads)

    field, ckpt_beta = _field_from_args(args, tree)
    if ckpt_beta is not None and args.beta is None:
        tree["render"]["beta"] = ckpt_beta
    cfg = _render_config(tree["render"])
    pose = _camera_pose(tree["camera"])

    t0 = time.perf_counter()
    out = render.render(field, pose, cfg)
    elapsed = time.perf_counter() - t0

    os.makedirs(args.out, exist_ok=True)
    images.save_png(os.path.join(args.out, "rgb.png"), out.rgb)
    images.save_depth(os.path.join(args.out, "depth.dpth"), out.depth)
    images.depth_to_png(os.path.join(args.out, "depth.png"), out.depth)
    images.normal_to_png(os.path.join(args.out, "normal.png"), out.normal)
    print(f"wrote rgb/depth/normal to {args.out}: "
          f"{out.sdf_queries} field queries, {elapsed:.3f}s")
    return 0


def cmd_fit(args) -> int:
    tree = _load_tree(args)
    config_mod.merge_overrides(tree, "scene", name=args.scene,
                               radius=args.radius)
    config_mod.merge_overrides(
        tree, "fit", iterations=args.iterations, lr=args.lr,
        eikonal_weight=args.eikonal_weight, seed=args.seed)

    target = _scene_field(tree)
    fcfg = tree["fit"]
    net = GeneratorNetwork(_network_config(tree), seed=fcfg["seed"])
    t0 = time.perf_counter()
    history = train.fit_sdf(
        net, target, fcfg["iterations"], lr=fcfg["lr"], batch=fcfg["batch"],
        eikonal_weight=fcfg["eikonal_weight"], seed=fcfg["seed"],
        bound=fcfg["bound"], log_every=fcfg["log_every"])
    elapsed = time.perf_counter() - t0

    os.makedirs(args.out, exist_ok=True)
    ckpt_path = os.path.join(args.out, "ckpt_final.bin")
    train.save_network_checkpoint(ckpt_path, net, beta=tree["render"]["beta"],
                                  seed=fcfg["seed"],
                                  iteration=fcfg["iterations"])
    hist_path = os.path.join(args.out, "history.csv")
    with open(hist_path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "loss", "data", "eikonal"])
        for i, it in enumerate(history["iteration"]):
            writer.writerow([it, repr(history["loss"][i]),
                             repr(history["data"][i]),
                             repr(history["eikonal"][i])])
    print(f"fit finished in {elapsed:.1f}s: final loss "
          f"{history['loss'][-1]:.5f}; wrote {ckpt_path} and {hist_path}")
    return 0


def _stage_plan(plan: str, iterations: int):
    if plan == "smoke":
        return train.smoke_stage_plan(iterations)
    if plan == "default":
        return train.default_stage_plan(iterations)
    raise UsageError(f"unknown stage plan {plan!r}; use default or smoke")


def cmd_train_gan(args) -> int:
    tree = _load_tree(args)
    dataset = args.dataset
    if dataset in (None, "", "synthetic-spheres"):
        dataset = None
    config_mod.merge_overrides(
        tree, "train", plan=args.plan, iterations=args.iters,
        batch=args.batch, lr=args.lr, seed=args.seed, dataset=dataset)
    t = tree["train"]

    tcfg = train.TrainConfig(
        out_dir=args.out,
        stages=_stage_plan(t["plan"], t["iterations"]),
        batch=t["batch"], lr=t["lr"], eikonal_weight=t["eikonal_weight"],
        n_eikonal=t["n_eikonal"], n_normal=t["n_normal"],
        normal_sigma=t["normal_sigma"], seed=t["seed"],
        data_seed=t["data_seed"], dataset_dir=t["dataset"],
        n_synthetic=t["n_synthetic"], camera_radius=t["camera_radius"],
        camera_fov=t["camera_fov"], march_eps=t["march_eps"],
        log_every=t["log_every"], checkpoint_every=t["checkpoint_every"],
        network=_network_config(tree))

    t0 = time.perf_counter()
    result = train.train_gan(tcfg, resume=args.resume)
    elapsed = time.perf_counter() - t0
    last = result["last"]
    tail = ""
    if last is not None:
        tail = (f"; final losses d={last['loss_d']:.4f} "
                f"g={last['loss_g']:.4f} beta={last['beta']:.1f}")
    print(f"training finished in {elapsed:.1f}s: wrote "
          f"{result['checkpoint']} and {result['log']}{tail}")
    return 0


def cmd_mesh(args) -> int:
    tree = _load_tree(args)
    config_mod.merge_overrides(tree, "scene", name=args.scene,
                               radius=args.radius)
    config_mod.merge_overrides(tree, "mesh", resolution=args.res,
                               bound=args.bound)

    field, _ = _field_from_args(args, tree)
    m = tree["mesh"]
    verts, faces = mesh_mod.extract_mesh(field.sdf, resolution=m["resolution"],
                                         bound=m["bound"])
    os.makedirs(args.out, exist_ok=True)
    obj_path = os.path.join(args.out, "mesh.obj")
    ply_path = os.path.join(args.out, "mesh.ply")
    mesh_mod.save_obj(obj_path, verts, faces)
    mesh_mod.save_ply(ply_path, verts, faces)
    stats = mesh_mod.mesh_stats(verts, faces)
    print(f"wrote {obj_path} and {ply_path}: "
          f"{stats['n_vertices']} vertices, {stats['n_faces']} faces, "
          f"watertight={stats['watertight']}")
    return 0


def cmd_bench(args) -> int:
    tree = _load_tree(args)
    config_mod.merge_overrides(tree, "scene", name=args.scene,
                               radius=args.radius)
    config_mod.merge_overrides(
        tree, "bench", width=args.width, height=args.height, beta=args.beta,
        delta=args.delta, repeats=args.repeats, seed=args.seed,
        threads=args.threads)

    field = _scene_field(tree)
    pose = _camera_pose(tree["camera"])
    b = tree["bench"]
    report = bench_mod.compare_strategies(
        field, pose, width=b["width"], height=b["height"], beta=b["beta"],
        n_coarse=b["n_coarse"], n_fine=b["n_fine"], delta=b["delta"],
        seed=b["seed"], threads=b["threads"], repeats=b["repeats"])

    out_dir = os.path.dirname(args.out)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    with open(args.out, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        writer.writerow(["strategy", "rmse", "sdf_queries", "queries_per_ray",
                         "seconds_per_frame", "fps"])
        for res in report["results"].values():
            writer.writerow([res.strategy, repr(res.rmse), res.sdf_queries,
                             repr(res.queries_per_ray),
                             repr(res.seconds_per_frame), repr(res.fps)])
    print(bench_mod.format_report(report))
    print(f"wrote {args.out}")
    return 0


# === parser ===

def _add_common(sub, config_flag=True):
    if config_flag:
        sub.add_argument("--config", metavar="FILE",
                         help="INI configuration file; flags override it")
    sub.add_argument("--seed", type=int, help="override the config seed")


def _add_scene_flags(sub):
    sub.add_argument("--scene", help="stock scene name or primitive expression")
    sub.add_argument("--radius", type=float,
                     help="radius for the sphere-based scenes")


def _add_camera_flags(sub):
    sub.add_argument("--azimuth", type=float, help="orbit angle, radians")
    sub.add_argument("--elevation", type=float, help="height angle, radians")
    sub.add_argument("--distance", type=float, help="camera distance")
    sub.add_argument("--fov", type=float, help="full view angle, radians")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sdfgan",
        description="Signed-distance-field rendering and generative training.",
        epilog=config_mod.describe(),
        formatter_class=argparse.RawDescriptionHelpFormatter)
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("render", help="render one frame to image files")
    _add_common(p)
    _add_scene_flags(p)
    _add_camera_flags(p)
    p.add_argument("--checkpoint", help="render a trained generator instead")
    p.add_argument("--z-seed", type=int,
                   help="draw the latent code from this seed (default: zeros)")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--strategy", choices=render.STRATEGIES)
    p.add_argument("--n-coarse", type=int)
    p.add_argument("--n-fine", type=int)
    p.add_argument("--beta", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--threads", type=int)
    p.add_argument("--out", default="out_render", help="output directory")
    p.set_defaults(func=cmd_render)

    p = subs.add_parser("fit", help="fit the generator to an analytic scene")
    _add_common(p)
    _add_scene_flags(p)
    p.add_argument("--iterations", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--eikonal-weight", type=float)
    p.add_argument("--out", default="out_fit", help="output directory")
    p.set_defaults(func=cmd_fit)

    p = subs.add_parser("train-gan", help="adversarial training loop")
    _add_common(p)
    p.add_argument("--dataset",
                   help="PNG folder, or 'synthetic-spheres' (the default)")
    p.add_argument("--iters", type=int, help="total iterations")
    p.add_argument("--plan", choices=("default", "smoke"))
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--resume", metavar="CKPT",
                   help="continue from a checkpoint file")
    p.add_argument("--out", default="out_train", help="output directory")
    p.set_defaults(func=cmd_train_gan)

    p = subs.add_parser("mesh", help="extract the zero level set as a mesh")
    _add_common(p)
    _add_scene_flags(p)
    p.add_argument("--checkpoint", help="mesh a trained generator instead")
    p.add_argument("--z-seed", type=int,
                   help="draw the latent code from this seed (default: zeros)")
    p.add_argument("--res", type=int, help="grid points per axis")
    p.add_argument("--bound", type=float, help="half-size of the cube")
    p.add_argument("--out", default="out_mesh", help="output directory")
    p.set_defaults(func=cmd_mesh)

    p = subs.add_parser("bench", help="compare sampling strategies")
    _add_common(p)
    _add_scene_flags(p)
    _add_camera_flags(p)
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--beta", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--repeats", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--out", default="bench.csv", help="output CSV path")
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging()
    try:
        return args.func(args)
    except (UsageError, config_mod.ConfigError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, ckpt.CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
