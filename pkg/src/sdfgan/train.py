"""Training: direct distance-field fitting and adversarial image-space
training of the generator.

The adversarial loop alternates one critic update and one generator
update per iteration. Generator images are rendered once per iteration
on the tape; their detached values feed the critic update and the same
recorded graph then carries the generator update. Image sharpness is
trainable: opacity uses beta = exp(b) + floor, with b a learned scalar
and the floor a per-stage constant that only ever rises.

Determinism: every random draw inside iteration ``i`` comes from a
dedicated stream seeded by (seed, iteration), so a run is reproducible
bit for bit and a resumed run continues exactly where the original
would have gone.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image
from skimage import measure

from . import autodiff as ad
from . import checkpoint as ckpt
from . import geometry, losses, render, sampling
from .autodiff import Adam, Var
from .network import GeneratorNetwork, NetworkConfig
from .scenes import Sphere

_ITER_KEY = 1000   # spawn-key offset for per-iteration rng streams
_DATA_KEY = 2000   # spawn-key offset for dataset synthesis


# === configuration ===

@dataclass
class StageSpec:
    """One curriculum stage of adversarial training."""
    iterations: int
    image_size: int
    strategy: str
    n_coarse: int
    n_fine: int = 0
    delta: float = 0.3
    beta_floor: float = 20.0
    r1_weight: float = 10.0
    normal_weight: float = 0.0


def default_stage_plan(total_iterations: int = 60000) -> list:
    """Grow image size and sharpness while samples get cheaper."""
    third = total_iterations // 3
    rest = total_iterations - 2 * third
    return [
        StageSpec(third, 16, render.COARSE_FINE, 16, n_fine=16,
                  beta_floor=20.0, r1_weight=10.0),
        StageSpec(third, 32, render.COARSE_ACCURATE, 16, delta=0.15,
                  beta_floor=40.0, r1_weight=5.0, normal_weight=1.0),
        StageSpec(rest, 48, render.COARSE_ACCURATE, 8, delta=0.075,
                  beta_floor=80.0, r1_weight=2.5, normal_weight=1.0),
    ]


def smoke_stage_plan(total_iterations: int = 2000) -> list:
    """Short all-16 curriculum used by quick runs and the test suite.

    The first two thirds sample the full ray range, which keeps a
    gradient path open to codes whose shape starts invisible; the
    traced sampler takes over only for the final polish.
    """
    third = total_iterations // 3
    rest = total_iterations - 2 * third
    return [
        StageSpec(third, 16, render.COARSE_FINE, 8, n_fine=8,
                  beta_floor=20.0, r1_weight=10.0),
        StageSpec(third, 16, render.COARSE_FINE, 8, n_fine=8,
                  beta_floor=40.0, r1_weight=5.0, normal_weight=1.0),
        StageSpec(rest, 16, render.COARSE_ACCURATE, 8, delta=0.1,
                  beta_floor=80.0, r1_weight=5.0, normal_weight=1.0),
    ]


@dataclass
class TrainConfig:
    out_dir: str
    stages: list = field(default_factory=default_stage_plan)
    batch: int = 6
    lr: float = 4e-4
    eikonal_weight: float = 0.5
    n_eikonal: int = 192
    n_normal: int = 96
    normal_sigma: float = 0.01
    seed: int = 0
    data_seed: int = 7
    dataset_dir: str | None = None     # None synthesizes sphere data
    n_synthetic: int = 500
    camera_radius: float = 1.5
    camera_fov: float = 1.0
    background: tuple = (1.0, 1.0, 1.0)
    march_eps: float = 1e-3
    max_march_iters: int = 32
    log_every: int = 1
    checkpoint_every: int = 500
    network: NetworkConfig | None = None

    def total_iterations(self) -> int:
        return sum(s.iterations for s in self.stages)

    def stage_at(self, iteration: int) -> StageSpec:
        used = 0
        for s in self.stages:
            used += s.iterations
            if iteration < used:
                return s
        return self.stages[-1]

    def pose_distribution(self) -> geometry.PoseDistribution:
        return geometry.PoseDistribution(kind=geometry.UNIFORM_HEMISPHERE,
                                         radius=self.camera_radius,
                                         fov=self.camera_fov)


# === dataset ===

def synthesize_dataset(n: int, size: int, seed: int,
                       camera_radius: float = 1.5,
                       camera_fov: float = 1.0) -> np.ndarray:
    """Render n views of random spheres; returns (n, size, size, 3)
    float32 in [0, 1].

    Each image draws its own radius, surface color, and camera pose, so
    the set spans the appearance variation the generator must cover.
    """
    dist = geometry.PoseDistribution(kind=geometry.UNIFORM_HEMISPHERE,
                                     radius=camera_radius, fov=camera_fov)
    out = np.empty((n, size, size, 3), dtype=np.float32)
    for i in range(n):
        rng = np.random.default_rng(
            np.random.SeedSequence(seed, spawn_key=(_DATA_KEY, i)))
        radius = rng.uniform(0.3, 0.6)
        albedo = rng.uniform(0.25, 0.95, size=3)
        pose = geometry.sample_pose(dist, rng)
        cfg = render.RenderConfig(
            width=size, height=size, strategy=render.COARSE_ACCURATE,
            n_coarse=24, beta=400.0, delta=0.1,
            seed=int(rng.integers(2 ** 31)))
        frame = render.render(Sphere(radius=radius, albedo=albedo), pose, cfg)
        out[i] = frame.rgb.astype(np.float32)
    return out


def load_image_folder(path, size: int) -> np.ndarray:
    """Load every PNG in a directory (sorted by name) at the given
    square size; returns (n, size, size, 3) float32."""
    names = sorted(f for f in os.listdir(path) if f.lower().endswith(".png"))
    if not names:
        raise ValueError(f"no PNG images found in {path}")
    out = np.empty((len(names), size, size, 3), dtype=np.float32)
    for i, name in enumerate(names):
        with Image.open(os.path.join(path, name)) as im:
            im = im.convert("RGB")
            if im.size != (size, size):
                im = im.resize((size, size), Image.BILINEAR)
            out[i] = np.asarray(im, dtype=np.float32) / 255.0
    return out


def resize_batch(images: np.ndarray, size: int) -> np.ndarray:
    """Bilinear-resize a batch of (n, h, w, 3) float images."""
    if images.shape[1] == size and images.shape[2] == size:
        return images
    out = np.empty((images.shape[0], size, size, 3), dtype=np.float32)
    for i, img in enumerate(images):
        q = Image.fromarray(np.round(np.clip(img, 0, 1) * 255).astype(np.uint8))
        out[i] = np.asarray(q.resize((size, size), Image.BILINEAR),
                            dtype=np.float32) / 255.0
    return out


# === evaluation helpers ===

def silhouette_roundness(weight_sum: np.ndarray, level: float = 0.5) -> float:
    """Isoperimetric score of the coverage mask: 4*pi*area/perimeter^2.

    One filled disc scores about 1; ragged, fragmented, or frame-
    clipped silhouettes score lower, and empty masks score 0. The mask
    is padded with a background ring so shapes touching the image edge
    keep a closed boundary, and scores are capped at 1 because discrete
    contours can slightly under-measure the perimeter.
    """
    w = np.asarray(weight_sum, dtype=np.float64)
    area = float((w > level).sum())
    if area == 0.0:
        return 0.0
    w = np.pad(w, 1, constant_values=min(0.0, level - 1.0))
    perim = 0.0
    for contour in measure.find_contours(w, level):
        seg = np.diff(contour, axis=0)
        perim += float(np.sum(np.linalg.norm(seg, axis=1)))
    if perim <= 0.0:
        return 0.0
    return min(4.0 * math.pi * area / (perim * perim), 1.0)


# === taped batch rendering ===

def _plan_image(net, z_row, pose, stage: StageSpec, tcfg: TrainConfig,
                beta_value: float, rng):
    """Choose frozen sample positions for one view (values only).

    Returns a dict with per-ray sample positions, the rays themselves,
    which rays carry samples, surface anchor points, and the number of
    field queries spent planning.
    """
    size = stage.image_size
    o, d, near, far = geometry.generate_rays(pose, size, size)
    o = o.reshape(-1, 3)
    d = d.reshape(-1, 3)
    n_rays = o.shape[0]
    queries = 0

    def sdf_fn(p):
        return net.sdf_values(p, np.broadcast_to(z_row, (p.shape[0], z_row.shape[0])))

    if stage.strategy == render.COARSE_ACCURATE:
        trace = sampling.sphere_trace(sdf_fn, o, d, near, far,
                                      tcfg.march_eps, tcfg.max_march_iters)
        queries += trace.queries
        carry = trace.hit | (trace.s_best < sampling.soft_hit_cut(beta_value))
        center = np.where(trace.hit, trace.t, trace.t_best)
        hit_idx = np.nonzero(carry)[0]
        if hit_idx.size == 0:
            return dict(ray_idx=hit_idx, ts=np.zeros((0, stage.n_coarse + 1)),
                        o=o, d=d, surface=np.zeros((0, 3)), queries=queries)
        t_d = center[hit_idx]
        lo = np.maximum(t_d - stage.delta, near)
        hi = np.minimum(t_d + stage.delta, far)
        ts = sampling.stratified_band(lo, hi, stage.n_coarse, rng)
        pts = o[hit_idx, None, :] + ts[..., None] * d[hit_idx, None, :]
        s = sdf_fn(pts.reshape(-1, 3)).reshape(ts.shape)
        queries += ts.size
        t_root, found = sampling.accurate_sample(ts, np.asarray(s, np.float64))
        t_extra = np.where(found, t_root, 0.5 * (lo + hi))
        ts_all = np.sort(np.concatenate([ts, t_extra[:, None]], axis=1), axis=1)
        surface = o[hit_idx[found]] + t_root[found, None] * d[hit_idx[found]]
        return dict(ray_idx=hit_idx, ts=ts_all, o=o, d=d, surface=surface,
                    queries=queries)

    # untraced strategies sample the whole ray range on every ray
    lo = np.full(n_rays, near)
    hi = np.full(n_rays, far)
    ts = sampling.stratified_band(lo, hi, stage.n_coarse, rng)
    if stage.strategy == render.COARSE_FINE and stage.n_fine > 0:
        pts = o[:, None, :] + ts[..., None] * d[:, None, :]
        s = sdf_fn(pts.reshape(-1, 3)).reshape(ts.shape)
        queries += ts.size
        alphas = sampling.map_opacity(np.asarray(s, np.float64), beta_value)
        comp = sampling.composite(ts, alphas, np.zeros(ts.shape + (3,)),
                                  np.zeros(3))
        t_fine = sampling.fine_sample(ts, comp["weights"], stage.n_fine, rng,
                                      lo=lo, hi=hi)
        ts = np.sort(np.concatenate([ts, t_fine], axis=1), axis=1)
        depth = comp["depth"]
        anchors = np.isfinite(depth) & (comp["weight_sum"] > 0.5)
        surface = o[anchors] + depth[anchors, None] * d[anchors]
    else:
        surface = np.zeros((0, 3))
    return dict(ray_idx=np.arange(n_rays), ts=ts, o=o, d=d, surface=surface,
                queries=queries)


def _composite_var(alphas: Var, colors: Var, background: np.ndarray):
    """Front-to-back compositing on the tape.

    alphas (N, S), colors (N, S, 3); returns (rgb (N, 3), total weight
    (N, 1)) as tape nodes.
    """
    n, s = alphas.value.shape
    dtype = alphas.value.dtype
    trans = Var(np.ones((n, 1), dtype=dtype))
    weight_cols = []
    for i in range(s):
        a_i = alphas[:, i:i + 1]
        weight_cols.append(a_i * trans)
        trans = trans * (1.0 - a_i)
    weights = ad.concat(weight_cols, axis=1)
    rgb = (weights.reshape(n, s, 1) * colors).sum(axis=1)
    rgb = rgb + trans * background.astype(dtype)
    wsum = weights.sum(axis=1, keepdims=True)
    return rgb, wsum


def _scatter_rays(ray_rgb: Var, ray_idx: np.ndarray, n_total: int,
                  background: np.ndarray) -> Var:
    """Place per-ray colors into a background-filled flat canvas."""
    buf = np.broadcast_to(background.astype(ray_rgb.value.dtype),
                          (n_total, 3)).copy()
    buf[ray_idx] = ray_rgb.value

    def pull(g):
        ray_rgb._accumulate(g[ray_idx])

    return ad.custom(buf, [ray_rgb], pull)


def render_training_batch(net, beta_var: Var, z_shape: np.ndarray,
                          z_color: np.ndarray, poses, stage: StageSpec,
                          tcfg: TrainConfig, rng):
    """Render a batch of views once, on the tape.

    Returns a dict with the image batch as a tape node, surface anchor
    points with their per-point codes, and the query count. Sample
    positions are planned with current values and then frozen; the tape
    differentiates the field and colors at those fixed positions.
    """
    b = len(poses)
    size = stage.image_size
    n_rays = size * size
    bg = np.asarray(tcfg.background, dtype=net.cfg.dtype)
    beta_value = np.asarray(beta_var.value).item()

    plans = []
    queries = 0
    for i in range(b):
        plan = _plan_image(net, z_shape[i], poses[i], stage, tcfg,
                           beta_value, rng)
        plans.append(plan)
        queries += plan["queries"]

    pts, dirs, zs_rows, zc_rows, counts = [], [], [], [], []
    surface_pts, surface_z = [], []
    for i, plan in enumerate(plans):
        ts = plan["ts"]
        if ts.shape[0]:
            o_sel = plan["o"][plan["ray_idx"]]
            d_sel = plan["d"][plan["ray_idx"]]
            p = o_sel[:, None, :] + ts[..., None] * d_sel[:, None, :]
            pts.append(p.reshape(-1, 3))
            dirs.append(np.broadcast_to(d_sel[:, None, :], p.shape).reshape(-1, 3))
            zs_rows.append(np.broadcast_to(z_shape[i], (p.shape[0] * p.shape[1],
                                                        z_shape.shape[1])))
            zc_rows.append(np.broadcast_to(z_color[i], (p.shape[0] * p.shape[1],
                                                        z_color.shape[1])))
        counts.append(ts.shape[0] * ts.shape[1] if ts.shape[0] else 0)
        if plan["surface"].shape[0]:
            surface_pts.append(plan["surface"])
            surface_z.append(np.broadcast_to(
                z_shape[i], (plan["surface"].shape[0], z_shape.shape[1])))

    if pts:
        p_all = np.concatenate(pts, axis=0).astype(net.cfg.dtype)
        d_all = np.concatenate(dirs, axis=0).astype(net.cfg.dtype)
        zs_all = np.concatenate(zs_rows, axis=0)
        zc_all = np.concatenate(zc_rows, axis=0)
        queries += p_all.shape[0]
        s_var, feats = net.sdf_var(p_all, zs_all, with_features=True)
        rgb_var = net.color_var(feats, d_all, zc_all)
    else:
        # every view missed everywhere: the batch is pure background and
        # only the regularizers can move the generator this iteration
        s_var = rgb_var = None

    canvases = []
    offset = 0
    for i, plan in enumerate(plans):
        n_pts = counts[i]
        if n_pts == 0:
            canvases.append(Var(np.broadcast_to(bg, (n_rays, 3)).copy())
                            .reshape(size, size, 3))
            continue
        n_r, n_s = plan["ts"].shape
        s_img = s_var[offset:offset + n_pts].reshape(n_r, n_s)
        c_img = rgb_var[offset:offset + n_pts].reshape(n_r, n_s, 3)
        offset += n_pts
        sig = ad.sigmoid(s_img * beta_var)
        alphas = sig * (1.0 - sig) * 4.0
        ray_rgb, _ = _composite_var(alphas, c_img, bg)
        flat = _scatter_rays(ray_rgb, plan["ray_idx"], n_rays, bg)
        canvases.append(flat.reshape(size, size, 3))
    images = ad.stack(canvases, axis=0)

    if surface_pts:
        sp = np.concatenate(surface_pts, axis=0).astype(net.cfg.dtype)
        sz = np.concatenate(surface_z, axis=0)
    else:
        sp = np.zeros((0, 3), dtype=net.cfg.dtype)
        sz = np.zeros((0, z_shape.shape[1]), dtype=net.cfg.dtype)
    return dict(images=images, surface_points=sp, surface_codes=sz,
                queries=queries)


# === direct field fitting ===

def fit_sdf(net, target, iterations: int, lr: float = 1e-3,
            batch: int = 512, eikonal_weight: float = 0.5, seed: int = 0,
            bound: float = 1.2, log_every: int = 100, callback=None) -> dict:
    """Fit the generator field (at code zero) to an analytic target.

    The per-iteration loss is mean absolute distance error on a mix of
    volume and near-surface points plus the unit-gradient penalty.
    Returns a history dict with per-logged-iteration losses.
    """
    z = np.zeros(net.cfg.z_dim, dtype=net.cfg.dtype)
    opt = Adam(net.parameters(), lr=lr)
    history = dict(iteration=[], loss=[], data=[], eikonal=[])
    for it in range(iterations):
        # cosine decay to 5% of the base rate settles the late iterations
        frac = it / max(iterations - 1, 1)
        opt.lr = lr * (0.05 + 0.95 * 0.5 * (1.0 + math.cos(math.pi * frac)))
        rng = np.random.default_rng(
            np.random.SeedSequence(seed, spawn_key=(_ITER_KEY + it,)))
        half = batch // 2
        p_box = rng.uniform(-bound, bound, size=(half, 3))
        p_base = rng.uniform(-bound, bound, size=(batch - half, 3))
        s0 = np.asarray(target.sdf(p_base), dtype=np.float64)
        g0 = np.asarray(target.gradient(p_base), dtype=np.float64)
        p_near = p_base - s0[:, None] * g0
        p_near += rng.normal(scale=0.05, size=p_near.shape)
        p = np.concatenate([p_box, p_near], axis=0).astype(net.cfg.dtype)

        s_target = np.asarray(target.sdf(p), dtype=net.cfg.dtype)
        s_var = net.sdf_var(p, z)
        data_term = ad.absolute(s_var.reshape(-1) - s_target).mean()
        eik_term = losses.eikonal_loss_var(net, z, 128, rng,
                                           surface_points=p_near, bound=bound)
        loss = data_term + eik_term * eikonal_weight
        loss.backward()
        opt.step()
        ad.zero_grads(opt.params)

        if it % log_every == 0 or it == iterations - 1:
            history["iteration"].append(it)
            history["loss"].append(float(loss.value))
            history["data"].append(float(data_term.value))
            history["eikonal"].append(float(eik_term.value))
            if callback is not None:
                callback(it, history)
    return history


# === adversarial training ===

_LOG_FIELDS = ["iteration", "stage", "loss_d", "loss_g", "adv_g", "r1",
               "eikonal", "normal", "beta", "beta_floor", "queries"]


class TrainState:
    """Everything the adversarial loop owns, packaged for checkpoints."""

    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        self.net = GeneratorNetwork(cfg.network or NetworkConfig(),
                                    seed=cfg.seed)
        self.disc = losses.Discriminator(seed=cfg.seed)
        self.log_beta = Var(np.zeros((1, 1), dtype=self.net.cfg.dtype))
        self.g_params = self.net.parameters() + [self.log_beta]
        self.d_params = self.disc.parameters()
        self.opt_g = Adam(self.g_params, lr=cfg.lr)
        self.opt_d = Adam(self.d_params, lr=cfg.lr)
        self.iteration = 0

    # --- beta ---

    def beta_var(self, stage: StageSpec) -> Var:
        return ad.exp(self.log_beta) + stage.beta_floor

    # --- checkpoint plumbing ---

    def _param_values(self):
        return [p.value.copy() for p in self.g_params + self.d_params]

    def save(self, path):
        m_g, t_g = self.opt_g.state_arrays()
        m_d, t_d = self.opt_d.state_arrays()
        n_g = len(self.g_params)
        opt = ckpt.OptimizerSnapshot(
            step=t_g,
            m=m_g[:n_g] + m_d[:len(self.d_params)],
            v=m_g[n_g:] + m_d[len(self.d_params):])
        stage = self.cfg.stage_at(max(self.iteration - 1, 0))
        ckpt.save_checkpoint(path, ckpt.Checkpoint(
            params=self._param_values(),
            beta=np.asarray(self.beta_var(stage).value).item(),
            seed=self.cfg.seed,
            iteration=self.iteration,
            optimizer=opt,
            arch=_arch_record(self.net.cfg)))

    def load(self, path):
        data = ckpt.load_checkpoint(path)
        n_g = len(self.g_params)
        n_net = len(self.net.parameters())
        arrays = data.params
        if len(arrays) != n_g + len(self.d_params):
            raise ckpt.CheckpointError(
                f"checkpoint holds {len(arrays)} arrays, expected "
                f"{n_g + len(self.d_params)}")
        self.net.load_parameters(arrays[:n_net])
        self.log_beta.value = arrays[n_net].astype(self.net.cfg.dtype)
        self.disc.load_parameters(arrays[n_g:])
        if data.optimizer is not None:
            opt = data.optimizer
            g_m = opt.m[:n_g]
            d_m = opt.m[n_g:]
            g_v = opt.v[:n_g]
            d_v = opt.v[n_g:]
            self.opt_g.load_state(g_m + g_v, opt.step)
            self.opt_d.load_state(d_m + d_v, opt.step)
        self.iteration = data.iteration


def _arch_record(cfg: NetworkConfig) -> ckpt.NetworkArch:
    return ckpt.NetworkArch(
        n_freqs_x=cfg.n_freqs_x, n_freqs_d=cfg.n_freqs_d, z_dim=cfg.z_dim,
        width=cfg.width, depth=cfg.depth, color_hidden=cfg.color_hidden,
        radius=cfg.radius, code_shape_std=cfg.code_shape_std,
        code_size_std=cfg.code_size_std)


def _config_from_arch(arch: ckpt.NetworkArch) -> NetworkConfig:
    return NetworkConfig(
        n_freqs_x=arch.n_freqs_x, n_freqs_d=arch.n_freqs_d,
        z_dim=arch.z_dim, width=arch.width, depth=arch.depth,
        color_hidden=arch.color_hidden, radius=arch.radius,
        code_shape_std=arch.code_shape_std,
        code_size_std=arch.code_size_std)


def save_network_checkpoint(path, net, beta: float, seed: int = 0,
                            iteration: int = 0) -> None:
    """Store just the generator (no critic, no optimizer moments)."""
    ckpt.save_checkpoint(path, ckpt.Checkpoint(
        params=[p.value.copy() for p in net.parameters()],
        beta=float(beta), seed=seed, iteration=iteration,
        arch=_arch_record(net.cfg)))


def load_generator(path, network_cfg: NetworkConfig | None = None):
    """Rebuild a generator from either checkpoint layout.

    Accepts both generator-only files (from fit runs) and full
    adversarial snapshots, whose extra arrays (sharpness, critic) are
    skipped. With no explicit ``network_cfg`` the architecture stored
    in the file is used. Returns (net, beta, iteration).
    """
    data = ckpt.load_checkpoint(path)
    if network_cfg is None and data.arch is not None:
        network_cfg = _config_from_arch(data.arch)
    net = GeneratorNetwork(network_cfg or NetworkConfig(), seed=data.seed)
    n_net = len(net.parameters())
    if len(data.params) < n_net:
        raise ckpt.CheckpointError(
            f"checkpoint holds {len(data.params)} arrays but the "
            f"configured network needs {n_net}")
    net.load_parameters(data.params[:n_net])
    return net, data.beta, data.iteration


def _iteration_rng(seed: int, iteration: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(seed, spawn_key=(_ITER_KEY + iteration,)))


def train_gan(cfg: TrainConfig, resume: str | None = None,
              callback=None) -> dict:
    """Run the adversarial loop; returns paths and final metrics.

    Writes ``log.csv`` (one row per iteration) and periodic checkpoint
    files into ``cfg.out_dir``. With ``resume``, training continues from
    the stored iteration and reproduces exactly what an uninterrupted
    run would have done. ``callback(iteration, row)`` fires after every
    iteration with the metric row for that step.
    """
    os.makedirs(cfg.out_dir, exist_ok=True)
    state = TrainState(cfg)
    if resume is not None:
        state.load(resume)

    datasets = {}

    def real_images(stage: StageSpec) -> np.ndarray:
        size = stage.image_size
        if size not in datasets:
            if cfg.dataset_dir is not None:
                datasets[size] = load_image_folder(cfg.dataset_dir, size)
            else:
                datasets[size] = synthesize_dataset(
                    cfg.n_synthetic, size, cfg.data_seed,
                    cfg.camera_radius, cfg.camera_fov)
        return datasets[size]

    log_path = os.path.join(cfg.out_dir, "log.csv")
    fresh_log = state.iteration == 0 or not os.path.exists(log_path)
    log_file = open(log_path, "w" if fresh_log else "a",
                    newline="", encoding="ascii")
    writer = csv.writer(log_file)
    if fresh_log:
        writer.writerow(_LOG_FIELDS)

    dist = cfg.pose_distribution()
    total = cfg.total_iterations()
    last_row = None
    try:
        for it in range(state.iteration, total):
            stage = cfg.stage_at(it)
            stage_idx = cfg.stages.index(stage)
            rng = _iteration_rng(cfg.seed, it)
            data = real_images(stage)

            real_idx = rng.integers(0, data.shape[0], size=cfg.batch)
            real = data[real_idx]
            z_s = rng.normal(size=(cfg.batch, state.net.cfg.z_dim)).astype(
                state.net.cfg.dtype)
            z_c = z_s
            poses = [geometry.sample_pose(dist, rng) for _ in range(cfg.batch)]

            beta = state.beta_var(stage)
            batch_out = render_training_batch(state.net, beta, z_s, z_c,
                                              poses, stage, cfg, rng)
            fake = batch_out["images"]

            # critic update: real pass with input-gradient penalty, fake
            # pass on detached values
            logits_real, grad_in = state.disc.logits_and_input_grad_var(real)
            r1_raw = (grad_in * grad_in).sum() * (1.0 / cfg.batch)
            logits_fake_d = state.disc.logits_var(fake.value.copy())
            loss_d = losses.discriminator_loss(logits_real, logits_fake_d,
                                               r1_raw, stage.r1_weight)
            loss_d.backward()
            state.opt_d.step()
            ad.zero_grads(state.d_params)

            # generator update through the recorded render graph
            logits_fake_g = state.disc.logits_var(fake)
            adv_g = losses.generator_loss(logits_fake_g)

            sp = batch_out["surface_points"]
            sz = batch_out["surface_codes"]
            n_surf = min(sp.shape[0], cfg.n_eikonal // 2)
            n_vol = cfg.n_eikonal - n_surf
            vol_pts = rng.uniform(-1.0, 1.0, size=(n_vol, 3)).astype(
                state.net.cfg.dtype)
            vol_z = z_s[rng.integers(0, cfg.batch, size=n_vol)]
            if n_surf > 0:
                pick = rng.choice(sp.shape[0], size=n_surf, replace=False)
                eik_pts = np.concatenate([sp[pick], vol_pts], axis=0)
                eik_z = np.concatenate([sz[pick], vol_z], axis=0)
            else:
                eik_pts, eik_z = vol_pts, vol_z
            _, grad = state.net.sdf_with_gradient_var(eik_pts, eik_z)
            norms = ad.sqrt((grad * grad).sum(axis=1))
            eik = ad.square(norms - 1.0).mean()

            if stage.normal_weight > 0.0 and sp.shape[0] > 0:
                k = min(sp.shape[0], cfg.n_normal)
                pick = rng.choice(sp.shape[0], size=k, replace=False)
                p0 = sp[pick]
                jit = rng.normal(scale=cfg.normal_sigma,
                                 size=p0.shape).astype(state.net.cfg.dtype)
                pair_z = np.concatenate([sz[pick], sz[pick]], axis=0)
                _, g2 = state.net.sdf_with_gradient_var(
                    np.concatenate([p0, p0 + jit], axis=0), pair_z)
                nrm = ad.sqrt((g2 * g2).sum(axis=1, keepdims=True) + 1e-24)
                unit = g2 / nrm
                diff = unit[:k] - unit[k:]
                nloss = (diff * diff).sum(axis=1).mean()
            else:
                nloss = Var(np.zeros((), dtype=state.net.cfg.dtype))

            loss_g = adv_g + eik * cfg.eikonal_weight
            if stage.normal_weight > 0.0:
                loss_g = loss_g + nloss * stage.normal_weight
            loss_g.backward()
            state.opt_g.step()
            ad.zero_grads(state.g_params)
            ad.zero_grads(state.d_params)

            state.iteration = it + 1
            last_row = dict(
                iteration=it, stage=stage_idx,
                loss_d=float(loss_d.value), loss_g=float(loss_g.value),
                adv_g=float(adv_g.value), r1=float(r1_raw.value),
                eikonal=float(eik.value), normal=float(nloss.value),
                beta=np.asarray(beta.value).item(), beta_floor=stage.beta_floor,
                queries=batch_out["queries"])
            if it % cfg.log_every == 0 or it == total - 1:
                writer.writerow([repr(last_row[k]) if isinstance(last_row[k], float)
                                 else last_row[k] for k in _LOG_FIELDS])
                log_file.flush()
            if cfg.checkpoint_every and (it + 1) % cfg.checkpoint_every == 0:
                state.save(os.path.join(cfg.out_dir, f"ckpt_{it + 1:06d}.bin"))
            if callback is not None:
                callback(it, last_row)
    finally:
        log_file.close()

    final_path = os.path.join(cfg.out_dir, "ckpt_final.bin")
    state.save(final_path)
    return dict(checkpoint=final_path, log=log_path, state=state,
                last=last_row)
