"""Adversarial and field-regularization losses.

The discriminator is a small strided convolution stack with a global
average pooled linear head, so the same parameters score any input
resolution; training stages can change image size without surgery.

Gradient-dependent penalties (the discriminator input-gradient term and
the unit-gradient field term) are built as explicit graphs out of tape
primitives: the inner gradient is itself a ``Var`` expression, so one
ordinary backward pass yields its parameter derivatives. Activation
masks inside those inner gradients are treated as locally constant.

All adversarial terms are written in minimization form:

* discriminator loss: ``softplus(-D(real)) + softplus(D(fake))`` plus
  the scaled input-gradient penalty on real images,
* generator loss: ``softplus(-D(fake))``.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from . import autodiff as ad
from .autodiff import Var


def log_sigmoid(u):
    """Numerically stable log(sigmoid(u)) for plain arrays."""
    u = np.asarray(u)
    return np.where(u >= 0, -np.log1p(np.exp(-np.abs(u))),
                    u - np.log1p(np.exp(-np.abs(u))))


def log_sigmoid_var(u: Var) -> Var:
    return -ad.softplus(-u)


def generator_loss(fake_logits: Var) -> Var:
    """Saturation-free generator objective, smaller is better."""
    return ad.softplus(-fake_logits).mean()


def discriminator_loss(real_logits: Var, fake_logits: Var,
                       r1_raw: Var = None, r1_weight: float = 0.0) -> Var:
    """Non-saturating discriminator objective in minimization form."""
    loss = ad.softplus(-real_logits).mean() + ad.softplus(fake_logits).mean()
    if r1_raw is not None and r1_weight > 0.0:
        loss = loss + r1_raw * (0.5 * r1_weight)
    return loss


# === convolutional discriminator ===

_KERNEL = 3
_STRIDE = 2
_PAD = 1
_LEAK = 0.2


@lru_cache(maxsize=None)
def _patch_index(h: int, w: int):
    """Gather indices for 3x3 stride-2 patches of a padded (h, w) map."""
    ho = (h + 2 * _PAD - _KERNEL) // _STRIDE + 1
    wo = (w + 2 * _PAD - _KERNEL) // _STRIDE + 1
    k = np.arange(_KERNEL)
    ii = np.arange(ho)[:, None, None, None] * _STRIDE + k[None, None, :, None]
    jj = np.arange(wo)[None, :, None, None] * _STRIDE + k[None, None, None, :]
    ii, jj = np.broadcast_arrays(ii, jj)
    return ii.copy(), jj.copy(), ho, wo


def _pad_var(x: Var) -> Var:
    p = _PAD
    v = np.pad(x.value, ((0, 0), (p, p), (p, p), (0, 0)))

    def pull(g):
        x._accumulate(g[:, p:-p, p:-p, :])

    return ad.custom(v, [x], pull)


def _col2im_var(cols: Var, idx, out_shape, patch_shape) -> Var:
    """Adjoint of the patch gather: scatter-add columns into an image."""
    buf = np.zeros(out_shape, dtype=cols.value.dtype)
    np.add.at(buf, idx, cols.value.reshape(patch_shape))

    def pull(g):
        cols._accumulate(g[idx].reshape(cols.value.shape))

    return ad.custom(buf, [cols], pull)


class Discriminator:
    """Score images as real or generated; resolution independent.

    Three stride-2 convolution blocks with leaky rectification feed a
    global average pool and a linear head. Inputs are (B, H, W, 3) with
    H and W at least 8.
    """

    CHANNELS = (32, 64, 128)

    def __init__(self, seed: int = 0, dtype=np.float32):
        self.dtype = dtype
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(201,)))
        self.blocks = []
        c_in = 3
        for c_out in self.CHANNELS:
            fan = _KERNEL * _KERNEL * c_in
            w = rng.normal(0.0, np.sqrt(2.0 / fan), size=(fan, c_out))
            self.blocks.append((Var(w.astype(dtype)),
                                Var(np.zeros((1, c_out), dtype))))
            c_in = c_out
        w_head = rng.normal(0.0, np.sqrt(1.0 / c_in), size=(c_in, 1))
        self.head = (Var(w_head.astype(dtype)), Var(np.zeros((1, 1), dtype)))

    # --- parameter plumbing ---

    def parameters(self) -> list:
        out = []
        for w, b in self.blocks:
            out.extend([w, b])
        out.extend(self.head)
        return out

    def load_parameters(self, arrays):
        params = self.parameters()
        if len(arrays) != len(params):
            raise ValueError(f"expected {len(params)} arrays, got {len(arrays)}")
        for p, a in zip(params, arrays):
            a = np.asarray(a, dtype=self.dtype)
            if a.shape != p.value.shape:
                raise ValueError(f"shape mismatch {a.shape} vs {p.value.shape}")
            p.value = a.copy()

    # --- forward ---

    def _forward(self, x: Var):
        """Conv trunk; returns (logits, per-block records for the
        input-gradient graph)."""
        if x.value.ndim != 4 or x.value.shape[-1] != 3:
            raise ValueError("discriminator input must be (B, H, W, 3)")
        b_sz = x.value.shape[0]
        a = x
        trace = []
        for w, b in self.blocks:
            h, wd = a.value.shape[1], a.value.shape[2]
            ii, jj, ho, wo = _patch_index(h, wd)
            idx = (slice(None), ii, jj, slice(None))
            xp = _pad_var(a)
            c_in = a.value.shape[3]
            cols = xp[idx].reshape(b_sz * ho * wo, _KERNEL * _KERNEL * c_in)
            z = (cols @ w + b).reshape(b_sz, ho, wo, w.value.shape[1])
            a = ad.leaky_relu(z, _LEAK)
            trace.append({
                "z": z.value, "idx": idx, "w": w,
                "pad_shape": (b_sz, h + 2 * _PAD, wd + 2 * _PAD, c_in),
                "patch_shape": (b_sz,) + ii.shape + (c_in,),
                "ho": ho, "wo": wo,
            })
        c_last = a.value.shape[3]
        spatial = a.value.shape[1] * a.value.shape[2]
        flat = a.reshape(b_sz, spatial, c_last).mean(axis=1)
        logits = flat @ self.head[0] + self.head[1]
        return logits, trace, spatial

    def logits_var(self, images) -> Var:
        x = images if isinstance(images, Var) else Var(
            np.asarray(images, dtype=self.dtype))
        return self._forward(x)[0]

    def logits_values(self, images) -> np.ndarray:
        return self.logits_var(np.asarray(images, dtype=self.dtype)).value

    def logits_and_input_grad_var(self, images):
        """Logits plus the per-pixel gradient of each logit, on tape.

        The gradient is assembled from the same weight nodes as the
        forward pass, so backward through any function of it yields
        parameter derivatives. Rectifier masks are held constant.
        """
        x = images if isinstance(images, Var) else Var(
            np.asarray(images, dtype=self.dtype))
        logits, trace, spatial = self._forward(x)
        b_sz = x.value.shape[0]
        ones = Var(np.ones((b_sz, 1), dtype=self.dtype))
        g = (ones @ ad.transpose(self.head[0])) * (1.0 / spatial)
        g = g.reshape(b_sz, 1, 1, self.CHANNELS[-1])
        for blk in reversed(trace):
            mask = np.where(blk["z"] > 0, 1.0, _LEAK).astype(self.dtype)
            g = g * mask
            cols = g.reshape(b_sz * blk["ho"] * blk["wo"], -1) @ ad.transpose(blk["w"])
            g = _col2im_var(cols, blk["idx"], blk["pad_shape"],
                            blk["patch_shape"])
            g = g[:, _PAD:-_PAD, _PAD:-_PAD, :]
        return logits, g

    def r1_penalty_var(self, images) -> Var:
        """Mean squared input-gradient norm over the batch (unscaled)."""
        _, g = self.logits_and_input_grad_var(images)
        b_sz = g.value.shape[0]
        return (g * g).sum() * (1.0 / b_sz)


# === field regularizers ===

def unit_gradient_penalty(gradients) -> float:
    """Mean squared deviation of gradient length from one (plain arrays)."""
    g = np.asarray(gradients, dtype=np.float64)
    norms = np.linalg.norm(g, axis=-1)
    return float(np.mean((norms - 1.0) ** 2))


def eikonal_loss_var(net, z, n_points: int, rng: np.random.Generator,
                     surface_points=None, bound: float = 1.0) -> Var:
    """Unit-gradient penalty on a mix of volume and surface points.

    Half the budget moves to ``surface_points`` when provided; the rest
    is drawn uniformly from the bounding cube.
    """
    n_surface = 0
    pts = []
    if surface_points is not None and len(surface_points) > 0:
        sp = np.asarray(surface_points)
        n_surface = min(n_points // 2, sp.shape[0])
        pick = rng.choice(sp.shape[0], size=n_surface, replace=False)
        pts.append(sp[pick])
    n_vol = n_points - n_surface
    pts.append(rng.uniform(-bound, bound, size=(n_vol, 3)))
    p = np.concatenate(pts, axis=0).astype(net.cfg.dtype)
    _, grad = net.sdf_with_gradient_var(p, z)
    norm = ad.sqrt((grad * grad).sum(axis=1))
    return ad.square(norm - 1.0).mean()


def normal_smoothness(normals_a: np.ndarray, normals_b: np.ndarray) -> float:
    """Mean squared difference of paired unit normals (plain arrays)."""
    d = np.asarray(normals_a, np.float64) - np.asarray(normals_b, np.float64)
    return float(np.mean(np.sum(d * d, axis=-1)))


def normal_loss_values(grad_fn, surface_points, rng: np.random.Generator,
                       sigma: float = 0.01) -> float:
    """Normal-consistency penalty for a plain-array gradient field.

    Compares unit normals at surface points against normals at the same
    points jittered by isotropic noise of the given scale.
    """
    p = np.asarray(surface_points, dtype=np.float64)
    q = p + rng.normal(scale=sigma, size=p.shape)
    na = _unit_rows(grad_fn(p))
    nb = _unit_rows(grad_fn(q))
    return normal_smoothness(na, nb)


def _unit_rows(g):
    n = np.linalg.norm(g, axis=-1, keepdims=True)
    return g / np.maximum(n, 1e-12)


def normal_loss_var(net, z, surface_points, rng: np.random.Generator,
                    sigma: float = 0.01) -> Var:
    """Taped normal-consistency penalty for the generator field."""
    p = np.asarray(surface_points, dtype=net.cfg.dtype)
    if p.shape[0] == 0:
        return Var(np.zeros((), dtype=net.cfg.dtype))
    q = p + rng.normal(scale=sigma, size=p.shape).astype(net.cfg.dtype)
    both = np.concatenate([p, q], axis=0)
    _, grad = net.sdf_with_gradient_var(both, z)
    norm = ad.sqrt((grad * grad).sum(axis=1, keepdims=True) + 1e-24)
    unit = grad / norm
    n = p.shape[0]
    diff = unit[:n] - unit[n:]
    return (diff * diff).sum(axis=1).mean()
