"""Ray-sampling primitives: opacity mapping, sphere tracing, band and
importance sampling, root interpolation, and compositing.

All functions are vectorized over a flat batch of R rays. Distances
``s`` come from any signed distance source; positions ``t`` are ray
parameters. Conventions:

* opacity peaks at exactly 1 on the surface (s = 0) and decays
  symmetrically, with a width inversely proportional to the sharpness
  ``beta``;
* sphere tracing never steps past the first surface: the basic update
  advances by the current distance value, and the secant acceleration
  only accepts a proposal after evaluating it;
* compositing is front-to-back with transmittance, unfilled weight goes
  to the background color.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import _sigmoid

DEPTH_EPS = 1e-4      # minimum total weight for a finite depth readout
_CONVERGED = 1e-8     # polish target well below march_eps


def map_opacity(s, beta):
    """Distance-to-opacity bell: 4 * sig(beta s) * (1 - sig(beta s)).

    Equals 1 exactly at s = 0, is symmetric in s, strictly decreasing
    in |s|, and halves its width when beta doubles.
    """
    x = np.asarray(s)
    if x.dtype != np.float32:
        x = x.astype(np.float64)
    scalar = x.ndim == 0
    sig = _sigmoid(np.atleast_1d(x * beta))
    out = 4.0 * sig * (1.0 - sig)
    return float(out[0]) if scalar else out.reshape(x.shape)


def soft_hit_cut(beta: float) -> float:
    """Distance below which a missed ray still shows visible opacity.

    Set where the opacity bell falls to one percent of its peak, so
    skipping rays farther out changes a composite by at most that much.
    """
    return 5.993 / float(beta)


@dataclass
class TraceResult:
    t: np.ndarray          # (R,) converged ray parameter (valid where hit)
    hit: np.ndarray        # (R,) bool
    queries: int           # distance evaluations spent, proposals included
    t_best: np.ndarray = None   # (R,) position of the closest approach
    s_best: np.ndarray = None   # (R,) smallest distance seen along the ray


def sphere_trace(sdf_fn, origins, directions, near, far,
                 eps: float = 1e-3, max_iters: int = 32) -> TraceResult:
    """March each ray by its distance value until the surface is reached.

    ``sdf_fn(points) -> (P,)`` is evaluated only on still-active rays.
    A secant proposal built from the last two evaluations accelerates
    grazing rays; the proposal is evaluated before acceptance and
    rejected if it lands more than ``eps`` inside, so the first surface
    cannot be skipped. Rays are misses once t exceeds ``far`` or the
    iteration budget runs out. ``t_best``/``s_best`` record the closest
    approach, which lets callers treat narrow misses as soft surface
    interactions when the opacity falloff is wide.
    """
    o = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    d = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
    n_rays = o.shape[0]
    t = np.full(n_rays, float(near))
    hit = np.zeros(n_rays, dtype=bool)
    active = np.ones(n_rays, dtype=bool)
    queries = 0

    s = np.asarray(sdf_fn(o + t[:, None] * d), dtype=np.float64).reshape(-1)
    queries += n_rays
    hit |= s < eps
    active &= ~hit
    t_best = t.copy()
    s_best = s.copy()

    t_prev = t.copy()
    s_prev = s.copy()
    for _ in range(max_iters):
        if not active.any():
            break
        idx = np.nonzero(active)[0]
        t_new = t[idx] + s[idx]

        # secant proposal from the last two samples, where descending
        dt = t[idx] - t_prev[idx]
        slope = np.where(dt > 1e-12, (s[idx] - s_prev[idx]) / np.where(dt > 1e-12, dt, 1.0), 0.0)
        proposal = t[idx] - np.where(slope < -1e-9, s[idx] / np.where(slope < -1e-9, slope, 1.0), 0.0)
        use_prop = (slope < -1e-9) & (proposal > t_new)
        t_cand = np.where(use_prop, proposal, t_new)

        s_cand = np.asarray(
            sdf_fn(o[idx] + t_cand[:, None] * d[idx]), dtype=np.float64).reshape(-1)
        queries += idx.size

        # a proposal that tunneled too deep falls back to the plain step
        bad = use_prop & (s_cand < -eps)
        if bad.any():
            b = np.nonzero(bad)[0]
            t_cand[b] = t_new[b]
            s_cand[b] = np.asarray(
                sdf_fn(o[idx[b]] + t_cand[b, None] * d[idx[b]]),
                dtype=np.float64).reshape(-1)
            queries += b.size

        t_prev[idx] = t[idx]
        s_prev[idx] = s[idx]
        t[idx] = t_cand
        s[idx] = s_cand

        in_range = t_cand <= far
        closer = (s_cand < s_best[idx]) & in_range
        upd = idx[closer]
        t_best[upd] = t_cand[closer]
        s_best[upd] = s_cand[closer]

        is_hit = (np.abs(s_cand) < eps) & in_range
        hit[idx[is_hit]] = True
        active[idx[is_hit | ~in_range]] = False

    # polish converged rays with pure secant refinement for depth accuracy
    queries += _polish(sdf_fn, o, d, t, t_prev, s, s_prev, hit, eps)
    return TraceResult(t=t, hit=hit, queries=queries,
                       t_best=t_best, s_best=s_best)


def _polish(sdf_fn, o, d, t, t_prev, s, s_prev, hit, eps, rounds: int = 3) -> int:
    queries = 0
    for _ in range(rounds):
        idx = np.nonzero(hit & (np.abs(s) > _CONVERGED))[0]
        if idx.size == 0:
            break
        dt = t[idx] - t_prev[idx]
        ds = s[idx] - s_prev[idx]
        ok = (np.abs(dt) > 1e-14) & (np.abs(ds) > 1e-14)
        slope = np.where(ok, ds / np.where(ok, dt, 1.0), -1.0)
        slope = np.where(slope < -1e-6, slope, -1.0)
        t_next = t[idx] - s[idx] / slope
        s_next = np.asarray(
            sdf_fn(o[idx] + t_next[:, None] * d[idx]), dtype=np.float64).reshape(-1)
        queries += idx.size
        better = np.abs(s_next) < np.abs(s[idx])
        keep = idx[better]
        t_prev[keep] = t[keep]
        s_prev[keep] = s[keep]
        t[keep] = t_next[better]
        s[keep] = s_next[better]
        if not better.any():
            break
    return queries


def stratified_band(lo, hi, n: int, rng: np.random.Generator,
                    stratified: bool = True) -> np.ndarray:
    """n jittered samples per ray covering [lo, hi]. Returns (R, n) sorted."""
    lo = np.atleast_1d(np.asarray(lo, dtype=np.float64))
    hi = np.atleast_1d(np.asarray(hi, dtype=np.float64))
    r = lo.shape[0]
    edges = np.linspace(0.0, 1.0, n + 1)
    if stratified:
        u = edges[:-1] + rng.random((r, n)) * (1.0 / n)
    else:
        u = np.broadcast_to(edges[:-1] + 0.5 / n, (r, n)).copy()
    return lo[:, None] + u * (hi - lo)[:, None]


def fine_sample(ts: np.ndarray, weights: np.ndarray, m: int,
                rng: np.random.Generator,
                lo=None, hi=None) -> np.ndarray:
    """Importance-sample m new positions from per-bin compositing weights.

    ``ts`` (R, n) are the sorted coarse positions; bins are centered on
    them and clipped to [lo, hi] (defaults to the coarse extent). Rows
    whose weights are all zero fall back to uniform sampling over the
    same range. Returns (R, m), sorted per row.
    """
    ts = np.asarray(ts, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if ts.shape != w.shape:
        raise ValueError("positions and weights must have matching shapes")
    if np.any(w < 0):
        raise ValueError("negative compositing weights")
    r, n = ts.shape
    lo = ts[:, 0] if lo is None else np.broadcast_to(np.asarray(lo, dtype=np.float64), (r,))
    hi = ts[:, -1] if hi is None else np.broadcast_to(np.asarray(hi, dtype=np.float64), (r,))

    mids = 0.5 * (ts[:, 1:] + ts[:, :-1])
    edges = np.concatenate([lo[:, None], mids, hi[:, None]], axis=1)  # (R, n+1)

    total = w.sum(axis=1, keepdims=True)
    flat = total[:, 0] <= 0.0
    pdf = np.where(flat[:, None], 1.0 / n, w / np.where(total > 0, total, 1.0))
    cdf = np.concatenate([np.zeros((r, 1)), np.cumsum(pdf, axis=1)], axis=1)
    cdf[:, -1] = 1.0

    u = rng.random((r, m))
    # row-offset trick turns per-row searchsorted into one global call
    offs = np.arange(r, dtype=np.float64)[:, None]
    idx = np.searchsorted((cdf + offs * 2.0).ravel(), (u + offs * 2.0).ravel(),
                          side="right").reshape(r, m)
    idx = idx - np.arange(r)[:, None] * (n + 1)
    idx = np.clip(idx - 1, 0, n - 1)

    cdf_lo = np.take_along_axis(cdf, idx, axis=1)
    cdf_hi = np.take_along_axis(cdf, idx + 1, axis=1)
    e_lo = np.take_along_axis(edges, idx, axis=1)
    e_hi = np.take_along_axis(edges, idx + 1, axis=1)
    span = cdf_hi - cdf_lo
    frac = np.where(span > 1e-12, (u - cdf_lo) / np.where(span > 1e-12, span, 1.0), 0.5)
    return np.sort(e_lo + frac * (e_hi - e_lo), axis=1)


def accurate_sample(ts: np.ndarray, ss: np.ndarray):
    """Root of the distance along each ray by linear interpolation.

    Scans for the first adjacent pair with s > 0 followed by s < 0 and
    interpolates the crossing; a sample lying exactly on the surface is
    its own root. Rays without a sign change report no root.

    Returns (t_root (R,), found (R,) bool).
    """
    ts = np.asarray(ts, dtype=np.float64)
    ss = np.asarray(ss, dtype=np.float64)
    if ts.shape != ss.shape:
        raise ValueError("positions and distances must have matching shapes")
    r, n = ts.shape
    t_root = np.zeros(r)
    found = np.zeros(r, dtype=bool)

    zero = ss == 0.0
    any_zero = zero.any(axis=1)
    first_zero = np.argmax(zero, axis=1)

    crossing = (ss[:, :-1] > 0.0) & (ss[:, 1:] < 0.0)
    any_cross = crossing.any(axis=1)
    first_cross = np.argmax(crossing, axis=1)

    # an exact-zero sample wins if it comes no later than the crossing
    use_zero = any_zero & (~any_cross | (first_zero <= first_cross))
    use_cross = any_cross & ~use_zero

    rows = np.nonzero(use_zero)[0]
    t_root[rows] = ts[rows, first_zero[rows]]
    found[rows] = True

    rows = np.nonzero(use_cross)[0]
    i = first_cross[rows]
    t1, t2 = ts[rows, i], ts[rows, i + 1]
    s1, s2 = ss[rows, i], ss[rows, i + 1]
    t_root[rows] = t1 - (t2 - t1) / (s2 - s1) * s1
    found[rows] = True
    return t_root, found


def composite(ts: np.ndarray, alphas: np.ndarray, colors: np.ndarray,
              background) -> dict:
    """Front-to-back transmittance compositing along each ray.

    Returns rgb (R, 3), per-sample weights (R, N), weight_sum (R,), and
    depth (R,) as the weight-averaged t (+inf when the total weight
    falls under ``DEPTH_EPS``). ``ts`` must be ascending per ray and
    alphas must lie in [0, 1].
    """
    ts = np.asarray(ts, dtype=np.float64)
    alphas = np.asarray(alphas, dtype=np.float64)
    colors = np.asarray(colors, dtype=np.float64)
    if np.any(np.diff(ts, axis=1) < -1e-12):
        raise ValueError("sample positions must be sorted ascending")
    if np.any((alphas < 0.0) | (alphas > 1.0)):
        raise ValueError("alphas must lie in [0, 1]")
    bg = np.asarray(background, dtype=np.float64)

    trans = np.cumprod(1.0 - alphas, axis=1)
    trans = np.concatenate([np.ones((ts.shape[0], 1)), trans[:, :-1]], axis=1)
    weights = alphas * trans
    wsum = weights.sum(axis=1)
    rgb = (weights[:, :, None] * colors).sum(axis=1) + (1.0 - wsum)[:, None] * bg
    with np.errstate(invalid="ignore"):
        depth = np.where(wsum >= DEPTH_EPS,
                         (weights * ts).sum(axis=1) / np.where(wsum > 0, wsum, 1.0),
                         np.inf)
    return {"rgb": rgb, "weights": weights, "weight_sum": wsum, "depth": depth}
