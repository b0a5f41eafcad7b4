"""Strategy benchmarking: accuracy against a dense reference render,
query counts, and frame throughput."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import render


def reference_render(field, pose, width: int, height: int, beta: float,
                     n_samples: int = 512, threads: int = 1):
    """Densely sampled full-range render used as ground truth.

    Uses deterministic midpoint positions, so the reference carries no
    sampling noise of its own.
    """
    cfg = render.RenderConfig(width=width, height=height,
                              strategy=render.COARSE_ONLY,
                              n_coarse=n_samples, beta=beta,
                              stratified=False, threads=threads, seed=0)
    return render.render(field, pose, cfg)


def rmse(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("images must share a shape")
    return float(np.sqrt(np.mean((a - b) ** 2)))


@dataclass
class StrategyResult:
    strategy: str
    rmse: float
    sdf_queries: int
    queries_per_ray: float
    seconds_per_frame: float
    fps: float


def time_render(field, pose, cfg: render.RenderConfig,
                repeats: int = 3):
    """Median wall-clock seconds per frame plus the frame itself."""
    out = render.render(field, pose, cfg)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        render.render(field, pose, cfg)
        times.append(time.perf_counter() - t0)
    return out, float(np.median(times))


def compare_strategies(field, pose, width: int = 128, height: int = 128,
                       beta: float = 100.0, n_coarse: int = 32,
                       n_fine: int = 32, delta: float = 0.3,
                       seed: int = 0, threads: int = 1,
                       repeats: int = 3, reference_samples: int = 512) -> dict:
    """Render the same view under each strategy and score them.

    Returns a dict with per-strategy results plus the query and
    throughput ratios of the trace-based strategy over the hierarchical
    baseline.
    """
    ref = reference_render(field, pose, width, height, beta,
                           n_samples=reference_samples, threads=threads)
    n_rays = width * height
    results = {}
    for strategy in render.STRATEGIES:
        cfg = render.RenderConfig(width=width, height=height,
                                  strategy=strategy, n_coarse=n_coarse,
                                  n_fine=n_fine, beta=beta, delta=delta,
                                  seed=seed, threads=threads)
        out, secs = time_render(field, pose, cfg, repeats=repeats)
        results[strategy] = StrategyResult(
            strategy=strategy,
            rmse=rmse(out.rgb, ref.rgb),
            sdf_queries=out.sdf_queries,
            queries_per_ray=out.sdf_queries / n_rays,
            seconds_per_frame=secs,
            fps=1.0 / secs if secs > 0 else float("inf"),
        )
    ca = results[render.COARSE_ACCURATE]
    cf = results[render.COARSE_FINE]
    return dict(
        results=results,
        reference_queries=ref.sdf_queries,
        query_ratio=ca.sdf_queries / cf.sdf_queries,
        speedup=ca.fps / cf.fps,
    )


def format_report(report: dict) -> str:
    lines = [
        f"{'strategy':<18}{'rmse':>10}{'queries/ray':>14}"
        f"{'ms/frame':>12}{'fps':>10}"
    ]
    for res in report["results"].values():
        lines.append(
            f"{res.strategy:<18}{res.rmse:>10.5f}{res.queries_per_ray:>14.2f}"
            f"{res.seconds_per_frame * 1e3:>12.1f}{res.fps:>10.2f}"
        )
    lines.append(
        f"traced vs hierarchical: {report['query_ratio']:.3f}x queries, "
        f"{report['speedup']:.2f}x throughput"
    )
    return "\n".join(lines)
