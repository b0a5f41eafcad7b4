"""Frame renderer tests: strategy behavior, determinism, query
accounting, and output channel correctness."""

import numpy as np
import pytest

from sdfgan import geometry, render
from sdfgan.network import GeneratorNetwork, NetworkConfig
from sdfgan.scenes import make_scene


def _pose(radius=2.1):
    pos = np.array([0.0, -1.0, 0.45])
    pos = pos / np.linalg.norm(pos) * radius
    return geometry.CameraPose(position=pos)


def _axis_pose(radius=2.1):
    return geometry.CameraPose(position=np.array([0.0, -radius, 0.0]))


class CountingField(render.SceneField):
    def __init__(self, scene):
        super().__init__(scene)
        self.points = 0

    def sdf(self, p):
        self.points += p.shape[0]
        return super().sdf(p)

    def sdf_rgb(self, p, view_dirs):
        self.points += p.shape[0]
        return super().sdf_rgb(p, view_dirs)


@pytest.mark.parametrize("strategy", render.STRATEGIES)
def test_output_channels_well_formed(strategy):
    cfg = render.RenderConfig(width=32, height=24, strategy=strategy,
                              n_coarse=16, n_fine=8, beta=150.0, seed=3)
    out = render.render(make_scene("sphere"), _pose(), cfg)
    assert out.rgb.shape == (24, 32, 3)
    assert out.depth.shape == (24, 32)
    assert out.normal.shape == (24, 32, 3)
    assert out.weight_sum.shape == (24, 32)
    assert np.all(out.rgb >= 0) and np.all(out.rgb <= 1)
    assert np.all(out.weight_sum >= 0) and np.all(out.weight_sum <= 1 + 1e-12)
    finite = np.isfinite(out.depth)
    assert finite.any()
    norms = np.linalg.norm(out.normal[finite], axis=-1)
    assert np.allclose(norms[norms > 0], 1.0, atol=1e-12)
    assert np.all(out.normal[~finite] == 0.0)
    assert out.sdf_queries > 0


def test_same_seed_same_image():
    cfg = render.RenderConfig(width=40, height=30, strategy=render.COARSE_FINE,
                              n_coarse=12, n_fine=12, seed=17)
    a = render.render(make_scene("torus"), _pose(), cfg)
    b = render.render(make_scene("torus"), _pose(), cfg)
    assert np.array_equal(a.rgb, b.rgb)
    assert np.array_equal(a.depth, b.depth)
    assert a.sdf_queries == b.sdf_queries


def test_thread_count_does_not_change_pixels():
    scene = make_scene("two-spheres")
    base = render.RenderConfig(width=96, height=72, n_coarse=12, seed=9,
                               strategy=render.COARSE_ACCURATE, threads=1)
    multi = render.RenderConfig(width=96, height=72, n_coarse=12, seed=9,
                                strategy=render.COARSE_ACCURATE, threads=4)
    a = render.render(scene, _pose(), base)
    b = render.render(scene, _pose(), multi)
    assert np.array_equal(a.rgb, b.rgb)
    assert np.array_equal(a.depth, b.depth)
    assert np.array_equal(a.normal, b.normal)
    assert a.sdf_queries == b.sdf_queries


def test_accurate_strategy_misses_return_exact_background():
    bg = (0.2, 0.5, 0.9)
    cfg = render.RenderConfig(width=33, height=33, background=bg,
                              strategy=render.COARSE_ACCURATE, n_coarse=8,
                              seed=1)
    out = render.render(make_scene("sphere", radius=0.3), _axis_pose(), cfg)
    miss = out.weight_sum == 0.0
    assert miss.any()
    assert np.all(out.rgb[miss] == np.asarray(bg))
    assert np.all(np.isinf(out.depth[miss]))


def test_accurate_strategy_query_savings():
    scene = make_scene("sphere", radius=0.3)
    kw = dict(width=48, height=48, n_coarse=16, n_fine=16, seed=2)
    co = render.render(scene, _axis_pose(),
                       render.RenderConfig(strategy=render.COARSE_ONLY, **kw))
    ca = render.render(scene, _axis_pose(),
                       render.RenderConfig(strategy=render.COARSE_ACCURATE, **kw))
    assert ca.sdf_queries < 0.55 * co.sdf_queries


def test_query_count_matches_field_evaluations():
    for strategy in render.STRATEGIES:
        field = CountingField(make_scene("box"))
        cfg = render.RenderConfig(width=16, height=16, strategy=strategy,
                                  n_coarse=8, n_fine=8, seed=4)
        out = render.render(field, _pose(), cfg)
        assert out.sdf_queries == field.points


def test_center_ray_depth_matches_geometry():
    radius = 2.1
    cfg = render.RenderConfig(width=33, height=33, beta=500.0, delta=0.1,
                              n_coarse=48, strategy=render.COARSE_ACCURATE,
                              seed=6)
    out = render.render(make_scene("sphere"), _axis_pose(radius), cfg)
    d_center = out.depth[16, 16]
    assert abs(d_center - (radius - 0.5)) < 0.02


def test_center_ray_normal_faces_camera():
    cfg = render.RenderConfig(width=33, height=33, beta=300.0,
                              strategy=render.COARSE_ACCURATE, seed=6)
    out = render.render(make_scene("sphere"), _axis_pose(), cfg)
    n = out.normal[16, 16]
    assert np.dot(n, np.array([0.0, -1.0, 0.0])) > 0.999


def test_hit_silhouette_roughly_matches_solid_angle():
    # a 0.5 sphere from 2.1 away under a 90 degree fov covers about
    # pi*(r/f)^2 / 4 of the image plane; allow generous slack
    cfg = render.RenderConfig(width=65, height=65, beta=200.0,
                              strategy=render.COARSE_ACCURATE, n_coarse=12,
                              seed=8)
    out = render.render(make_scene("sphere"), _axis_pose(), cfg)
    frac = np.isfinite(out.depth).mean()
    assert 0.02 < frac < 0.12


def test_network_field_renders():
    net = GeneratorNetwork(NetworkConfig(), seed=0)
    field = render.NetworkField(net, np.zeros(net.cfg.z_dim, np.float32))
    cfg = render.RenderConfig(width=17, height=17, beta=150.0,
                              strategy=render.COARSE_ACCURATE, n_coarse=8,
                              seed=5)
    out = render.render(field, _axis_pose(), cfg)
    assert np.all(np.isfinite(out.rgb))
    frac = np.isfinite(out.depth).mean()
    assert 0.01 < frac < 0.3
    # central ray depth should sit near the initialized shell
    assert abs(out.depth[8, 8] - (2.1 - 0.5)) < 0.05


def test_config_validation():
    bad = [
        dict(strategy="magic"),
        dict(n_coarse=1),
        dict(beta=0.0),
        dict(delta=-1.0),
        dict(threads=0),
        dict(width=0),
        dict(strategy=render.COARSE_FINE, n_fine=0),
        dict(background=(1.0, 1.0)),
    ]
    for kw in bad:
        with pytest.raises(ValueError):
            render.RenderConfig(**kw).validate()
    render.RenderConfig().validate()
