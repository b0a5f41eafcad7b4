import math

import numpy as np
import pytest

from sdfgan import geometry as geo


def test_normalize_unit_length():
    v = geo.normalize(np.array([3.0, 0.0, 4.0]))
    assert np.allclose(v, [0.6, 0.0, 0.8])


def test_normalize_rejects_zero():
    with pytest.raises(ValueError):
        geo.normalize(np.zeros(3))


def test_point_at_broadcasts():
    o = np.zeros((4, 3))
    d = np.tile(np.array([0.0, 0.0, 1.0]), (4, 1))
    t = np.array([0.0, 1.0, 2.0, 3.0])
    p = geo.point_at(o, d, t)
    assert p.shape == (4, 3)
    assert np.allclose(p[:, 2], t)


def test_ray_point_at():
    r = geo.Ray(np.array([1.0, 0, 0]), np.array([0.0, 1, 0]), 0.0, 2.0)
    assert np.allclose(r.point_at(0.5), [1.0, 0.5, 0.0])


def test_pose_rejects_bad_fov():
    pos = np.array([0.0, -1.0, 0.0])
    with pytest.raises(ValueError):
        geo.CameraPose(position=pos, fov=0.0)
    with pytest.raises(ValueError):
        geo.CameraPose(position=pos, fov=math.pi)
    geo.CameraPose(position=pos, fov=math.pi / 2)  # valid


def test_basis_orthonormal():
    pose = geo.CameraPose(position=np.array([0.3, -0.8, 0.52]))
    r, u, f = pose.basis()
    for v in (r, u, f):
        assert abs(np.linalg.norm(v) - 1.0) < 1e-12
    assert abs(np.dot(r, u)) < 1e-12
    assert abs(np.dot(r, f)) < 1e-12
    assert abs(np.dot(u, f)) < 1e-12
    # (right, up, -forward) is the right-handed screen frame
    assert np.allclose(np.cross(r, u), -f)


def test_basis_survives_pole():
    pose = geo.CameraPose(position=np.array([0.0, 0.0, 1.0]))
    r, u, f = pose.basis()
    assert np.allclose(f, [0.0, 0.0, -1.0])
    assert abs(np.dot(r, u)) < 1e-12


def test_generate_rays_shapes_and_norms():
    pose = geo.CameraPose(position=np.array([0.0, -1.0, 0.0]))
    o, d, near, far = geo.generate_rays(pose, 8, 8)
    assert o.shape == (8, 8, 3) and d.shape == (8, 8, 3)
    assert np.allclose(np.linalg.norm(d, axis=-1), 1.0)
    assert near == 0.0 and far == 2.0
    assert np.allclose(o, pose.position)


def test_center_pixel_points_at_target():
    pose = geo.CameraPose(position=np.array([0.0, -1.0, 0.0]))
    _, d, _, _ = geo.generate_rays(pose, 9, 9)
    center = d[4, 4]
    expect = geo.normalize(pose.look_at - pose.position)
    assert np.allclose(center, expect, atol=1e-12)


def test_row_zero_is_top_of_image():
    # camera on the equator, world +z should appear in row 0
    pose = geo.CameraPose(position=np.array([0.0, -1.0, 0.0]))
    _, d, _, _ = geo.generate_rays(pose, 9, 9)
    assert d[0, 4, 2] > 0.0 > d[8, 4, 2]


def test_generate_rays_rejects_empty():
    pose = geo.CameraPose(position=np.array([0.0, -1.0, 0.0]))
    with pytest.raises(ValueError):
        geo.generate_rays(pose, 0, 4)


def test_uniform_hemisphere_sampling():
    dist = geo.PoseDistribution(kind=geo.UNIFORM_HEMISPHERE)
    rng = np.random.default_rng(7)
    zs, azimuths = [], []
    for _ in range(500):
        pose = geo.sample_pose(dist, rng)
        p = pose.position
        assert abs(np.linalg.norm(p) - 1.0) < 1e-12
        polar = math.acos(np.clip(p[2], -1, 1))
        assert 0.0 <= math.degrees(polar) <= 85.0 + 1e-9
        zs.append(p[2])
        azimuths.append(math.atan2(p[1], p[0]))
    # azimuth should wrap the full circle
    assert min(azimuths) < -2.5 and max(azimuths) > 2.5
    assert min(zs) < 0.2  # low-elevation poses do occur


def test_gaussian_forward_sampling():
    dist = geo.PoseDistribution(kind=geo.GAUSSIAN_FORWARD)
    rng = np.random.default_rng(3)
    xs = []
    for _ in range(500):
        p = geo.sample_pose(dist, rng).position
        assert p[2] >= -1e-12  # clamped to the upper hemisphere
        xs.append(p[0])
    # forward-concentrated: most poses near azimuth 0 (x close to 1)
    assert np.mean(xs) > 0.8


def test_sample_pose_deterministic():
    dist = geo.PoseDistribution()
    a = geo.sample_pose(dist, np.random.default_rng(11)).position
    b = geo.sample_pose(dist, np.random.default_rng(11)).position
    assert np.array_equal(a, b)


def test_pose_distribution_validation():
    with pytest.raises(ValueError):
        geo.PoseDistribution(kind="sideways")
    with pytest.raises(ValueError):
        geo.PoseDistribution(radius=0.0)
