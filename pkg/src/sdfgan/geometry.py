"""Camera and ray setup for a unit-sphere capture rig.

Conventions used across the package:

* world frame is right-handed with +z up, object centered at the origin
  inside a ball of radius 0.6.
* cameras sit on a sphere of ``radius`` (default 1.0) and look at the
  origin; ray bounds are [radius - 1, radius + 1] clipped to t >= 0.
* pixel (0, 0) is the top-left corner; for odd resolutions the center
  pixel's direction is exactly normalize(look_at - position).
* points are numpy arrays of shape (..., 3), float64 unless noted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt

_F = npt.NDArray[np.floating]

WORLD_UP = np.array([0.0, 0.0, 1.0])


def normalize(v: _F) -> _F:
    """Return v / |v|, raising on (near) zero-length input."""
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(n < 1e-12):
        raise ValueError("cannot normalize zero-length vector")
    return v / n


def point_at(origins: _F, directions: _F, t) -> _F:
    """Points along rays: o + t * d. Broadcasts t over the last axis."""
    t = np.asarray(t, dtype=np.float64)
    return np.asarray(origins) + t[..., None] * np.asarray(directions)


@dataclass(frozen=True)
class Ray:
    origin: _F
    direction: _F
    near: float
    far: float

    def point_at(self, t: float) -> _F:
        return np.asarray(self.origin) + t * np.asarray(self.direction)


@dataclass(frozen=True)
class CameraPose:
    """Camera on the capture sphere, aimed at the origin.

    fov is the full horizontal/vertical angle in radians and must lie in
    (0, pi). ``radius`` is the distance from the origin.
    """

    position: _F
    look_at: _F = field(default_factory=lambda: np.zeros(3))
    fov: float = math.pi / 2
    up: _F = field(default_factory=lambda: WORLD_UP.copy())

    def __post_init__(self):
        if not (0.0 < self.fov < math.pi):
            raise ValueError(f"fov must lie in (0, pi), got {self.fov}")
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64))
        object.__setattr__(self, "look_at", np.asarray(self.look_at, dtype=np.float64))
        object.__setattr__(self, "up", np.asarray(self.up, dtype=np.float64))

    @property
    def radius(self) -> float:
        return float(np.linalg.norm(self.position - self.look_at))

    def basis(self):
        """Orthonormal (right, up, forward) triple for this pose."""
        forward = normalize(self.look_at - self.position)
        up = self.up
        if abs(float(np.dot(forward, normalize(up)))) > 0.999:
            up = np.array([0.0, 1.0, 0.0])
            if abs(float(np.dot(forward, up))) > 0.999:
                up = np.array([1.0, 0.0, 0.0])
        right = normalize(np.cross(forward, up))
        cam_up = np.cross(right, forward)
        return right, cam_up, forward


def ray_bounds(pose: CameraPose) -> tuple[float, float]:
    """Near/far distances covering the unit object ball from this pose."""
    r = pose.radius
    return max(0.0, r - 1.0), r + 1.0


def generate_rays(pose: CameraPose, width: int, height: int):
    """Pinhole ray grid for an image of the given size.

    Returns (origins, directions, near, far) with origins and directions
    shaped (height, width, 3); directions are unit length.
    """
    if width < 1 or height < 1:
        raise ValueError("image dimensions must be positive")
    right, cam_up, forward = pose.basis()
    half_h = math.tan(pose.fov / 2.0)
    half_w = half_h * (width / height)

    # pixel centers in [-1, 1], row 0 at the top of the image
    xs = (np.arange(width) + 0.5) / width * 2.0 - 1.0
    ys = (np.arange(height) + 0.5) / height * 2.0 - 1.0
    u, v = np.meshgrid(xs * half_w, ys * half_h)

    d = (
        forward[None, None, :]
        + u[..., None] * right[None, None, :]
        - v[..., None] * cam_up[None, None, :]
    )
    d = d / np.linalg.norm(d, axis=-1, keepdims=True)
    o = np.broadcast_to(pose.position, d.shape).copy()
    near, far = ray_bounds(pose)
    return o, d, near, far


# === pose distributions ===

UNIFORM_HEMISPHERE = "uniform-hemisphere"
GAUSSIAN_FORWARD = "gaussian-forward"

_MAX_POLAR_DEG = 85.0


@dataclass(frozen=True)
class PoseDistribution:
    """Random camera placement on the capture sphere.

    ``uniform-hemisphere``: azimuth uniform on [0, 360) deg, polar angle
    (from +z) uniform on [0, 85] deg; suits objects photographed from all
    around and above.

    ``gaussian-forward``: poses concentrated in front of the object,
    azimuth ~ N(0, 0.3 rad), polar offset from the equator ~ N(0, 0.155
    rad) clamped to the upper hemisphere; suits forward-facing captures.
    """

    kind: str = UNIFORM_HEMISPHERE
    radius: float = 1.0
    fov: float = math.pi / 2
    vertical_std: float = 0.155
    horizontal_std: float = 0.3

    def __post_init__(self):
        if self.kind not in (UNIFORM_HEMISPHERE, GAUSSIAN_FORWARD):
            raise ValueError(f"unknown pose distribution {self.kind!r}")
        if self.radius <= 0:
            raise ValueError("camera radius must be positive")


def sample_pose(dist: PoseDistribution, rng: np.random.Generator) -> CameraPose:
    """Draw one camera pose from the distribution."""
    if dist.kind == UNIFORM_HEMISPHERE:
        azimuth = rng.uniform(0.0, 2.0 * math.pi)
        polar = math.radians(rng.uniform(0.0, _MAX_POLAR_DEG))
    else:
        azimuth = rng.normal(0.0, dist.horizontal_std)
        # mean pose sits on the equator; clamp below-horizon draws back up
        polar = math.pi / 2 + rng.normal(0.0, dist.vertical_std)
        polar = min(polar, math.pi / 2)
        polar = max(polar, 1e-6)
    position = dist.radius * np.array(
        [
            math.sin(polar) * math.cos(azimuth),
            math.sin(polar) * math.sin(azimuth),
            math.cos(polar),
        ]
    )
    return CameraPose(position=position, fov=dist.fov)
