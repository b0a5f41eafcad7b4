"""Analytic signed-distance scenes used as rendering oracles.

Each scene answers three queries for point arrays shaped (..., 3):

* ``sdf(p)``      exact signed distance, negative inside
* ``gradient(p)`` analytic gradient (unit length wherever the distance
                  is differentiable; documented tie-breaks elsewhere)
* ``color(p)``    albedo in [0, 1]^3, constant per primitive

Distances for the primitives are exact Euclidean distances. ``min`` of
children is used for unions, which is exact on the exterior and inside a
single child; inside an overlap it under-reports magnitude, the usual
caveat for min-combined fields.
"""

from __future__ import annotations

import ast

import numpy as np
import numpy.typing as npt

_F = npt.NDArray[np.floating]

_GRAY = np.array([0.7, 0.7, 0.7])


class AnalyticSdf:
    """Base class; subclasses implement sdf/gradient and carry a color."""

    albedo: _F = _GRAY

    def sdf(self, p: _F) -> _F:
        raise NotImplementedError

    def gradient(self, p: _F) -> _F:
        raise NotImplementedError

    def color(self, p: _F) -> _F:
        p = np.asarray(p)
        return np.broadcast_to(self.albedo, p.shape).copy()


class Sphere(AnalyticSdf):
    def __init__(self, radius: float = 0.5, albedo=_GRAY):
        if radius <= 0:
            raise ValueError("sphere radius must be positive")
        self.radius = float(radius)
        self.albedo = np.asarray(albedo, dtype=np.float64)

    def sdf(self, p):
        p = np.asarray(p, dtype=np.float64)
        return np.linalg.norm(p, axis=-1) - self.radius

    def gradient(self, p):
        p = np.asarray(p, dtype=np.float64)
        n = np.linalg.norm(p, axis=-1, keepdims=True)
        g = np.divide(p, n, out=np.zeros_like(p), where=n > 1e-12)
        # center point: undefined direction, pick +z
        g[..., 2] = np.where(n[..., 0] <= 1e-12, 1.0, g[..., 2])
        return g


class Box(AnalyticSdf):
    """Axis-aligned box given by half extents."""

    def __init__(self, half_extents=(0.4, 0.4, 0.4), albedo=_GRAY):
        self.half = np.asarray(half_extents, dtype=np.float64)
        if np.any(self.half <= 0):
            raise ValueError("box half extents must be positive")
        self.albedo = np.asarray(albedo, dtype=np.float64)

    def sdf(self, p):
        p = np.asarray(p, dtype=np.float64)
        q = np.abs(p) - self.half
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inside = np.minimum(np.max(q, axis=-1), 0.0)
        return outside + inside

    def gradient(self, p):
        p = np.asarray(p, dtype=np.float64)
        q = np.abs(p) - self.half
        pos = np.maximum(q, 0.0)
        norm = np.linalg.norm(pos, axis=-1, keepdims=True)
        out_g = np.divide(pos, norm, out=np.zeros_like(pos), where=norm > 1e-12)
        out_g = out_g * np.sign(p)
        # inside: push along the closest face; ties go to the lowest axis index
        closest = np.argmax(q, axis=-1)
        in_g = np.zeros_like(p)
        np.put_along_axis(in_g, closest[..., None], 1.0, axis=-1)
        in_g = in_g * np.where(np.sign(p) == 0, 1.0, np.sign(p))
        is_inside = (norm[..., 0] <= 1e-12)
        return np.where(is_inside[..., None], in_g, out_g)


class Torus(AnalyticSdf):
    """Torus around the +z axis: major ring radius and tube radius."""

    def __init__(self, major: float = 0.35, minor: float = 0.12, albedo=_GRAY):
        if major <= 0 or minor <= 0:
            raise ValueError("torus radii must be positive")
        self.major = float(major)
        self.minor = float(minor)
        self.albedo = np.asarray(albedo, dtype=np.float64)

    def sdf(self, p):
        p = np.asarray(p, dtype=np.float64)
        ring = np.hypot(p[..., 0], p[..., 1]) - self.major
        return np.hypot(ring, p[..., 2]) - self.minor

    def gradient(self, p):
        p = np.asarray(p, dtype=np.float64)
        lxy = np.hypot(p[..., 0], p[..., 1])
        ring = lxy - self.major
        q = np.hypot(ring, p[..., 2])
        g = np.zeros_like(p)
        safe_q = np.where(q > 1e-12, q, 1.0)
        safe_l = np.where(lxy > 1e-12, lxy, 1.0)
        g[..., 0] = ring / safe_q * p[..., 0] / safe_l
        g[..., 1] = ring / safe_q * p[..., 1] / safe_l
        g[..., 2] = p[..., 2] / safe_q
        return g


class Plane(AnalyticSdf):
    """Half-space boundary: s = dot(n, p) - offset with unit normal n."""

    def __init__(self, normal=(0.0, 0.0, 1.0), offset: float = 0.0, albedo=_GRAY):
        n = np.asarray(normal, dtype=np.float64)
        length = np.linalg.norm(n)
        if length < 1e-12:
            raise ValueError("plane normal must be nonzero")
        self.normal = n / length
        self.offset = float(offset)
        self.albedo = np.asarray(albedo, dtype=np.float64)

    def sdf(self, p):
        p = np.asarray(p, dtype=np.float64)
        return p @ self.normal - self.offset

    def gradient(self, p):
        p = np.asarray(p, dtype=np.float64)
        return np.broadcast_to(self.normal, p.shape).copy()


class Translate(AnalyticSdf):
    def __init__(self, child: AnalyticSdf, offset):
        self.child = child
        self.offset = np.asarray(offset, dtype=np.float64)

    def sdf(self, p):
        return self.child.sdf(np.asarray(p, dtype=np.float64) - self.offset)

    def gradient(self, p):
        return self.child.gradient(np.asarray(p, dtype=np.float64) - self.offset)

    def color(self, p):
        return self.child.color(np.asarray(p, dtype=np.float64) - self.offset)


class Union(AnalyticSdf):
    """min-combination of children; nearest child wins color and gradient.

    Distance ties go to the lowest child index.
    """

    def __init__(self, children):
        children = list(children)
        if not children:
            raise ValueError("union needs at least one child")
        self.children = children

    def _stack(self, p):
        return np.stack([c.sdf(p) for c in self.children], axis=0)

    def sdf(self, p):
        return np.min(self._stack(p), axis=0)

    def gradient(self, p):
        winner = np.argmin(self._stack(p), axis=0)
        grads = np.stack([c.gradient(p) for c in self.children], axis=0)
        return np.take_along_axis(grads, winner[None, ..., None], axis=0)[0]

    def color(self, p):
        winner = np.argmin(self._stack(p), axis=0)
        cols = np.stack([c.color(p) for c in self.children], axis=0)
        return np.take_along_axis(cols, winner[None, ..., None], axis=0)[0]


# === named scenes for the CLI, benchmarks, and demos ===

def make_scene(name: str, radius: float = 0.5) -> AnalyticSdf:
    """Build one of the stock scenes by name.

    ``radius`` scales the sphere-based scenes; the rest use fixed sizes
    that fit inside the 0.6 object ball.
    """
    if name == "sphere":
        return Sphere(radius, albedo=(0.85, 0.35, 0.3))
    if name == "box":
        return Box((0.35, 0.35, 0.35), albedo=(0.3, 0.55, 0.85))
    if name == "torus":
        return Torus(0.38, 0.14, albedo=(0.4, 0.75, 0.4))
    if name == "plane":
        return Plane((0.0, 0.0, 1.0), -0.2, albedo=(0.75, 0.7, 0.6))
    if name == "two-spheres":
        # disjoint pair along x, used to study sampling behind the
        # first surface
        return Union(
            [
                Translate(Sphere(0.22, albedo=(0.85, 0.4, 0.3)), (-0.3, 0.0, 0.0)),
                Translate(Sphere(0.22, albedo=(0.3, 0.4, 0.85)), (0.3, 0.0, 0.0)),
            ]
        )
    raise ValueError(f"unknown scene {name!r}")


SCENE_NAMES = ("sphere", "box", "torus", "plane", "two-spheres")

_PRIMITIVES = {"sphere": Sphere, "box": Box, "torus": Torus, "plane": Plane}


def _literal(node):
    try:
        return ast.literal_eval(node)
    except (ValueError, SyntaxError):
        raise ValueError(
            f"scene arguments must be numeric literals, got {ast.dump(node)}")


def _build_node(node) -> AnalyticSdf:
    if isinstance(node, ast.Name):
        if node.id not in _PRIMITIVES:
            raise ValueError(f"unknown primitive {node.id!r}")
        return _PRIMITIVES[node.id]()
    if isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _PRIMITIVES:
            raise ValueError("scene calls must name a primitive: "
                             + ", ".join(sorted(_PRIMITIVES)))
        args = [_literal(a) for a in node.args]
        kwargs = {k.arg: _literal(k.value) for k in node.keywords}
        return _PRIMITIVES[node.func.id](*args, **kwargs)
    if isinstance(node, ast.BinOp) and isinstance(node.op, ast.Add):
        left = _build_node(node.left)
        right = _build_node(node.right)
        children = left.children if isinstance(left, Union) else [left]
        children = children + (right.children if isinstance(right, Union)
                               else [right])
        return Union(children)
    if isinstance(node, ast.BinOp) and isinstance(node.op, ast.MatMult):
        return Translate(_build_node(node.left), _literal(node.right))
    raise ValueError(f"unsupported scene syntax: {ast.dump(node)}")


def parse_scene(text: str) -> AnalyticSdf:
    """Build a scene from a primitive expression.

    The grammar is a restricted expression language:

    * ``sphere(radius=0.3)`` or ``box((0.3, 0.2, 0.1))`` constructs a
      primitive (sphere, box, torus, plane) with literal arguments,
    * ``term @ (x, y, z)`` translates a term by an offset,
    * ``term + term`` takes the union.

    Example::

        sphere(0.22) @ (-0.3, 0, 0) + sphere(0.22) @ (0.3, 0, 0)

    Only the listed constructs are accepted; anything else raises
    ValueError.
    """
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"cannot parse scene expression {text!r}: {exc}")
    return _build_node(tree.body)


def resolve_scene(spec: str, radius: float = 0.5) -> AnalyticSdf:
    """Turn a scene name or primitive expression into a scene object."""
    if spec in SCENE_NAMES:
        return make_scene(spec, radius)
    try:
        return parse_scene(spec)
    except ValueError:
        if any(ch in spec for ch in "()+@"):
            raise
        raise ValueError(f"unknown scene {spec!r}; stock scenes are "
                         + ", ".join(SCENE_NAMES)
                         + "; or pass a primitive expression like "
                           "'sphere(0.3) @ (0, 0, 0.2)'")
