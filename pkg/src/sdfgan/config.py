"""INI-style configuration files for the command-line tools.

A config file holds sections that mirror the package modules::

    [scene]
    name = two-spheres

    [render]
    width = 128
    strategy = coarse+accurate

Every key has a typed default; :func:`load_config` returns the full
default tree with file values merged in. Unknown sections or keys raise
:class:`ConfigError` naming the offender, so typos fail loudly instead
of silently using a default. Seeds are plain integers with fixed
defaults; nothing in the package ever seeds from the clock.
"""

from __future__ import annotations

import configparser
import copy
import math
from dataclasses import dataclass

__all__ = ["ConfigError", "Key", "SCHEMA", "defaults", "load_config",
           "merge_overrides", "describe"]


class ConfigError(ValueError):
    """Raised for unknown keys/sections or values that fail coercion."""


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_vec3(text: str) -> tuple:
    parts = [p for p in text.replace(",", " ").split() if p]
    if len(parts) != 3:
        raise ValueError(f"expected three numbers, got {text!r}")
    return tuple(float(p) for p in parts)


def _parse_optional(text: str):
    return text.strip() or None


_COERCERS = {
    "int": int,
    "float": float,
    "str": str.strip,
    "bool": _parse_bool,
    "vec3": _parse_vec3,
    "path?": _parse_optional,
}


@dataclass(frozen=True)
class Key:
    """One typed configuration entry: kind, default value, help line."""
    kind: str
    default: object
    help: str


# Section names mirror the modules that consume them. The same tree
# also drives --help and the documented defaults in the README.
SCHEMA: dict = {
    "scene": {
        "name": Key("str", "sphere",
                    "stock scene name or a primitive expression "
                    "(see scenes.parse_scene)"),
        "radius": Key("float", 0.5, "radius for the sphere-based scenes"),
    },
    "camera": {
        "azimuth": Key("float", 0.0, "orbit angle around +z, radians"),
        "elevation": Key("float", 0.25, "height angle above the equator, radians"),
        "distance": Key("float", 2.0, "camera distance from the origin"),
        "fov": Key("float", math.pi / 3, "full view angle, radians, in (0, pi)"),
    },
    "render": {
        "width": Key("int", 128, "image width in pixels"),
        "height": Key("int", 128, "image height in pixels"),
        "strategy": Key("str", "coarse+accurate",
                        "coarse-only | coarse+fine | coarse+accurate"),
        "n_coarse": Key("int", 32, "first-round samples per ray"),
        "n_fine": Key("int", 32, "second-round samples (coarse+fine only)"),
        "beta": Key("float", 100.0, "opacity sharpness; higher = harder surface"),
        "delta": Key("float", 0.1, "half-width of the traced sampling band"),
        "march_eps": Key("float", 1e-3, "surface-hit tolerance while marching"),
        "max_march_iters": Key("int", 32, "march step budget per ray"),
        "background": Key("vec3", (1.0, 1.0, 1.0), "background RGB in [0, 1]"),
        "stratified": Key("bool", True, "jitter samples inside their strata"),
        "seed": Key("int", 0, "render sampling seed (fixed, never wall-clock)"),
        "threads": Key("int", 1, "worker threads; any count gives identical "
                                 "pixels"),
    },
    "network": {
        "n_freqs_x": Key("int", 10, "position encoding octaves"),
        "n_freqs_d": Key("int", 4, "view-direction encoding octaves"),
        "z_dim": Key("int", 128, "latent code length (shape and color)"),
        "width": Key("int", 256, "hidden layer width"),
        "depth": Key("int", 4, "hidden layer count of the distance trunk"),
        "color_hidden": Key("int", 128, "hidden width of the color head"),
        "radius": Key("float", 0.5, "level-set radius the fresh network "
                                    "approximates"),
    },
    "fit": {
        "iterations": Key("int", 2000, "optimization steps"),
        "lr": Key("float", 1e-3, "Adam learning rate"),
        "batch": Key("int", 512, "points per step"),
        "eikonal_weight": Key("float", 0.5, "unit-gradient penalty weight"),
        "bound": Key("float", 1.2, "half-size of the sampled cube"),
        "seed": Key("int", 0, "training seed"),
        "log_every": Key("int", 100, "history cadence in iterations"),
    },
    "train": {
        "plan": Key("str", "default", "stage curriculum: default | smoke"),
        "iterations": Key("int", 2000, "total iterations across stages"),
        "batch": Key("int", 6, "images per iteration"),
        "lr": Key("float", 4e-4, "Adam learning rate for both players"),
        "eikonal_weight": Key("float", 0.5, "unit-gradient penalty weight"),
        "n_eikonal": Key("int", 192, "points for the unit-gradient penalty"),
        "n_normal": Key("int", 96, "surface pairs for normal smoothing"),
        "normal_sigma": Key("float", 0.01, "perturbation scale for normal "
                                           "smoothing"),
        "seed": Key("int", 0, "training seed"),
        "data_seed": Key("int", 7, "dataset synthesis seed"),
        "dataset": Key("path?", None, "PNG folder; empty synthesizes spheres"),
        "n_synthetic": Key("int", 500, "synthetic dataset size"),
        "camera_radius": Key("float", 1.5, "training camera orbit radius"),
        "camera_fov": Key("float", 1.0, "training camera view angle, radians"),
        "march_eps": Key("float", 1e-3, "surface-hit tolerance while marching"),
        "checkpoint_every": Key("int", 500, "checkpoint cadence in iterations"),
        "log_every": Key("int", 1, "CSV log cadence in iterations"),
    },
    "bench": {
        "width": Key("int", 128, "benchmark frame width"),
        "height": Key("int", 128, "benchmark frame height"),
        "beta": Key("float", 100.0, "opacity sharpness"),
        "delta": Key("float", 0.07, "traced-band half-width"),
        "n_coarse": Key("int", 32, "first-round samples per ray"),
        "n_fine": Key("int", 32, "second-round samples for the hierarchical "
                                 "baseline"),
        "repeats": Key("int", 20, "timed frames per strategy"),
        "seed": Key("int", 3, "sampling seed"),
        "threads": Key("int", 4, "worker threads for timing"),
    },
    "mesh": {
        "resolution": Key("int", 64, "grid points per axis"),
        "bound": Key("float", 1.2, "half-size of the sampled cube"),
    },
}


def defaults() -> dict:
    """Full configuration tree with every key at its default."""
    return {sec: {k: copy.copy(key.default) for k, key in keys.items()}
            for sec, keys in SCHEMA.items()}


def load_config(path) -> dict:
    """Parse an INI file against the schema; defaults fill the gaps."""
    parser = configparser.ConfigParser(interpolation=None)
    with open(path, "r", encoding="utf-8") as fh:
        parser.read_file(fh)
    tree = defaults()
    for section in parser.sections():
        if section not in SCHEMA:
            known = ", ".join(sorted(SCHEMA))
            raise ConfigError(
                f"{path}: unknown section [{section}]; expected one of {known}")
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                known = ", ".join(sorted(SCHEMA[section]))
                raise ConfigError(f"{path}: unknown key {key!r} in "
                                  f"[{section}]; expected one of {known}")
            coerce = _COERCERS[SCHEMA[section][key].kind]
            try:
                tree[section][key] = coerce(raw)
            except ValueError as exc:
                raise ConfigError(f"{path}: bad value for [{section}] "
                                  f"{key} = {raw!r}: {exc}")
    return tree


def merge_overrides(tree: dict, section: str, **overrides) -> dict:
    """Apply non-None override values (typically CLI flags) in place."""
    for key, value in overrides.items():
        if value is None:
            continue
        if key not in SCHEMA[section]:
            raise ConfigError(f"unknown key {key!r} in [{section}]")
        tree[section][key] = value
    return tree


def describe() -> str:
    """Human-readable listing of every key with its default, for --help."""
    lines = ["configuration keys (INI sections, shown with defaults):"]
    for section, keys in SCHEMA.items():
        lines.append(f"  [{section}]")
        for name, key in keys.items():
            default = key.default
            if isinstance(default, tuple):
                default = " ".join(repr(v) for v in default)
            elif default is None:
                default = ""
            lines.append(f"    {name} = {default}")
            lines.append(f"        {key.help}")
    return "\n".join(lines)
