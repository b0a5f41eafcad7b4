"""Binary checkpoint format for trainable parameter stacks.

Layout (all little-endian):

    offset  field
    0       magic  b"SDFGANCK"
    8       u32    format version (currently 2)
    12      u32    layer count L
    16      L x (u32 rows, u32 cols)   one entry per parameter array
    ...     f32    parameter payload, arrays concatenated in layer order
    ...     u32    optimizer-present flag (0 or 1)
    ...     u64    optimizer step count        | only when the
    ...     f32    first-moment payload (as params)  | flag is 1
    ...     f32    second-moment payload (as params) |
    ...     f64    sharpness beta
    ...     u64    rng seed
    ...     u64    iteration counter
    ...     u32    architecture-present flag (0 or 1)
    ...     u32 x 6  encoding frequencies (position, direction),   | only
                     code size, trunk width, trunk depth,          | when
                     color hidden width                            | the
    ...     f64 x 3  init radius, code shape spread,               | flag
                     code size spread                              | is 1

Every parameter array is stored 2-D (biases are kept as (1, n) rows
throughout the package), so shape information round-trips losslessly.
Values are float32 end to end, which is also the training dtype; a
save/load cycle is bit-exact. The architecture block lets a generator
checkpoint rebuild its own network without an external config.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"SDFGANCK"
VERSION = 2


class CheckpointError(ValueError):
    """Raised for malformed, truncated, or unsupported checkpoint files."""


@dataclass
class OptimizerSnapshot:
    step: int
    m: list
    v: list


@dataclass
class NetworkArch:
    """Generator hyperparameters needed to rebuild the network."""
    n_freqs_x: int
    n_freqs_d: int
    z_dim: int
    width: int
    depth: int
    color_hidden: int
    radius: float
    code_shape_std: float
    code_size_std: float


@dataclass
class Checkpoint:
    params: list                      # list of 2-D float32 arrays
    beta: float
    seed: int
    iteration: int
    optimizer: OptimizerSnapshot | None = None
    arch: NetworkArch | None = None
    version: int = VERSION


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    for p in ckpt.params:
        if p.ndim != 2:
            raise CheckpointError(f"parameter arrays must be 2-D, got shape {p.shape}")
    chunks = [MAGIC, struct.pack("<II", VERSION, len(ckpt.params))]
    for p in ckpt.params:
        chunks.append(struct.pack("<II", p.shape[0], p.shape[1]))
    for p in ckpt.params:
        chunks.append(np.ascontiguousarray(p, dtype="<f4").tobytes())
    opt = ckpt.optimizer
    if opt is None:
        chunks.append(struct.pack("<I", 0))
    else:
        if len(opt.m) != len(ckpt.params) or len(opt.v) != len(ckpt.params):
            raise CheckpointError("optimizer state does not match parameter count")
        chunks.append(struct.pack("<I", 1))
        chunks.append(struct.pack("<Q", opt.step))
        for arr in list(opt.m) + list(opt.v):
            chunks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    chunks.append(struct.pack("<d", float(ckpt.beta)))
    chunks.append(struct.pack("<QQ", int(ckpt.seed), int(ckpt.iteration)))
    arch = ckpt.arch
    if arch is None:
        chunks.append(struct.pack("<I", 0))
    else:
        chunks.append(struct.pack("<I", 1))
        chunks.append(struct.pack(
            "<6I", arch.n_freqs_x, arch.n_freqs_d, arch.z_dim,
            arch.width, arch.depth, arch.color_hidden))
        chunks.append(struct.pack(
            "<3d", arch.radius, arch.code_shape_std, arch.code_size_std))
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError("checkpoint file is truncated")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def array(self, shape) -> np.ndarray:
        n = int(np.prod(shape))
        raw = self.take(4 * n)
        return np.frombuffer(raw, dtype="<f4").reshape(shape).copy()


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        data = fh.read()
    r = _Reader(data)
    if r.take(len(MAGIC)) != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    version, n_layers = r.unpack("<II")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    shapes = [r.unpack("<II") for _ in range(n_layers)]
    params = [r.array(s) for s in shapes]
    (has_opt,) = r.unpack("<I")
    optimizer = None
    if has_opt == 1:
        (step,) = r.unpack("<Q")
        m = [r.array(s) for s in shapes]
        v = [r.array(s) for s in shapes]
        optimizer = OptimizerSnapshot(step=step, m=m, v=v)
    elif has_opt != 0:
        raise CheckpointError("corrupt optimizer flag")
    (beta,) = r.unpack("<d")
    seed, iteration = r.unpack("<QQ")
    (has_arch,) = r.unpack("<I")
    arch = None
    if has_arch == 1:
        ints = r.unpack("<6I")
        reals = r.unpack("<3d")
        arch = NetworkArch(*ints, *reals)
    elif has_arch != 0:
        raise CheckpointError("corrupt architecture flag")
    if r.pos != len(data):
        raise CheckpointError("trailing bytes after checkpoint payload")
    return Checkpoint(params=params, beta=beta, seed=seed,
                      iteration=iteration, optimizer=optimizer, arch=arch,
                      version=version)
