"""Binary encoding of publishing-mechanism messages.

Record layout (all little-endian)::

    magic      4 bytes  b"PSFG"
    version    u16
    user_id    u32
    step       u64
    arch       u64      digest of the discriminator layer sequence
    layout     u32 count, then count x (kind, in, out, offset, length) u32
    params     f32 x sum(length)
    z header   u32 rows, u32 cols
    z          f32 x rows*cols, row-major
    labels     u16 x rows
"""

from dataclasses import dataclass
import struct

import numpy as np

from .errors import DecodeError
from .gan import NoiseBatch
from .nnkernel import ParamVector, arch_digest, layout_descriptor, layers_from_descriptor, make_layout

MAGIC = b"PSFG"
VERSION = 1
_HEAD = struct.Struct("<4sHIQQ")


@dataclass(frozen=True, eq=False)
class MpMessage:
    """What a client publishes per step: its discriminator plus the noise batch."""

    user_id: int
    step: int
    disc_params: ParamVector
    noise: NoiseBatch
    arch_digest: int

    @classmethod
    def build(cls, user_id, step, disc_params, noise):
        return cls(user_id, step, disc_params, noise, arch_digest(disc_params.layers))

    def __eq__(self, other):
        return (
            isinstance(other, MpMessage)
            and (self.user_id, self.step, self.arch_digest) == (other.user_id, other.step, other.arch_digest)
            and self.disc_params.bit_equal(other.disc_params)
            and self.noise == other.noise
        )

    __hash__ = None


def encoded_size(n_layout_entries, n_params, batch, z_dim):
    return _HEAD.size + 4 + 20 * n_layout_entries + 4 * n_params + 8 + 4 * batch * z_dim + 2 * batch


def encode(msg):
    z = msg.noise.z
    labels = msg.noise.labels
    if labels.size and (labels.min() < 0 or labels.max() > 0xFFFF):
        raise ValueError("labels must fit in u16")
    return b"".join([
        _HEAD.pack(MAGIC, VERSION, msg.user_id, msg.step, msg.arch_digest),
        layout_descriptor(msg.disc_params.layout),
        msg.disc_params.values.astype("<f4").tobytes(),
        struct.pack("<II", z.shape[0], z.shape[1]),
        z.astype("<f4").tobytes(),
        labels.astype("<u2").tobytes(),
    ])


class _Reader:
    def __init__(self, buf, offset=0):
        self.buf = buf
        self.pos = offset

    def take(self, n, what):
        if self.pos + n > len(self.buf):
            raise DecodeError(f"truncated {what}: need {n} bytes, have {len(self.buf) - self.pos}", self.pos)
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt, what):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size, what))


def decode(buf, offset=0):
    """Decode one message starting at ``offset``; returns ``(msg, end_offset)``."""
    buf = bytes(buf)
    r = _Reader(buf, offset)
    magic, version, user_id, step, digest = r.unpack(_HEAD.format, "header")
    if magic != MAGIC:
        raise DecodeError(f"bad magic {magic!r}", offset)
    if version != VERSION:
        raise DecodeError(f"unsupported version {version}", offset + 4)
    entries_at = r.pos
    (count,) = r.unpack("<I", "layout count")
    entries = [r.unpack("<5I", "layout entry") for _ in range(count)]
    try:
        layers = layers_from_descriptor(entries)
        layout = make_layout(layers)
    except ValueError as exc:
        raise DecodeError(f"invalid layout: {exc}", entries_at) from None
    if [(e.offset, e.length) for e in layout] != [(e[3], e[4]) for e in entries]:
        raise DecodeError("layout offsets inconsistent with layer shapes", entries_at)
    if arch_digest(layers) != digest:
        raise DecodeError("architecture digest does not match layout", offset + 14)
    n_params = sum(e.length for e in layout)
    params = np.frombuffer(r.take(4 * n_params, "params"), dtype="<f4").astype(np.float32)
    rows, cols = r.unpack("<II", "noise header")
    z = np.frombuffer(r.take(4 * rows * cols, "noise"), dtype="<f4").astype(np.float32).reshape(rows, cols)
    labels = np.frombuffer(r.take(2 * rows, "labels"), dtype="<u2").astype(np.int64)
    msg = MpMessage(user_id, step, ParamVector(params, layout), NoiseBatch(z, labels), digest)
    return msg, r.pos


def decode_one(buf):
    """Decode a buffer that must hold exactly one message."""
    msg, end = decode(buf)
    if end != len(buf):
        raise DecodeError(f"{len(buf) - end} trailing bytes after message", end)
    return msg
