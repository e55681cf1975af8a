"""Client-to-server link: ideal or quantizing transport, eavesdrop taps, cost accounting."""

from dataclasses import dataclass, field
import csv
import threading

import numpy as np

from .errors import ConfigurationError
from .nnkernel import count_params, mlp
from .wire import MpMessage, decode_one, encode


class ChannelModel:
    """Transport for :class:`MpMessage` values.

    ``kind="ideal"`` delivers exactly what was sent. ``kind="quantized"``
    passes the discriminator weights through a ``bits``-bit uniform midrise
    quantizer on ``[-clip, clip]`` (noise and labels are untouched). Every
    delivered message is the decoding of the bytes that crossed the link, and
    each tap receives its own decoded copy of those bytes.
    """

    def __init__(self, kind="ideal", bits=16, clip=4.0, taps=()):
        if kind not in ("ideal", "quantized"):
            raise ConfigurationError(f"unknown channel kind {kind!r}")
        if kind == "quantized" and not (1 <= bits <= 24 and clip > 0):
            raise ConfigurationError("quantized channel needs 1 <= bits <= 24 and clip > 0")
        self.kind = kind
        self.bits = bits
        self.clip = clip
        self.taps = list(taps)
        self.bytes_sent = 0
        self.messages_sent = 0
        self._lock = threading.Lock()

    def attach(self, tap):
        self.taps.append(tap)
        return tap

    def transmit(self, msg):
        if self.kind == "quantized":
            msg = MpMessage(msg.user_id, msg.step,
                            msg.disc_params.replace_values(quantize(msg.disc_params.values, self.bits, self.clip)),
                            msg.noise, msg.arch_digest)
        payload = encode(msg)
        with self._lock:
            self.bytes_sent += len(payload)
            self.messages_sent += 1
        for tap in self.taps:
            tap(decode_one(payload))
        return decode_one(payload)

    __call__ = transmit


def quantize(values, bits, clip):
    """Clamp to ``[-clip, clip]`` and snap to the centre of one of ``2**bits`` cells."""
    levels = 1 << bits
    step = 2.0 * clip / levels
    x = np.clip(np.asarray(values, dtype=np.float64), -clip, clip)
    idx = np.minimum(np.floor((x + clip) / step), levels - 1)
    return (-clip + (idx + 0.5) * step).astype(np.float32)


def transmit(ch, msg):
    return ch.transmit(msg)


class RecordingTap:
    """Tap that keeps every intercepted message, optionally skipping some steps."""

    def __init__(self, skip_steps=()):
        self.skip_steps = set(skip_steps)
        self.messages = []

    def __call__(self, msg):
        if msg.step not in self.skip_steps:
            self.messages.append(msg)


@dataclass(frozen=True)
class CostReport:
    arch_name: str
    params_full: int
    params_psfedgan: int
    gen_params: int
    disc_params: int
    batch: int
    z_dim: int

    @property
    def bytes_full(self):
        return 4 * self.params_full

    @property
    def bytes_psfedgan(self):
        return 4 * self.params_psfedgan

    @property
    def ratio(self):
        return self.params_psfedgan / self.params_full

    @property
    def saving_bytes(self):
        return self.bytes_full - self.bytes_psfedgan

    def cumulative(self, steps):
        """Totals after ``steps`` per-step exchanges: ``(params_full, params_psfedgan)``."""
        return self.params_full * steps, self.params_psfedgan * steps

    CSV_HEADER = ("arch_name", "params_full", "params_psfedgan", "bytes_full", "bytes_psfedgan", "ratio")

    def row(self):
        return [self.arch_name, self.params_full, self.params_psfedgan,
                self.bytes_full, self.bytes_psfedgan, f"{self.ratio:.6f}"]


def cost_compare(gen, disc, batch, z_dim, arch_name="custom"):
    """Per-step parameter counts: full GAN sharing vs discriminator + noise + labels."""
    g, d = count_params(gen), count_params(disc)
    return CostReport(arch_name, g + d, d + batch * (z_dim + 1), g, d, batch, z_dim)


def write_cost_csv(path, reports):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CostReport.CSV_HEADER)
        for rep in reports:
            w.writerow(rep.row())


@dataclass(frozen=True)
class ArchPair:
    gen: tuple
    disc: tuple
    batch: int
    z_dim: int
    num_classes: int = field(default=10)


def _pair(z_dim, classes, data_dim, gen_hidden, disc_hidden, batch):
    gen = mlp([z_dim + classes, *gen_hidden, data_dim], hidden="relu", output="tanh")
    disc = mlp([data_dim + classes, *disc_hidden, 1], hidden="leaky_relu", output="sigmoid")
    return ArchPair(gen, disc, batch, z_dim, classes)


# Architecture pairs shipped with the package. ``mnist_dense_scale`` is a
# dense pair sized like a DCGAN for 28x28 digits (about 1.9M parameters on
# each side).
BUNDLED_ARCHITECTURES = {
    "toy2d": _pair(8, 3, 2, (32, 32), (32, 32), 32),
    "toy2d_10": _pair(8, 10, 2, (32, 32), (32, 32), 32),
    "glyph": _pair(64, 10, 64, (256, 256), (256, 256), 32),
    "glyph_small": _pair(16, 10, 64, (64, 64), (32, 32), 32),
    "mnist_dense_scale": _pair(100, 10, 784, (1024, 1024), (1024, 1024), 64),
}


def bundled_cost_reports():
    return [cost_compare(p.gen, p.disc, p.batch, p.z_dim, name) for name, p in BUNDLED_ARCHITECTURES.items()]
