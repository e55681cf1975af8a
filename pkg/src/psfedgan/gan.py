"""Conditional GAN on top of the dense kernel.

Labels are one-hot encoded and concatenated after the noise (generator input)
or after the sample (discriminator input). The three per-batch updates are
pure functions: each returns fresh networks and optimizer states and never
touches the network it is not training.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DataError, ShapeError
from .nnkernel import Network, apply_update, backward, bce_loss, forward, mlp


@dataclass(frozen=True)
class CGanConfig:
    z_dim: int
    num_classes: int
    data_dim: int
    gen_layers: tuple
    disc_layers: tuple
    batch_size: int = 32
    d_steps_per_g_step: int = 1

    def __post_init__(self):
        for name in ("z_dim", "num_classes", "data_dim", "batch_size", "d_steps_per_g_step"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.gen_layers[0].in_dim != self.z_dim + self.num_classes:
            raise ConfigurationError("generator input must be z_dim + num_classes wide")
        if self.gen_layers[-1].out_dim != self.data_dim:
            raise ConfigurationError("generator output must be data_dim wide")
        if self.disc_layers[0].in_dim != self.data_dim + self.num_classes:
            raise ConfigurationError("discriminator input must be data_dim + num_classes wide")
        if self.disc_layers[-1].out_dim != 1:
            raise ConfigurationError("discriminator must output a single probability")

    @classmethod
    def build(cls, z_dim, num_classes, data_dim, gen_hidden=(64, 64), disc_hidden=(64, 64),
              batch_size=32, d_steps_per_g_step=1, gen_output="tanh"):
        """Standard layout: ReLU generator, leaky-ReLU discriminator with sigmoid head."""
        gen = mlp([z_dim + num_classes, *gen_hidden, data_dim], hidden="relu", output=gen_output)
        disc = mlp([data_dim + num_classes, *disc_hidden, 1], hidden="leaky_relu", output="sigmoid")
        return cls(z_dim, num_classes, data_dim, gen, disc, batch_size, d_steps_per_g_step)


@dataclass(frozen=True, eq=False)
class NoiseBatch:
    z: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        z = np.ascontiguousarray(self.z, dtype=np.float32)
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if z.ndim != 2 or labels.shape != (z.shape[0],):
            raise ShapeError(f"noise {z.shape} and labels {labels.shape} disagree")
        z.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return self.z.shape[0]

    def __eq__(self, other):
        return (
            isinstance(other, NoiseBatch)
            and self.z.shape == other.z.shape
            and np.array_equal(self.z.view(np.uint32), other.z.view(np.uint32))
            and np.array_equal(self.labels, other.labels)
        )

    __hash__ = None


def one_hot(labels, num_classes):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise DataError(f"label outside [0, {num_classes})")
    out = np.zeros((labels.size, num_classes), dtype=np.float32)
    out[np.arange(labels.size), labels] = 1.0
    return out


def sample_noise(rng, cfg, allowed_labels, batch_size=None):
    """Standard-normal ``z`` then labels drawn uniformly from ``allowed_labels``."""
    allowed = sorted(set(int(l) for l in allowed_labels))
    if not allowed:
        raise ConfigurationError("allowed_labels must be nonempty")
    if allowed[0] < 0 or allowed[-1] >= cfg.num_classes:
        raise ConfigurationError("allowed label outside num_classes")
    n = cfg.batch_size if batch_size is None else batch_size
    z = rng.normal((n, cfg.z_dim))
    labels = rng.choice(allowed, n)
    return NoiseBatch(z, labels)


def _gen_input(G, noise, num_classes):
    if noise.z.shape[1] + num_classes != G.in_dim:
        raise ShapeError(f"noise width {noise.z.shape[1]} + {num_classes} classes != generator input {G.in_dim}")
    return np.concatenate([noise.z, one_hot(noise.labels, num_classes)], axis=1)


def _num_classes(G, noise):
    n = G.in_dim - noise.z.shape[1]
    if n <= 0:
        raise ShapeError(f"noise width {noise.z.shape[1]} leaves no room for labels in generator input {G.in_dim}")
    return n


def generate(G, noise):
    """Samples ``G(z, onehot(l))``."""
    return forward(G, _gen_input(G, noise, _num_classes(G, noise)))


def discriminate(D, samples, labels, num_classes):
    x = np.concatenate([np.asarray(samples, dtype=np.float32), one_hot(labels, num_classes)], axis=1)
    return forward(D, x)


def train_discriminator_step(D, G, real, real_labels, noise, opt):
    """One BCE update of ``D``: real rows target 1, ``G(noise)`` rows target 0.

    The generated batch is computed once and treated as a constant, so ``G``
    receives no gradient. Real and fake rows are stacked into a single batch
    (real first) and the loss is the mean over both.

    Returns ``(D, opt, d_loss)``.
    """
    real = np.asarray(real, dtype=np.float32)
    num_classes = _num_classes(G, noise)
    if real.shape[0] != len(noise):
        raise ShapeError("real and noise batch sizes differ")
    fake = generate(G, noise)
    x = np.concatenate([
        np.concatenate([real, fake], axis=0),
        one_hot(np.concatenate([np.asarray(real_labels), noise.labels]), num_classes),
    ], axis=1)
    target = np.concatenate([np.ones((real.shape[0], 1)), np.zeros((len(noise), 1))]).astype(np.float32)
    pred = forward(D, x)
    loss, grad = bce_loss(pred, target)
    grads, _ = backward(D, x, grad)
    params, opt = apply_update(D.params, grads, opt)
    return D.with_params(params), opt, loss


def generator_loss_and_grads(G, D, noise):
    """Non-saturating loss ``-mean log D(G(z, l), l)`` and its gradient in G's params."""
    num_classes = D.in_dim - G.out_dim
    g_in = _gen_input(G, noise, num_classes)
    fake = forward(G, g_in)
    d_in = np.concatenate([fake, one_hot(noise.labels, num_classes)], axis=1)
    pred = forward(D, d_in)
    loss, grad = bce_loss(pred, np.ones_like(pred))
    _, d_input_grad = backward(D, d_in, grad)
    g_grads, _ = backward(G, g_in, d_input_grad[:, :fake.shape[1]])
    return loss, g_grads


def train_generator_step(G, D, noise, opt):
    """One generator update through a frozen ``D``. Returns ``(G, opt, g_loss)``."""
    loss, grads = generator_loss_and_grads(G, D, noise)
    params, opt = apply_update(G.params, grads, opt)
    return G.with_params(params), opt, loss


class ConditionalGAN:
    """Stand-alone cGAN trainer used for local baselines and tests.

    Holds its own networks and optimizers; :meth:`step` runs the
    discriminator update(s) followed by one generator update.
    """

    def __init__(self, cfg, G, D, g_opt, d_opt):
        self.cfg = cfg
        self.G = G
        self.D = D
        self.g_opt = g_opt
        self.d_opt = d_opt

    def sample_real(self, rng, samples, labels):
        idx = np.asarray([rng.integers(len(labels)) for _ in range(self.cfg.batch_size)], dtype=np.int64)
        return samples[idx], labels[idx]

    def discriminator_phase(self, rng, samples, labels, allowed_labels):
        """``d_steps_per_g_step`` discriminator updates on fresh real/noise batches."""
        d_loss = None
        for _ in range(self.cfg.d_steps_per_g_step):
            real, real_labels = self.sample_real(rng, samples, labels)
            d_noise = sample_noise(rng, self.cfg, allowed_labels)
            self.D, self.d_opt, d_loss = train_discriminator_step(
                self.D, self.G, real, real_labels, d_noise, self.d_opt)
        return d_loss

    def generator_phase(self, noise):
        self.G, self.g_opt, g_loss = train_generator_step(self.G, self.D, noise, self.g_opt)
        return g_loss

    def step(self, rng, samples, labels, allowed_labels):
        d_loss = self.discriminator_phase(rng, samples, labels, allowed_labels)
        noise = sample_noise(rng, self.cfg, allowed_labels)
        g_loss = self.generator_phase(noise)
        return d_loss, g_loss, noise
