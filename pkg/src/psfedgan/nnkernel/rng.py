"""Seeded pseudo-random generator: splitmix64 seeding into xoshiro256++.

Everything random in the package flows through :class:`Rng` so that a run is
a pure function of its seeds. Floats are derived from the high 24 bits of each
64-bit output; normals use Box-Muller, consuming two uniforms per pair of
outputs in row-major order of the requested shape.
"""

import math

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def _rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & MASK64


def splitmix64(x):
    """One splitmix64 output for state ``x`` (the state is advanced once first)."""
    z = (x + GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed, tag):
    """Child seed for an independent stream: ``splitmix64(seed ^ tag)``."""
    return splitmix64((int(seed) ^ int(tag)) & MASK64)


class Rng:
    """xoshiro256++ generator.

    Mutable: every draw advances the state. Use :meth:`clone` to fork an
    identical copy (e.g. to replay a stream).
    """

    __slots__ = ("seed", "_s")

    def __init__(self, seed):
        self.seed = int(seed) & MASK64
        x = self.seed
        s = []
        for _ in range(4):
            x = (x + GOLDEN_GAMMA) & MASK64
            z = x
            z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
            z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
            s.append(z ^ (z >> 31))
        self._s = s

    @property
    def state(self):
        return tuple(self._s)

    def clone(self):
        other = Rng.__new__(Rng)
        other.seed = self.seed
        other._s = list(self._s)
        return other

    def __eq__(self, other):
        return isinstance(other, Rng) and self._s == other._s

    def __repr__(self):
        return f"Rng(seed={self.seed:#x})"

    def next_u64(self):
        s0, s1, s2, s3 = self._s
        result = (_rotl((s0 + s3) & MASK64, 23) + s0) & MASK64
        t = (s1 << 17) & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def uniform24(self):
        """Uniform float in [0, 1) on the 2**-24 grid."""
        return (self.next_u64() >> 40) * (1.0 / 16777216.0)

    def integers(self, n):
        """Unbiased integer in [0, n) by rejection on the top bits."""
        if n <= 0:
            raise ValueError("n must be positive")
        if n == 1:
            return 0
        bits = (n - 1).bit_length()
        while True:
            v = self.next_u64() >> (64 - bits)
            if v < n:
                return v

    def random(self, shape=()):
        """Array of uniform [0, 1) floats (float64 holding 24-bit values)."""
        count = int(np.prod(shape, dtype=np.int64)) if shape != () else 1
        out = np.fromiter((self.uniform24() for _ in range(count)), dtype=np.float64, count=count)
        return out.reshape(shape) if shape != () else out[0]

    def uniform(self, low, high, shape):
        u = self.random(shape)
        return (low + (high - low) * u).astype(np.float32)

    def normal(self, shape):
        """Standard normal float32 array via Box-Muller.

        Each pair consumes ``u1`` then ``u2``; the cosine branch fills the even
        flat index and the sine branch the following one. An odd count drops
        the last sine value; nothing is cached across calls.
        """
        shape = (int(shape),) if np.isscalar(shape) else tuple(int(d) for d in shape)
        count = int(np.prod(shape, dtype=np.int64))
        out = np.empty(count, dtype=np.float64)
        two_pi = 2.0 * math.pi
        for i in range(0, count, 2):
            u1 = 1.0 - self.uniform24()  # (0, 1]
            u2 = self.uniform24()
            radius = math.sqrt(-2.0 * math.log(u1))
            theta = two_pi * u2
            out[i] = radius * math.cos(theta)
            if i + 1 < count:
                out[i + 1] = radius * math.sin(theta)
        return out.astype(np.float32).reshape(shape)

    def permutation(self, n):
        """Fisher-Yates shuffle of ``range(n)``."""
        perm = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.integers(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return np.asarray(perm, dtype=np.int64)

    def choice(self, options, size):
        options = list(options)
        return np.asarray([options[self.integers(len(options))] for _ in range(size)], dtype=np.int64)
