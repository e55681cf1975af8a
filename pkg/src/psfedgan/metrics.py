"""Utility and privacy proxies, plus the closed-form GAN quantities used as oracles."""

from dataclasses import asdict, dataclass, fields
import math

import numpy as np

from .errors import ShapeError, UndefinedMetricError
from .nnkernel import forward

SSIM_WINDOW = 8


def nmse(a, b):
    """``||a - b||^2 / ||a||^2``; the first argument is the reference."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"nmse shapes differ: {a.shape} vs {b.shape}")
    energy = math.fsum((a * a).ravel())
    if energy == 0:
        raise UndefinedMetricError("nmse undefined for a zero reference")
    d = a - b
    return math.fsum((d * d).ravel()) / energy


def _ssim_stats(a, b, c1, c2):
    mu_a, mu_b = a.mean(axis=(-2, -1)), b.mean(axis=(-2, -1))
    da = a - mu_a[..., None, None]
    db = b - mu_b[..., None, None]
    var_a = (da * da).mean(axis=(-2, -1))
    var_b = (db * db).mean(axis=(-2, -1))
    cov = (da * db).mean(axis=(-2, -1))
    return ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2))


def ssim(a, b, dynamic_range=2.0, window=SSIM_WINDOW):
    """Mean SSIM over all ``window x window`` patches (stride 1).

    Uses C1 = (0.01 L)^2, C2 = (0.03 L)^2 and population (1/N) moments.
    Images smaller than the window in either axis are scored as one global
    window.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"ssim shapes differ: {a.shape} vs {b.shape}")
    if dynamic_range <= 0:
        raise ValueError("dynamic_range must be positive")
    if a.ndim == 1:
        a, b = a[None, :], b[None, :]
    if a.ndim != 2:
        raise ShapeError("ssim expects a 2-D image")
    c1 = (0.01 * dynamic_range) ** 2
    c2 = (0.03 * dynamic_range) ** 2
    if a.shape[0] < window or a.shape[1] < window:
        return float(_ssim_stats(a, b, c1, c2))
    wa = np.lib.stride_tricks.sliding_window_view(a, (window, window))
    wb = np.lib.stride_tricks.sliding_window_view(b, (window, window))
    return float(_ssim_stats(wa, wb, c1, c2).mean())


def as_images(samples):
    """Reshape flat samples into square images when the width is a perfect square."""
    samples = np.asarray(samples)
    side = math.isqrt(samples.shape[1])
    if side * side == samples.shape[1]:
        return samples.reshape(-1, side, side)
    return samples.reshape(samples.shape[0], 1, -1)


def mean_ssim(a, b, dynamic_range=2.0):
    """Average per-pair SSIM between two aligned sample sets."""
    ia, ib = as_images(a), as_images(b)
    return float(np.mean([ssim(x, y, dynamic_range) for x, y in zip(ia, ib)]))


def classify_accuracy(judge, samples, labels, classes=None):
    """Fraction of argmax hits; ties go to the lowest class index.

    With ``classes`` the argmax is restricted to those columns (a judge asked
    to tell apart only the classes a victim holds).
    """
    logits = forward(judge, samples)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.shape[0] != labels.size:
        raise ShapeError("one label per sample required")
    if classes is None:
        pred = np.argmax(logits, axis=1)
    else:
        cols = np.asarray(sorted(classes), dtype=np.int64)
        pred = cols[np.argmax(logits[:, cols], axis=1)]
    return float(np.mean(pred == labels)) if labels.size else float("nan")


def optimal_discriminator(p, q):
    """Pointwise ``p / (p + q)``; points with ``p + q == 0`` come back as NaN."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ShapeError("distributions must share a support")
    total = p + q
    out = np.full(p.shape, np.nan)
    np.divide(p, total, out=out, where=total > 0)
    return out


def value_function(D, p_samples, q_samples, eps=None):
    """Empirical ``mean log D(x_p) + mean log(1 - D(x_q))``.

    ``D`` is any callable returning probabilities. With ``eps`` the outputs
    are clamped to ``[eps, 1 - eps]`` first.
    """
    dp = np.asarray(D(p_samples), dtype=np.float64).ravel()
    dq = np.asarray(D(q_samples), dtype=np.float64).ravel()
    if eps is not None:
        dp = np.clip(dp, eps, 1 - eps)
        dq = np.clip(dq, eps, 1 - eps)
    return math.fsum(np.log(dp).tolist()) / dp.size + math.fsum(np.log1p(-dq).tolist()) / dq.size


def jsd_empirical(p_samples, q_samples, bins=50):
    """Histogram Jensen-Shannon divergence (nats) over ``[-1, 1]^d``, d <= 2."""
    p = np.asarray(p_samples, dtype=np.float64)
    q = np.asarray(q_samples, dtype=np.float64)
    if p.ndim == 1:
        p, q = p[:, None], q[:, None]
    d = p.shape[1]
    if d > 2:
        raise ShapeError(f"jsd_empirical supports at most 2 dimensions, got {d}")
    if q.shape[1] != d or len(p) == 0 or len(q) == 0:
        raise ShapeError("sample sets must be nonempty and share a dimension")
    edges = [np.linspace(-1.0, 1.0, bins + 1)] * d
    hp, _ = np.histogramdd(np.clip(p, -1, 1), bins=edges)
    hq, _ = np.histogramdd(np.clip(q, -1, 1), bins=edges)
    hp = hp.ravel() / hp.sum()
    hq = hq.ravel() / hq.sum()
    m = 0.5 * (hp + hq)

    def kl(x):
        mask = x > 0
        return math.fsum((x[mask] * np.log(x[mask] / m[mask])).tolist())

    return max(0.0, 0.5 * kl(hp) + 0.5 * kl(hq))


@dataclass
class MetricsRecord:
    """One row of ``metrics.csv``."""

    round: int
    cl_accuracy: float
    attacker_acc: float = float("nan")
    cloud_acc: float = float("nan")
    nmse: float = float("nan")
    ssim: float = float("nan")
    bytes_cumulative: int = 0
    param_distance: float = float("nan")

    @classmethod
    def header(cls):
        return [f.name for f in fields(cls)]

    def row(self):
        out = []
        for value in asdict(self).values():
            out.append(f"{value:.6f}" if isinstance(value, float) else str(value))
        return out
