"""Loss functions returning ``(loss, grad)``.

Per-element terms are computed in float64 and reduced with ``math.fsum``,
which is correctly rounded and therefore independent of summation order.
Gradients are returned as float32.
"""

import math

import numpy as np

from ..errors import ShapeError

BCE_EPS = 1e-7


def bce_loss(pred, target, eps=BCE_EPS):
    """Mean binary cross-entropy of probabilities ``pred`` against 0/1 ``target``.

    ``pred`` is clamped to ``[eps, 1 - eps]`` first; the gradient is taken at
    the clamped point (the clamp itself is treated as identity).
    """
    pred = np.asarray(pred, dtype=np.float32)
    target = np.asarray(target, dtype=np.float32)
    if pred.shape != target.shape:
        raise ShapeError(f"pred shape {pred.shape} != target shape {target.shape}")
    n = pred.size
    p = np.clip(pred.astype(np.float64), eps, 1.0 - eps)
    t = target.astype(np.float64)
    terms = t * np.log(p) + (1.0 - t) * np.log1p(-p)
    loss = -math.fsum(terms.ravel()) / n
    grad = (-(t / p) + (1.0 - t) / (1.0 - p)) / n
    return loss, grad.astype(np.float32)


def softmax(logits):
    z = np.asarray(logits, dtype=np.float32)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits, labels):
    """Mean categorical cross-entropy of ``logits`` against integer ``labels``."""
    logits = np.asarray(logits, dtype=np.float32)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(f"logits {logits.shape} incompatible with labels {labels.shape}")
    n = logits.shape[0]
    z = logits.astype(np.float64)
    z = z - z.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1))
    picked = z[np.arange(n), labels]
    loss = math.fsum((logsumexp - picked).tolist()) / n
    grad = softmax(logits)
    grad[np.arange(n), labels] -= np.float32(1.0)
    return loss, (grad / np.float32(n)).astype(np.float32)
