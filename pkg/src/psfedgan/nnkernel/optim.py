"""SGD and Adam with a fixed float32 operation order."""

from dataclasses import dataclass, replace

import numpy as np

from ..errors import ConfigurationError, ShapeError


@dataclass(frozen=True, eq=False)
class OptimizerState:
    kind: str
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: np.ndarray = None
    v: np.ndarray = None
    step_count: int = 0

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ConfigurationError(f"unknown optimizer {self.kind!r}")

    def with_lr(self, lr):
        return replace(self, learning_rate=lr)


def sgd(lr):
    return OptimizerState("sgd", lr)


def adam(lr, beta1=0.9, beta2=0.999, eps=1e-8):
    return OptimizerState("adam", lr, beta1, beta2, eps)


def apply_update(params, grads, opt):
    """Return ``(new_params, new_state)``.

    Adam, all in float32::

        m <- b1*m + (1-b1)*g
        v <- b2*v + (1-b2)*(g*g)
        step <- (m / (1-b1**t)) / (sqrt(v / (1-b2**t)) + eps)
        p <- p - lr*step

    A zero learning rate returns ``params`` untouched (moments still advance).
    """
    if grads.layout != params.layout:
        raise ShapeError("gradient layout does not match parameter layout")
    f32 = np.float32
    g = grads.values
    p = params.values
    lr = f32(opt.learning_rate)
    t = opt.step_count + 1
    if opt.kind == "sgd":
        new_p = p if lr == 0 else p - lr * g
        return params.replace_values(new_p), replace(opt, step_count=t)

    m = np.zeros_like(p) if opt.m is None else opt.m
    v = np.zeros_like(p) if opt.v is None else opt.v
    b1, b2 = f32(opt.beta1), f32(opt.beta2)
    m = b1 * m + (f32(1.0) - b1) * g
    v = b2 * v + (f32(1.0) - b2) * (g * g)
    bc1 = f32(1.0 - opt.beta1 ** t)
    bc2 = f32(1.0 - opt.beta2 ** t)
    step = (m / bc1) / (np.sqrt(v / bc2) + f32(opt.eps))
    new_p = p if lr == 0 else p - lr * step
    return params.replace_values(new_p), replace(opt, m=m, v=v, step_count=t)
