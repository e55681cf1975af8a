"""Deterministic dense-network kernel: PRNG, networks, gradients, losses, optimizers."""

from .rng import Rng, derive_seed, splitmix64
from .network import (
    LayerSpec,
    LayoutEntry,
    Network,
    ParamVector,
    activation,
    arch_digest,
    backward,
    count_params,
    dense,
    forward,
    init_params,
    layout_descriptor,
    layers_from_descriptor,
    make_layout,
    mlp,
    param_vector,
    validate_layers,
)
from .losses import BCE_EPS, bce_loss, softmax, softmax_cross_entropy
from .optim import OptimizerState, adam, apply_update, sgd

__all__ = [
    "Rng", "derive_seed", "splitmix64",
    "LayerSpec", "LayoutEntry", "Network", "ParamVector", "activation", "arch_digest",
    "backward", "count_params", "dense", "forward", "init_params", "layout_descriptor",
    "layers_from_descriptor", "make_layout", "mlp", "param_vector", "validate_layers",
    "BCE_EPS", "bce_loss", "softmax", "softmax_cross_entropy",
    "OptimizerState", "adam", "apply_update", "sgd",
]
