"""Eavesdropping reconstruction attackers.

An attacker is granted the victim's generator architecture and secret seed,
then has one first-layer block scaled by ``r``:

* ``weight_scale`` scales the first dense layer's weights,
* ``bias_scale`` scales its biases,
* ``oracle`` keeps the exact initial generator (positive control).

From there it runs exactly the server's update on every intercepted message.
"""

from dataclasses import dataclass
import csv

import numpy as np

from .errors import ConfigurationError
from .gan import generate, train_generator_step
from .metrics import classify_accuracy, mean_ssim, nmse
from .nnkernel import Network, Rng, arch_digest, init_params

MODES = ("weight_scale", "bias_scale", "oracle")


@dataclass(frozen=True)
class AttackerConfig:
    mode: str = "weight_scale"
    r: float = 0.9999
    user_id: int = 0
    assumed_arch: tuple = None
    assumed_seed: int = None
    # steps the eavesdropper fails to capture
    missed_steps: tuple = ()

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown attacker mode {self.mode!r}")
        if self.mode != "oracle" and not 0.0 <= self.r <= 1.0:
            raise ConfigurationError("r must lie in [0, 1]")


def perturb_first_layer(params, mode, r):
    if mode == "oracle":
        return params
    values = params.values.copy()
    entry = next(e for e in params.layout if e.spec.kind == "dense")
    n_w = entry.spec.in_dim * entry.spec.out_dim
    r = np.float32(r)
    if mode == "weight_scale":
        values[entry.offset:entry.offset + n_w] *= r
    else:
        values[entry.offset + n_w:entry.offset + entry.length] *= r
    return params.replace_values(values)


class AttackerState:
    """Shadow generator driven by intercepted messages."""

    def __init__(self, cfg, G, opt, victim_digest=None):
        self.cfg = cfg
        self.G = G
        self.opt = opt
        self.steps_seen = 0
        self.next_step = 0
        # (expected_step, received_step) for every gap in the intercepted stream
        self.divergence_events = []
        self.arch_mismatch = False
        self.victim_digest = victim_digest

    def ingest(self, msg):
        if msg.step != self.next_step:
            self.divergence_events.append((self.next_step, msg.step))
        self.G, self.opt, _ = train_generator_step(self.G, Network(msg.disc_params.layers, msg.disc_params),
                                                   msg.noise, self.opt)
        self.steps_seen += 1
        self.next_step = msg.step + 1
        return self

    def __call__(self, msg):
        """Tap interface: ingest unless the step is one the attacker misses."""
        if msg.step not in self.cfg.missed_steps:
            self.ingest(msg)


def attacker_init(cfg, gen_layers, true_seed, opt, bias_range=0.0):
    """Build the shadow generator from the assumed architecture and seed, then perturb it."""
    arch = tuple(cfg.assumed_arch) if cfg.assumed_arch is not None else tuple(gen_layers)
    seed = true_seed if cfg.assumed_seed is None else cfg.assumed_seed
    params = init_params(arch, Rng(seed), bias_range)
    state = AttackerState(cfg, Network(arch, perturb_first_layer(params, cfg.mode, cfg.r)), opt)
    state.arch_mismatch = arch_digest(arch) != arch_digest(gen_layers)
    return state


def attacker_ingest(a, msg):
    return a.ingest(msg)


@dataclass(frozen=True)
class AttackReport:
    r: float
    mode: str
    user_id: int
    attacker_acc: float
    cloud_acc: float
    nmse: float
    ssim: float
    param_l2: float

    CSV_HEADER = ("r", "mode", "user_id", "attacker_acc", "cloud_acc", "nmse", "ssim", "param_l2")

    def row(self):
        return [repr(float(self.r)), self.mode, self.user_id, f"{self.attacker_acc:.6f}",
                f"{self.cloud_acc:.6f}", f"{self.nmse:.6f}", f"{self.ssim:.6f}", f"{self.param_l2:.6f}"]


def evaluate_attack(a, victim, probe, judge, victim_classes, dynamic_range=2.0):
    """Score the shadow generator against the victim on identical probe noise.

    The judge's decision is restricted to ``victim_classes``, so an attacker
    producing label-independent output lands at chance ``1/len(victim_classes)``.
    """
    fake_a = generate(a.G, probe)
    fake_v = generate(victim, probe)
    return AttackReport(
        r=a.cfg.r if a.cfg.mode != "oracle" else 1.0,
        mode=a.cfg.mode,
        user_id=a.cfg.user_id,
        attacker_acc=classify_accuracy(judge, fake_a, probe.labels, victim_classes),
        cloud_acc=classify_accuracy(judge, fake_v, probe.labels, victim_classes),
        nmse=nmse(fake_v, fake_a),
        ssim=mean_ssim(fake_v, fake_a, dynamic_range),
        param_l2=a.G.params.l2_distance(victim.params),
    )


def write_attack_csv(path, reports):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(AttackReport.CSV_HEADER)
        for rep in reports:
            w.writerow(rep.row())
