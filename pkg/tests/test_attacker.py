import csv

import numpy as np
import pytest

from psfedgan.attacker import (
    AttackReport, AttackerConfig, attacker_init, evaluate_attack, perturb_first_layer, write_attack_csv,
)
from psfedgan.channel import ChannelModel
from psfedgan.config import DataSpec, FederationConfig, RoundConfig
from psfedgan.data import SplitSpec
from psfedgan.errors import ConfigurationError
from psfedgan.gan import sample_noise
from psfedgan.nnkernel import Rng, adam, init_params, mlp
from psfedgan.protocol import Federation, client_step, server_ingest


def test_config_validation():
    with pytest.raises(ConfigurationError):
        AttackerConfig(mode="gradient")
    with pytest.raises(ConfigurationError):
        AttackerConfig(r=1.5)


def test_perturbation_blocks():
    layers = mlp([3, 4, 2], output="tanh")
    p = init_params(layers, Rng(0), bias_range=0.05)
    assert perturb_first_layer(p, "oracle", 0.3).bit_equal(p)
    half = perturb_first_layer(p, "weight_scale", 0.5)
    (w, b), (w2, b2) = p.dense_blocks()
    (hw, hb), (hw2, hb2) = half.dense_blocks()
    assert np.array_equal(hw, w * np.float32(0.5))
    assert np.array_equal(hb, b) and np.array_equal(hw2, w2) and np.array_equal(hb2, b2)
    scaled = perturb_first_layer(p, "bias_scale", 0.5)
    (sw, sb), _ = scaled.dense_blocks()
    assert np.array_equal(sw, w) and np.array_equal(sb, b * np.float32(0.5))


def test_bias_scale_with_zero_biases_is_toothless():
    layers = mlp([3, 4, 2], output="tanh")
    a = attacker_init(AttackerConfig("bias_scale", 0.0), layers, 11, adam(1e-3))
    o = attacker_init(AttackerConfig("oracle"), layers, 11, adam(1e-3))
    assert a.G.bit_equal(o.G)


def test_wrong_arch_flagged():
    layers = mlp([3, 4, 2], output="tanh")
    a = attacker_init(AttackerConfig(assumed_arch=mlp([3, 5, 2], output="tanh")), layers, 1, adam(1e-3))
    assert a.arch_mismatch


def _toy_federation(*attackers):
    cfg = FederationConfig(
        master_seed=1,
        data=DataSpec(classes=3, per_class=100),
        split=SplitSpec("custom", assignment=((0, 1), (2,))),
        round=RoundConfig(steps_per_round=10),
        attackers=attackers,
    )
    return Federation(cfg)


def _drive(fed, steps):
    c = fed.clients[0]
    ch = fed.channels[0]
    distances = []
    for _ in range(steps):
        _, msg = client_step(c)
        server_ingest(fed.server, ch.transmit(msg))
        distances.append([a.G.params.l2_distance(c.G_u.params) for a in fed.attackers])
    return np.array(distances)


def test_oracle_attacker_stays_bit_equal():
    fed = _toy_federation(AttackerConfig("oracle"))
    c = fed.clients[0]
    for _ in range(30):
        _, msg = client_step(c)
        server_ingest(fed.server, fed.channels[0].transmit(msg))
        assert fed.attackers[0].G.bit_equal(fed.server.G_s(0))


def test_weight_scale_diverges_tenfold_within_500_steps():
    fed = _toy_federation(AttackerConfig("weight_scale", 0.9999))
    initial = fed.attackers[0].G.params.l2_distance(fed.clients[0].G_u.params)
    d = _drive(fed, 500)[:, 0]
    assert d.max() >= 10 * initial
    assert d[-50:].mean() > d[:50].mean()


def test_missing_first_message_does_not_help():
    fed = _toy_federation(AttackerConfig("weight_scale", 0.9999),
                          AttackerConfig("weight_scale", 0.9999, missed_steps=(0,)))
    d = _drive(fed, 300)
    assert d[-1, 1] >= d[-1, 0]
    assert fed.attackers[1].divergence_events == [(0, 1)]


def test_evaluate_oracle_report():
    fed = _toy_federation(AttackerConfig("oracle"))
    _drive(fed, 20)
    fed.setup_judge()
    probe = sample_noise(Rng(0), fed.cgan, fed.user_classes[0], 50)
    rep = evaluate_attack(fed.attackers[0], fed.server.G_s(0), probe, fed.judge, fed.user_classes[0])
    assert rep.nmse == 0.0 and rep.ssim == pytest.approx(1.0) and rep.attacker_acc == rep.cloud_acc
    assert rep.r == 1.0 and rep.param_l2 == 0.0


def test_attack_csv(tmp_path):
    rep = AttackReport(0.5, "weight_scale", 0, 0.5, 0.9, 1.2, 0.01, 3.0)
    write_attack_csv(tmp_path / "a.csv", [rep])
    rows = list(csv.reader(open(tmp_path / "a.csv")))
    assert rows[0] == ["r", "mode", "user_id", "attacker_acc", "cloud_acc", "nmse", "ssim", "param_l2"]
    assert rows[1][:3] == ["0.5", "weight_scale", "0"]


def test_tap_receives_delivered_message():
    fed = _toy_federation()
    got = []
    ch = ChannelModel(taps=[got.append])
    _, msg = client_step(fed.clients[0])
    out = ch.transmit(msg)
    assert got[0] == out
