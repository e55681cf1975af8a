import csv
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from psfedgan.channel import (
    BUNDLED_ARCHITECTURES, ChannelModel, RecordingTap, bundled_cost_reports, cost_compare, quantize, write_cost_csv,
)
from psfedgan.errors import ConfigurationError, DecodeError
from psfedgan.gan import CGanConfig, sample_noise
from psfedgan.nnkernel import Network, Rng, count_params, mlp
from psfedgan.wire import MpMessage, decode, decode_one, encode, encoded_size


def _message(seed=0, batch=5, z_dim=3, classes=4, data_dim=2, hidden=(6,), step=7, user=2):
    cfg = CGanConfig.build(z_dim, classes, data_dim, (8,), hidden, batch)
    rng = Rng(seed)
    D = Network.initialize(cfg.disc_layers, rng, bias_range=0.3)
    noise = sample_noise(rng, cfg, range(classes))
    return MpMessage.build(user, step, D.params, noise), cfg


def test_round_trip_identity():
    msg, _ = _message()
    assert decode_one(encode(msg)) == msg


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 32), batch=st.integers(1, 9), z_dim=st.integers(1, 6),
       classes=st.integers(2, 6), hidden=st.lists(st.integers(1, 7), min_size=0, max_size=3),
       step=st.integers(0, 2 ** 63), user=st.integers(0, 2 ** 32 - 1))
def test_round_trip_random_messages(seed, batch, z_dim, classes, hidden, step, user):
    msg, cfg = _message(seed, batch, z_dim, classes, 3, tuple(hidden), step, user)
    raw = encode(msg)
    assert decode_one(raw) == msg
    assert len(raw) == encoded_size(len(cfg.disc_layers), count_params(cfg.disc_layers), batch, z_dim)


def test_size_formula_from_format_definition():
    msg, cfg = _message(batch=5, z_dim=3)
    n_entries = len(cfg.disc_layers)
    n_d = count_params(cfg.disc_layers)
    expected = 4 + 2 + 4 + 8 + 8 + (4 + 20 * n_entries) + 4 * n_d + 8 + 4 * 5 * 3 + 2 * 5
    assert len(encode(msg)) == expected


def test_header_fields():
    msg, _ = _message(step=11, user=3)
    magic, version, user, step = struct.unpack_from("<4sHIQ", encode(msg))
    assert (magic, version, user, step) == (b"PSFG", 1, 3, 11)


def test_truncation_never_yields_partial_message():
    raw = encode(_message()[0])
    for cut in range(len(raw)):
        with pytest.raises(DecodeError) as err:
            decode(raw[:cut])
        assert err.value.offset is not None


def test_bad_magic_and_version_and_trailing_bytes():
    raw = bytearray(encode(_message()[0]))
    bad = bytes(b"XXXX" + raw[4:])
    with pytest.raises(DecodeError, match="magic"):
        decode(bad)
    raw_v = bytearray(raw)
    raw_v[4] = 9
    with pytest.raises(DecodeError, match="version"):
        decode(bytes(raw_v))
    with pytest.raises(DecodeError, match="trailing"):
        decode_one(bytes(raw) + b"\0")


def test_layout_tampering_detected():
    raw = bytearray(encode(_message()[0]))
    raw[30 + 4] ^= 1  # in_dim of the first layout entry
    with pytest.raises(DecodeError):
        decode(bytes(raw))


def test_error_offset_in_message():
    with pytest.raises(DecodeError, match=r"byte offset 0"):
        decode(b"nope" + bytes(40))


def test_ideal_channel_round_trip_and_tap():
    msg, _ = _message()
    tap = RecordingTap()
    ch = ChannelModel(taps=[tap])
    out = ch.transmit(msg)
    assert out == msg
    assert tap.messages == [out]
    assert tap.messages[0] is not out  # taps get their own copy
    assert ch.bytes_sent == len(encode(msg)) and ch.messages_sent == 1


def test_tap_skip_steps():
    tap = RecordingTap(skip_steps={7})
    ChannelModel(taps=[tap]).transmit(_message(step=7)[0])
    assert tap.messages == []


def test_quantized_bound_k8_clip1():
    msg, _ = _message(seed=4)
    values = msg.disc_params.values * np.float32(3.0)
    msg = MpMessage.build(0, 0, msg.disc_params.replace_values(values), msg.noise)
    out = ChannelModel("quantized", bits=8, clip=1.0).transmit(msg)
    err = np.abs(out.disc_params.values.astype(np.float64) - np.clip(values, -1, 1))
    assert err.max() <= 1 / 256 + 1e-7
    assert out.noise == msg.noise


@settings(max_examples=50, deadline=None)
@given(bits=st.integers(1, 16), clip=st.floats(0.1, 10), seed=st.integers(0, 1000))
def test_quantizer_bound_property(bits, clip, seed):
    x = Rng(seed).normal(200) * np.float32(clip)
    q = quantize(x, bits, clip)
    err = np.abs(q.astype(np.float64) - np.clip(x.astype(np.float64), -clip, clip))
    # half a cell plus the float32 rounding of the cell centre
    assert err.max() <= clip * 2.0 ** -bits + clip * 2.0 ** -23
    assert len(np.unique(q)) <= 2 ** bits


def test_channel_validation():
    with pytest.raises(ConfigurationError):
        ChannelModel("lossy")
    with pytest.raises(ConfigurationError):
        ChannelModel("quantized", bits=0)


# --- cost accounting --------------------------------------------------------

def _dense_count(widths):
    return sum(a * b + b for a, b in zip(widths[:-1], widths[1:]))


def test_cost_counts_by_layer_shape_summation():
    gen = mlp([64 + 10, 256, 256, 64], output="tanh")
    disc = mlp([64 + 10, 256, 256, 1], hidden="leaky_relu", output="sigmoid")
    rep = cost_compare(gen, disc, batch=32, z_dim=64)
    g = _dense_count([74, 256, 256, 64])
    d = _dense_count([74, 256, 256, 1])
    assert (rep.gen_params, rep.disc_params) == (g, d)
    assert rep.params_full == g + d
    assert rep.params_psfedgan == d + 32 * 65
    assert rep.bytes_full == 4 * (g + d)
    assert rep.params_psfedgan < rep.params_full


def test_cost_degenerate_zero_batch():
    a = BUNDLED_ARCHITECTURES["toy2d"]
    rep = cost_compare(a.gen, a.disc, 0, 0)
    assert rep.params_psfedgan == count_params(a.disc)


def test_cumulative_scales_linearly():
    rep = bundled_cost_reports()[0]
    assert rep.cumulative(10) == (10 * rep.params_full, 10 * rep.params_psfedgan)


def test_cost_csv(tmp_path):
    path = tmp_path / "cost.csv"
    write_cost_csv(path, bundled_cost_reports())
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["arch_name", "params_full", "params_psfedgan", "bytes_full", "bytes_psfedgan", "ratio"]
    assert len(rows) == 1 + len(BUNDLED_ARCHITECTURES)
