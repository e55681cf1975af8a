import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from psfedgan.errors import ShapeError, UndefinedMetricError
from psfedgan.metrics import (
    MetricsRecord, classify_accuracy, jsd_empirical, mean_ssim, nmse, optimal_discriminator, ssim, value_function,
)
from psfedgan.nnkernel import Network, Rng, dense, mlp, param_vector

from oracles import ssim_loop


def test_nmse_examples():
    a = Rng(0).normal((4, 6))
    assert nmse(a, a) == 0.0
    assert nmse(a, np.zeros_like(a)) == pytest.approx(1.0)
    assert nmse(a, 2 * a) == pytest.approx(1.0)
    with pytest.raises(UndefinedMetricError):
        nmse(np.zeros((2, 2)), a[:2, :2])
    with pytest.raises(ShapeError):
        nmse(a, a[:2])


def test_ssim_identical_is_one():
    img = Rng(1).random((8, 8))
    assert ssim(img, img) == pytest.approx(1.0)


def test_ssim_constant_images_closed_form():
    L = 2.0
    a = np.full((8, 8), -0.5)
    b = np.full((8, 8), -0.5 + L)
    c1, c2 = (0.01 * L) ** 2, (0.03 * L) ** 2
    mu_a, mu_b = -0.5, 1.5
    expected = (2 * mu_a * mu_b + c1) * c2 / ((mu_a ** 2 + mu_b ** 2 + c1) * c2)
    assert ssim(a, b, L) == pytest.approx(expected, abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10 ** 6), rows=st.integers(4, 12), cols=st.integers(4, 12))
def test_ssim_matches_loop_oracle(seed, rows, cols):
    rng = Rng(seed)
    a = rng.uniform(-1, 1, (rows, cols))
    b = np.clip(a + rng.normal((rows, cols)) * np.float32(0.3), -1, 1)
    assert ssim(a, b, 2.0) == pytest.approx(ssim_loop(a, b, 2.0), abs=1e-6)


def test_ssim_shape_error():
    with pytest.raises(ShapeError):
        ssim(np.zeros((8, 8)), np.zeros((8, 7)))


def test_mean_ssim_flat_samples():
    a = Rng(2).uniform(-1, 1, (3, 64))
    assert mean_ssim(a, a) == pytest.approx(1.0)


def _constant_judge(n_classes, favored):
    layers = (dense(2, n_classes),)
    values = np.zeros(2 * n_classes + n_classes, np.float32)
    values[2 * n_classes + favored] = 1.0
    return Network(layers, param_vector(layers, values))


def test_classify_accuracy_examples():
    judge = _constant_judge(3, 0)
    x = np.zeros((5, 2), np.float32)
    assert classify_accuracy(judge, x, [0] * 5) == 1.0
    assert classify_accuracy(judge, x, [1] * 5) == 0.0
    # restricted to classes {1, 2}: ties resolve to the lowest allowed class
    assert classify_accuracy(judge, x, [1] * 5, classes={1, 2}) == 1.0
    with pytest.raises(ShapeError):
        classify_accuracy(judge, x, [0] * 4)


def test_random_judge_is_near_chance():
    rng = Rng(3)
    judge = Network.initialize(mlp([4, 16, 10]), rng)
    x = rng.normal((10000, 4))
    labels = np.arange(10000) % 10
    assert 0.08 <= classify_accuracy(judge, x, labels) <= 0.12


def test_optimal_discriminator_examples():
    assert np.allclose(optimal_discriminator([0.2, 0.8], [0.2, 0.8]), 0.5)
    assert np.array_equal(optimal_discriminator([1, 0], [0, 1]), [1, 0])
    assert np.allclose(optimal_discriminator([0.75, 0.25], [0.25, 0.75]), [0.75, 0.25])
    assert np.isnan(optimal_discriminator([1, 0], [1, 0])[1])


def test_value_function_examples():
    p = np.zeros((10, 1))
    q = np.ones((7, 1))
    assert value_function(lambda x: np.full(len(x), 0.5), p, q) == pytest.approx(-math.log(4), abs=1e-12)
    perfect = value_function(lambda x: (x[:, 0] < 0.5).astype(float), p, q, eps=1e-7)
    assert perfect == pytest.approx(2 * math.log(1 - 1e-7))


def test_jsd_examples():
    rng = Rng(4)
    a = rng.uniform(-1, 1, (500, 2))
    assert jsd_empirical(a, a) == 0.0
    left = rng.uniform(-1, -0.5, (500, 1))
    right = rng.uniform(0.5, 1, (500, 1))
    assert jsd_empirical(left, right) == pytest.approx(math.log(2))
    with pytest.raises(ShapeError):
        jsd_empirical(np.zeros((3, 3)), np.zeros((3, 3)))


def test_jsd_two_draws_same_gaussian():
    x = Rng(5).normal((10000, 1)) * np.float32(0.3)
    y = Rng(6).normal((10000, 1)) * np.float32(0.3)
    assert jsd_empirical(x, y, bins=50) <= 0.02


def test_metrics_record_row():
    rec = MetricsRecord(round=2, cl_accuracy=0.5, bytes_cumulative=10)
    buf = io.StringIO()
    csv.writer(buf).writerows([MetricsRecord.header(), rec.row()])
    header, row = list(csv.reader(io.StringIO(buf.getvalue())))
    assert header[:2] == ["round", "cl_accuracy"]
    assert row[:2] == ["2", "0.500000"] and row[header.index("bytes_cumulative")] == "10"
