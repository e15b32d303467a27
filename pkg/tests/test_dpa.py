"""Unit tests for the dual-pooling channel gate."""

import numpy as np
import pytest

from panrestore.dpa import dpa_forward
from panrestore.tensor import as_tensor, grad_check


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.asarray(z, dtype=np.float64)))


def test_zero_input_maps_to_zero():
    x = as_tensor(np.zeros((2, 3, 4, 4)))
    assert np.all(dpa_forward(x).data == 0.0)


def test_hand_example_single_channel():
    # channel [[1,3],[5,7]]: mean 4, max 7, so every element is scaled by
    # sigmoid(4) + sigmoid(7) = 1.981103...
    x = as_tensor(np.array([[1.0, 3.0], [5.0, 7.0]])[None, None])
    gate = _sigmoid(4.0) + _sigmoid(7.0)
    assert abs(gate - 1.981103) < 1e-6
    got = dpa_forward(x).data[0, 0]
    want = np.array([[1.9811, 5.9433], [9.9055, 13.8677]])
    assert np.max(np.abs(got - want)) < 1e-4
    assert np.allclose(got, gate * x.data[0, 0], atol=1e-6)


def test_constant_channel_gets_gate_two_sigmoid():
    for c in (-2.0, 0.5, 3.0):
        x = as_tensor(np.full((1, 1, 4, 4), c))
        assert np.allclose(dpa_forward(x).data, 2.0 * _sigmoid(c) * c, atol=1e-6)


def test_output_bounded_by_twice_input_with_signs_kept():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((4, 3, 6, 6)) * 3.0
    y = dpa_forward(as_tensor(x)).data
    assert np.all(np.abs(y) <= 2.0 * np.abs(x))
    assert np.array_equal(np.sign(y), np.sign(x))


def test_spatial_permutation_equivariance():
    # both pooled statistics ignore pixel order, so shuffling pixels
    # commutes with the gate (up to summation-order rounding in the mean)
    rng = np.random.default_rng(1)
    x = rng.standard_normal((1, 2, 3, 4))
    perm = rng.permutation(12)
    xp = x.reshape(1, 2, 12)[:, :, perm].reshape(1, 2, 3, 4)
    out_then_perm = dpa_forward(as_tensor(x)).data.reshape(1, 2, 12)[:, :, perm]
    perm_then_out = dpa_forward(as_tensor(xp)).data.reshape(1, 2, 12)
    assert np.allclose(out_then_perm, perm_then_out, atol=1e-6)


def test_batch_entries_are_independent():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((3, 2, 4, 4))
    batched = dpa_forward(as_tensor(x)).data
    for i in range(3):
        single = dpa_forward(as_tensor(x[i : i + 1])).data
        assert np.array_equal(batched[i : i + 1], single)


def test_reuse_avg_gate_variant():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((2, 3, 4, 4))
    got = dpa_forward(as_tensor(x), reuse_avg_gate=True).data
    gap = x.mean(axis=(2, 3), keepdims=True)
    want = 2.0 * _sigmoid(gap) * x
    assert np.allclose(got, want, atol=1e-5)


def test_gradient():
    rng = np.random.default_rng(4)
    # keep elements separated so the max-pool argmax cannot flip under
    # the probe perturbation
    base = rng.permutation(np.linspace(-2.0, 2.0, 18)).reshape(1, 2, 3, 3)
    x = as_tensor(base, requires_grad=True)
    assert grad_check(lambda: dpa_forward(x), [x]) < 1e-4
