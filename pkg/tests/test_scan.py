"""Unit tests for the state-space scan machinery: discretization,
recurrence variants, traversal orders, and the learnable 2-D scan."""

import numpy as np
import pytest

from panrestore.scan import (
    ALL_DIRECTIONS,
    DiscreteSsm,
    SelectiveScan2d,
    SsmParams,
    _assoc_scan,
    direction_perm,
    discretize,
    discretize_t,
    gather_directions,
    linear_scan,
    scan_recurrence,
    scan_recurrence_fast,
    scatter_directions,
    ssm_2d,
)
from panrestore.tensor import ConfigError, as_tensor, grad_check


# ---------------------------------------------------------------------------
# discretization


def test_discretize_hand_example():
    # a = -1, step = ln 2: decay = e^{-ln 2} = 1/2 and the zero-order-hold
    # drive (1 - e^{-ln 2}) / 1 * 1 = 1/2 as well
    d = discretize(a=-1.0, b=1.0, step=float(np.log(2.0)))
    assert abs(float(d.decay) - 0.5) < 1e-12
    assert abs(float(d.drive) - 0.5) < 1e-12


def test_discretize_vanishing_a_limit():
    # as a -> 0 the hold integral degenerates to plain Euler: decay -> 1,
    # drive -> step * b
    d = discretize(a=-1e-18, b=1.3, step=0.7)
    assert abs(float(d.decay) - 1.0) < 1e-12
    assert abs(float(d.drive) - 0.7 * 1.3) < 1e-12


def test_discretize_tiny_step():
    d = discretize(a=-1.0, b=2.0, step=1e-9)
    assert abs(float(d.drive) - 2e-9) < 1e-12


def test_discretize_validates_step():
    with pytest.raises(ConfigError):
        discretize(a=-1.0, b=1.0, step=0.0)
    with pytest.raises(ConfigError):
        discretize(a=-1.0, b=1.0, step=np.array([0.1, -0.2]))


def test_discretize_exp_without_step_is_a_different_formula():
    d0 = discretize(a=-1.0, b=1.0, step=float(np.log(2.0)))
    d1 = discretize(a=-1.0, b=1.0, step=float(np.log(2.0)), exp_without_step=True)
    assert abs(float(d0.drive) - float(d1.drive)) > 0.05


def test_ssm_params_validation():
    good = dict(a=np.array([-1.0]), b=np.ones(1), c=np.ones(1),
                d=np.ones(1), step=np.array([0.1]))
    SsmParams(**good).validate()
    bad_step = dict(good, step=np.array([0.0]))
    with pytest.raises(ConfigError):
        SsmParams(**bad_step).validate()
    bad_a = dict(good, a=np.array([0.0]))
    with pytest.raises(ConfigError):
        SsmParams(**bad_a).validate()


# ---------------------------------------------------------------------------
# recurrences


def test_scan_memoryless_is_identity():
    # decay 0, drive 1, read 1, no skip: h_t = x_t and y_t = x_t
    rng = np.random.default_rng(0)
    x = rng.standard_normal(16)
    L = x.shape[0]
    disc = DiscreteSsm(decay=np.zeros((L, 1)), drive=np.ones((L, 1)))
    y = scan_recurrence(x, disc, np.ones((L, 1)), np.zeros(L))
    assert np.array_equal(y, x)


def test_scan_converging_sum_hand_values():
    # decay 1/2, unit drive and read on ones: partial sums 1, 1.5, 1.75
    disc = DiscreteSsm(decay=np.full((3, 1), 0.5), drive=np.ones((3, 1)))
    y = scan_recurrence(np.ones(3), disc, np.ones((3, 1)), np.zeros(3))
    assert np.allclose(y, [1.0, 1.5, 1.75])


def test_scan_zero_input_gives_zero_output():
    disc = DiscreteSsm(decay=np.full((8, 2), 0.7), drive=np.ones((8, 2)))
    y = scan_recurrence(np.zeros(8), disc, np.ones((8, 2)), np.ones(8))
    assert np.all(y == 0.0)


def test_fast_scan_matches_naive_across_shapes_and_blocks():
    rng = np.random.default_rng(1)
    cases = [
        # (lead shape, L, m)
        ((), 1, 1),
        ((), 7, 3),
        ((2,), 33, 4),
        ((2, 3), 64, 5),
        ((1, 2), 130, 2),
    ]
    for lead, L, m in cases:
        x = rng.standard_normal(lead + (L,))
        disc = DiscreteSsm(
            decay=rng.uniform(-1.05, 1.05, lead + (L, m)),
            drive=rng.standard_normal(lead + (L, m)),
        )
        c = rng.standard_normal(lead + (L, m))
        d = rng.standard_normal(lead + (L,))
        slow = scan_recurrence(x, disc, c, d)
        for block in (2, 64, 128):
            fast = scan_recurrence_fast(x, disc, c, d, block=block)
            assert np.max(np.abs(fast - slow)) < 1e-6, (lead, L, m, block)


def test_fast_scan_broadcasts_constant_parameters():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((2, 3, 20))
    m = 4
    disc = DiscreteSsm(decay=rng.uniform(0, 0.9, m), drive=rng.standard_normal(m))
    c = rng.standard_normal(m)
    slow = scan_recurrence(x, disc, c, 0.5)
    fast = scan_recurrence_fast(x, disc, c, 0.5)
    assert slow.shape == x.shape
    assert np.max(np.abs(fast - slow)) < 1e-6


def test_long_horizon_state_stays_inside_geometric_bound():
    # h_t = 0.99 h_{t-1} + 0.01 x_t with |x| <= 1 can never leave
    # drive * max|x| / (1 - decay) = 1
    rng = np.random.default_rng(3)
    L = 10_000
    x = rng.choice([-1.0, 1.0], size=L)
    a = np.full((L, 1), 0.99)
    u = 0.01 * x[:, None]
    h = _assoc_scan(a, u)
    assert np.max(np.abs(h)) <= 1.0 + 1e-6


# ---------------------------------------------------------------------------
# traversal orders


def test_direction_perm_row_forward_is_row_major():
    assert np.array_equal(direction_perm("row_fwd", 2, 2), [0, 1, 2, 3])


def test_direction_perm_col_forward_is_column_major():
    assert np.array_equal(direction_perm("col_fwd", 2, 2), [0, 2, 1, 3])


def test_direction_perm_diag_forward_walks_antidiagonals():
    # 2x3 grid, anti-diagonals i+j with i increasing inside each
    assert np.array_equal(direction_perm("diag_fwd", 2, 3), [0, 1, 3, 2, 4, 5])


def test_direction_perms_are_bijections_with_reversal_symmetry():
    sizes = [(1, 1), (1, 7), (3, 5), (8, 8), (17, 31), (64, 1), (64, 64)]
    for h, w in sizes:
        for tag in ("row", "col", "diag"):
            fwd = direction_perm(tag + "_fwd", h, w)
            bwd = direction_perm(tag + "_bwd", h, w)
            assert np.array_equal(np.sort(fwd), np.arange(h * w)), (tag, h, w)
            assert np.array_equal(bwd, fwd[::-1]), (tag, h, w)


def test_direction_perm_validation():
    with pytest.raises(ConfigError):
        direction_perm("spiral", 4, 4)
    with pytest.raises(ConfigError):
        direction_perm("row_fwd", 0, 4)


# ---------------------------------------------------------------------------
# gather / scatter / linear_scan primitives


def test_gather_scatter_single_direction_roundtrip():
    rng = np.random.default_rng(4)
    x = as_tensor(rng.standard_normal((2, 3, 12)))
    perms = direction_perm("diag_fwd", 3, 4)[None, :]
    g = gather_directions(x, perms)
    assert g.data.shape == (2, 3, 12)
    back = scatter_directions(g, perms, batch=2)
    assert np.array_equal(back.data, x.data)


def test_scatter_of_two_identical_directions_doubles():
    rng = np.random.default_rng(5)
    x = as_tensor(rng.standard_normal((1, 2, 6)))
    perms = np.stack([direction_perm("row_fwd", 2, 3)] * 2)
    out = scatter_directions(gather_directions(x, perms), perms, batch=1)
    assert np.allclose(out.data, 2.0 * x.data)


def test_gather_scatter_validation():
    x = as_tensor(np.zeros((1, 2, 6)))
    with pytest.raises(ConfigError):
        gather_directions(x, direction_perm("row_fwd", 2, 4)[None, :])
    with pytest.raises(ConfigError):
        scatter_directions(x, direction_perm("row_fwd", 2, 3)[None, :], batch=2)


def test_gather_scatter_gradient():
    rng = np.random.default_rng(6)
    x = as_tensor(rng.standard_normal((1, 2, 12)), requires_grad=True)
    perms = np.stack([direction_perm("row_bwd", 3, 4),
                      direction_perm("diag_fwd", 3, 4)])
    fn = lambda: scatter_directions(gather_directions(x, perms), perms, batch=1)
    assert grad_check(fn, [x]) < 1e-4


def test_linear_scan_matches_loop_reference():
    rng = np.random.default_rng(7)
    decay = rng.uniform(-0.9, 0.9, (2, 3, 9, 4))
    u = rng.standard_normal((2, 3, 9, 4))
    got = linear_scan(as_tensor(decay, dtype=np.float64),
                      as_tensor(u, dtype=np.float64)).data
    h = np.zeros((2, 3, 4))
    for t in range(9):
        h = decay[:, :, t] * h + u[:, :, t]
        assert np.max(np.abs(got[:, :, t] - h)) < 1e-12


def test_linear_scan_shape_mismatch():
    with pytest.raises(ConfigError):
        linear_scan(as_tensor(np.zeros((1, 2, 4, 3))),
                    as_tensor(np.zeros((1, 2, 4, 2))))


def test_linear_scan_gradient():
    rng = np.random.default_rng(8)
    decay = as_tensor(rng.uniform(-0.9, 0.9, (1, 2, 6, 3)), requires_grad=True)
    u = as_tensor(rng.standard_normal((1, 2, 6, 3)), requires_grad=True)
    assert grad_check(lambda: linear_scan(decay, u), [decay, u]) < 1e-4


def test_discretize_t_bit_matches_discretize():
    rng = np.random.default_rng(9)
    a = -np.exp(rng.standard_normal((3, 4)))
    b = rng.standard_normal((3, 4))
    step = np.exp(rng.uniform(-7, -1, (3, 4)))
    step[0, 0] = 1e-9  # force the series branch
    decay_t, drive_t = discretize_t(
        as_tensor(a, dtype=np.float64),
        as_tensor(b, dtype=np.float64),
        as_tensor(step, dtype=np.float64),
    )
    ref = discretize(a, b, step)
    assert np.array_equal(decay_t.data, ref.decay)
    assert np.array_equal(drive_t.data, ref.drive)


# ---------------------------------------------------------------------------
# the learnable 2-D scan


def test_selective_scan_preserves_shape():
    rng = np.random.default_rng(10)
    scan = SelectiveScan2d(channels=4, state_size=3, rng=rng)
    x = as_tensor(rng.standard_normal((2, 4, 5, 6)))
    assert ssm_2d(x, scan).data.shape == (2, 4, 5, 6)


def test_selective_scan_sum_decomposes_over_directions():
    # with merge="sum" the full pass equals the sum of single-direction
    # passes, exactly: the directions never interact
    rng = np.random.default_rng(11)
    scan = SelectiveScan2d(channels=3, state_size=4, rng=rng)
    x = as_tensor(rng.standard_normal((1, 3, 4, 4)))
    full = ssm_2d(x, scan).data
    parts = sum(ssm_2d(x, scan, directions=(tag,)).data for tag in ALL_DIRECTIONS)
    assert np.max(np.abs(full - parts)) == 0.0


def test_selective_scan_mean_is_sum_over_k():
    rng = np.random.default_rng(12)
    scan = SelectiveScan2d(channels=3, state_size=4, merge="sum", rng=rng)
    x = as_tensor(np.random.default_rng(13).standard_normal((1, 3, 4, 4)))
    out_sum = ssm_2d(x, scan).data
    scan.merge = "mean"
    out_mean = ssm_2d(x, scan).data
    assert np.array_equal(out_mean, out_sum * (1.0 / len(ALL_DIRECTIONS)))


def test_selective_scan_validation():
    rng = np.random.default_rng(14)
    with pytest.raises(ConfigError):
        SelectiveScan2d(channels=3, directions=())
    with pytest.raises(ConfigError):
        SelectiveScan2d(channels=3, directions=("spiral",))
    with pytest.raises(ConfigError):
        SelectiveScan2d(channels=3, merge="max")
    scan = SelectiveScan2d(channels=3, state_size=2, rng=rng)
    with pytest.raises(ConfigError):
        ssm_2d(as_tensor(np.zeros((1, 4, 4, 4))), scan)
    with pytest.raises(ConfigError):
        ssm_2d(as_tensor(np.zeros((1, 3, 4, 4))), scan, directions=())


def test_selective_scan_same_seed_same_output():
    x = np.random.default_rng(15).standard_normal((1, 3, 4, 4))
    outs = []
    for _ in range(2):
        scan = SelectiveScan2d(channels=3, state_size=4,
                               rng=np.random.default_rng(99))
        outs.append(ssm_2d(as_tensor(x), scan).data)
    assert np.array_equal(outs[0], outs[1])
