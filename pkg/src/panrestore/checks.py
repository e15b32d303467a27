"""Gradient-check battery covering every differentiable building block.

Each entry draws fresh random small instances and compares analytic
gradients against central differences (see tensor.grad_check). The same
battery backs the `gradcheck` CLI subcommand and the test suite, so the
command line and CI exercise identical checks.

Kink handling: ops with piecewise-linear corners (relu, max pools) draw
inputs away from the corner, or use a smaller eps so the finite-difference
stencil cannot straddle a switching boundary. Compositions with many
hidden corners use eps = 1e-6 (mhcb) or a width sweep (the full model;
see grad_check's tuple-eps mode). Checks run in float64 so the stencil
noise floor stays far below tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dpa import dpa_forward
from .mhcb import MhcbBlock
from .model import ModelConfig, build_model
from .mub import MubBlock
from .scan import SelectiveScan2d, discretize_t, linear_scan, ssm_2d
from .tensor import (
    Conv2d,
    Tensor,
    as_tensor,
    global_avg_pool,
    global_max_pool,
    grad_check,
    maxpool2x2,
    relu,
    sigmoid,
    softplus,
)


@dataclass
class CheckResult:
    """Outcome of one battery entry aggregated over all its instances."""

    name: str
    instances: int
    worst: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.worst <= self.tol

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{status} {self.name:<16s} worst rel err {self.worst:.3e} "
            f"(tol {self.tol:.0e}, {self.instances} instances)"
        )


def _away_from_zero(rng: np.random.Generator, shape, lo=0.05, hi=2.0) -> np.ndarray:
    # uniform magnitude in [lo, hi] with random sign; keeps relu corners
    # at least lo away from every sample so the FD stencil never crosses one
    mag = rng.uniform(lo, hi, size=shape)
    sign = rng.choice([-1.0, 1.0], size=shape)
    return mag * sign


def _separated(rng: np.random.Generator, shape) -> np.ndarray:
    # a random permutation of an even grid: all values distinct with pairwise
    # gaps >= 2/(n-1), so argmax ties cannot flip under the FD stencil
    n = int(np.prod(shape))
    return rng.permutation(np.linspace(-1.0, 1.0, n)).reshape(shape)


def _check_conv2d(rng, seed):
    k = [1, 3, 5][seed % 3]
    x = as_tensor(rng.standard_normal((1, 2, 4, 4)), requires_grad=True)
    layer = Conv2d(2, 3, k, rng)
    return grad_check(lambda: layer.forward(x), [x] + layer.parameters(), seed=seed)


def _check_relu(rng, seed):
    x = as_tensor(_away_from_zero(rng, (2, 3, 4, 4)), requires_grad=True)
    return grad_check(lambda: relu(x), [x], seed=seed)


def _check_sigmoid(rng, seed):
    x = as_tensor(rng.standard_normal((2, 3, 4, 4)), requires_grad=True)
    return grad_check(lambda: sigmoid(x), [x], seed=seed)


def _check_softplus(rng, seed):
    x = as_tensor(rng.standard_normal((2, 3, 4, 4)), requires_grad=True)
    return grad_check(lambda: softplus(x), [x], seed=seed)


def _check_maxpool(rng, seed):
    x = as_tensor(_separated(rng, (1, 2, 4, 4)), requires_grad=True)
    return grad_check(lambda: maxpool2x2(x), [x], seed=seed)


def _check_avg_pool(rng, seed):
    x = as_tensor(rng.standard_normal((2, 3, 4, 4)), requires_grad=True)
    return grad_check(lambda: global_avg_pool(x), [x], seed=seed)


def _check_max_pool(rng, seed):
    x = as_tensor(_separated(rng, (2, 3, 4, 4)), requires_grad=True)
    return grad_check(lambda: global_max_pool(x), [x], seed=seed)


def _check_dpa(rng, seed):
    x = as_tensor(_separated(rng, (1, 3, 4, 4)), requires_grad=True)
    return grad_check(lambda: dpa_forward(x), [x], seed=seed)


def _check_mhcb(rng, seed):
    x = as_tensor(rng.standard_normal((1, 2, 4, 4)), requires_grad=True)
    blk = MhcbBlock(2, rng)
    return grad_check(
        lambda: blk.forward(x), [x] + blk.parameters(), eps=1e-6, seed=seed
    )


def _check_discretize(rng, seed):
    a = as_tensor(-np.abs(rng.standard_normal((3, 4))) - 0.1, requires_grad=True)
    b = as_tensor(rng.standard_normal((3, 4)), requires_grad=True)
    step = as_tensor(rng.uniform(0.05, 1.0, (3, 4)), requires_grad=True)
    e_decay = grad_check(lambda: discretize_t(a, b, step)[0], [a, step], seed=seed)
    e_drive = grad_check(lambda: discretize_t(a, b, step)[1], [a, b, step], seed=seed)
    return max(e_decay, e_drive)


def _check_scan(rng, seed):
    raw = as_tensor(rng.standard_normal((1, 2, 8, 3)), requires_grad=True)
    u = as_tensor(rng.standard_normal((1, 2, 8, 3)), requires_grad=True)
    return grad_check(lambda: linear_scan(sigmoid(raw), u), [raw, u], seed=seed)


def _check_ssm_2d(rng, seed):
    x = as_tensor(rng.standard_normal((1, 2, 3, 3)), requires_grad=True)
    proj = SelectiveScan2d(2, state_size=4, rng=rng)
    return grad_check(lambda: ssm_2d(x, proj), [x] + proj.parameters(), seed=seed)


def _check_mub(rng, seed):
    x = as_tensor(rng.standard_normal((1, 4, 4, 4)), requires_grad=True)
    blk = MubBlock(4, 2, r=2, patch_grid=2, state_size=4, rng=rng)
    # smooth but exp-heavy: eps=1e-3 truncation error alone can reach 1e-3,
    # so sweep down one decade (still far above the float64 noise floor)
    return grad_check(
        lambda: blk.forward(x),
        [x] + blk.parameters(),
        eps=(1e-4, 1e-5),
        probes=40,
        seed=seed,
    )


def _check_model(rng, seed):
    cfg = ModelConfig(
        task="sr_x2", depth=2, growth=4, mhcb_count=1, state_size=4, seed=seed
    )
    model = build_model(cfg)
    x = as_tensor(rng.standard_normal((1, 1, 8, 8)) * 0.5 + 0.5, requires_grad=True)
    return grad_check(
        lambda: model.forward(x),
        [x] + model.parameters(),
        eps=(1e-5, 1e-6),
        probes=8,
        seed=seed,
    )


# (name, per-instance check, tolerance on max relative error)
BATTERY = (
    ("conv2d", _check_conv2d, 1e-4),
    ("relu", _check_relu, 1e-4),
    ("sigmoid", _check_sigmoid, 1e-4),
    ("softplus", _check_softplus, 1e-4),
    ("maxpool2x2", _check_maxpool, 1e-4),
    ("global_avg_pool", _check_avg_pool, 1e-4),
    ("global_max_pool", _check_max_pool, 1e-4),
    ("dpa", _check_dpa, 1e-4),
    ("mhcb", _check_mhcb, 1e-4),
    ("discretize", _check_discretize, 1e-4),
    ("linear_scan", _check_scan, 1e-4),
    ("ssm_2d", _check_ssm_2d, 1e-4),
    ("mub", _check_mub, 1e-4),
    ("model_depth2", _check_model, 1e-3),
)

OP_NAMES = tuple(name for name, _, _ in BATTERY)


def gradient_battery(instances: int = 20, base_seed: int = 0, ops=None):
    """Run the battery; returns one CheckResult per op, in BATTERY order.

    Every instance draws its own rng from (base_seed, op index, instance
    index), so results are reproducible and independent of which ops run.
    """
    selected = set(OP_NAMES if ops is None else ops)
    unknown = selected - set(OP_NAMES)
    if unknown:
        raise ValueError(f"unknown battery ops: {sorted(unknown)}")
    results = []
    for op_idx, (name, check, tol) in enumerate(BATTERY):
        if name not in selected:
            continue
        worst = 0.0
        for i in range(instances):
            rng = np.random.default_rng((base_seed, op_idx, i))
            worst = max(worst, check(rng, i))
        results.append(CheckResult(name, instances, worst, tol))
    return results
