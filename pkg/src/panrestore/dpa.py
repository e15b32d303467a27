"""Dual-pooling attention: a parameter-free channel gate.

Two channel descriptors are pooled from the feature map (spatial mean and
spatial max), squashed to (0, 1) gates, and each rescales the input; the
two gated streams are summed. Output magnitude is bounded by 2|x| and the
sign of every element is preserved, since both gates are positive.
"""

from __future__ import annotations

from .tensor import (
    Tensor,
    add,
    global_avg_pool,
    global_max_pool,
    mul_channel_scale,
    sigmoid,
)


def dpa_forward(x: Tensor, reuse_avg_gate: bool = False) -> Tensor:
    """Gate x by sigmoid(mean-pool) and sigmoid(max-pool), then sum.

    `reuse_avg_gate` reproduces a printed variant in which the second
    stream reuses the mean-pool gate (making the result 2*x*sigmoid(gap));
    kept for auditability, not used by the model.
    """
    avg_gate = sigmoid(global_avg_pool(x))
    max_gate = avg_gate if reuse_avg_gate else sigmoid(global_max_pool(x))
    return add(mul_channel_scale(x, avg_gate), mul_channel_scale(x, max_gate))
