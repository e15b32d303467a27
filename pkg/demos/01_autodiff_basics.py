"""Tour of the tensor substrate: build a graph, differentiate it, check it.

Every operation computes its result eagerly and records how to push
gradients back to its parents. backward() walks the recorded graph once,
so any composition of the primitives is differentiable end to end.
"""

import numpy as np

from panrestore.tensor import (
    Conv2d,
    Tensor,
    as_tensor,
    grad_check,
    l1_loss,
    maxpool2x2,
    no_grad,
    reduce_mean,
    relu,
)

rng = np.random.default_rng(7)

# a tiny pipeline: conv -> relu -> pool -> mean, reduced to a scalar
x = as_tensor(rng.standard_normal((1, 2, 8, 8)), requires_grad=True)
layer = Conv2d(2, 4, 3, rng)
y = reduce_mean(maxpool2x2(relu(layer(x))))
print("forward value:", float(y.data))

y.backward()
print("input grad shape:", x.grad.shape, "weight grad shape:", layer.weight.grad.shape)
print("mean |dL/dx| =", float(np.abs(x.grad).mean()))

# the same computation under no_grad records nothing
with no_grad():
    silent = reduce_mean(maxpool2x2(relu(layer(x))))
print("no_grad output has backward graph:", silent.requires_grad)

# central differences agree with the recorded gradients
x2 = as_tensor(rng.standard_normal((1, 2, 6, 6)), requires_grad=True)
layer2 = Conv2d(2, 3, 5, rng)
err = grad_check(lambda: layer2(x2), [x2] + layer2.parameters(), seed=0)
print(f"conv gradient check, max rel err: {err:.2e}")

# losses reduce to scalars; backward enforces that
pred = as_tensor(rng.standard_normal((1, 3, 4, 4)), requires_grad=True)
target = as_tensor(rng.standard_normal((1, 3, 4, 4)))
loss = l1_loss(pred, target)
loss.backward()
print("l1 grad is sign/d.size everywhere:", float(np.abs(pred.grad).max() * pred.data.size))
