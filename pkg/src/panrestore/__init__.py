"""Multi-task restoration of panchromatic imagery on a numpy autodiff substrate.

The package provides, bottom to top:

- `tensor`: reverse-mode autodiff over numpy arrays (conv, pooling,
  resampling, token contractions, gradient checking).
- `mhcb` / `dpa`: the multi-scale conv stem block and the parameter-free
  dual-pooling attention gate.
- `scan`: selective state-space scan machinery (discretization, fast
  associative scan, four axis-aligned plus two diagonal traversal orders).
- `mub`: the scan-based upsampling block (patch partition, channel norm,
  2-d selective scan, pixel-shuffle upsample).
- `model`: the nested-U backbone wiring the blocks into four task heads
  (super-resolution x2/x4, colorization, joint SR + colorization).
- `metrics`, `data`, `train`, `bench`, `cli`: evaluation, dataset
  preparation, the training loop, the scan-vs-attention benchmark, and the
  command-line entry point.
"""

from .tensor import (
    ConfigError,
    Conv2d,
    Module,
    Tensor,
    as_tensor,
    grad_check,
    no_grad,
)

__all__ = [
    "ConfigError",
    "Conv2d",
    "Module",
    "Tensor",
    "as_tensor",
    "grad_check",
    "no_grad",
]

__version__ = "0.1.0"
