"""Multi-scale hybrid convolution block.

Two rounds of parallel 3x3 and 5x5 convolutions, each round fused back to
the working width by a 1x1 convolution over the concatenated streams, with
residual connections around the first round's branches and the whole
block. All convolutions preserve spatial size; channel width is preserved
end to end, so blocks stack freely.
"""

from __future__ import annotations

import numpy as np

from .tensor import ConfigError, Conv2d, Module, Tensor, add, concat, relu


class MhcbBlock(Module):
    """One width-preserving multi-scale block.

    With all weights zero the block is a bit-exact identity: every branch
    dies at a ReLU or a zeroed fusion, leaving only the outer residual.
    """

    def __init__(self, channels: int, rng: np.random.Generator):
        self.channels = channels
        self.conv3_a = Conv2d(channels, channels, 3, rng)
        self.conv5_a = Conv2d(channels, channels, 5, rng)
        self.fuse_a = Conv2d(3 * channels, channels, 1, rng, activation="linear")
        self.conv3_b = Conv2d(channels, channels, 3, rng)
        self.conv5_b = Conv2d(channels, channels, 5, rng)
        self.fuse_b = Conv2d(3 * channels, channels, 1, rng, activation="linear")

    def forward(self, x: Tensor) -> Tensor:
        if x.data.shape[1] != self.channels:
            raise ConfigError(
                f"MhcbBlock built for {self.channels} channels, got {x.data.shape[1]}"
            )
        mid3 = add(relu(self.conv3_a(x)), x)
        mid5 = add(relu(self.conv5_a(x)), x)
        fused = self.fuse_a(concat([mid3, mid5, x], axis=1))
        tail3 = relu(self.conv3_b(fused))
        tail5 = relu(self.conv5_b(fused))
        return add(self.fuse_b(concat([fused, tail3, tail5], axis=1)), x)


class MhcbStack(Module):
    """A sequence of MhcbBlocks; zero blocks is the identity."""

    def __init__(self, channels: int, count: int, rng: np.random.Generator):
        if count < 0:
            raise ConfigError(f"block count must be >= 0, got {count}")
        self.blocks = [MhcbBlock(channels, rng) for _ in range(count)]

    def forward(self, x: Tensor) -> Tensor:
        for blk in self.blocks:
            x = blk(x)
        return x


def mhcb_stack(x: Tensor, blocks) -> Tensor:
    """Apply a sequence of blocks (possibly empty) to x."""
    for blk in blocks:
        x = blk(x)
    return x
