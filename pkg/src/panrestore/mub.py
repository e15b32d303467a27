"""Scan-based upsampling block.

The block partitions a feature map into a p x p grid of independent
tiles, applies per-channel layer normalization and 2-D selective scan
mixing inside each tile, adds the tile input back, projects with a 1x1
convolution, reassembles the grid, and finally upsamples by r through a
conv + pixel-shuffle pair. A bilinear + 1x1 variant stands in when the
block is ablated.

Tiles carry no state across their borders, so the implementation folds
them into the batch axis and runs one scan over all tiles at once; the
list-based `patch_split` / `patch_merge` pair below is the reference
formulation and the two agree exactly.
"""

from __future__ import annotations

import numpy as np

from .scan import ALL_DIRECTIONS, SelectiveScan2d
from .tensor import (
    ConfigError,
    Conv2d,
    Module,
    Tensor,
    add,
    bilinear_resize,
    concat,
    mul,
    narrow,
    permute_axes,
    pixel_shuffle,
    pow_const,
    reduce_mean,
    reshape,
)


# ---------------------------------------------------------------------------
# patch partition


def _check_divisible(h: int, w: int, p: int) -> None:
    if p < 1:
        raise ConfigError(f"patch grid must be >= 1, got {p}")
    if h % p:
        raise ConfigError(f"height {h} not divisible by patch grid {p}")
    if w % p:
        raise ConfigError(f"width {w} not divisible by patch grid {p}")


def patch_split(x: Tensor, p: int) -> list:
    """Cut (b,c,h,w) into p*p equal tiles, listed in row-major tile order."""
    b, c, h, w = x.data.shape
    _check_divisible(h, w, p)
    hp, wp = h // p, w // p
    tiles = []
    for ti in range(p):
        row = narrow(x, 2, ti * hp, hp)
        for tj in range(p):
            tiles.append(narrow(row, 3, tj * wp, wp))
    return tiles


def patch_merge(tiles, p: int) -> Tensor:
    """Inverse of patch_split: reassemble p*p tiles row-major."""
    if len(tiles) != p * p:
        raise ConfigError(f"patch_merge expects {p * p} tiles, got {len(tiles)}")
    rows = []
    for ti in range(p):
        rows.append(concat(tiles[ti * p:(ti + 1) * p], axis=3))
    return concat(rows, axis=2)


def patch_stack(x: Tensor, p: int) -> Tensor:
    """Fold the p*p tile grid into the batch axis: (b,c,h,w) -> (b*p*p,c,h/p,w/p)."""
    b, c, h, w = x.data.shape
    _check_divisible(h, w, p)
    if p == 1:
        return x
    hp, wp = h // p, w // p
    t = reshape(x, (b, c, p, hp, p, wp))
    t = permute_axes(t, (0, 2, 4, 1, 3, 5))
    return reshape(t, (b * p * p, c, hp, wp))


def patch_unstack(x: Tensor, p: int, batch: int) -> Tensor:
    """Inverse of patch_stack."""
    if p == 1:
        return x
    bpp, c, hp, wp = x.data.shape
    if bpp != batch * p * p:
        raise ConfigError(f"patch_unstack batch mismatch: {bpp} vs {batch}*{p}*{p}")
    t = reshape(x, (batch, p, p, c, hp, wp))
    t = permute_axes(t, (0, 3, 1, 4, 2, 5))
    return reshape(t, (batch, c, p * hp, p * wp))


# ---------------------------------------------------------------------------
# normalization


def layer_norm_channels(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each spatial position over its channel vector, then affine."""
    mu = reduce_mean(x, axis=1, keepdims=True)
    centered = add(x, mul(mu, Tensor(np.asarray(-1.0, dtype=x.data.dtype))))
    var = reduce_mean(mul(centered, centered), axis=1, keepdims=True)
    inv = pow_const(var + eps, -0.5)
    return add(mul(mul(centered, inv), gamma), beta)


# ---------------------------------------------------------------------------
# blocks


class MubBlock(Module):
    """Patchwise selective-scan mixing followed by a pixel-shuffle upsample.

    Maps (b, c_in, h, w) to (b, c_out, h*r, w*r). Spatial dims must divide
    by the patch grid.
    """

    def __init__(
        self,
        c_in: int,
        c_out: int,
        r: int = 2,
        patch_grid: int = 2,
        state_size: int = 16,
        directions=ALL_DIRECTIONS,
        merge: str = "sum",
        rng: np.random.Generator | None = None,
    ):
        if patch_grid not in (1, 2, 3):
            raise ConfigError(f"patch grid must be 1, 2 or 3, got {patch_grid}")
        if r < 1:
            raise ConfigError(f"upscale factor must be >= 1, got {r}")
        if rng is None:
            rng = np.random.default_rng(0)
        self.c_in = c_in
        self.c_out = c_out
        self.r = r
        self.patch_grid = patch_grid
        self.norm_gamma = Tensor(np.ones((1, c_in, 1, 1), dtype=np.float32), requires_grad=True)
        self.norm_beta = Tensor(np.zeros((1, c_in, 1, 1), dtype=np.float32), requires_grad=True)
        self.scan = SelectiveScan2d(
            c_in, state_size=state_size, directions=directions, merge=merge, rng=rng
        )
        self.out_proj = Conv2d(c_in, c_in, 1, rng, activation="linear")
        self.up_conv = Conv2d(c_in, c_out * r * r, 3, rng, activation="linear")

    def forward(self, x: Tensor) -> Tensor:
        b, c, h, w = x.data.shape
        if c != self.c_in:
            raise ConfigError(f"MubBlock built for {self.c_in} channels, got {c}")
        p = self.patch_grid
        _check_divisible(h, w, p)
        tiles = patch_stack(x, p)
        mixed = self.scan(layer_norm_channels(tiles, self.norm_gamma, self.norm_beta))
        mixed = self.out_proj(add(mixed, tiles))
        merged = patch_unstack(mixed, p, b)
        return pixel_shuffle(self.up_conv(merged), self.r)


def mub_forward(x: Tensor, blk: MubBlock) -> Tensor:
    """Apply a MubBlock (its upscale factor is fixed at construction)."""
    return blk(x)


class BilinearUpBlock(Module):
    """Ablation stand-in: bilinear resize by r, then a 1x1 convolution."""

    def __init__(self, c_in: int, c_out: int, r: int, rng: np.random.Generator):
        self.r = r
        self.proj = Conv2d(c_in, c_out, 1, rng, activation="linear")

    def forward(self, x: Tensor) -> Tensor:
        return self.proj(bilinear_resize(x, self.r))
