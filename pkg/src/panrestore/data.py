"""Dataset preparation: tile ingestion and the degradation protocol.

A corpus is a directory holding `rgb/` (8-bit color PNG tiles, square,
at least 64 px) and optionally `pan/` (grayscale tiles of the same
names). When `pan/` is absent the panchromatic image is synthesized as
the BT.601 luma of the RGB tile. Per task, the network input is a bicubic
downsample of the PAN tile by the task's factor (full resolution for
colorization) and the target is the PAN tile (super-resolution) or the
RGB tile (colorization / joint). Everything is scaled to [0, 1].

Splits are deterministic: files sort lexicographically and hash 90/10
into train/val by filename; `test` aliases `val` at this corpus scale,
and `all` skips the split filter (overfit experiments use every tile).

`generate_toy_corpus` writes a small synthetic corpus of smooth
low-frequency color fields, enough structure to learn and little enough
to memorize quickly.
"""

from __future__ import annotations

import hashlib
import os
import warnings
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .metrics import luma_bt601
from .model import TASKS
from .tensor import ConfigError

_SPLITS = ("train", "val", "test", "all")


@dataclass
class DatasetSpec:
    root: str
    split: str = "train"
    tile: int | None = None
    task: str = "joint_x2"

    def validate(self) -> "DatasetSpec":
        if self.split not in _SPLITS:
            raise ConfigError(f"split must be one of {_SPLITS}, got {self.split!r}")
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}")
        return self


@dataclass
class Sample:
    image_id: str
    input: np.ndarray   # (1, 1, h, w) float32 in [0, 1]
    target: np.ndarray  # (1, c, H, W) float32 in [0, 1]


def split_of(name: str) -> str:
    """Deterministic 90/10 split by filename hash."""
    digest = hashlib.md5(name.encode("utf-8")).digest()
    return "train" if digest[0] % 10 < 9 else "val"


def _resize_bicubic(arr: np.ndarray, size: int) -> np.ndarray:
    """Bicubic resize of a single-channel float [0,1] array."""
    img = Image.fromarray(arr.astype(np.float32), mode="F")
    out = img.resize((size, size), Image.Resampling.BICUBIC)
    return np.clip(np.asarray(out, dtype=np.float32), 0.0, 1.0)


def ingest(spec: DatasetSpec) -> list:
    """Load, degrade, and split; returns samples ordered by filename."""
    spec.validate()
    rgb_dir = os.path.join(spec.root, "rgb")
    if not os.path.isdir(rgb_dir):
        raise ConfigError(f"dataset root {spec.root} has no rgb/ directory")
    pan_dir = os.path.join(spec.root, "pan")
    task = TASKS[spec.task]
    want = "val" if spec.split == "test" else spec.split
    samples = []
    for name in sorted(os.listdir(rgb_dir)):
        if not name.lower().endswith(".png"):
            continue
        if want != "all" and split_of(name) != want:
            continue
        path = os.path.join(rgb_dir, name)
        try:
            rgb = np.asarray(Image.open(path).convert("RGB"), dtype=np.float64) / 255.0
        except OSError as exc:
            warnings.warn(f"skipping unreadable tile {path}: {exc}")
            continue
        h, w = rgb.shape[:2]
        if h != w:
            raise ConfigError(f"tile {name} is not square: {h}x{w}")
        if h < 64:
            raise ConfigError(f"tile {name} is {h} px; tiles must be at least 64")
        if spec.tile is not None and h != spec.tile:
            if h < spec.tile:
                raise ConfigError(f"tile {name} is {h} px, smaller than requested {spec.tile}")
            off = (h - spec.tile) // 2
            rgb = rgb[off:off + spec.tile, off:off + spec.tile]
            h = w = spec.tile
        pan_path = os.path.join(pan_dir, name)
        if os.path.isfile(pan_path):
            try:
                pan = np.asarray(Image.open(pan_path).convert("L"), dtype=np.float64) / 255.0
            except OSError as exc:
                warnings.warn(f"skipping tile with unreadable pan {pan_path}: {exc}")
                continue
            if pan.shape != (h, w):
                raise ConfigError(f"pan tile {name} is {pan.shape}, rgb is {(h, w)}")
        else:
            pan = luma_bt601(rgb, channel_axis=2)
        pan32 = pan.astype(np.float32)
        if task.sr_factor > 1:
            inp = _resize_bicubic(pan32, h // task.sr_factor)
        else:
            inp = pan32
        if task.out_channels == 1:
            target = pan32[None, None]
        else:
            target = rgb.astype(np.float32).transpose(2, 0, 1)[None]
        samples.append(Sample(image_id=os.path.splitext(name)[0],
                              input=inp[None, None],
                              target=target))
    if not samples:
        raise ConfigError(f"no tiles in split {spec.split!r} under {spec.root}")
    return samples


def generate_toy_corpus(root: str, count: int = 8, tile: int = 64, seed: int = 0) -> list:
    """Write `count` smooth color-field tiles under root/rgb; returns paths."""
    if tile < 64:
        raise ConfigError(f"tiles must be at least 64 px, got {tile}")
    rgb_dir = os.path.join(root, "rgb")
    os.makedirs(rgb_dir, exist_ok=True)
    rng = np.random.default_rng(seed)
    paths = []
    for i in range(count):
        base = rng.uniform(0.15, 0.85, size=(4, 4, 3))
        chans = [
            Image.fromarray(base[:, :, c].astype(np.float32), mode="F").resize(
                (tile, tile), Image.Resampling.BICUBIC
            )
            for c in range(3)
        ]
        field = np.stack([np.asarray(ch) for ch in chans], axis=2)
        img = (np.clip(field, 0.02, 0.98) * 255.0).round().astype(np.uint8)
        path = os.path.join(rgb_dir, f"tile_{i:03d}.png")
        Image.fromarray(img, mode="RGB").save(path)
        paths.append(path)
    return paths
