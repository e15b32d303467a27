"""Nested encoder-decoder backbone with per-task reconstruction heads.

The graph is a nested U: encoder column X[i][0] downsamples by 2x2 max
pooling; every decoder node X[i][j] consumes the dense set of same-level
predecessors (each passed through the dual-pooling attention gate) plus an
upsampled X[i+1][j-1]; upsampling is the scan-based block, or a bilinear
+ 1x1 fallback when ablated. The stem lifts the input to the base width
and runs a configurable number of multi-scale conv blocks. The head
applies the task's upscale (one x2 block, two chained for x4, none for
colorization) and projects to the output channels with a 1x1 conv. The
head is linear; outputs are clamped to [0,1] only at evaluation time.

Four tasks: sr_x2 and sr_x4 sharpen a single-channel input by 2x or 4x;
colorize maps a single channel to three at the same size; joint_x2 does
both at once.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from dataclasses import dataclass

import numpy as np

from .dpa import dpa_forward
from .mhcb import MhcbStack
from .mub import BilinearUpBlock, MubBlock
from .scan import ALL_DIRECTIONS
from .tensor import ConfigError, Conv2d, Module, Tensor, concat, maxpool2x2, relu


@dataclass(frozen=True)
class TaskSpec:
    name: str
    in_channels: int
    out_channels: int
    input_size: int
    output_size: int
    sr_factor: int


TASKS = {
    "sr_x2": TaskSpec("sr_x2", 1, 1, 128, 256, 2),
    "sr_x4": TaskSpec("sr_x4", 1, 1, 64, 256, 4),
    "colorize": TaskSpec("colorize", 1, 3, 256, 256, 1),
    "joint_x2": TaskSpec("joint_x2", 1, 3, 128, 256, 2),
}


@dataclass
class ModelConfig:
    task: str = "joint_x2"
    depth: int = 4
    growth: int = 32
    mhcb_count: int = 2
    enable_dpa: bool = True
    enable_mub: bool = True
    enable_mhcb: bool = True
    scan_dirs: tuple = ALL_DIRECTIONS
    patch_grid: int = 2
    state_size: int = 16
    seed: int = 10
    merge: str = "sum"

    def __post_init__(self):
        self.scan_dirs = tuple(self.scan_dirs)

    def validate(self) -> "ModelConfig":
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; choose from {sorted(TASKS)}")
        if self.depth not in (2, 3, 4):
            raise ConfigError(f"depth must be 2, 3 or 4, got {self.depth}")
        if self.growth < 1:
            raise ConfigError(f"growth must be >= 1, got {self.growth}")
        if self.mhcb_count < 0:
            raise ConfigError(f"mhcb_count must be >= 0, got {self.mhcb_count}")
        if self.patch_grid not in (1, 2, 3):
            raise ConfigError(f"patch_grid must be 1, 2 or 3, got {self.patch_grid}")
        if not self.scan_dirs:
            raise ConfigError("scan_dirs must be nonempty")
        for tag in self.scan_dirs:
            if tag not in ALL_DIRECTIONS:
                raise ConfigError(f"unknown scan direction {tag!r}")
        if self.state_size < 1:
            raise ConfigError(f"state_size must be >= 1, got {self.state_size}")
        if self.merge not in ("sum", "mean"):
            raise ConfigError(f"merge must be 'sum' or 'mean', got {self.merge!r}")
        return self

    def level_widths(self) -> list:
        return [self.growth * (1 << i) for i in range(self.depth)]


class ConvBlock(Module):
    """Two 3x3 convs with ReLU, the per-node feature extractor."""

    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator):
        self.conv_a = Conv2d(c_in, c_out, 3, rng)
        self.conv_b = Conv2d(c_out, c_out, 3, rng)

    def forward(self, x: Tensor) -> Tensor:
        return relu(self.conv_b(relu(self.conv_a(x))))


class RestorationModel(Module):
    """The full multi-task restoration network for one task."""

    def __init__(self, cfg: ModelConfig):
        cfg.validate()
        self.cfg = cfg
        self.task = TASKS[cfg.task]
        rng = np.random.default_rng(cfg.seed)
        g, d = cfg.growth, cfg.depth
        widths = cfg.level_widths()

        def make_up(c_in: int, c_out: int, r: int):
            if cfg.enable_mub:
                return MubBlock(
                    c_in, c_out, r=r,
                    patch_grid=cfg.patch_grid,
                    state_size=cfg.state_size,
                    directions=cfg.scan_dirs,
                    merge=cfg.merge,
                    rng=rng,
                )
            return BilinearUpBlock(c_in, c_out, r, rng)

        self.stem_conv = Conv2d(self.task.in_channels, g, 3, rng, activation="linear")
        self.stem_blocks = MhcbStack(g, cfg.mhcb_count if cfg.enable_mhcb else 0, rng)
        self.nodes = {}
        self.ups = {}
        for i in range(d):
            c_in = g if i == 0 else widths[i - 1]
            self.nodes[f"x{i}0"] = ConvBlock(c_in, widths[i], rng)
        for j in range(1, d):
            for i in range(d - j):
                self.ups[f"up{i}{j}"] = make_up(widths[i + 1], widths[i], 2)
                self.nodes[f"x{i}{j}"] = ConvBlock((j + 1) * widths[i], widths[i], rng)
        self.head_ups = []
        r = self.task.sr_factor
        while r > 1:
            self.head_ups.append(make_up(g, g, 2))
            r //= 2
        self.head_proj = Conv2d(g, self.task.out_channels, 1, rng, activation="linear")

    def _check_input(self, x: Tensor) -> None:
        shape = x.data.shape
        d, p = self.cfg.depth, self.cfg.patch_grid
        stride = 1 << (d - 1)
        req = stride * (p if self.cfg.enable_mub else 1)
        ok = (
            len(shape) == 4
            and shape[1] == self.task.in_channels
            and shape[2] >= req and shape[3] >= req
            and shape[2] % req == 0 and shape[3] % req == 0
        )
        if not ok:
            raise ConfigError(
                f"task {self.task.name}: input must be (b, {self.task.in_channels}, h, w) "
                f"with h, w positive multiples of {req}; got {tuple(shape)}"
            )

    def forward(self, x: Tensor) -> Tensor:
        self._check_input(x)
        d = self.cfg.depth
        feats = {}
        t = self.stem_blocks(self.stem_conv(x))
        feats[(0, 0)] = self.nodes["x00"](t)
        for i in range(1, d):
            feats[(i, 0)] = self.nodes[f"x{i}0"](maxpool2x2(feats[(i - 1, 0)]))
        for j in range(1, d):
            for i in range(d - j):
                skips = [
                    dpa_forward(feats[(i, k)]) if self.cfg.enable_dpa else feats[(i, k)]
                    for k in range(j)
                ]
                lifted = self.ups[f"up{i}{j}"](feats[(i + 1, j - 1)])
                feats[(i, j)] = self.nodes[f"x{i}{j}"](concat(skips + [lifted], axis=1))
        out = feats[(0, d - 1)]
        for up in self.head_ups:
            out = up(out)
        return self.head_proj(out)


def build_model(cfg: ModelConfig) -> RestorationModel:
    """Construct the network; parameters are a pure function of cfg (incl. seed)."""
    return RestorationModel(cfg)


def ablate(cfg: ModelConfig, flag: str) -> ModelConfig:
    """Return a config with one module disabled and its fallback installed."""
    if flag == "dpa":
        return dataclasses.replace(cfg, enable_dpa=False)
    if flag == "mub":
        return dataclasses.replace(cfg, enable_mub=False)
    if flag == "mhcb":
        return dataclasses.replace(cfg, enable_mhcb=False, mhcb_count=0)
    raise ConfigError(f"unknown ablation flag {flag!r}; choose dpa, mub or mhcb")


# ---------------------------------------------------------------------------
# checkpoint I/O


class CheckpointError(ValueError):
    """Raised when a checkpoint file fails validation on load."""


_MAGIC = b"MFMB"
_VERSION = 1


def save_checkpoint(model: RestorationModel, path: str) -> None:
    """Write magic, version, the model config, and all parameters (f32 LE)."""
    cfg_json = json.dumps(dataclasses.asdict(model.cfg)).encode("utf-8")
    params = list(model.named_parameters())
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", _VERSION))
        f.write(struct.pack("<I", len(cfg_json)))
        f.write(cfg_json)
        f.write(struct.pack("<I", len(params)))
        for name, p in params:
            blob = name.encode("utf-8")
            f.write(struct.pack("<I", len(blob)))
            f.write(blob)
            f.write(struct.pack("<I", p.data.ndim))
            f.write(struct.pack(f"<{p.data.ndim}I", *p.data.shape))
            f.write(np.ascontiguousarray(p.data, dtype="<f4").tobytes())


def load_checkpoint(path: str) -> RestorationModel:
    """Rebuild the model from a checkpoint, verifying magic, version, shapes."""
    with open(path, "rb") as f:
        raw = f.read()
    off = 0

    def take(n):
        nonlocal off
        if off + n > len(raw):
            raise CheckpointError(f"checkpoint truncated at byte {off}")
        chunk = raw[off:off + n]
        off += n
        return chunk

    if take(4) != _MAGIC:
        raise CheckpointError(f"bad magic in {path}; not a checkpoint file")
    (version,) = struct.unpack("<I", take(4))
    if version != _VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (cfg_len,) = struct.unpack("<I", take(4))
    cfg = ModelConfig(**json.loads(take(cfg_len).decode("utf-8")))
    model = build_model(cfg)
    (count,) = struct.unpack("<I", take(4))
    params = list(model.named_parameters())
    if count != len(params):
        raise CheckpointError(
            f"checkpoint holds {count} parameters, model expects {len(params)}"
        )
    for name, p in params:
        (name_len,) = struct.unpack("<I", take(4))
        stored = take(name_len).decode("utf-8")
        if stored != name:
            raise CheckpointError(f"parameter order mismatch: {stored!r} vs {name!r}")
        (ndim,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        if shape != p.data.shape:
            raise CheckpointError(
                f"shape mismatch for {name}: file {shape}, model {p.data.shape}"
            )
        n = int(np.prod(shape)) if shape else 1
        p.data = np.frombuffer(take(4 * n), dtype="<f4").reshape(shape).astype(np.float32)
    if off != len(raw):
        raise CheckpointError(f"{len(raw) - off} trailing bytes in {path}")
    return model
