"""Training loop, evaluation, and single-image inference.

Protocol: Adam (beta1 0.9, beta2 0.99), learning rate 1e-4 stepped down
by `step_gamma` every `step_every` epochs, batch size 1, L1 loss, fixed
seed. Sample order is the loader's deterministic order, repeated per
epoch, so two runs with equal config and data match bit for bit. A
non-finite loss aborts immediately, naming the iteration.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .metrics import MetricsReport, error_heatmap
from .model import RestorationModel, save_checkpoint
from .tensor import ConfigError, Tensor, l1_loss, no_grad


@dataclass
class TrainConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.99
    step_every: int = 10
    step_gamma: float = 0.5
    epochs: int = 32
    batch: int = 1
    seed: int = 10
    max_iters: int | None = None
    ckpt_every: int = 10  # epochs between periodic checkpoints; 0 = final only

    def validate(self) -> "TrainConfig":
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if not 0.0 < self.step_gamma < 1.0:
            raise ConfigError(f"step_gamma must be in (0,1), got {self.step_gamma}")
        if self.step_every < 1:
            raise ConfigError(f"step_every must be >= 1, got {self.step_every}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch != 1:
            raise ConfigError("only batch size 1 is supported")
        if not 0.0 <= self.beta1 < 1.0 or not 0.0 <= self.beta2 < 1.0:
            raise ConfigError("betas must lie in [0, 1)")
        return self

    def lr_at(self, epoch: int) -> float:
        return self.lr * self.step_gamma ** (epoch // self.step_every)


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; `iteration` names the offending step."""

    def __init__(self, iteration: int):
        super().__init__(f"non-finite loss at iteration {iteration}")
        self.iteration = iteration


class Adam:
    """Standard Adam with bias correction; state keyed by parameter order."""

    def __init__(self, params, beta1: float = 0.9, beta2: float = 0.99, eps: float = 1e-8):
        self.params = list(params)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self, lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m += (1.0 - b1) * (g - m)
            v += (1.0 - b2) * (g * g - v)
            p.data -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class TrainResult:
    history: list = field(default_factory=list)  # (iteration, loss) pairs
    initial_loss: float = float("nan")
    final_loss: float = float("nan")
    checkpoint: str | None = None


def train(model: RestorationModel, samples, tc: TrainConfig, out_dir: str | None = None) -> TrainResult:
    """Run the training loop; emits loss_curve.csv and checkpoints under out_dir."""
    tc.validate()
    if not samples:
        raise ConfigError("train called with no samples")
    for s in samples:
        if s.input.shape[1] != model.task.in_channels:
            raise ConfigError(
                f"sample {s.image_id} has {s.input.shape[1]} input channels; "
                f"task {model.task.name} expects {model.task.in_channels}"
            )
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    opt = Adam(model.parameters(), beta1=tc.beta1, beta2=tc.beta2)
    result = TrainResult()
    iteration = 0
    stop = False
    for epoch in range(tc.epochs):
        lr = tc.lr_at(epoch)
        for s in samples:
            pred = model(Tensor(s.input))
            loss = l1_loss(pred, Tensor(s.target))
            value = float(loss.data)
            if not np.isfinite(value):
                raise TrainingDiverged(iteration)
            model.zero_grad()
            loss.backward()
            opt.step(lr)
            result.history.append((iteration, value))
            if iteration == 0:
                result.initial_loss = value
            iteration += 1
            if tc.max_iters is not None and iteration >= tc.max_iters:
                stop = True
                break
        if out_dir and tc.ckpt_every and (epoch + 1) % tc.ckpt_every == 0 and not stop:
            save_checkpoint(model, os.path.join(out_dir, f"ckpt_epoch{epoch + 1:04d}.mfmb"))
        if stop:
            break
    result.final_loss = result.history[-1][1]
    if out_dir:
        curve = os.path.join(out_dir, "loss_curve.csv")
        with open(curve, "w", encoding="utf-8") as f:
            f.write("iteration,l1\n")
            for it, value in result.history:
                f.write(f"{it},{value:.8f}\n")
        result.checkpoint = os.path.join(out_dir, "ckpt_final.mfmb")
        save_checkpoint(model, result.checkpoint)
    return result


def predict(model: RestorationModel, inp: np.ndarray) -> np.ndarray:
    """Forward pass without graph recording; output clamped to [0, 1]."""
    with no_grad():
        out = model(Tensor(np.asarray(inp, dtype=np.float32)))
    return np.clip(out.data, 0.0, 1.0)


def evaluate(model: RestorationModel, samples, out_dir: str | None = None) -> MetricsReport:
    """Score each sample on the [0,255] scale; emit CSV and heatmaps if out_dir."""
    if not samples:
        raise ConfigError("evaluate called with no samples")
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    report = MetricsReport()
    for s in samples:
        pred = predict(model, s.input)[0] * 255.0
        label = np.asarray(s.target[0], dtype=np.float64) * 255.0
        report.add(s.image_id, pred, label)
        if out_dir:
            error_heatmap(pred, label, os.path.join(out_dir, f"{s.image_id}_err.png"))
    if out_dir:
        report.write_csv(os.path.join(out_dir, "metrics.csv"))
    return report


def infer(model: RestorationModel, image_path: str, out_path: str) -> np.ndarray:
    """Restore one grayscale PNG; writes an 8-bit PNG (L or RGB per task)."""
    from PIL import Image

    img = np.asarray(Image.open(image_path).convert("L"), dtype=np.float32) / 255.0
    out = predict(model, img[None, None])[0]
    arr = (out * 255.0).round().astype(np.uint8)
    if arr.shape[0] == 1:
        Image.fromarray(arr[0], mode="L").save(out_path)
    else:
        Image.fromarray(arr.transpose(1, 2, 0), mode="RGB").save(out_path)
    return out
