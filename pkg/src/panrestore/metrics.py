"""Fidelity metrics and error-heatmap emission.

All metrics operate on the [0, 255] evaluation scale (MAX = 255) in
float64, regardless of the [0, 1] training scale; callers rescale first.
SSIM uses an 11x11 Gaussian window (sigma 1.5) over valid positions and is
computed on the luma channel for color images. SAM is the mean per-pixel
spectral angle in radians, skipping pixels where either vector is zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .tensor import ConfigError

_C1 = (0.01 * 255.0) ** 2
_C2 = (0.03 * 255.0) ** 2


def luma_bt601(rgb: np.ndarray, channel_axis: int = 0) -> np.ndarray:
    """Weighted luma (0.299, 0.587, 0.114) along the given channel axis."""
    rgb = np.moveaxis(np.asarray(rgb, dtype=np.float64), channel_axis, 0)
    if rgb.shape[0] != 3:
        raise ConfigError(f"luma needs 3 channels, got {rgb.shape[0]}")
    return 0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2]


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ConfigError(f"metric shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def mse(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.mean((a - b) ** 2))


def mae(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.mean(np.abs(a - b)))


def psnr(a, b) -> float:
    """10*log10(255^2 / mse), capped at 100 dB for vanishing error."""
    m = mse(a, b)
    if m < 1e-10:
        return 100.0
    return float(10.0 * math.log10(255.0 ** 2 / m))


def _to_gray(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    if img.ndim == 3 and img.shape[0] == 1:
        return img[0]
    if img.ndim == 3 and img.shape[0] == 3:
        return luma_bt601(img)
    raise ConfigError(f"ssim expects (h,w), (1,h,w) or (3,h,w), got {img.shape}")


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(r ** 2) / (2.0 * sigma ** 2))
    w = np.outer(g, g)
    return w / w.sum()


def _window_filter(img: np.ndarray, win: np.ndarray) -> np.ndarray:
    view = np.lib.stride_tricks.sliding_window_view(img, win.shape)
    return np.tensordot(view, win, axes=([2, 3], [0, 1]))


def ssim(a, b) -> float:
    """Mean local SSIM; 11x11 Gaussian window, sigma 1.5, K1/K2 = .01/.03, L=255."""
    a, b = _pair(a, b)
    ga, gb = _to_gray(a), _to_gray(b)
    if min(ga.shape) < 11:
        raise ConfigError(f"ssim needs at least 11x11 pixels, got {ga.shape}")
    win = _gaussian_window()
    mu_a = _window_filter(ga, win)
    mu_b = _window_filter(gb, win)
    var_a = _window_filter(ga * ga, win) - mu_a ** 2
    var_b = _window_filter(gb * gb, win) - mu_b ** 2
    cov = _window_filter(ga * gb, win) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + _C1) * (2.0 * cov + _C2)
    den = (mu_a ** 2 + mu_b ** 2 + _C1) * (var_a + var_b + _C2)
    return float(np.mean(num / den))


def sam_with_count(a, b) -> tuple:
    """Mean spectral angle in radians plus the count of skipped zero-vector pixels."""
    a, b = _pair(a, b)
    if a.ndim == 2:
        a, b = a[None], b[None]
    if a.ndim != 3:
        raise ConfigError(f"sam expects (c,h,w) spectra, got {a.shape}")
    flat_a = a.reshape(a.shape[0], -1)
    flat_b = b.reshape(b.shape[0], -1)
    na = np.linalg.norm(flat_a, axis=0)
    nb = np.linalg.norm(flat_b, axis=0)
    valid = (na > 0) & (nb > 0)
    skipped = int(valid.size - valid.sum())
    if not valid.any():
        raise ConfigError("sam: every pixel has a zero spectral vector")
    cosine = (flat_a[:, valid] * flat_b[:, valid]).sum(axis=0) / (na[valid] * nb[valid])
    angle = np.arccos(np.clip(cosine, -1.0, 1.0))
    return float(angle.mean()), skipped


def sam(a, b) -> float:
    return sam_with_count(a, b)[0]


# ---------------------------------------------------------------------------
# heatmap


def colormap_bgr_ramp(t: np.ndarray) -> np.ndarray:
    """Blue -> yellow -> red over t in [0,1], as uint8 RGB."""
    t = np.clip(np.asarray(t, dtype=np.float64), 0.0, 1.0)
    lo = t < 0.5
    r = np.where(lo, 510.0 * t, 255.0)
    g = np.where(lo, 510.0 * t, 510.0 * (1.0 - t))
    b = np.where(lo, 255.0 - 510.0 * t, 0.0)
    return np.stack([r, g, b], axis=-1).round().astype(np.uint8)


def error_heatmap(pred, label, path: str | None = None) -> np.ndarray:
    """Per-pixel mean absolute error rendered through the blue-to-red ramp.

    Error is normalized by the image's own maximum (an all-zero error map
    renders uniform blue). Returns the (h, w, 3) uint8 image; writes a PNG
    when `path` is given.
    """
    pred, label = _pair(pred, label)
    err = np.abs(pred - label)
    if err.ndim == 3:
        err = err.mean(axis=0)
    if err.ndim != 2:
        raise ConfigError(f"error_heatmap expects 2-d or (c,h,w) images, got {err.shape}")
    peak = err.max()
    t = err / peak if peak > 0 else np.zeros_like(err)
    img = colormap_bgr_ramp(t)
    if path is not None:
        Image.fromarray(img, mode="RGB").save(path)
    return img


# ---------------------------------------------------------------------------
# reports


@dataclass
class MetricsReport:
    """Per-image metric records plus aggregate means (f64 accumulation)."""

    records: list = field(default_factory=list)
    skipped_pixels: int = 0

    def add(self, image_id: str, pred: np.ndarray, label: np.ndarray) -> dict:
        sam_val, skipped = sam_with_count(pred, label)
        rec = {
            "image_id": image_id,
            "psnr_db": psnr(pred, label),
            "ssim": ssim(pred, label),
            "mse": mse(pred, label),
            "mae": mae(pred, label),
            "sam_rad": sam_val,
        }
        self._validate(rec)
        self.records.append(rec)
        self.skipped_pixels += skipped
        return rec

    @staticmethod
    def _validate(rec: dict) -> None:
        if not (-1.0 - 1e-9 <= rec["ssim"] <= 1.0 + 1e-9):
            raise ConfigError(f"ssim out of range: {rec['ssim']}")
        if not (0.0 <= rec["sam_rad"] <= math.pi + 1e-9):
            raise ConfigError(f"sam out of range: {rec['sam_rad']}")
        if rec["mse"] < 0 or rec["mae"] < 0:
            raise ConfigError("mse/mae must be nonnegative")

    @property
    def count(self) -> int:
        return len(self.records)

    def aggregate(self) -> dict:
        if not self.records:
            raise ConfigError("aggregate of an empty report")
        keys = ("psnr_db", "ssim", "mse", "mae", "sam_rad")
        return {k: float(np.sum([r[k] for r in self.records], dtype=np.float64) / len(self.records)) for k in keys}

    def write_csv(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write("image_id,psnr,ssim,mse,mae,sam\n")
            for r in self.records:
                f.write(
                    f"{r['image_id']},{r['psnr_db']:.6f},{r['ssim']:.6f},"
                    f"{r['mse']:.6f},{r['mae']:.6f},{r['sam_rad']:.6f}\n"
                )
