"""Wall-time scaling harness: associative scan vs quadratic attention.

The scan kernel advances the sequence recurrence with O(L log L) work, so
doubling the length should roughly double its wall time. The reference
single-head attention does softmax(Q K^T / sqrt(d)) V with O(L^2) work and
memory, so doubling the length should roughly quadruple it. The harness
times both over a ladder of lengths and emits one CSV row per (kernel, L).

Timings are wall-clock via perf_counter_ns with one warmup call per size;
compare medians across runs, not single shots.
"""

from __future__ import annotations

import csv
import math
import statistics
import time
from dataclasses import dataclass, field

import numpy as np

from .scan import _assoc_scan
from .tensor import ConfigError

KERNELS = ("scan", "attention")


@dataclass
class BenchRow:
    """Raw and summary timings for one kernel at one sequence length."""

    kernel: str
    length: int
    times_ns: list = field(default_factory=list)

    @property
    def mean_ns(self) -> float:
        return float(statistics.fmean(self.times_ns))

    @property
    def std_ns(self) -> float:
        if len(self.times_ns) < 2:
            return 0.0
        return float(statistics.stdev(self.times_ns))

    @property
    def median_ns(self) -> float:
        return float(statistics.median(self.times_ns))


def attention_reference(q: np.ndarray, k: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Single-head scaled dot-product attention, (L, d) inputs -> (L, d)."""
    scores = (q @ k.T) / math.sqrt(q.shape[-1])  # (L, L), the quadratic term
    scores -= scores.max(axis=-1, keepdims=True)
    np.exp(scores, out=scores)
    scores /= scores.sum(axis=-1, keepdims=True)
    return scores @ v


def _time_ns(fn, runs: int) -> list:
    fn()  # warmup: first call pays allocation and code paging
    times = []
    for _ in range(runs):
        t0 = time.perf_counter_ns()
        fn()
        times.append(time.perf_counter_ns() - t0)
    return times


def bench_scan(
    lengths=(1024, 2048, 4096, 8192),
    runs: int = 5,
    state_size: int = 16,
    head_dim: int = 32,
    block: int = 128,
    seed: int = 0,
):
    """Time both kernels at each length; returns a list of BenchRow.

    One problem instance per (kernel, length) is drawn once and reused
    across runs so only the kernel is being timed, never the generator.
    """
    lengths = tuple(int(x) for x in lengths)
    if not lengths or any(x <= 0 for x in lengths):
        raise ConfigError(f"bench lengths must be positive, got {lengths}")
    if runs < 1:
        raise ConfigError(f"bench runs must be >= 1, got {runs}")
    rng = np.random.default_rng(seed)
    rows = []
    for L in lengths:
        decay = rng.uniform(0.8, 0.999, size=(1, L, state_size)).astype(np.float32)
        u = rng.standard_normal((1, L, state_size)).astype(np.float32)
        rows.append(
            BenchRow("scan", L, _time_ns(lambda: _assoc_scan(decay, u, block=block), runs))
        )
    for L in lengths:
        q = rng.standard_normal((L, head_dim)).astype(np.float32)
        k = rng.standard_normal((L, head_dim)).astype(np.float32)
        v = rng.standard_normal((L, head_dim)).astype(np.float32)
        rows.append(
            BenchRow("attention", L, _time_ns(lambda: attention_reference(q, k, v), runs))
        )
    return rows


def doubling_ratio(rows, kernel: str, length: int) -> float:
    """Median wall-time ratio for length -> 2*length of one kernel."""
    by_len = {r.length: r for r in rows if r.kernel == kernel}
    if length not in by_len or 2 * length not in by_len:
        raise ConfigError(
            f"need rows at L={length} and L={2 * length} for kernel {kernel!r}"
        )
    return by_len[2 * length].median_ns / by_len[length].median_ns


def write_bench_csv(rows, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow(["kernel", "L", "mean_ns", "std_ns"])
        for r in rows:
            w.writerow([r.kernel, r.length, f"{r.mean_ns:.1f}", f"{r.std_ns:.1f}"])


def format_bench_table(rows) -> str:
    """Human-readable summary with per-kernel doubling ratios."""
    lines = [
        f"{'kernel':<10s} {'L':>7s} {'median_ms':>10s} {'mean_ms':>10s} {'std_ms':>8s}"
    ]
    for r in rows:
        lines.append(
            f"{r.kernel:<10s} {r.length:>7d} {r.median_ns / 1e6:>10.3f} "
            f"{r.mean_ns / 1e6:>10.3f} {r.std_ns / 1e6:>8.3f}"
        )
    for kernel in KERNELS:
        lens = sorted(r.length for r in rows if r.kernel == kernel)
        for lo in lens:
            if 2 * lo in lens:
                ratio = doubling_ratio(rows, kernel, lo)
                lines.append(f"{kernel}: L={lo} -> {2 * lo} wall-time ratio {ratio:.2f}")
    return "\n".join(lines)
