"""Selective state-space scan machinery.

A diagonal linear state-space recurrence is run over flattened image
tokens in several traversal orders. The pieces here:

- `discretize`: zero-order-hold discretization of continuous (A, B) with a
  positive per-step timescale.
- `scan_recurrence`: the plain sequential recurrence (the oracle).
- `scan_recurrence_fast`: a blocked associative scan with identical
  semantics and O(L) work in a handful of vectorized passes.
- `direction_perm`: six traversal orders over an HxW grid (row/column
  forward/backward plus anti-diagonal forward/backward).
- `SelectiveScan2d`: the learnable module; per-token input/readout rows
  and timescales come from linear maps of the token itself, the state
  decay is a per-channel constant. Direction outputs are summed.

The recurrence, in every variant: h_t = decay_t * h_{t-1} + drive_t * x_t,
y_t = <read_t, h_t> + skip * x_t, with h_{-1} = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor import (
    ConfigError,
    Module,
    Tensor,
    _dphi1_np,
    _phi1_np,
    add,
    exp,
    kaiming_uniform,
    make_op,
    mul,
    permute_axes,
    phi1,
    reshape,
    scale,
    softplus,
    state_project,
    token_linear,
)

ALL_DIRECTIONS = ("row_fwd", "row_bwd", "col_fwd", "col_bwd", "diag_fwd", "diag_bwd")


# ---------------------------------------------------------------------------
# parameter containers and discretization


@dataclass
class SsmParams:
    """Continuous-time diagonal state-space parameters.

    `a` must be strictly negative (stable decay), `step` strictly positive.
    `b` and `c` are per-step input/readout rows over the state axis, `d`
    the skip gain.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    step: np.ndarray

    def validate(self) -> None:
        if np.any(np.asarray(self.step) <= 0):
            raise ConfigError("SsmParams.step must be strictly positive")
        if np.any(np.asarray(self.a) >= 0):
            raise ConfigError("SsmParams.a must be strictly negative")


@dataclass
class DiscreteSsm:
    """Per-step discrete parameters: state decay and input drive."""

    decay: np.ndarray
    drive: np.ndarray


def discretize(a, b, step, exp_without_step: bool = False) -> DiscreteSsm:
    """Zero-order-hold discretization of a diagonal state-space pair.

    decay = exp(step*a); drive = phi1(step*a) * step * b, where
    phi1(z) = (e^z - 1)/z with a series branch below |z| = 1e-4 so the
    removable singularity is evaluated exactly. With `exp_without_step`
    the exponential inside the drive term omits the step scaling
    (a printed variant kept for auditability; not used by the model).
    """
    a = np.asarray(a)
    b = np.asarray(b)
    step = np.asarray(step)
    if np.any(step <= 0):
        raise ConfigError(f"discretize needs step > 0, got min {step.min()}")
    z = step * a
    decay = np.exp(z)
    if exp_without_step:
        with np.errstate(divide="ignore", invalid="ignore"):
            drive = np.where(
                np.abs(z) < 1e-4, step * b, (np.expm1(a) / z) * step * b
            )
    else:
        drive = _phi1_np(z) * step * b
    return DiscreteSsm(decay=decay, drive=drive)


# ---------------------------------------------------------------------------
# recurrences


def _normalize_scan_args(x, disc: DiscreteSsm, c, d):
    x = np.asarray(x)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    lead, L = x.shape[:-1], x.shape[-1]
    decay = np.asarray(disc.decay)
    drive = np.asarray(disc.drive)
    c = np.asarray(c)
    m = max(
        decay.shape[-1] if decay.ndim else 1,
        drive.shape[-1] if drive.ndim else 1,
        c.shape[-1] if c.ndim else 1,
    )
    full = lead + (L, m)
    decay = np.broadcast_to(decay, full)
    drive = np.broadcast_to(drive, full)
    c = np.broadcast_to(c, full)
    d = np.broadcast_to(np.asarray(d), lead + (L,))
    return x, decay, drive, c, d, squeeze


def scan_recurrence(x, disc: DiscreteSsm, c, d):
    """Sequential reference recurrence; the oracle for the fast variant.

    x has shape (..., L); decay/drive/c broadcast to (..., L, M) and d to
    (..., L). Returns y of x's shape.
    """
    x, decay, drive, c, d, squeeze = _normalize_scan_args(x, disc, c, d)
    L = x.shape[-1]
    h = np.zeros(x.shape[:-1] + (decay.shape[-1],), dtype=x.dtype)
    y = np.empty_like(x)
    for t in range(L):
        h = decay[..., t, :] * h + drive[..., t, :] * x[..., t, None]
        y[..., t] = (c[..., t, :] * h).sum(axis=-1) + d[..., t] * x[..., t]
    return y[0] if squeeze else y


def _assoc_scan(a: np.ndarray, u: np.ndarray, block: int = 64) -> np.ndarray:
    """h_t = a_t * h_{t-1} + u_t along axis -2, via a blocked inclusive scan.

    Within each block of `block` steps a Hillis-Steele doubling pass runs
    (log2(block) vectorized sweeps), then block carries are chained
    sequentially. No divisions anywhere, so decays may underflow to zero
    harmlessly. Inputs are not mutated.
    """
    L = u.shape[-2]
    if L == 1:
        return u.copy()
    block = min(block, 1 << (L - 1).bit_length())
    nb = -(-L // block)
    pad = nb * block - L
    if pad:
        padw = [(0, 0)] * u.ndim
        padw[-2] = (0, pad)
        a = np.pad(a, padw, constant_values=1.0)
        u = np.pad(u, padw, constant_values=0.0)
    lead = u.shape[:-2]
    m = u.shape[-1]
    a = a.reshape(lead + (nb, block, m)).copy()
    u = u.reshape(lead + (nb, block, m)).copy()
    s = 1
    while s < block:
        au = a[..., s:, :] * u[..., :-s, :]
        u[..., s:, :] += au
        a[..., s:, :] = a[..., s:, :] * a[..., :-s, :]
        s *= 2
    for i in range(1, nb):
        u[..., i, :, :] += a[..., i, :, :] * u[..., i - 1, -1:, :]
    u = u.reshape(lead + (nb * block, m))
    return u[..., :L, :] if pad else u


def scan_recurrence_fast(x, disc: DiscreteSsm, c, d, block: int = 64):
    """Same contract as `scan_recurrence`; blocked associative evaluation."""
    x, decay, drive, c, d, squeeze = _normalize_scan_args(x, disc, c, d)
    h = _assoc_scan(decay, drive * x[..., None], block=block)
    y = (c * h).sum(axis=-1) + d * x
    return y[0] if squeeze else y


# ---------------------------------------------------------------------------
# traversal orders


def direction_perm(tag: str, h: int, w: int) -> np.ndarray:
    """Permutation of row-major indices realizing one traversal order.

    perm[t] is the flat index of the t-th visited pixel. Diagonal orders
    walk anti-diagonals i+j = 0, 1, ... with i increasing inside each;
    backward orders are the exact reverse of their forward twin.
    """
    if h < 1 or w < 1:
        raise ConfigError(f"direction_perm needs a nonempty grid, got {h}x{w}")
    if tag not in ALL_DIRECTIONS:
        raise ConfigError(f"unknown scan direction {tag!r}; choose from {ALL_DIRECTIONS}")
    if tag.startswith("row"):
        fwd = np.arange(h * w, dtype=np.int64)
    elif tag.startswith("col"):
        fwd = np.arange(h * w, dtype=np.int64).reshape(h, w).T.ravel()
    else:
        ii, jj = np.indices((h, w))
        fwd = np.lexsort((ii.ravel(), (ii + jj).ravel())).astype(np.int64)
    return fwd if tag.endswith("fwd") else fwd[::-1].copy()


# ---------------------------------------------------------------------------
# autodiff primitives for the scan path


def gather_directions(x: Tensor, perms: np.ndarray) -> Tensor:
    """Stack K permuted copies of a token sequence: (b,c,L) -> (K*b,c,L)."""
    k, L = perms.shape
    b, c, L2 = x.data.shape
    if L2 != L:
        raise ConfigError(f"gather_directions length mismatch: {L2} vs {L}")
    y = x.data[:, :, perms.reshape(-1)].reshape(b, c, k, L)
    y = np.ascontiguousarray(y.transpose(2, 0, 1, 3)).reshape(k * b, c, L)

    def backward(gy):
        if x.requires_grad:
            g = np.zeros_like(x.data)
            gr = gy.reshape(k, b, c, L)
            for i in range(k):
                g[:, :, perms[i]] += gr[i]
            x._accum(g)

    return make_op(y, (x,), backward)


def scatter_directions(y: Tensor, perms: np.ndarray, batch: int) -> Tensor:
    """Un-permute K stacked direction outputs and sum: (K*b,c,L) -> (b,c,L)."""
    k, L = perms.shape
    kb, c, L2 = y.data.shape
    if L2 != L or kb != k * batch:
        raise ConfigError(
            f"scatter_directions shape mismatch: {y.data.shape} for {k} dirs, batch {batch}"
        )
    yr = y.data.reshape(k, batch, c, L)
    out = np.zeros((batch, c, L), dtype=y.data.dtype)
    for i in range(k):
        out[:, :, perms[i]] += yr[i]

    def backward(g):
        if y.requires_grad:
            gk = g[:, :, perms.reshape(-1)].reshape(batch, c, k, L)
            y._accum(np.ascontiguousarray(gk.transpose(2, 0, 1, 3)).reshape(kb, c, L))

    return make_op(out, (y,), backward)


def linear_scan(decay: Tensor, u: Tensor) -> Tensor:
    """Differentiable h_t = decay_t * h_{t-1} + u_t over (n, c, L, m).

    Forward runs the blocked associative scan. Backward runs the adjoint
    recurrence g_t = gh_t + decay_{t+1} * g_{t+1} with the same kernel on
    reversed sequences, then du = g and ddecay_t = g_t * h_{t-1}.
    """
    if decay.data.shape != u.data.shape:
        raise ConfigError(
            f"linear_scan shape mismatch: {decay.data.shape} vs {u.data.shape}"
        )
    h = _assoc_scan(decay.data, u.data)

    def backward(gh):
        ar = decay.data[..., ::-1, :]
        coef = np.concatenate([np.zeros_like(ar[..., :1, :]), ar[..., :-1, :]], axis=-2)
        g = _assoc_scan(coef, gh[..., ::-1, :])[..., ::-1, :]
        if u.requires_grad:
            u._accum(g)
        if decay.requires_grad:
            h_prev = np.concatenate(
                [np.zeros_like(h[..., :1, :]), h[..., :-1, :]], axis=-2
            )
            decay._accum(g * h_prev)

    return make_op(h, (decay, u), backward)


# ---------------------------------------------------------------------------
# the learnable 2-D selective scan


def discretize_t(a: Tensor, b: Tensor, step: Tensor):
    """Differentiable zero-order hold; same math as `discretize`, on Tensors.

    Shapes broadcast elementwise. Returns (decay, drive).
    """
    z = mul(step, a)
    return exp(z), mul(mul(phi1(z), step), b)


def _softplus_inv(y: np.ndarray) -> np.ndarray:
    return y + np.log1p(-np.exp(-y))


class SelectiveScan2d(Module):
    """Diagonal selective state-space mixing over 2-D feature maps.

    Per token, linear maps of the channel vector produce the input row,
    the readout row, and (through a softplus) the positive timescale; the
    state decay is a learned per-channel constant, stored as a log so it
    stays strictly negative. Each configured direction flattens the grid
    in its own order, runs the recurrence, and un-permutes; outputs are
    summed (or averaged with merge="mean").
    """

    def __init__(
        self,
        channels: int,
        state_size: int = 16,
        directions=ALL_DIRECTIONS,
        merge: str = "sum",
        rng: np.random.Generator | None = None,
        step_range: tuple = (1e-3, 1e-1),
    ):
        directions = tuple(directions)
        if not directions:
            raise ConfigError("SelectiveScan2d needs at least one direction")
        for tag in directions:
            if tag not in ALL_DIRECTIONS:
                raise ConfigError(f"unknown scan direction {tag!r}")
        if merge not in ("sum", "mean"):
            raise ConfigError(f"merge must be 'sum' or 'mean', got {merge!r}")
        if rng is None:
            rng = np.random.default_rng(0)
        self.channels = channels
        self.state_size = state_size
        self.directions = directions
        self.merge = merge
        m = state_size
        # the direction outputs are summed, so per-direction gains start at
        # 1/k: the skip path reproduces x exactly at init and the
        # data-dependent readout starts small, both regardless of how many
        # directions are configured (mean merge divides by k instead)
        k0 = 1.0 if merge == "mean" else 1.0 / len(directions)
        self.drive_proj = Tensor(
            kaiming_uniform(rng, (m, channels), channels, gain=1.0), requires_grad=True
        )
        self.read_proj = Tensor(
            kaiming_uniform(rng, (m, channels), channels, gain=k0), requires_grad=True
        )
        self.step_proj = Tensor(
            kaiming_uniform(rng, (channels, channels), channels, gain=1.0),
            requires_grad=True,
        )
        lo, hi = math.log(step_range[0]), math.log(step_range[1])
        step0 = np.exp(rng.uniform(lo, hi, size=channels))
        self.step_bias = Tensor(_softplus_inv(step0).astype(np.float32), requires_grad=True)
        # log of 1..m per channel: spreads the decay spectrum at init
        dl = np.log(np.arange(1, m + 1, dtype=np.float64))
        self.decay_log = Tensor(
            np.tile(dl, (channels, 1)).astype(np.float32), requires_grad=True
        )
        self.skip_gain = Tensor(
            np.full(channels, k0, dtype=np.float32), requires_grad=True
        )

    def forward(self, x: Tensor, directions=None) -> Tensor:
        dirs = self.directions if directions is None else tuple(directions)
        if not dirs:
            raise ConfigError("ssm_2d needs a nonempty direction set")
        b, c, h, w = x.data.shape
        if c != self.channels:
            raise ConfigError(
                f"SelectiveScan2d built for {self.channels} channels, got {c}"
            )
        L = h * w
        k = len(dirs)
        toks = reshape(x, (b, c, L))
        perms = np.stack([direction_perm(d, h, w) for d in dirs])
        g = gather_directions(toks, perms)  # (k*b, c, L)
        kb = k * b
        m = self.state_size
        step = softplus(
            add(token_linear(g, self.step_proj), reshape(self.step_bias, (1, c, 1)))
        )  # (kb, c, L) > 0
        drive_row = permute_axes(token_linear(g, self.drive_proj), (0, 2, 1))  # (kb, L, m)
        read_row = permute_axes(token_linear(g, self.read_proj), (0, 2, 1))
        a_diag = scale(exp(self.decay_log), -1.0)  # (c, m), strictly negative
        decay, drive = discretize_t(
            reshape(a_diag, (1, c, 1, m)),
            reshape(drive_row, (kb, 1, L, m)),
            reshape(step, (kb, c, L, 1)),
        )
        u = mul(drive, reshape(g, (kb, c, L, 1)))
        hseq = linear_scan(decay, u)
        y = state_project(hseq, read_row)  # (kb, c, L)
        y = add(y, mul(reshape(self.skip_gain, (1, c, 1)), g))
        out = scatter_directions(y, perms, batch=b)
        if self.merge == "mean":
            out = scale(out, 1.0 / k)
        return reshape(out, (b, c, h, w))


def ssm_2d(x: Tensor, proj: SelectiveScan2d, directions=None) -> Tensor:
    """Run a SelectiveScan2d over x, optionally overriding its direction set."""
    return proj.forward(x, directions=directions)
