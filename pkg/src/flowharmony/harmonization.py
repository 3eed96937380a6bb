"""Pixel repository construction and trajectory harmonization.

Global harmonization replaces every pixel on a trajectory with the unweighted
mean of the trajectory's pixels (the closed-form least-squares minimizer of
the consistency loss).  Local harmonization instead smooths each trajectory's
temporal sequence with a normalized Gaussian kernel, relaxing strict equality
into a fluent transition.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .coding import EncodedFrames, decode
from .errors import CodeRangeError, ConfigError, ShapeMismatchError


@dataclass(frozen=True)
class PixelRepository:
    """One slot per unique trajectory code plus occupancy counts."""

    slots: np.ndarray  # (n, C) float64
    counts: np.ndarray  # (n,) int64

    @property
    def n(self):
        return self.slots.shape[0]


@dataclass(frozen=True)
class InverseRepository:
    """Per-code coordinate lists in CSR layout.

    `coords[offsets[c]:offsets[c+1]]` are the (frame, y, x) triples of code c,
    sorted by frame index.
    """

    coords: np.ndarray  # (P, 3) int64
    offsets: np.ndarray  # (n+1,) int64

    @property
    def n(self):
        return self.offsets.shape[0] - 1

    def trajectory(self, c):
        return self.coords[self.offsets[c] : self.offsets[c + 1]]

    def length(self, c):
        return int(self.offsets[c + 1] - self.offsets[c])

    @property
    def max_length(self):
        return int(np.max(np.diff(self.offsets)))


@dataclass(frozen=True)
class SmoothingKernel:
    """Normalized symmetric 1D kernel with an odd number of taps."""

    taps: np.ndarray
    sigma: float
    length: int

    @property
    def ratio(self):
        """Max tap over min tap; 1 for a flat kernel."""
        return float(self.taps.max() / self.taps.min())


def gaussian_kernel(length: int, sigma: float) -> SmoothingKernel:
    """Sampled Gaussian on integer taps 0..length, normalized to sum 1.

    `length` must be even so the center falls on an integer tap.
    """
    if length < 0 or length % 2 != 0:
        raise ConfigError(f"kernel length must be even and >= 0, got {length}")
    if sigma <= 0:
        raise ConfigError(f"sigma must be positive, got {sigma}")
    x = np.arange(length + 1, dtype=np.float64)
    taps = np.exp(-0.5 * ((x - length / 2) / sigma) ** 2)
    taps /= taps.sum()
    return SmoothingKernel(taps=taps, sigma=float(sigma), length=length)


def flat_kernel(length: int) -> SmoothingKernel:
    """Uniform kernel (ratio exactly 1); the sigma -> inf limit."""
    if length < 0 or length % 2 != 0:
        raise ConfigError(f"kernel length must be even and >= 0, got {length}")
    taps = np.full(length + 1, 1.0 / (length + 1))
    return SmoothingKernel(taps=taps, sigma=math.inf, length=length)


def sigma_from_seed(seed: float) -> float:
    """Map a log-scale seed s to a kernel standard deviation 100**s + 0.2."""
    return 100.0 ** seed + 0.2


def _check_video(x, enc):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4:
        raise ShapeMismatchError(f"video must be (T, C, H, W), got {x.shape}")
    t, _, h, w = x.shape
    if (t, h, w) != (enc.frames, *enc.spatial_shape):
        raise ShapeMismatchError(
            f"video shape {x.shape} does not match codes shape {enc.codes.shape}"
        )
    return x


def harmonize_global(x, enc: EncodedFrames):
    """Average each trajectory's pixels and write the mean back everywhere.

    Returns (harmonized video, PixelRepository).  Accumulation is in float64
    so repeated application is bit-stable.
    """
    x = _check_video(x, enc)
    c = x.shape[1]
    codes = enc.codes.ravel()
    if codes.max() >= enc.n:
        raise CodeRangeError(f"code {int(codes.max())} out of range [0, {enc.n})")
    values = np.ascontiguousarray(x.transpose(0, 2, 3, 1).reshape(-1, c))
    sums, counts = _kernels.group_sums(codes, values, enc.n)
    slots = np.where(counts[:, None] > 0, sums / np.maximum(counts[:, None], 1), 0.0)
    # A group whose values are already identical keeps that exact value, so
    # repeated application is bit-stable.
    lo = np.full((enc.n, c), np.inf)
    hi = np.full((enc.n, c), -np.inf)
    np.minimum.at(lo, codes, values)
    np.maximum.at(hi, codes, values)
    constant = lo == hi
    slots[constant] = lo[constant]
    repo = PixelRepository(slots=slots, counts=np.asarray(counts))
    return decode(repo, enc), repo


def consistency_loss(x, repo: PixelRepository, enc: EncodedFrames) -> float:
    """Frobenius distance between the video and its repository reconstruction."""
    x = _check_video(x, enc)
    return float(np.linalg.norm(decode(repo, enc) - x))


def build_inverse_repository(enc: EncodedFrames) -> InverseRepository:
    """Counting-sort pixels by code; within a code, frame order is preserved."""
    t, h, w = enc.codes.shape
    codes = enc.codes.ravel()
    order = np.argsort(codes, kind="stable")
    fi, yi, xi = np.unravel_index(order, (t, h, w))
    coords = np.stack([fi, yi, xi], axis=1).astype(np.int64)
    counts = np.bincount(codes, minlength=enc.n)
    offsets = np.zeros(enc.n + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return InverseRepository(coords=coords, offsets=offsets)


def _smoothing_matrix(m, kernel):
    """(m, m) row-stochastic matrix applying the kernel with boundary
    renormalization over the samples actually present."""
    half = kernel.length // 2
    mat = np.zeros((m, m))
    for i in range(m):
        lo = max(i - half, 0)
        hi = min(i + half, m - 1)
        seg = kernel.taps[lo - i + half : hi - i + half + 1]
        mat[i, lo : hi + 1] = seg / seg.sum()
    return mat


def harmonize_local(x, inv: InverseRepository, kernel: SmoothingKernel):
    """Smooth each trajectory's temporal pixel sequence with the kernel.

    The kernel weights are renormalized over the in-range samples at the
    sequence boundaries, so a length-1 sequence is exactly invariant and a
    flat kernel whose support covers the whole sequence produces the exact
    trajectory mean.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4:
        raise ShapeMismatchError(f"video must be (T, C, H, W), got {x.shape}")
    if inv.coords.shape[0] != x.shape[0] * x.shape[2] * x.shape[3]:
        raise ShapeMismatchError(
            "inverse repository does not cover the video's pixels"
        )
    out = x.copy()
    mats = {}
    for c in range(inv.n):
        traj = inv.trajectory(c)
        m = traj.shape[0]
        if m <= 1:
            continue
        mat = mats.get(m)
        if mat is None:
            mat = mats[m] = _smoothing_matrix(m, kernel)
        fi, yi, xi = traj[:, 0], traj[:, 1], traj[:, 2]
        seq = x[fi, :, yi, xi]  # (m, C)
        out[fi, :, yi, xi] = mat @ seq
    return out
