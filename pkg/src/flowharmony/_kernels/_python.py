"""Pure-numpy implementations of the hot kernels.

These mirror the compiled extension in `_core.pyx` exactly: the accumulation
order of `group_sums` and the scan order of `propagate_codes` are row-major in
both backends, so codes and repository slots are bit-identical regardless of
which backend is active.  `block_match` uses a different (vectorized) summation
order for the SSD accumulator, so exact float ties may resolve differently
across backends; exact-match displacements (SSD 0) agree.
"""

import numpy as np

BACKEND_NAME = "python"


def propagate_codes(prev_codes, dest_y, dest_x, fresh, start):
    """Gather codes from the previous frame at rounded destinations.

    Pixels flagged in `fresh` (occluded or out of bounds) receive new codes
    counting up from `start` in row-major scan order.  Destinations of
    non-fresh pixels must be in bounds.

    Returns (codes, next_start).
    """
    h, w = prev_codes.shape
    dy = np.clip(dest_y, 0, h - 1)
    dx = np.clip(dest_x, 0, w - 1)
    codes = prev_codes[dy, dx]
    idx = np.flatnonzero(fresh)
    codes.flat[idx] = start + np.arange(idx.size, dtype=np.int64)
    return codes, start + int(idx.size)


def group_sums(codes, values, n):
    """Per-code sums and occupancy counts.

    codes: (P,) int64 in [0, n); values: (P, C) float64.
    Returns (sums (n, C) float64, counts (n,) int64).
    """
    c = values.shape[1]
    sums = np.zeros((n, c), dtype=np.float64)
    np.add.at(sums, codes, values)
    counts = np.bincount(codes, minlength=n).astype(np.int64)
    return sums, counts


def block_match(ref, tgt, radius, patch):
    """Exhaustive-search block matching.

    For every pixel of `ref` (C, H, W), find the integer displacement
    (dy, dx) within [-radius, radius]^2 minimizing the sum of squared
    differences between the patch around the pixel in `ref` and the patch
    around the displaced position in `tgt`.  Frames are edge-padded so every
    patch is full-size.  Ties break on smaller displacement magnitude, then
    row-major (dy, dx) order.

    Returns int64 (H, W, 2) displacements as (dy, dx).
    """
    _, h, w = ref.shape
    half = patch // 2
    pad_r = half
    pad_t = radius + half
    ref_p = np.pad(ref, ((0, 0), (pad_r, pad_r), (pad_r, pad_r)), mode="edge")
    tgt_p = np.pad(tgt, ((0, 0), (pad_t, pad_t), (pad_t, pad_t)), mode="edge")

    best = np.full((h, w), np.inf, dtype=np.float64)
    best_d = np.zeros((h, w, 2), dtype=np.int64)
    for dy, dx in displacement_order(radius):
        # Squared difference between ref and tgt shifted by (dy, dx), on the
        # patch-padded grid; then box-sum over the patch window.
        oy = dy + radius
        ox = dx + radius
        shifted = tgt_p[:, oy : oy + h + 2 * half, ox : ox + w + 2 * half]
        d2 = np.sum((ref_p - shifted) ** 2, axis=0)
        ssd = _box_sum(d2, patch)
        better = ssd < best
        best[better] = ssd[better]
        best_d[better] = (dy, dx)
    return best_d


def displacement_order(radius):
    """Candidate displacements sorted by magnitude, then row-major."""
    cands = [
        (dy, dx)
        for dy in range(-radius, radius + 1)
        for dx in range(-radius, radius + 1)
    ]
    cands.sort(key=lambda d: (d[0] * d[0] + d[1] * d[1], d[0], d[1]))
    return cands


def _box_sum(a, size):
    """Sum of `a` over every size x size window (input is pre-padded)."""
    c = np.cumsum(np.cumsum(a, axis=0), axis=1)
    c = np.pad(c, ((1, 0), (1, 0)))
    return (
        c[size:, size:]
        - c[:-size, size:]
        - c[size:, :-size]
        + c[:-size, :-size]
    )
