"""Temporal-consistency metrics and diagnostics.

Endpoint error between flow fields, an exhaustive block-matching flow
estimator (the desk-scale stand-in for a learned estimator), a photometric
warp-error proxy, and the horizontal-scan strip image.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .coding import BACKWARD, FORWARD, FlowField, OcclusionMask, round_half_away
from .errors import ShapeMismatchError


@dataclass(frozen=True)
class EpeReport:
    mean_epe: float
    frac_gt_1: float
    frac_gt_3: float
    frac_gt_5: float

    def lines(self):
        return [
            f"mean_epe={self.mean_epe:.6f}",
            f"frac_gt_1={self.frac_gt_1:.6f}",
            f"frac_gt_3={self.frac_gt_3:.6f}",
            f"frac_gt_5={self.frac_gt_5:.6f}",
        ]


@dataclass(frozen=True)
class WarpErrorReport:
    mean_abs_error: float
    included: int
    excluded: int

    def lines(self):
        return [
            f"mean_abs_error={self.mean_abs_error:.6f}",
            f"included={self.included}",
            f"excluded={self.excluded}",
        ]


def endpoint_error(flow_a: FlowField, flow_b: FlowField,
                   mask: Optional[OcclusionMask] = None) -> EpeReport:
    """Mean per-pixel Euclidean distance between two flow fields.

    Fractions count pixels whose error is strictly greater than 1, 3 and 5
    pixels.  Masked pixels are excluded from all statistics.
    """
    if flow_a.flows.shape != flow_b.flows.shape:
        raise ShapeMismatchError(
            f"flow shapes differ: {flow_a.flows.shape} vs {flow_b.flows.shape}"
        )
    if flow_a.direction != flow_b.direction:
        raise ShapeMismatchError("flow directions differ")
    err = np.linalg.norm(flow_a.flows - flow_b.flows, axis=-1)
    if mask is not None:
        if mask.masks.shape != err.shape:
            raise ShapeMismatchError("mask shape does not match flows")
        err = err[~mask.masks]
    else:
        err = err.ravel()
    if err.size == 0:
        return EpeReport(0.0, 0.0, 0.0, 0.0)
    return EpeReport(
        mean_epe=float(err.mean()),
        frac_gt_1=float(np.mean(err > 1.0)),
        frac_gt_3=float(np.mean(err > 3.0)),
        frac_gt_5=float(np.mean(err > 5.0)),
    )


def block_matching_flow(video, search_radius: int, patch: int) -> FlowField:
    """Exhaustive integer-displacement flow between adjacent frames.

    Produces backward flows: slice i maps each pixel of frame i+1 to its best
    sum-of-squared-differences match in frame i.  Ties break on smaller
    displacement magnitude, then row-major order.
    """
    video = np.asarray(video, dtype=np.float64)
    if video.ndim != 4:
        raise ShapeMismatchError(f"video must be (T, C, H, W), got {video.shape}")
    t, _, h, w = video.shape
    if t < 2:
        raise ShapeMismatchError("block matching needs at least 2 frames")
    if search_radius < 1 or patch < 1:
        raise ShapeMismatchError("search radius and patch size must be >= 1")
    if patch % 2 == 0:
        raise ShapeMismatchError(f"patch size must be odd, got {patch}")
    if h < patch or w < patch:
        raise ShapeMismatchError(f"frame {h}x{w} smaller than patch {patch}")
    flows = np.empty((t - 1, h, w, 2), dtype=np.float64)
    for i in range(t - 1):
        d = _kernels.block_match(
            np.ascontiguousarray(video[i + 1]),
            np.ascontiguousarray(video[i]),
            search_radius, patch,
        )
        flows[i] = d.astype(np.float64)
    return FlowField(flows=flows, direction=BACKWARD)


def warp_error(video, flow: FlowField, occ: OcclusionMask) -> WarpErrorReport:
    """Mean absolute difference between pixels and their flow correspondents.

    Uses the same destination rounding as the coding stage.  Occluded pixels
    and out-of-bounds correspondents are excluded; the latter are reported in
    `excluded`.
    """
    video = np.asarray(video, dtype=np.float64)
    if video.ndim != 4:
        raise ShapeMismatchError(f"video must be (T, C, H, W), got {video.shape}")
    t, _, h, w = video.shape
    if flow.flows.shape[:3] != (t - 1, h, w):
        raise ShapeMismatchError(
            f"flow shape {flow.flows.shape} does not match video {video.shape}"
        )
    if occ.masks.shape != flow.flows.shape[:3]:
        raise ShapeMismatchError("occlusion shape does not match flows")

    grid_y, grid_x = np.mgrid[0:h, 0:w]
    total = 0.0
    included = 0
    excluded = 0
    for i in range(t - 1):
        dy = round_half_away(grid_y + flow.flows[i, ..., 0])
        dx = round_half_away(grid_x + flow.flows[i, ..., 1])
        oob = (dy < 0) | (dy >= h) | (dx < 0) | (dx >= w)
        visible = ~occ.masks[i]
        excluded += int(np.count_nonzero(visible & oob))
        take = visible & ~oob
        if flow.direction == FORWARD:
            src, dst = video[i], video[i + 1]
        else:
            src, dst = video[i + 1], video[i]
        diff = np.abs(src[:, take] - dst[:, dy[take], dx[take]])
        total += float(diff.sum())
        included += diff.size
    mean = total / included if included else 0.0
    return WarpErrorReport(mean_abs_error=mean, included=included, excluded=excluded)


def horizontal_scan(video, column: int, width: int = 20,
                    shift_per_frame: int = 0) -> np.ndarray:
    """Stack one vertical strip per frame into an (C, H, T*width) image.

    Frame i's strip starts at column - i * shift_per_frame, clamped to the
    frame; adjacent strips of a static video are identical.
    """
    video = np.asarray(video, dtype=np.float64)
    if video.ndim != 4:
        raise ShapeMismatchError(f"video must be (T, C, H, W), got {video.shape}")
    t, _, _, w = video.shape
    if shift_per_frame < 0:
        raise ShapeMismatchError("shift_per_frame must be >= 0")
    if not 0 <= column <= w - width:
        raise ShapeMismatchError(
            f"column {column} with width {width} out of range for width {w}"
        )
    strips = []
    for i in range(t):
        c = max(0, min(column - i * shift_per_frame, w - width))
        strips.append(video[i, :, :, c : c + width])
    return np.concatenate(strips, axis=-1)
