"""Trajectory coding of video pixels from optical flows.

Every pixel of a T-frame video receives an integer code identifying the scene
point it observes.  Codes start as the row-major enumeration of the anchor
frame and are propagated along flow trajectories; pixels without a valid
correspondence (occluded, or displaced outside the frame) start new
trajectories with fresh codes.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import CodeRangeError, ShapeMismatchError

FORWARD = "forward"
BACKWARD = "backward"


@dataclass(frozen=True)
class FlowField:
    """(T-1, H, W, 2) per-frame displacements in pixels, ordered (dy, dx).

    For direction "backward", slice i is defined on frame i+1's grid and
    points into frame i.  For "forward", slice i is defined on frame i's grid
    and points into frame i+1.
    """

    flows: np.ndarray
    direction: str = BACKWARD

    def __post_init__(self):
        flows = np.asarray(self.flows, dtype=np.float64)
        if flows.ndim != 4 or flows.shape[-1] != 2:
            raise ShapeMismatchError(
                f"flows must be (T-1, H, W, 2), got {flows.shape}"
            )
        if not np.all(np.isfinite(flows)):
            raise ShapeMismatchError("flow displacements must be finite")
        if self.direction not in (FORWARD, BACKWARD):
            raise ShapeMismatchError(f"unknown direction {self.direction!r}")
        object.__setattr__(self, "flows", flows)

    @property
    def frames(self):
        return self.flows.shape[0] + 1

    @property
    def spatial_shape(self):
        return self.flows.shape[1:3]


@dataclass(frozen=True)
class OcclusionMask:
    """(T-1, H, W) booleans; True marks a pixel with no valid correspondence."""

    masks: np.ndarray

    def __post_init__(self):
        masks = np.asarray(self.masks, dtype=bool)
        if masks.ndim != 3:
            raise ShapeMismatchError(f"masks must be (T-1, H, W), got {masks.shape}")
        object.__setattr__(self, "masks", masks)

    @classmethod
    def none(cls, frames, height, width):
        return cls(np.zeros((frames - 1, height, width), dtype=bool))


@dataclass(frozen=True)
class EncodedFrames:
    """(T, H, W) int64 trajectory codes, n unique codes, and the anchor frame.

    The anchor frame carries codes 0..H*W-1 exactly once (frame 0 for
    backward flows, frame T-1 for forward flows).
    """

    codes: np.ndarray
    n: int
    anchor: int = 0
    direction: str = BACKWARD

    @property
    def frames(self):
        return self.codes.shape[0]

    @property
    def spatial_shape(self):
        return self.codes.shape[1:3]


@dataclass
class CodeDiagnostics:
    """Report produced by validate_codes; never raises."""

    ok: bool
    n: int
    novel_per_frame: list = field(default_factory=list)
    issues: list = field(default_factory=list)


def round_half_away(x):
    """Round to nearest integer, halves away from zero."""
    x = np.asarray(x)
    return np.copysign(np.floor(np.abs(x) + 0.5), x).astype(np.int64)


def _check_flow_occ(flow, occ):
    if occ.masks.shape != flow.flows.shape[:3]:
        raise ShapeMismatchError(
            f"occlusion shape {occ.masks.shape} does not match "
            f"flow shape {flow.flows.shape[:3]}"
        )


def _destinations(flow_slice, grid_y, grid_x, h, w):
    dy = round_half_away(grid_y + flow_slice[..., 0])
    dx = round_half_away(grid_x + flow_slice[..., 1])
    oob = (dy < 0) | (dy >= h) | (dx < 0) | (dx >= w)
    return dy, dx, oob


def flow_code(flow: FlowField, occ: OcclusionMask) -> EncodedFrames:
    """Encode a video's pixels as trajectory codes (see module docstring).

    Forward flows are handled by temporally flipping flows and occlusions,
    encoding as backward, and flipping the code frames back.
    """
    _check_flow_occ(flow, occ)
    h, w = flow.spatial_shape
    t = flow.frames

    flows = flow.flows
    masks = occ.masks
    if flow.direction == FORWARD:
        flows = flows[::-1]
        masks = masks[::-1]

    grid_y, grid_x = np.mgrid[0:h, 0:w]
    codes = np.empty((t, h, w), dtype=np.int64)
    codes[0] = np.arange(h * w, dtype=np.int64).reshape(h, w)
    n = h * w
    for i in range(t - 1):
        dy, dx, oob = _destinations(flows[i], grid_y, grid_x, h, w)
        fresh = (masks[i] | oob).astype(np.uint8)
        codes[i + 1], n = _kernels.propagate_codes(codes[i], dy, dx, fresh, n)

    anchor = 0
    if flow.direction == FORWARD:
        codes = codes[::-1].copy()
        anchor = t - 1
    return EncodedFrames(codes=codes, n=n, anchor=anchor, direction=flow.direction)


def flow_code_distant(
    flow_adj: FlowField,
    occ_adj: OcclusionMask,
    flow_dist: FlowField,
    occ_dist: OcclusionMask,
    d: int,
) -> EncodedFrames:
    """Encode with distant-frame flows taking priority over adjacent ones.

    Slice i of `flow_dist` relates frame i+1 to frame max(i-d, 0).  Each pixel
    of frame i+1 takes its code from the distant frame when that
    correspondence is valid, falls back to the adjacent correspondence, and
    otherwise receives a fresh code.
    """
    if d < 1:
        raise ShapeMismatchError(f"frame gap d must be >= 1, got {d}")
    _check_flow_occ(flow_adj, occ_adj)
    _check_flow_occ(flow_dist, occ_dist)
    if flow_adj.flows.shape != flow_dist.flows.shape:
        raise ShapeMismatchError(
            "adjacent and distant flows must agree in shape: "
            f"{flow_adj.flows.shape} vs {flow_dist.flows.shape}"
        )
    if flow_adj.direction != flow_dist.direction:
        raise ShapeMismatchError("adjacent and distant flow directions differ")

    h, w = flow_adj.spatial_shape
    t = flow_adj.frames

    flows_a, masks_a = flow_adj.flows, occ_adj.masks
    flows_d, masks_d = flow_dist.flows, occ_dist.masks
    if flow_adj.direction == FORWARD:
        flows_a, masks_a = flows_a[::-1], masks_a[::-1]
        flows_d, masks_d = flows_d[::-1], masks_d[::-1]

    grid_y, grid_x = np.mgrid[0:h, 0:w]
    codes = np.empty((t, h, w), dtype=np.int64)
    codes[0] = np.arange(h * w, dtype=np.int64).reshape(h, w)
    n = h * w
    for i in range(t - 1):
        src_dist = max(i - d, 0)
        ady, adx, aoob = _destinations(flows_a[i], grid_y, grid_x, h, w)
        ddy, ddx, doob = _destinations(flows_d[i], grid_y, grid_x, h, w)
        take_dist = ~masks_d[i] & ~doob
        take_adj = ~take_dist & ~masks_a[i] & ~aoob
        fresh = ~take_dist & ~take_adj

        frame = np.where(
            take_dist,
            codes[src_dist][np.clip(ddy, 0, h - 1), np.clip(ddx, 0, w - 1)],
            codes[i][np.clip(ady, 0, h - 1), np.clip(adx, 0, w - 1)],
        )
        idx = np.flatnonzero(fresh)
        frame.flat[idx] = n + np.arange(idx.size, dtype=np.int64)
        n += int(idx.size)
        codes[i + 1] = frame

    anchor = 0
    if flow_adj.direction == FORWARD:
        codes = codes[::-1].copy()
        anchor = t - 1
    return EncodedFrames(codes=codes, n=n, anchor=anchor, direction=flow_adj.direction)


def validate_codes(enc: EncodedFrames) -> CodeDiagnostics:
    """Check the EncodedFrames invariants and report per-frame novelty.

    Report-only: violations are listed in `issues`, never raised.
    """
    issues = []
    codes = enc.codes
    t, h, w = codes.shape

    if codes.min() < 0 or codes.max() >= enc.n:
        issues.append(
            f"code range violation: values span [{codes.min()}, {codes.max()}] "
            f"but n={enc.n}"
        )
        counts = np.bincount(codes.ravel()[(codes.ravel() >= 0) & (codes.ravel() < enc.n)],
                             minlength=enc.n)
    else:
        counts = np.bincount(codes.ravel(), minlength=enc.n)
    missing = np.flatnonzero(counts == 0)
    if missing.size:
        issues.append(f"{missing.size} code(s) in [0, n) never occur, first: {missing[0]}")

    anchor_codes = codes[enc.anchor].ravel()
    base = np.bincount(anchor_codes[(anchor_codes >= 0) & (anchor_codes < h * w)],
                       minlength=h * w)
    if anchor_codes.min() < 0 or anchor_codes.max() >= h * w or np.any(base != 1):
        issues.append(
            f"anchor frame {enc.anchor} does not carry codes 0..{h * w - 1} exactly once"
        )

    # Novel codes per frame, scanning temporally outward from the anchor.
    order = range(t) if enc.anchor == 0 else range(t - 1, -1, -1)
    seen = np.zeros(max(enc.n, int(codes.max()) + 1), dtype=bool)
    novel = [0] * t
    for i in order:
        frame_codes = np.unique(codes[i])
        novel[i] = int(np.count_nonzero(~seen[frame_codes]))
        seen[frame_codes] = True

    return CodeDiagnostics(ok=not issues, n=enc.n, novel_per_frame=novel, issues=issues)


def decode(repo, enc: EncodedFrames) -> np.ndarray:
    """Reconstruct a (T, C, H, W) video by looking codes up in the repository."""
    slots = repo.slots if hasattr(repo, "slots") else np.asarray(repo)
    if slots.ndim == 1:
        slots = slots[:, None]
    if enc.codes.max() >= slots.shape[0]:
        raise CodeRangeError(
            f"code {int(enc.codes.max())} out of repository bounds ({slots.shape[0]})"
        )
    return slots[enc.codes].transpose(0, 3, 1, 2)
