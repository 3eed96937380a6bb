import numpy as np
import pytest

from flowharmony import FlowField, OcclusionMask, round_half_away


class DisjointSet:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, a):
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


def trajectory_oracle_partition(flow: FlowField, occ: OcclusionMask):
    """Naive frame-by-frame trajectory partition, independent of the coding
    implementation: link each pixel to its rounded flow correspondent unless
    occluded or out of bounds."""
    t = flow.frames
    h, w = flow.spatial_shape
    ds = DisjointSet(t * h * w)

    def pid(i, y, x):
        return (i * h + y) * w + x

    for i in range(t - 1):
        for y in range(h):
            for x in range(w):
                if occ.masks[i, y, x]:
                    continue
                dy = int(round_half_away(y + flow.flows[i, y, x, 0]))
                dx = int(round_half_away(x + flow.flows[i, y, x, 1]))
                if not (0 <= dy < h and 0 <= dx < w):
                    continue
                if flow.direction == "backward":
                    ds.union(pid(i + 1, y, x), pid(i, dy, dx))
                else:
                    ds.union(pid(i, y, x), pid(i + 1, dy, dx))
    return np.array([ds.find(p) for p in range(t * h * w)])


def canonical_partition(labels):
    """Relabel a flat label array by first occurrence, for partition equality."""
    labels = np.asarray(labels).ravel()
    _, canon = np.unique(labels, return_inverse=True)
    first = {}
    out = np.empty(labels.size, dtype=np.int64)
    nxt = 0
    for i, lab in enumerate(canon):
        if lab not in first:
            first[lab] = nxt
            nxt += 1
        out[i] = first[lab]
    return out


def random_instance(rng, t=None, h=None, w=None, occ_rate=0.1, direction="backward"):
    """Random flow/occlusion instance at desk scale."""
    t = t or rng.integers(2, 7)
    h = h or rng.integers(2, 9)
    w = w or rng.integers(2, 9)
    flows = rng.uniform(-2.0, 2.0, size=(t - 1, h, w, 2))
    masks = rng.random((t - 1, h, w)) < occ_rate
    return FlowField(flows, direction), OcclusionMask(masks)


def translating_texture(t=5, h=24, w=24, c=1, shift=1, seed=0):
    """Texture translating `shift` px right per frame with wraparound, plus
    the exact backward flows describing that motion."""
    rng = np.random.default_rng(seed)
    base = rng.random((c, h, w))
    video = np.stack([np.roll(base, i * shift, axis=2) for i in range(t)])
    flows = np.zeros((t - 1, h, w, 2))
    flows[..., 1] = -shift  # frame i+1 pixel came from x - shift in frame i
    return video, FlowField(flows, "backward")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
