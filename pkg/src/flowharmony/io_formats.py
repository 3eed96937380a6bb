"""Bit-exact readers and writers for flows, masks, frames, tensors, config.

All writers are atomic (temp file + rename).  The portable tensor container
is the interchange format shared with out-of-process callers:

    magic "MDTN" | version u8 (=1) | dtype u8 | ndim u8 | dims u64-LE each |
    row-major little-endian payload

with dtype codes 0=float32, 1=float64, 2=uint64, 3=uint8.
"""

import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from .coding import BACKWARD, FORWARD, EncodedFrames, OcclusionMask
from .errors import ConfigError, FormatError

FLO_MAGIC = 202021.25

TENSOR_MAGIC = b"MDTN"
TENSOR_VERSION = 1
_DTYPES = {
    0: np.dtype("<f4"),
    1: np.dtype("<f8"),
    2: np.dtype("<u8"),
    3: np.dtype("<u1"),
}
_DTYPE_CODES = {v: k for k, v in _DTYPES.items()}


def _atomic_write(path, data: bytes):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_flo(path) -> np.ndarray:
    """Read one flow slice from a Middlebury .flo file.

    The file stores (u, v) = (horizontal, vertical) pairs; the returned
    (H, W, 2) array uses the internal (dy, dx) ordering.
    """
    data = Path(path).read_bytes()
    if len(data) < 12:
        raise FormatError(f"{path}: truncated header")
    (magic,) = struct.unpack("<f", data[:4])
    if magic != FLO_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    w, h = struct.unpack("<ii", data[4:12])
    if w <= 0 or h <= 0:
        raise FormatError(f"{path}: nonpositive dimensions {w}x{h}")
    expected = 12 + 8 * w * h
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, got {len(data)}")
    uv = np.frombuffer(data, dtype="<f4", offset=12).reshape(h, w, 2)
    return uv[..., ::-1].astype(np.float32)  # (u, v) -> (dy, dx)


def write_flo(path, flow_slice):
    """Write one (H, W, 2) (dy, dx) flow slice as a .flo file."""
    flow_slice = np.asarray(flow_slice, dtype=np.float32)
    if flow_slice.ndim != 3 or flow_slice.shape[-1] != 2:
        raise FormatError(f"flow slice must be (H, W, 2), got {flow_slice.shape}")
    if not np.all(np.isfinite(flow_slice)):
        raise FormatError("flow slice contains non-finite values")
    h, w = flow_slice.shape[:2]
    uv = np.ascontiguousarray(flow_slice[..., ::-1], dtype="<f4")
    data = struct.pack("<fii", FLO_MAGIC, w, h) + uv.tobytes()
    _atomic_write(path, data)


def write_tensor(path, array):
    """Serialize an ndarray into the portable tensor container."""
    array = np.asarray(array)
    dtype = array.dtype.newbyteorder("<")
    if dtype not in _DTYPE_CODES:
        raise FormatError(f"unsupported dtype {array.dtype}")
    header = TENSOR_MAGIC + struct.pack(
        "<BBB", TENSOR_VERSION, _DTYPE_CODES[dtype], array.ndim
    )
    header += struct.pack(f"<{array.ndim}Q", *array.shape)
    _atomic_write(path, header + np.ascontiguousarray(array, dtype=dtype).tobytes())


def read_tensor(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 7 or data[:4] != TENSOR_MAGIC:
        raise FormatError(f"{path}: not a tensor container")
    version, code, ndim = struct.unpack("<BBB", data[4:7])
    if version != TENSOR_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if code not in _DTYPES:
        raise FormatError(f"{path}: unknown dtype code {code}")
    if len(data) < 7 + 8 * ndim:
        raise FormatError(f"{path}: truncated dims")
    dims = struct.unpack(f"<{ndim}Q", data[7 : 7 + 8 * ndim])
    dtype = _DTYPES[code]
    expected = 7 + 8 * ndim + int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, got {len(data)}")
    return np.frombuffer(data, dtype=dtype, offset=7 + 8 * ndim).reshape(dims).copy()


def write_codes(path, enc: EncodedFrames):
    """Store trajectory codes as a uint64 tensor container."""
    write_tensor(path, enc.codes.astype(np.uint64))


def load_codes(path) -> EncodedFrames:
    """Load trajectory codes; n and the anchor frame are recovered from the
    code values (the anchor is the frame carrying 0..H*W-1 exactly once)."""
    codes = read_tensor(path)
    if codes.ndim != 3:
        raise FormatError(f"{path}: codes must be (T, H, W), got {codes.shape}")
    codes = codes.astype(np.int64)
    if codes.min() < 0:
        raise FormatError(f"{path}: negative code values")
    n = int(codes.max()) + 1
    t, h, w = codes.shape

    def is_anchor(frame):
        vals = frame.ravel()
        return vals.max() < h * w and np.array_equal(
            np.sort(vals), np.arange(h * w, dtype=np.int64)
        )

    if is_anchor(codes[0]):
        anchor, direction = 0, BACKWARD
    elif is_anchor(codes[t - 1]):
        anchor, direction = t - 1, FORWARD
    else:
        raise FormatError(f"{path}: no anchor frame carries codes 0..{h * w - 1}")
    return EncodedFrames(codes=codes, n=n, anchor=anchor, direction=direction)


def _image_files(directory):
    directory = Path(directory)
    files = sorted(p for p in directory.iterdir()
                   if p.suffix.lower() in (".png", ".pgm"))
    if not files:
        raise FormatError(f"{directory}: no image files")
    return files


def _load_image(path) -> np.ndarray:
    try:
        img = Image.open(path)
        arr = np.asarray(img)
    except Exception as exc:
        raise FormatError(f"{path}: unreadable image ({exc})") from exc
    if arr.dtype == np.uint8:
        scale = 255.0
    elif arr.dtype in (np.uint16, np.int32):
        scale = 65535.0
    else:
        raise FormatError(f"{path}: unsupported image dtype {arr.dtype}")
    arr = arr.astype(np.float64) / scale
    if arr.ndim == 2:
        arr = arr[..., None]
    return arr  # (H, W, C) in [0, 1]


def read_frames(directory) -> np.ndarray:
    """Load a lexicographically ordered frame directory as (T, C, H, W)."""
    frames = [_load_image(p) for p in _image_files(directory)]
    shapes = {f.shape for f in frames}
    if len(shapes) != 1:
        raise FormatError(f"{directory}: inconsistent frame sizes {sorted(shapes)}")
    return np.stack(frames).transpose(0, 3, 1, 2)


def write_frames(directory, video):
    """Write a (T, C, H, W) video in [0, 1] as 8-bit PNG frames."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    video = np.asarray(video)
    quantized = np.clip(np.round(video * 255.0), 0, 255).astype(np.uint8)
    for i, frame in enumerate(quantized):
        arr = frame.transpose(1, 2, 0)
        if arr.shape[-1] == 1:
            arr = arr[..., 0]
        buf = Path(directory / f"{i + 1:04d}.png")
        img = Image.fromarray(arr)
        fd, tmp = tempfile.mkstemp(dir=directory, suffix=".png")
        os.close(fd)
        img.save(tmp, format="PNG")
        os.replace(tmp, buf)


def write_image(path, image):
    """Write one (C, H, W) image in [0, 1] as an 8-bit PNG."""
    arr = np.clip(np.round(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)
    arr = arr.transpose(1, 2, 0)
    if arr.shape[-1] == 1:
        arr = arr[..., 0]
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".png")
    os.close(fd)
    Image.fromarray(arr).save(tmp, format="PNG")
    os.replace(tmp, path)


def read_masks(directory) -> OcclusionMask:
    """Load 8-bit grayscale masks; nonzero luminance means occluded."""
    masks = []
    for p in _image_files(directory):
        arr = _load_image(p)
        masks.append(arr.max(axis=-1) > 0)
    shapes = {m.shape for m in masks}
    if len(shapes) != 1:
        raise FormatError(f"{directory}: inconsistent mask sizes {sorted(shapes)}")
    return OcclusionMask(np.stack(masks))


def read_flow_dir(directory, direction=BACKWARD):
    """Load a directory of .flo files as a FlowField."""
    directory = Path(directory)
    files = sorted(directory.glob("*.flo"))
    if not files:
        raise FormatError(f"{directory}: no .flo files")
    slices = [read_flo(p) for p in files]
    shapes = {s.shape for s in slices}
    if len(shapes) != 1:
        raise FormatError(f"{directory}: inconsistent flow sizes {sorted(shapes)}")
    from .coding import FlowField

    return FlowField(flows=np.stack(slices).astype(np.float64), direction=direction)


def write_flow_dir(directory, flow):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, flow_slice in enumerate(flow.flows):
        write_flo(directory / f"{i + 1:04d}.flo", flow_slice)


@dataclass
class RunConfig:
    """Resolved run configuration (file defaults merged under explicit flags)."""

    w: float = 0.8
    steps: int = 20
    start_fraction: float = 1.0
    mode: str = "sample_space"
    harmonizer: str = "global"
    kernel_length: int = 8
    sigma_seed: Optional[float] = None
    flow_direction: str = BACKWARD
    seed: int = 0
    paths: dict = field(default_factory=dict)

    @property
    def sigma(self):
        if self.sigma_seed is None:
            return None
        return 100.0 ** self.sigma_seed + 0.2


_PATH_KEYS = ("flows", "occlusions", "video", "codes", "out")


def read_config(path) -> RunConfig:
    """Parse a key=value config file; unknown keys are rejected."""
    cfg = RunConfig()
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            if key == "w":
                cfg.w = float(value)
                if not 0.0 <= cfg.w <= 1.0:
                    raise ConfigError(f"{path}:{lineno}: w must be in [0, 1]")
            elif key == "steps":
                cfg.steps = int(value)
                if cfg.steps < 1:
                    raise ConfigError(f"{path}:{lineno}: steps must be >= 1")
            elif key == "start_fraction":
                cfg.start_fraction = float(value)
                if not 0.0 < cfg.start_fraction <= 1.0:
                    raise ConfigError(
                        f"{path}:{lineno}: start_fraction must be in (0, 1]"
                    )
            elif key == "mode":
                if value not in ("sample_space", "score_space", "latent"):
                    raise ConfigError(f"{path}:{lineno}: unknown mode {value!r}")
                cfg.mode = value
            elif key == "harmonizer":
                if value not in ("global", "local"):
                    raise ConfigError(f"{path}:{lineno}: unknown harmonizer {value!r}")
                cfg.harmonizer = value
            elif key == "kernel_length":
                cfg.kernel_length = int(value)
                if cfg.kernel_length < 0 or cfg.kernel_length % 2:
                    raise ConfigError(
                        f"{path}:{lineno}: kernel_length must be even and >= 0"
                    )
            elif key == "sigma_seed":
                cfg.sigma_seed = float(value)
            elif key == "flow_direction":
                if value not in (FORWARD, BACKWARD):
                    raise ConfigError(f"{path}:{lineno}: unknown direction {value!r}")
                cfg.flow_direction = value
            elif key == "seed":
                cfg.seed = int(value)
            elif key in _PATH_KEYS:
                cfg.paths[key] = value
            else:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return cfg
