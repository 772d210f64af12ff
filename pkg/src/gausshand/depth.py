"""Depth-frame cropping/normalization and quadtree summarization.

Depth file formats
------------------
PGM
    Binary ``P5`` greymap, ``maxval`` 65535, big-endian 16-bit samples as the
    PGM standard requires. One sample per pixel, row-major, in millimeters;
    0 marks an invalid pixel.
Raw float
    A 12-byte little-endian header, then ``height * width`` little-endian
    float32 samples, row-major, in millimeters::

        bytes 0..3    magic b"GHDF"
        bytes 4..7    uint32 width
        bytes 8..11   uint32 height

    Zero or non-finite samples are invalid.
"""
from __future__ import annotations

import re
import struct
from dataclasses import dataclass

import numpy as np

from .errors import EmptyCrop, ParseError
from .gauss import CameraIntrinsics

CROP_SIDE_MM = 300.0
IMAGE_SIZE = 128
QUADTREE_C_MM = 20.0
BACKGROUND = 1.0  # normalized value of invalid pixels

RAW_MAGIC = b"GHDF"


@dataclass(frozen=True, eq=False)
class DepthFrame:
    """A cropped depth grid with its own pinhole camera.

    ``depth`` holds millimeters (0 where invalid); ``normalized`` maps the
    cube's depth range to [-1, 1]; ``cam`` projects camera-frame points into
    this grid's pixel coordinates.
    """

    depth: np.ndarray
    valid_mask: np.ndarray
    normalized: np.ndarray
    crop_center: np.ndarray
    crop_side: float
    cam: CameraIntrinsics

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    @property
    def width(self) -> int:
        return self.depth.shape[1]

    @property
    def n_valid(self) -> int:
        return int(self.valid_mask.sum())


@dataclass(frozen=True)
class ImageBlob:
    mu_i: tuple
    sigma_i: float
    z_i: float


@dataclass(frozen=True)
class Leaf:
    """Quadtree leaf covering rows ``r0:r1`` and columns ``c0:c1``."""

    r0: int
    r1: int
    c0: int
    c1: int
    n_valid: int
    blob: ImageBlob | None


def frame_from_grid(depth, cam: CameraIntrinsics, crop_side: float = CROP_SIDE_MM,
                    center_z: float | None = None, valid=None) -> DepthFrame:
    """Wrap an already-cropped mm grid as a :class:`DepthFrame` without resampling."""
    depth = np.array(depth, dtype=float)
    if valid is None:
        valid = np.isfinite(depth) & (depth > 0)
    valid = np.asarray(valid, dtype=bool)
    depth = np.where(valid, depth, 0.0)
    if center_z is None:
        if not valid.any():
            raise EmptyCrop("no valid pixel in the grid")
        center_z = float(depth[valid].mean())
    half = crop_side / 2.0
    normalized = np.where(valid, (depth - center_z) / half, BACKGROUND)
    center = np.array([0.0, 0.0, center_z])
    return DepthFrame(depth, valid, normalized, center, float(crop_side), cam)


def crop_window(cam: CameraIntrinsics, crop_center, crop_side: float = CROP_SIDE_MM):
    """Pixel window ``(u_left, v_top, width, height)`` of the cube's front face.

    Coordinates are continuous, with pixel centers at integers.
    """
    x, y, z = (float(v) for v in crop_center)
    if z <= 0:
        raise ValueError("crop center must lie in front of the camera")
    half = crop_side / 2.0
    u_c, v_c = cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy
    hw, hh = cam.fx * half / z, cam.fy * half / z
    return u_c - hw, v_c - hh, 2 * hw, 2 * hh


def crop_camera(cam: CameraIntrinsics, window, size: int = IMAGE_SIZE) -> CameraIntrinsics:
    u_left, v_top, w, h = window
    sx, sy = size / w, size / h
    return CameraIntrinsics(cam.fx * sx, cam.fy * sy,
                            (cam.cx - u_left) * sx - 0.5, (cam.cy - v_top) * sy - 0.5)


def preprocess(raw, cam: CameraIntrinsics, crop_center, crop_side: float = CROP_SIDE_MM,
               size: int = IMAGE_SIZE) -> DepthFrame:
    """Crop a raw depth image to the cube about ``crop_center`` and resample.

    The pixel window is the cube's projection at the given center. The depth
    range is then re-centered on the average valid depth, and pixels outside
    the re-centered cube are invalid. Resampling is nearest-neighbor, so
    depths are never blended across silhouettes.
    """
    raw = np.asarray(raw, dtype=float)
    crop_center = np.asarray(crop_center, dtype=float)
    window = crop_window(cam, crop_center, crop_side)
    u_left, v_top, w, h = window
    H, W = raw.shape

    idx = np.arange(size) + 0.5
    cols = np.rint(u_left + idx * (w / size)).astype(int)
    rows = np.rint(v_top + idx * (h / size)).astype(int)
    inside = (rows[:, None] >= 0) & (rows[:, None] < H) & (cols[None, :] >= 0) & (cols[None, :] < W)
    sampled = np.zeros((size, size))
    rr = np.clip(rows, 0, H - 1)
    cc = np.clip(cols, 0, W - 1)
    sampled[inside] = raw[np.ix_(rr, cc)][inside]
    sampled[~np.isfinite(sampled)] = 0.0

    half = crop_side / 2.0
    present = sampled > 0
    first = present & (np.abs(sampled - crop_center[2]) <= half)
    if not first.any():
        raise EmptyCrop(f"no valid pixel within the {crop_side:g} mm cube about {crop_center.tolist()}")
    z_avg = float(sampled[first].mean())
    valid = present & (np.abs(sampled - z_avg) <= half)
    if not valid.any():
        raise EmptyCrop("no valid pixel after re-centering the cube")

    depth = np.where(valid, sampled, 0.0)
    normalized = np.where(valid, (depth - z_avg) / half, BACKGROUND)
    center = np.array([crop_center[0], crop_center[1], z_avg])
    return DepthFrame(depth, valid, normalized, center, float(crop_side),
                      crop_camera(cam, window, size))


def quadtree_leaves(frame: DepthFrame, c: float = QUADTREE_C_MM, split_mixed: bool = True) -> list[Leaf]:
    """Recursive quadtree decomposition; leaves in NW, NE, SW, SE depth-first order.

    A quadrant becomes a leaf once the depth range over its valid pixels is
    below ``c`` mm, when it holds no valid pixel, or when it is one pixel.
    Odd sides split into ceil/floor halves.
    """
    if not c > 0:
        raise ValueError("quadtree threshold must be positive")
    valid = frame.valid_mask
    hi = np.where(valid, frame.depth, -np.inf)
    lo = np.where(valid, frame.depth, np.inf)
    leaves: list[Leaf] = []

    def visit(r0, r1, c0, c1):
        v = valid[r0:r1, c0:c1]
        n = int(v.sum())
        h, w = r1 - r0, c1 - c0
        if n == 0:
            leaves.append(Leaf(r0, r1, c0, c1, 0, None))
            return
        spread = hi[r0:r1, c0:c1].max() - lo[r0:r1, c0:c1].min()
        mixed = split_mixed and n < h * w
        if (spread < c and not mixed) or (h == 1 and w == 1):
            z = float(frame.depth[r0:r1, c0:c1][v].mean())
            mu = (0.5 * (c0 + c1 - 1), 0.5 * (r0 + r1 - 1))
            leaves.append(Leaf(r0, r1, c0, c1, n, ImageBlob(mu, 0.25 * (h + w), z)))
            return
        rm = r0 + (h + 1) // 2
        cm = c0 + (w + 1) // 2
        for a, b in ((r0, rm), (rm, r1)):
            if a == b:
                continue
            for d, e in ((c0, cm), (cm, c1)):
                if d != e:
                    visit(a, b, d, e)

    visit(0, frame.height, 0, frame.width)
    return leaves


def quadtree_encode(frame: DepthFrame, c: float = QUADTREE_C_MM, split_mixed: bool = True) -> list[ImageBlob]:
    """Image Gaussians (center, half side length, mean depth) of all non-empty leaves."""
    return [leaf.blob for leaf in quadtree_leaves(frame, c, split_mixed) if leaf.blob is not None]


def blob_arrays(blobs) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(mu (N, 2), sigma (N,), z (N,))`` from a list of :class:`ImageBlob`."""
    n = len(blobs)
    mu = np.array([b.mu_i for b in blobs], dtype=float).reshape(n, 2)
    sigma = np.array([b.sigma_i for b in blobs], dtype=float)
    z = np.array([b.z_i for b in blobs], dtype=float)
    return mu, sigma, z


def point_cloud(frame: DepthFrame, stride: int = 1) -> np.ndarray:
    """Valid pixels back-projected to camera-frame 3D points, shape (M, 3)."""
    rows, cols = np.nonzero(frame.valid_mask)
    if stride > 1:
        rows, cols = rows[::stride], cols[::stride]
    uv = np.stack([cols, rows], axis=-1).astype(float)
    return frame.cam.unproject(uv, frame.depth[rows, cols])


# -- file codecs ------------------------------------------------------------

_PGM_HEADER = re.compile(rb"P5\s+(?:#[^\n]*\s+)*(\d+)\s+(?:#[^\n]*\s+)*(\d+)\s+(?:#[^\n]*\s+)*(\d+)\s")


def encode_pgm(depth_mm) -> bytes:
    d = np.asarray(depth_mm, dtype=float)
    d = np.where(np.isfinite(d) & (d > 0), d, 0.0)
    d = np.clip(np.rint(d), 0, 65535).astype(">u2")
    h, w = d.shape
    return b"P5\n%d %d\n65535\n" % (w, h) + d.tobytes()


def decode_pgm(data: bytes) -> np.ndarray:
    m = _PGM_HEADER.match(data)
    if m is None:
        raise ParseError("not a binary (P5) PGM file")
    w, h, maxval = (int(g) for g in m.groups())
    if not 0 < maxval < 65536:
        raise ParseError(f"unsupported PGM maxval {maxval}")
    dtype = ">u2" if maxval > 255 else "u1"
    nbytes = w * h * np.dtype(dtype).itemsize
    body = data[m.end():]
    if len(body) != nbytes:
        raise ParseError(f"PGM body has {len(body)} bytes, header implies {nbytes} (truncated file?)")
    return np.frombuffer(body, dtype=dtype).reshape(h, w).astype(float)


def encode_raw(depth_mm) -> bytes:
    d = np.asarray(depth_mm, dtype="<f4")
    h, w = d.shape
    return RAW_MAGIC + struct.pack("<II", w, h) + d.tobytes()


def decode_raw(data: bytes) -> np.ndarray:
    if data[:4] != RAW_MAGIC or len(data) < 12:
        raise ParseError("missing raw depth magic")
    w, h = struct.unpack("<II", data[4:12])
    if len(data) != 12 + 4 * w * h:
        raise ParseError(f"raw depth body is {len(data) - 12} bytes, header implies {4 * w * h} (truncated file?)")
    d = np.frombuffer(data[12:], dtype="<f4").reshape(h, w).astype(float)
    d[~np.isfinite(d)] = 0.0
    return d


def decode_depth(data: bytes) -> np.ndarray:
    """Decode either supported format, chosen by magic bytes."""
    if data[:4] == RAW_MAGIC:
        return decode_raw(data)
    if data[:2] == b"P5":
        return decode_pgm(data)
    raise ParseError("unrecognized depth file (expected P5 PGM or raw float)")


def nearest_object_center(raw, cam: CameraIntrinsics, band_mm: float = CROP_SIDE_MM / 2.0) -> np.ndarray:
    """Crop center for frames with no annotation: centroid of the valid pixels
    within ``band_mm`` of the nearest valid depth, the hand being closest."""
    raw = np.asarray(raw, dtype=float)
    valid = np.isfinite(raw) & (raw > 0)
    if not valid.any():
        raise EmptyCrop("depth image has no valid pixel")
    near = valid & (raw <= raw[valid].min() + band_mm)
    rows, cols = np.nonzero(near)
    uv = np.stack([cols, rows], axis=-1).astype(float)
    return cam.unproject(uv, raw[rows, cols]).mean(axis=0)
