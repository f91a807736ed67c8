"""Colored-marker detection in raster frames.

Pipeline per frame: grayscale conversion, marker-channel subtraction,
binarization, 8-connected component labeling, centroid/area extraction,
and anatomical joint assignment (hip above knee above ankle, then
nearest-neighbor tracking).

Pixel coordinates are (u, v) = (column, row) with integer pixel centers.
Images are binary PPM (P6) in, PGM (P5) out for mask debug dumps.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

JOINTS = ("hip", "knee", "ankle")

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

DEFAULT_BINARIZE_THRESHOLD = 40
DEFAULT_MIN_AREA = 9
DEFAULT_MAX_JUMP_PX = 40.0


@dataclass
class RasterImage:
    width: int
    height: int
    pixels: np.ndarray  # (height, width, 3) uint8

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be at least 1x1")
        px = np.asarray(self.pixels, dtype=np.uint8)
        if px.shape != (self.height, self.width, 3):
            raise ValueError(f"pixel buffer shape {px.shape} does not match header")
        self.pixels = px

    @classmethod
    def filled(cls, width: int, height: int, color) -> "RasterImage":
        px = np.empty((height, width, 3), dtype=np.uint8)
        px[:, :] = color
        return cls(width, height, px)


@dataclass
class BinaryMask:
    width: int
    height: int
    bits: np.ndarray  # (height, width) bool

    def __post_init__(self):
        b = np.asarray(self.bits, dtype=bool)
        if b.shape != (self.height, self.width):
            raise ValueError("mask shape does not match header")
        self.bits = b


@dataclass(frozen=True)
class MarkerBlob:
    centroid: tuple  # (u, v) subpixel
    area: int
    label: int


@dataclass(frozen=True)
class MarkerObservation:
    t: float
    joint: str
    pixel: tuple  # (u, v)
    area_px: float
    valid: bool


def luma(pixels: np.ndarray) -> np.ndarray:
    return pixels.astype(float) @ LUMA_WEIGHTS


def marker_mask(
    frame: RasterImage,
    marker_color,
    binarize_threshold: int = DEFAULT_BINARIZE_THRESHOLD,
) -> BinaryMask:
    """Isolate marker-colored pixels.

    The marker color's dominant channel is compared against the pixel's
    grayscale value: colorless pixels subtract to zero, saturated marker
    pixels survive the threshold.
    """
    channel = int(np.argmax(np.asarray(marker_color)))
    gray = luma(frame.pixels)
    s = np.clip(frame.pixels[:, :, channel].astype(float) - gray, 0.0, 255.0)
    return BinaryMask(frame.width, frame.height, s > binarize_threshold)


class _UnionFind:
    def __init__(self):
        self.parent = []

    def make(self) -> int:
        self.parent.append(len(self.parent))
        return len(self.parent) - 1

    def find(self, a: int) -> int:
        root = a
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[a] != root:
            self.parent[a], a = root, self.parent[a]
        return root

    def union(self, a: int, b: int):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # keep the smaller root so labels stay in raster order
            if ra < rb:
                self.parent[rb] = ra
            else:
                self.parent[ra] = rb


@dataclass(frozen=True)
class Component:
    label: int
    pixels: np.ndarray  # (n, 2) int array of (u, v)

    @property
    def area(self) -> int:
        return len(self.pixels)


def connected_components(mask: BinaryMask, min_area: int = DEFAULT_MIN_AREA) -> list[Component]:
    """Two-pass 8-connectivity labeling with union-find.

    Components are numbered 0.. in raster order of their first pixel;
    components smaller than min_area are discarded.
    """
    bits = mask.bits
    h, w = bits.shape
    labels = np.full((h, w), -1, dtype=int)
    uf = _UnionFind()
    for r in range(h):
        row = bits[r]
        for c in np.flatnonzero(row):
            neighbors = []
            if c > 0 and labels[r, c - 1] >= 0:
                neighbors.append(labels[r, c - 1])
            if r > 0:
                for cc in (c - 1, c, c + 1):
                    if 0 <= cc < w and labels[r - 1, cc] >= 0:
                        neighbors.append(labels[r - 1, cc])
            if not neighbors:
                labels[r, c] = uf.make()
            else:
                m = min(neighbors)
                labels[r, c] = m
                for n in neighbors:
                    uf.union(m, n)
    comps: dict[int, list] = {}
    order: list[int] = []
    for r in range(h):
        for c in np.flatnonzero(bits[r]):
            root = uf.find(labels[r, c])
            if root not in comps:
                comps[root] = []
                order.append(root)
            comps[root].append((c, r))
    out = []
    next_label = 0
    for root in order:
        px = np.array(comps[root], dtype=int)
        if len(px) >= min_area:
            out.append(Component(next_label, px))
            next_label += 1
    return out


def extract_markers(components: list[Component], expected_count: int) -> list[MarkerBlob]:
    """Largest expected_count components as centroid/area blobs.

    Fewer components than expected is not an error; downstream validity
    flags carry the miss.
    """
    ranked = sorted(components, key=lambda comp: (-comp.area, comp.label))
    blobs = []
    for comp in ranked[:expected_count]:
        centroid = comp.pixels.mean(axis=0)
        blobs.append(MarkerBlob((float(centroid[0]), float(centroid[1])), comp.area, comp.label))
    return blobs


def assign_joint_labels(
    blobs: list[MarkerBlob],
    prev: list[MarkerObservation] | None = None,
    t: float = 0.0,
    max_jump_px: float = DEFAULT_MAX_JUMP_PX,
) -> list[MarkerObservation]:
    """Label up to three blobs as hip/knee/ankle.

    First frame: vertical order (hip highest in the image).  Later frames:
    greedy nearest-neighbor against the previous pixel of each joint with a
    maximum jump radius; unmatched joints come back valid=False carrying
    their last known pixel so tracking can resume after dropouts.
    """
    if len(blobs) > 3:
        raise ValueError("at most three marker blobs expected")
    if prev is None:
        if len(blobs) < 3:
            return [MarkerObservation(t, j, (0.0, 0.0), 0.0, False) for j in JOINTS]
        by_height = sorted(blobs, key=lambda b: (b.centroid[1], b.centroid[0]))
        return [
            MarkerObservation(t, joint, blob.centroid, float(blob.area), True)
            for joint, blob in zip(JOINTS, by_height)
        ]

    prev_by_joint = {o.joint: o for o in prev}
    pairs = []
    for joint in JOINTS:
        ref = np.asarray(prev_by_joint[joint].pixel, dtype=float)
        for bi, blob in enumerate(blobs):
            d = float(np.hypot(blob.centroid[0] - ref[0], blob.centroid[1] - ref[1]))
            # quantize sub-pixel distances so the u tie-break is reachable
            pairs.append((round(d, 0), blob.centroid[0], joint, bi, d))
    pairs.sort(key=lambda p: (p[0], p[1], JOINTS.index(p[2])))
    taken_joints: dict[str, MarkerBlob] = {}
    taken_blobs: set[int] = set()
    for _, _, joint, bi, d in pairs:
        if joint in taken_joints or bi in taken_blobs or d > max_jump_px:
            continue
        taken_joints[joint] = blobs[bi]
        taken_blobs.add(bi)
    out = []
    for joint in JOINTS:
        if joint in taken_joints:
            blob = taken_joints[joint]
            out.append(MarkerObservation(t, joint, blob.centroid, float(blob.area), True))
        else:
            out.append(
                MarkerObservation(t, joint, prev_by_joint[joint].pixel, 0.0, False)
            )
    return out


# ---------------------------------------------------------------------------
# Raster file formats


def write_ppm(path, image: RasterImage):
    with open(path, "wb") as fh:
        fh.write(f"P6\n{image.width} {image.height}\n255\n".encode())
        fh.write(image.pixels.tobytes())


def read_ppm(path) -> RasterImage:
    data = Path(path).read_bytes()
    header = re.match(rb"P6\s+(?:#[^\n]*\n\s*)*(\d+)\s+(\d+)\s+(\d+)\s", data)
    if not header:
        raise ValueError(f"{path}: not a binary PPM (P6) file")
    w, h, maxval = (int(g) for g in header.groups())
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 supported")
    raw = data[header.end() :]
    if len(raw) < w * h * 3:
        raise ValueError(f"{path}: truncated pixel data")
    px = np.frombuffer(raw[: w * h * 3], dtype=np.uint8).reshape(h, w, 3)
    return RasterImage(w, h, px.copy())


def write_pgm(path, mask: BinaryMask):
    with open(path, "wb") as fh:
        fh.write(f"P5\n{mask.width} {mask.height}\n255\n".encode())
        fh.write((mask.bits.astype(np.uint8) * 255).tobytes())


def frame_path(directory, index: int) -> Path:
    return Path(directory) / f"frame_{index:06d}.ppm"


def detect_frame(
    frame: RasterImage,
    marker_color,
    t: float,
    prev: list[MarkerObservation] | None,
    binarize_threshold: int = DEFAULT_BINARIZE_THRESHOLD,
    min_area: int = DEFAULT_MIN_AREA,
    max_jump_px: float = DEFAULT_MAX_JUMP_PX,
) -> list[MarkerObservation]:
    """Full single-frame pipeline: mask, label, extract, assign."""
    mask = marker_mask(frame, marker_color, binarize_threshold)
    comps = connected_components(mask, min_area)
    blobs = extract_markers(comps, expected_count=3)
    return assign_joint_labels(blobs, prev, t=t, max_jump_px=max_jump_px)
