"""Unsupervised tissue segmentation from the colorization value.

The colorization value c(r, g, b) = |r-m| + |g-m| + |b-m| with m the channel
mean is zero exactly on greys and large on stain colors, so an adaptive
threshold on it separates tissue from both white background and dark grey
noise. The HSV saturation channel is kept as the baseline it replaces.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConsistencyError, FormatError
from .pyramid import PyramidImage

COLORIZATION_MAX = 340  # c(255,0,0) = 170 + 85 + 85

DEFAULT_SEGMENTATION_DOWNSAMPLE = 32


@dataclass
class TissueMask:
    """Binary tissue raster at one pyramid level (1 = tissue)."""

    slide_id: str
    level: int
    width: int
    height: int
    bits: np.ndarray  # (height, width) uint8 in {0, 1}
    degenerate: bool = False  # set when the histogram had a single occupied bin


def colorization_map(rgb: np.ndarray) -> np.ndarray:
    """Per-pixel colorization value, rounded half-up to an int in [0, 340].

    Computed in exact integer arithmetic: with s = r+g+b the value equals
    (|3r-s| + |3g-s| + |3b-s|) / 3.
    """
    arr = rgb.astype(np.int32)
    s = arr.sum(axis=-1, keepdims=True)
    num = np.abs(3 * arr - s).sum(axis=-1)  # = 3c, exact
    return ((2 * num + 3) // 6).astype(np.int32)


def saturation_map(rgb: np.ndarray) -> np.ndarray:
    """HSV saturation scaled to [0, 255], rounded half-up; 0 where max = 0."""
    arr = rgb.astype(np.int32)
    mx = arr.max(axis=-1)
    mn = arr.min(axis=-1)
    out = np.zeros(mx.shape, dtype=np.int32)
    nz = mx > 0
    d = mx[nz] - mn[nz]
    out[nz] = (2 * 255 * d + mx[nz]) // (2 * mx[nz])
    return out


def otsu_threshold(histogram) -> int:
    """Threshold maximizing between-class variance over splits (<= t | > t).

    Works on any histogram length; the canonical use is 256 bins. Ties break
    toward the smallest t. If all mass sits in one bin, that bin index is
    returned. Comparisons use exact integer arithmetic, so the result equals
    exhaustive search with no floating-point ambiguity.
    """
    h = [int(v) for v in histogram]
    if any(v < 0 for v in h):
        raise ValueError("histogram counts must be non-negative")
    total = sum(h)
    if total == 0:
        raise ValueError("histogram must contain at least one count")
    occupied = [i for i, v in enumerate(h) if v > 0]
    if len(occupied) == 1:
        return occupied[0]

    total_sum = sum(i * v for i, v in enumerate(h))
    best_t = 0
    best_num = -1  # score = num / den with num = (s0*w1 - s1*w0)^2
    best_den = 1
    w0 = 0
    s0 = 0
    for t in range(len(h)):
        w0 += h[t]
        s0 += t * h[t]
        w1 = total - w0
        if w0 == 0 or w1 == 0:
            continue
        s1 = total_sum - s0
        num = (s0 * w1 - s1 * w0) ** 2
        den = w0 * w1
        if num * best_den > best_num * den:
            best_num, best_den, best_t = num, den, t
    return best_t


def segment_tissue(
    pyr: PyramidImage,
    method: str = "colorization",
    level: int | None = None,
) -> TissueMask:
    """Threshold the chosen scalar map at its Otsu optimum; tissue is strictly above.

    ``level`` defaults to the level with downsample 32 (memory-bounded), or
    the coarsest level if none matches. A single-color slide yields an empty
    mask with the ``degenerate`` flag set.
    """
    if method not in ("colorization", "saturation"):
        raise ValueError(f"unknown segmentation method '{method}'")
    if level is None:
        try:
            level = pyr.level_index_for_downsample(DEFAULT_SEGMENTATION_DOWNSAMPLE)
        except ValueError:
            level = len(pyr.levels) - 1
    if not 0 <= level < len(pyr.levels):
        raise ValueError(f"pyramid has no level {level}")

    raster = np.asarray(pyr.pixels[level])
    smap = colorization_map(raster) if method == "colorization" else saturation_map(raster)
    n_bins = (COLORIZATION_MAX if method == "colorization" else 255) + 1
    hist = np.bincount(smap.ravel(), minlength=n_bins)
    occupied = np.flatnonzero(hist)
    lv = pyr.levels[level]
    if occupied.size == 1:
        return TissueMask(
            slide_id=pyr.slide_id,
            level=level,
            width=lv.width,
            height=lv.height,
            bits=np.zeros(smap.shape, dtype=np.uint8),
            degenerate=True,
        )
    t = otsu_threshold(hist)
    return TissueMask(
        slide_id=pyr.slide_id,
        level=level,
        width=lv.width,
        height=lv.height,
        bits=(smap > t).astype(np.uint8),
    )


def binary_closing(mask: TissueMask, radius: int) -> TissueMask:
    """Optional post-pass: morphological closing with a disk of cell radius r.

    Off by default everywhere; provided for noisy real-world slides.
    """
    from scipy import ndimage

    if radius <= 0:
        return mask
    yy, xx = np.mgrid[-radius : radius + 1, -radius : radius + 1]
    disk = (yy * yy + xx * xx) <= radius * radius
    closed = ndimage.binary_closing(mask.bits.astype(bool), structure=disk)
    return TissueMask(
        slide_id=mask.slide_id,
        level=mask.level,
        width=mask.width,
        height=mask.height,
        bits=closed.astype(np.uint8),
        degenerate=mask.degenerate,
    )


# ---------------------------------------------------------------------------
# Mask file format: mask.json header + mask.bin row-major {0,1} bytes


def save_mask(mask: TissueMask, path: str | Path) -> None:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    header = {
        "slide_id": mask.slide_id,
        "level": mask.level,
        "width": mask.width,
        "height": mask.height,
    }
    with open(root / "mask.json", "w") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
        fh.write("\n")
    mask.bits.astype(np.uint8).tofile(root / "mask.bin")


def load_mask(path: str | Path) -> TissueMask:
    root = Path(path)
    try:
        with open(root / "mask.json") as fh:
            header = json.load(fh)
    except FileNotFoundError as exc:
        raise FormatError(f"{root}: missing mask.json") from exc
    w, h = int(header["width"]), int(header["height"])
    bin_path = root / "mask.bin"
    if not bin_path.is_file():
        raise FormatError(f"{root}: missing mask.bin")
    bits = np.fromfile(bin_path, dtype=np.uint8)
    if bits.size != w * h:
        raise ConsistencyError(
            f"{bin_path}: {bits.size} bytes, header declares {w}x{h}"
        )
    if bits.size and bits.max() > 1:
        raise FormatError(f"{bin_path}: values outside {{0,1}}")
    return TissueMask(
        slide_id=str(header["slide_id"]),
        level=int(header["level"]),
        width=w,
        height=h,
        bits=bits.reshape(h, w),
    )
