"""Multi-resolution slide model, on-disk format, region reading, synthetic slides.

A slide is a directory holding ``meta.json`` plus one binary PPM (P6) file per
pyramid level. Level 0 is full resolution; coarser levels are exact block
means of level 0, rounded half-up. Region reads always resolve against level
0 so that downsampling is bit-reproducible.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConsistencyError, FormatError
from .geometry import polygon_diameter

# Synthetic palette. Tumor hue sits ~76 degrees from normal tissue hue so a
# color-statistic classifier has signal to find; both are far from grey so the
# colorization value stays high across the whole tissue region.
TISSUE_RGB = (196, 60, 150)
TUMOR_RGB = (80, 70, 200)
SPECKLE_LO, SPECKLE_HI = 18, 48


@dataclass(frozen=True)
class LevelInfo:
    width: int
    height: int
    downsample: int


@dataclass
class PyramidImage:
    """In-memory multi-level RGB slide.

    ``pixels[i]`` is an (height, width, 3) uint8 array for ``levels[i]``.
    Arrays are marked read-only after construction; loaded slides are backed
    by read-only memory maps, so reads are cheap and thread-safe.
    """

    slide_id: str
    base_magnification: float
    microns_per_pixel: float
    levels: list[LevelInfo]
    pixels: list[np.ndarray]

    def __post_init__(self) -> None:
        validate_pyramid(self)
        for arr in self.pixels:
            arr.flags.writeable = False

    @property
    def width(self) -> int:
        return self.levels[0].width

    @property
    def height(self) -> int:
        return self.levels[0].height

    def level_index_for_downsample(self, downsample: int) -> int:
        for i, lv in enumerate(self.levels):
            if lv.downsample == downsample:
                return i
        raise ValueError(f"no pyramid level with downsample {downsample}")


def validate_pyramid(pyr: PyramidImage) -> None:
    if not pyr.levels:
        raise ValueError("pyramid must declare at least one level")
    if len(pyr.levels) != len(pyr.pixels):
        raise ConsistencyError("levels and pixel planes differ in count")
    if pyr.levels[0].downsample != 1:
        raise ValueError("level 0 must have downsample 1")
    if pyr.microns_per_pixel <= 0:
        raise ValueError("microns_per_pixel must be positive")
    w0, h0 = pyr.levels[0].width, pyr.levels[0].height
    if w0 <= 0 or h0 <= 0:
        raise ValueError("level 0 dimensions must be positive")
    prev = 0
    for i, lv in enumerate(pyr.levels):
        if lv.downsample <= prev:
            raise ValueError("downsamples must be strictly increasing")
        if lv.downsample & (lv.downsample - 1):
            raise ValueError(f"downsample {lv.downsample} is not a power of two")
        prev = lv.downsample
        exp_w = -(-w0 // lv.downsample)
        exp_h = -(-h0 // lv.downsample)
        if (lv.width, lv.height) != (exp_w, exp_h):
            raise ConsistencyError(
                f"level {i} declares {lv.width}x{lv.height}, "
                f"expected {exp_w}x{exp_h} for downsample {lv.downsample}"
            )
        arr = pyr.pixels[i]
        if arr.shape != (lv.height, lv.width, 3) or arr.dtype != np.uint8:
            raise ConsistencyError(
                f"level {i} pixel array has shape {arr.shape}, "
                f"expected {(lv.height, lv.width, 3)} uint8"
            )


# ---------------------------------------------------------------------------
# PPM (P6) codec


def write_ppm(path: Path, pixels: np.ndarray) -> None:
    """Write an (h, w, 3) uint8 array as binary PPM, maxval 255."""
    h, w = pixels.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(pixels).tobytes())


def _read_ppm_header(fh) -> tuple[int, int, int]:
    """Parse the P6 header, returning (width, height, data offset)."""
    magic = fh.read(2)
    if magic != b"P6":
        raise FormatError("not a binary PPM (P6) file")
    fields = []
    while len(fields) < 3:
        ch = fh.read(1)
        if not ch:
            raise FormatError("truncated PPM header")
        if ch == b"#":  # comment runs to end of line
            while ch not in (b"\n", b""):
                ch = fh.read(1)
            continue
        if ch.isspace():
            continue
        tok = b""
        while ch and not ch.isspace():
            tok += ch
            ch = fh.read(1)
        fields.append(int(tok))
    w, h, maxval = fields
    if maxval != 255:
        raise FormatError(f"unsupported PPM maxval {maxval}")
    return w, h, fh.tell()


def read_ppm(path: Path, mmap: bool = True) -> np.ndarray:
    """Read a binary PPM into an (h, w, 3) uint8 array.

    With ``mmap`` the pixel payload stays on disk (read-only memory map), so
    opening a multi-gigabyte level costs nothing until pixels are touched.
    """
    with open(path, "rb") as fh:
        w, h, offset = _read_ppm_header(fh)
    expected = offset + w * h * 3
    actual = Path(path).stat().st_size
    if actual < expected:
        raise FormatError(f"{path}: payload truncated ({actual} < {expected} bytes)")
    if mmap:
        return np.memmap(path, dtype=np.uint8, mode="r", offset=offset, shape=(h, w, 3))
    with open(path, "rb") as fh:
        fh.seek(offset)
        data = np.fromfile(fh, dtype=np.uint8, count=w * h * 3)
    return data.reshape(h, w, 3)


# ---------------------------------------------------------------------------
# Slide directory format


def save_pyramid(pyr: PyramidImage, path: str | Path) -> None:
    """Write ``meta.json`` plus ``level_<i>.ppm`` per level. Bit-exact."""
    validate_pyramid(pyr)
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    meta = {
        "slide_id": pyr.slide_id,
        "base_magnification": pyr.base_magnification,
        "microns_per_pixel": pyr.microns_per_pixel,
        "levels": [
            {"width": lv.width, "height": lv.height, "downsample": lv.downsample}
            for lv in pyr.levels
        ],
    }
    with open(root / "meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for i, arr in enumerate(pyr.pixels):
        write_ppm(root / f"level_{i}.ppm", arr)


def load_pyramid(path: str | Path) -> PyramidImage:
    """Load a slide directory written by :func:`save_pyramid`.

    Pixel planes are read-only memory maps; the round trip with
    ``save_pyramid`` is byte-identical.
    """
    root = Path(path)
    meta_path = root / "meta.json"
    if not meta_path.is_file():
        raise FormatError(f"{root}: missing meta.json")
    try:
        with open(meta_path) as fh:
            meta = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{meta_path}: invalid JSON ({exc})") from exc
    for key in ("slide_id", "base_magnification", "microns_per_pixel", "levels"):
        if key not in meta:
            raise FormatError(f"{meta_path}: missing key '{key}'")
    levels = []
    pixels = []
    for i, entry in enumerate(meta["levels"]):
        lv = LevelInfo(int(entry["width"]), int(entry["height"]), int(entry["downsample"]))
        ppm_path = root / f"level_{i}.ppm"
        if not ppm_path.is_file():
            raise FormatError(f"{root}: missing pixel file for level {i}")
        try:
            arr = read_ppm(ppm_path)
        except FormatError as exc:
            raise FormatError(f"level {i}: {exc}") from exc
        if arr.shape[:2] != (lv.height, lv.width):
            raise ConsistencyError(
                f"level {i}: PPM is {arr.shape[1]}x{arr.shape[0]}, "
                f"meta declares {lv.width}x{lv.height}"
            )
        levels.append(lv)
        pixels.append(arr)
    return PyramidImage(
        slide_id=str(meta["slide_id"]),
        base_magnification=float(meta["base_magnification"]),
        microns_per_pixel=float(meta["microns_per_pixel"]),
        levels=levels,
        pixels=pixels,
    )


# ---------------------------------------------------------------------------
# Region reading


def block_mean_u8(arr: np.ndarray, factor: int) -> np.ndarray:
    """Exact factor x factor block mean of a uint8 image, rounded half-up.

    Partial blocks at the right/bottom edge average over in-bounds pixels
    only. Output is ceil(h/f) x ceil(w/f).
    """
    if factor == 1:
        return arr.copy()
    h, w = arr.shape[:2]
    oh = -(-h // factor)
    ow = -(-w // factor)
    pad_h, pad_w = oh * factor - h, ow * factor - w
    padded = np.pad(arr, ((0, pad_h), (0, pad_w), (0, 0)))
    sums = padded.reshape(oh, factor, ow, factor, 3).sum(axis=(1, 3), dtype=np.uint32)
    rows = np.minimum(np.arange(1, oh + 1) * factor, h) - np.arange(oh) * factor
    cols = np.minimum(np.arange(1, ow + 1) * factor, w) - np.arange(ow) * factor
    counts = np.multiply.outer(rows, cols).astype(np.uint32)[..., None]
    # floor(s/c + 1/2) on non-negative integers
    return ((2 * sums + counts) // (2 * counts)).astype(np.uint8)


def read_region(
    pyr: PyramidImage, x: int, y: int, side: int, target_size: int = 256
) -> np.ndarray:
    """Read a square level-0 region, downsampled to ``target_size``.

    The region may extend past the slide on any side; out-of-bounds pixels
    are white. Downsampling is an exact f x f block mean (f = side /
    target_size) rounded half-up, so results are bit-reproducible.
    """
    if side <= 0 or side % target_size != 0:
        raise ValueError(
            f"region side must be a positive multiple of {target_size}, got {side}"
        )
    factor = side // target_size
    level0 = pyr.pixels[0]
    h, w = level0.shape[:2]
    region = np.full((side, side, 3), 255, dtype=np.uint8)
    sx0, sy0 = max(x, 0), max(y, 0)
    sx1, sy1 = min(x + side, w), min(y + side, h)
    if sx1 > sx0 and sy1 > sy0:
        region[sy0 - y : sy1 - y, sx0 - x : sx1 - x] = level0[sy0:sy1, sx0:sx1]
    if factor == 1:
        return region
    f2 = factor * factor
    sums = region.reshape(target_size, factor, target_size, factor, 3).sum(
        axis=(1, 3), dtype=np.uint32
    )
    return ((2 * sums + f2) // (2 * f2)).astype(np.uint8)


# ---------------------------------------------------------------------------
# Synthetic slides


@dataclass(frozen=True)
class SynthConfig:
    """Recipe for a deterministic synthetic slide.

    All geometry is in level-0 pixels. Tumor diameters are in microns and
    converted through ``microns_per_pixel``, so one config can describe
    cohorts at different physical scales.
    """

    width: int
    height: int
    tissue_blob_count: int
    tumor_region_count: int
    tumor_diameter_range_um: tuple[float, float] = (300.0, 900.0)
    dark_noise_speckle_density: float = 0.0
    seed: int = 0
    microns_per_pixel: float = 0.25
    base_magnification: float = 40.0
    level_downsamples: tuple[int, ...] = (1, 4, 16, 32)
    slide_id: str | None = None

    def __post_init__(self) -> None:
        _validate_synth_config(self)


@dataclass
class SynthTruth:
    """Pixel-exact ground truth kept by the generator for verification."""

    tissue_mask: np.ndarray  # level-0 bool, True on painted tissue (incl. tumor)
    speckle_mask: np.ndarray  # level-0 bool, True on dark-noise pixels


@dataclass
class AnnotationRegion:
    region_id: str
    polygon: list[tuple[float, float]]
    closed: bool = True


@dataclass
class AnnotationSet:
    slide_id: str
    regions: list[AnnotationRegion] = field(default_factory=list)


def _validate_synth_config(cfg: SynthConfig) -> None:
    if cfg.width <= 0 or cfg.height <= 0:
        raise ValueError("slide dimensions must be positive")
    if cfg.tissue_blob_count < 0 or cfg.tumor_region_count < 0:
        raise ValueError("blob and tumor counts must be non-negative")
    if cfg.tumor_region_count > 0 and cfg.tissue_blob_count == 0:
        raise ValueError("tumor regions require at least one tissue blob")
    lo, hi = cfg.tumor_diameter_range_um
    if lo <= 0 or hi < lo:
        raise ValueError("tumor diameter range must satisfy 0 < min <= max")
    if not 0.0 <= cfg.dark_noise_speckle_density <= 1.0:
        raise ValueError("speckle density must lie in [0, 1]")
    if cfg.microns_per_pixel <= 0:
        raise ValueError("microns_per_pixel must be positive")


def _paint_textured(canvas, mask_bbox, bbox, base_rgb, rng):
    """Paint ``base_rgb`` with brightness and channel jitter where mask is set."""
    x0, y0 = bbox
    view = canvas[y0 : y0 + mask_bbox.shape[0], x0 : x0 + mask_bbox.shape[1]]
    n = int(mask_bbox.sum())
    if n == 0:
        return
    bright = rng.uniform(0.86, 1.14, n).astype(np.float32)
    jitter = rng.integers(-12, 13, (n, 3)).astype(np.float32)
    base = np.asarray(base_rgb, dtype=np.float32)
    colors = np.clip(base[None, :] * bright[:, None] + jitter, 0, 255)
    view[mask_bbox] = colors.astype(np.uint8)


def _blob_mask(cx, cy, radius, amps, phases, harmonics, width, height):
    """Star-shaped region mask restricted to its bounding box."""
    reach = radius * (1.0 + float(np.sum(amps)))
    x0 = max(int(cx - reach) - 1, 0)
    x1 = min(int(cx + reach) + 2, width)
    y0 = max(int(cy - reach) - 1, 0)
    y1 = min(int(cy + reach) + 2, height)
    ys = np.arange(y0, y1, dtype=np.float32) - np.float32(cy)
    xs = np.arange(x0, x1, dtype=np.float32) - np.float32(cx)
    dy = ys[:, None]
    dx = xs[None, :]
    dist = np.hypot(dx, dy)
    theta = np.arctan2(dy, dx)
    rho = np.full(theta.shape, radius, dtype=np.float32)
    for a, ph, k in zip(amps, phases, harmonics):
        rho += np.float32(radius * a) * np.sin(k * theta + np.float32(ph))
    return dist <= rho, (x0, y0)


def _tumor_polygon(rng, center, diameter_px, n_vertices=28):
    """Star-convex polygon whose max vertex distance equals ``diameter_px``."""
    jitter = rng.uniform(-0.3, 0.3, n_vertices)
    theta = 2.0 * math.pi * (np.arange(n_vertices) + jitter) / n_vertices
    amps = rng.uniform(0.0, 0.025, 2)
    phases = rng.uniform(0.0, 2.0 * math.pi, 2)
    radii = 1.0 + amps[0] * np.sin(3 * theta + phases[0]) + amps[1] * np.sin(5 * theta + phases[1])
    xs = radii * np.cos(theta)
    ys = radii * np.sin(theta)
    verts = list(zip(xs.tolist(), ys.tolist()))
    scale = diameter_px / polygon_diameter(verts)
    cx, cy = center
    return [(cx + x * scale, cy + y * scale) for x, y in verts]


def generate_synthetic_slide_with_truth(
    cfg: SynthConfig,
) -> tuple[PyramidImage, AnnotationSet, SynthTruth]:
    """Deterministic synthetic slide plus its pixel-level ground truth.

    Tissue blobs are irregular saturated pink regions on a white background;
    tumors are star-convex polygons of a distinct hue placed fully inside a
    blob; optional dark-grey speckle noise covers the background. The same
    config always produces byte-identical output.
    """
    _validate_synth_config(cfg)
    rng = np.random.default_rng(cfg.seed)
    w, h = cfg.width, cfg.height
    canvas = np.full((h, w, 3), 255, dtype=np.uint8)
    tissue_mask = np.zeros((h, w), dtype=bool)
    speckle_mask = np.zeros((h, w), dtype=bool)

    d_lo_um, d_hi_um = cfg.tumor_diameter_range_um
    tumor_r_max_px = (d_hi_um / cfg.microns_per_pixel) / 2.0

    # Blob radii: large enough to host the biggest requested tumor, small
    # enough to fit the slide with a margin for the irregular boundary.
    min_dim = min(w, h)
    r_lo = 0.12 * min_dim
    if cfg.tumor_region_count > 0:
        r_lo = max(r_lo, 1.5 * tumor_r_max_px)
    r_hi = max(r_lo * 1.15, 0.22 * min_dim)
    if 2.12 * r_lo > min_dim:
        raise ValueError(
            f"slide {w}x{h} too small for tumors up to {d_hi_um} um "
            f"at {cfg.microns_per_pixel} um/px"
        )
    r_hi = min(r_hi, min_dim / 2.12)

    harmonics = (2, 3, 5)
    blobs = []  # (cx, cy, radius, min_radius)
    for _ in range(cfg.tissue_blob_count):
        radius = rng.uniform(r_lo, r_hi)
        margin = 1.06 * radius
        cx = rng.uniform(margin, w - margin)
        cy = rng.uniform(margin, h - margin)
        amps = rng.uniform(0.0, 0.018, len(harmonics))
        phases = rng.uniform(0.0, 2.0 * math.pi, len(harmonics))
        mask_bbox, bbox = _blob_mask(cx, cy, radius, amps, phases, harmonics, w, h)
        _paint_textured(canvas, mask_bbox, bbox, TISSUE_RGB, rng)
        x0, y0 = bbox
        tissue_mask[y0 : y0 + mask_bbox.shape[0], x0 : x0 + mask_bbox.shape[1]] |= mask_bbox
        blobs.append((cx, cy, radius, radius * (1.0 - float(np.sum(amps)))))

    annots = AnnotationSet(slide_id="", regions=[])
    for t in range(cfg.tumor_region_count):
        host = blobs[int(rng.integers(len(blobs)))]
        d_um = float(rng.uniform(d_lo_um, d_hi_um))
        d_px = d_um / cfg.microns_per_pixel
        # 0.55 * d_px bounds the scaled vertex reach; keep it inside the blob
        max_off = max(host[3] - 0.55 * d_px, 0.0)
        phi = rng.uniform(0.0, 2.0 * math.pi)
        off = rng.uniform(0.0, max_off)
        center = (host[0] + off * math.cos(phi), host[1] + off * math.sin(phi))
        polygon = _tumor_polygon(rng, center, d_px)
        xs = np.array([p[0] for p in polygon])
        ys = np.array([p[1] for p in polygon])
        # rasterize the tumor fill by point-in-polygon over its bbox
        bx0 = max(int(xs.min()) - 1, 0)
        bx1 = min(int(xs.max()) + 2, w)
        by0 = max(int(ys.min()) - 1, 0)
        by1 = min(int(ys.max()) + 2, h)
        px = np.arange(bx0, bx1) + 0.5
        py = np.arange(by0, by1) + 0.5
        inside = _points_in_polygon(px, py, xs, ys)
        _paint_textured(canvas, inside, (bx0, by0), TUMOR_RGB, rng)
        annots.regions.append(AnnotationRegion(region_id=f"t{t}", polygon=polygon))

    if cfg.dark_noise_speckle_density > 0:
        block = 1024  # bounded temporaries on gigapixel slides
        for y0 in range(0, h, block):
            y1 = min(y0 + block, h)
            hit = rng.random((y1 - y0, w)) < cfg.dark_noise_speckle_density
            hit &= ~tissue_mask[y0:y1]
            n = int(hit.sum())
            if n:
                canvas[y0:y1][hit] = rng.integers(
                    SPECKLE_LO, SPECKLE_HI + 1, (n, 3), dtype=np.int64
                ).astype(np.uint8)
            speckle_mask[y0:y1] |= hit

    slide_id = cfg.slide_id or f"synth-{cfg.seed:08x}"
    annots.slide_id = slide_id
    levels = [LevelInfo(w, h, 1)]
    pixels = [canvas]
    for ds in cfg.level_downsamples[1:]:
        arr = block_mean_u8(canvas, ds)
        levels.append(LevelInfo(arr.shape[1], arr.shape[0], ds))
        pixels.append(arr)
    pyr = PyramidImage(
        slide_id=slide_id,
        base_magnification=cfg.base_magnification,
        microns_per_pixel=cfg.microns_per_pixel,
        levels=levels,
        pixels=pixels,
    )
    return pyr, annots, SynthTruth(tissue_mask=tissue_mask, speckle_mask=speckle_mask)


def generate_synthetic_slide(cfg: SynthConfig) -> tuple[PyramidImage, AnnotationSet]:
    """Synthetic slide and its tumor polygon annotations (see ``_with_truth``)."""
    pyr, annots, _ = generate_synthetic_slide_with_truth(cfg)
    return pyr, annots


def _points_in_polygon(px: np.ndarray, py: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Crossing-number test on the grid px x py; returns (len(py), len(px)) bools."""
    inside = np.zeros((py.size, px.size), dtype=bool)
    n = xs.size
    pxg = px[None, :]
    pyg = py[:, None]
    j = n - 1
    for i in range(n):
        yi, yj = ys[i], ys[j]
        xi, xj = xs[i], xs[j]
        crosses = (yi > pyg) != (yj > pyg)
        with np.errstate(divide="ignore", invalid="ignore"):
            xcross = xi + (pyg - yi) * (xj - xi) / (yj - yi)
        inside ^= crosses & (pxg < xcross)
        j = i
    return inside
