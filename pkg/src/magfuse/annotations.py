"""Ground-truth management: polygons, patch labels, coarse-annotation noise.

Clean labels are rasterized once on the finest grid by exact polygon-cell
clipping and projected to coarser grids. Coarse-annotation noise is simulated
in two steps mirroring how imprecise outlines err in practice: dilating the
positive region (false positives around true tumors) and dropping whole tumor
regions with probability eta (false negatives).
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import ConsistencyError, FormatError
from .geometry import clipped_area, polygon_area, polygon_is_simple
from .grid import MagSpec, PatchGrid
from .pyramid import AnnotationRegion, AnnotationSet

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class NoiseConfig:
    """Coarse-annotation noise parameters.

    The named presets are invented defaults, not calibrated to any
    published noise regime; override freely.
    """

    margin_cells: int = 0
    eta: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.margin_cells < 0:
            raise ValueError("margin_cells must be non-negative")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")

    @classmethod
    def preset(cls, name: str, seed: int = 0) -> "NoiseConfig":
        presets = {"weak": (2, 0.1), "strong": (4, 0.3)}
        if name not in presets:
            raise ValueError(f"unknown noise preset '{name}'")
        margin, eta = presets[name]
        return cls(margin_cells=margin, eta=eta, seed=seed)


@dataclass
class LabelGrid:
    """Per-cell binary ground truth aligned with a PatchGrid."""

    slide_id: str
    mag_spec: MagSpec
    rows: int
    cols: int
    labels: np.ndarray  # (rows, cols) uint8 in {0, 1}
    provenance: dict = field(default_factory=lambda: {"kind": "clean"})

    def matches(self, grid: PatchGrid) -> bool:
        return (
            self.rows == grid.rows
            and self.cols == grid.cols
            and self.mag_spec == grid.mag_spec
        )


@dataclass
class Dataset:
    """Labeled patch references across slides for one magnification."""

    entries: list[dict]  # {slide_id, magnification, index, label}
    balanced: bool
    seed: int


# ---------------------------------------------------------------------------
# Annotation file format


def load_annotations(path: str | Path) -> AnnotationSet:
    """Read the annotation JSON, rejecting degenerate or self-crossing polygons."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError as exc:
        raise FormatError(f"missing annotation file {path}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc
    regions = []
    for entry in doc.get("regions", []):
        poly = [(float(x), float(y)) for x, y in entry["polygon"]]
        if len(poly) < 3:
            raise FormatError(
                f"{path}: region {entry.get('region_id')} has fewer than 3 vertices"
            )
        if not all(np.isfinite(v) for p in poly for v in p):
            raise FormatError(f"{path}: region {entry.get('region_id')} has non-finite vertices")
        if not polygon_is_simple(poly):
            raise FormatError(f"{path}: region {entry.get('region_id')} self-intersects")
        regions.append(AnnotationRegion(region_id=str(entry.get("region_id", "")), polygon=poly))
    return AnnotationSet(slide_id=str(doc["slide_id"]), regions=regions)


def save_annotations(annots: AnnotationSet, path: str | Path) -> None:
    doc = {
        "slide_id": annots.slide_id,
        "regions": [
            {"region_id": r.region_id, "polygon": [[x, y] for x, y in r.polygon]}
            for r in annots.regions
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Rasterization


def tumor_area_fractions(annots: AnnotationSet, grid: PatchGrid) -> np.ndarray:
    """Exact per-cell tumor area fraction via rectangle clipping + shoelace.

    Areas of distinct regions are summed per cell; overlapping annotation
    polygons would be double-counted, so keep regions disjoint.
    """
    s = grid.mag_spec.patch_size
    out = np.zeros((grid.rows, grid.cols), dtype=np.float64)
    cell_area = float(s) * float(s)
    for region in annots.regions:
        if polygon_area(region.polygon) == 0.0:
            warnings.warn(
                f"region {region.region_id}: degenerate polygon ignored", stacklevel=2
            )
            continue
        xs = [p[0] for p in region.polygon]
        ys = [p[1] for p in region.polygon]
        c0 = max(int(min(xs) // s), 0)
        c1 = min(int(max(xs) // s) + 1, grid.cols)
        r0 = max(int(min(ys) // s), 0)
        r1 = min(int(max(ys) // s) + 1, grid.rows)
        for row in range(r0, r1):
            for col in range(c0, c1):
                a = clipped_area(
                    region.polygon, col * s, row * s, (col + 1) * s, (row + 1) * s
                )
                if a > 0.0:
                    out[row, col] += a / cell_area
    return out


def rasterize_labels(
    annots: AnnotationSet, grid: PatchGrid, min_frac: float = 0.0
) -> LabelGrid:
    """Cell label 1 iff the tumor-intersection fraction strictly exceeds min_frac.

    min_frac = 0 means any strictly positive intersection area marks the cell.
    """
    if not 0.0 <= min_frac <= 1.0:
        raise ValueError("min_frac must lie in [0, 1]")
    fractions = tumor_area_fractions(annots, grid)
    return LabelGrid(
        slide_id=annots.slide_id,
        mag_spec=grid.mag_spec,
        rows=grid.rows,
        cols=grid.cols,
        labels=(fractions > min_frac).astype(np.uint8),
    )


# ---------------------------------------------------------------------------
# Coarse-annotation noise


def expand_labels(label_grid: LabelGrid, margin_cells: int) -> LabelGrid:
    """Binary dilation with a (2r+1) x (2r+1) square structuring element."""
    if margin_cells < 0:
        raise ValueError("margin_cells must be non-negative")
    labels = label_grid.labels
    if margin_cells > 0:
        size = 2 * margin_cells + 1
        labels = ndimage.binary_dilation(
            labels.astype(bool), structure=np.ones((size, size), dtype=bool)
        ).astype(np.uint8)
    else:
        labels = labels.copy()
    return LabelGrid(
        slide_id=label_grid.slide_id,
        mag_spec=label_grid.mag_spec,
        rows=label_grid.rows,
        cols=label_grid.cols,
        labels=labels,
        provenance={"kind": "expanded", "margin_cells": margin_cells},
    )


def drop_tumor_regions(label_grid: LabelGrid, eta: float, seed: int) -> LabelGrid:
    """Zero each 8-connected positive region independently with probability eta."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError("eta must lie in [0, 1]")
    labeled, n = ndimage.label(label_grid.labels, structure=EIGHT_CONNECTED)
    labels = label_grid.labels.copy()
    if n > 0:
        rng = np.random.default_rng(seed)
        dropped = rng.random(n) < eta
        kill = np.flatnonzero(dropped) + 1
        if kill.size:
            labels[np.isin(labeled, kill)] = 0
    return LabelGrid(
        slide_id=label_grid.slide_id,
        mag_spec=label_grid.mag_spec,
        rows=label_grid.rows,
        cols=label_grid.cols,
        labels=labels,
        provenance={"kind": "noisy", "eta": eta, "seed": seed},
    )


def apply_noise(label_grid: LabelGrid, cfg: NoiseConfig) -> LabelGrid:
    """Expand first, then drop regions, matching how coarse outlines err."""
    noisy = expand_labels(label_grid, cfg.margin_cells)
    noisy = drop_tumor_regions(noisy, cfg.eta, cfg.seed)
    noisy.provenance = {
        "kind": "noisy",
        "margin_cells": cfg.margin_cells,
        "eta": cfg.eta,
        "seed": cfg.seed,
    }
    return noisy


def project_labels(fine: LabelGrid, target: MagSpec) -> LabelGrid:
    """Coarse cell = 1 iff any nested fine cell is 1 (target must be coarser)."""
    sf = fine.mag_spec.patch_size
    st = target.patch_size
    if st < sf or st % sf != 0:
        raise ValueError(
            f"target patch size {st} must be a coarser multiple of {sf}"
        )
    j = st // sf
    if j == 1:
        out = fine.labels.copy()
        rows, cols = fine.rows, fine.cols
    else:
        rows = -(-fine.rows // j)
        cols = -(-fine.cols // j)
        padded = np.zeros((rows * j, cols * j), dtype=np.uint8)
        padded[: fine.rows, : fine.cols] = fine.labels
        out = padded.reshape(rows, j, cols, j).max(axis=(1, 3))
    return LabelGrid(
        slide_id=fine.slide_id,
        mag_spec=target,
        rows=rows,
        cols=cols,
        labels=out,
        provenance=dict(fine.provenance),
    )


# ---------------------------------------------------------------------------
# Training-set construction


def build_dataset(
    slides: list[tuple[PatchGrid, LabelGrid]],
    undersample: bool = True,
    seed: int = 0,
) -> Dataset:
    """Collect in_tissue cells across slides, optionally balancing classes.

    Balancing samples the majority class uniformly without replacement down
    to the minority count (the majority is almost always the negatives).
    """
    if not slides:
        raise ValueError("at least one slide is required")
    entries = []
    for grid, label_grid in slides:
        if not label_grid.matches(grid):
            raise ConsistencyError(
                f"label grid for {label_grid.slide_id} does not match its patch grid"
            )
        in_tissue = (
            grid.in_tissue.ravel()
            if grid.in_tissue is not None
            else np.ones(grid.n_cells, dtype=bool)
        )
        flat = label_grid.labels.ravel()
        for idx in np.flatnonzero(in_tissue):
            entries.append(
                {
                    "slide_id": grid.slide_id,
                    "magnification": grid.mag_spec.magnification,
                    "index": int(idx),
                    "label": int(flat[idx]),
                }
            )
    n_pos = sum(e["label"] for e in entries)
    if n_pos == 0:
        raise ValueError("no positive class in any slide")
    if not undersample:
        return Dataset(entries=entries, balanced=False, seed=seed)
    pos = [e for e in entries if e["label"] == 1]
    neg = [e for e in entries if e["label"] == 0]
    rng = np.random.default_rng(seed)
    if len(neg) >= len(pos):
        keep = rng.choice(len(neg), size=len(pos), replace=False)
        neg = [neg[i] for i in sorted(keep)]
    else:
        keep = rng.choice(len(pos), size=len(neg), replace=False)
        pos = [pos[i] for i in sorted(keep)]
    return Dataset(entries=pos + neg, balanced=True, seed=seed)


# ---------------------------------------------------------------------------
# Label grid file format: labels.json header + labels.bin {0,1} bytes


def save_labels(label_grid: LabelGrid, path: str | Path) -> None:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    header = {
        "slide_id": label_grid.slide_id,
        "magnification": label_grid.mag_spec.magnification,
        "patch_size": label_grid.mag_spec.patch_size,
        "rows": label_grid.rows,
        "cols": label_grid.cols,
        "provenance": label_grid.provenance,
    }
    with open(root / "labels.json", "w") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
        fh.write("\n")
    label_grid.labels.astype(np.uint8).tofile(root / "labels.bin")


def load_labels(path: str | Path) -> LabelGrid:
    root = Path(path)
    try:
        with open(root / "labels.json") as fh:
            header = json.load(fh)
    except FileNotFoundError as exc:
        raise FormatError(f"{root}: missing labels.json") from exc
    rows, cols = int(header["rows"]), int(header["cols"])
    bin_path = root / "labels.bin"
    if not bin_path.is_file():
        raise FormatError(f"{root}: missing labels.bin")
    data = np.fromfile(bin_path, dtype=np.uint8)
    if data.size != rows * cols:
        raise ConsistencyError(f"{bin_path}: {data.size} bytes, header declares {rows}x{cols}")
    if data.size and data.max() > 1:
        raise FormatError(f"{bin_path}: values outside {{0,1}}")
    return LabelGrid(
        slide_id=str(header["slide_id"]),
        mag_spec=MagSpec(int(header["magnification"]), int(header["patch_size"])),
        rows=rows,
        cols=cols,
        labels=data.reshape(rows, cols),
        provenance=header.get("provenance", {"kind": "clean"}),
    )
