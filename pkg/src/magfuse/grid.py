"""Aligned patch grids at magnifications 5/10/20/40 and tissue filtering.

Every magnification shares the (0, 0) anchor and a fixed field-of-view
product magnification * patch_size = 10240, so coarse cells nest exactly
over finer ones: one 5x cell covers 4 cells at 10x, 16 at 20x, 64 at 40x.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConsistencyError, FormatError
from .pyramid import PyramidImage, read_region, write_ppm
from .tissue import TissueMask

MAG_TO_PATCH_SIZE = {40: 256, 20: 512, 10: 1024, 5: 2048}
FINEST_MAG = 40
FIELD_OF_VIEW_PRODUCT = 10240
DEFAULT_TAU = 0.25


@dataclass(frozen=True)
class MagSpec:
    """A magnification paired with its level-0 patch size."""

    magnification: int
    patch_size: int

    def __post_init__(self) -> None:
        if self.magnification not in MAG_TO_PATCH_SIZE:
            raise ValueError(f"magnification must be one of {sorted(MAG_TO_PATCH_SIZE)}")
        if self.patch_size != MAG_TO_PATCH_SIZE[self.magnification]:
            raise ValueError(
                f"magnification {self.magnification} pairs with patch size "
                f"{MAG_TO_PATCH_SIZE[self.magnification]}, got {self.patch_size}"
            )
        assert self.magnification * self.patch_size == FIELD_OF_VIEW_PRODUCT

    @classmethod
    def for_magnification(cls, magnification: int) -> "MagSpec":
        if magnification not in MAG_TO_PATCH_SIZE:
            raise ValueError(f"magnification must be one of {sorted(MAG_TO_PATCH_SIZE)}")
        return cls(magnification, MAG_TO_PATCH_SIZE[magnification])


FINEST = MagSpec.for_magnification(FINEST_MAG)


@dataclass
class PatchGrid:
    """Non-overlapping tiling of a slide at one magnification.

    Cell i (row-major) covers the level-0 rect
    [col*s, row*s, s, s] with s = mag_spec.patch_size.
    """

    slide_id: str
    mag_spec: MagSpec
    rows: int
    cols: int
    slide_width: int
    slide_height: int
    tissue_fraction: np.ndarray | None = None  # (rows, cols) float64
    in_tissue: np.ndarray | None = None  # (rows, cols) bool
    tau: float | None = None

    @property
    def n_cells(self) -> int:
        return self.rows * self.cols

    def cell_rect(self, index: int) -> tuple[int, int, int]:
        """(x, y, side) of the cell's level-0 rect."""
        if not 0 <= index < self.n_cells:
            raise IndexError(f"cell index {index} out of range [0, {self.n_cells})")
        s = self.mag_spec.patch_size
        row, col = divmod(index, self.cols)
        return col * s, row * s, s


def build_grid(slide_width: int, slide_height: int, mag_spec: MagSpec, slide_id: str = "") -> PatchGrid:
    """Full tiling anchored at (0, 0); edge cells are included."""
    if slide_width <= 0 or slide_height <= 0:
        raise ValueError("slide dimensions must be positive")
    s = mag_spec.patch_size
    return PatchGrid(
        slide_id=slide_id,
        mag_spec=mag_spec,
        rows=-(-slide_height // s),
        cols=-(-slide_width // s),
        slide_width=slide_width,
        slide_height=slide_height,
    )


def grid_for_slide(pyr: PyramidImage, mag_spec: MagSpec) -> PatchGrid:
    return build_grid(pyr.width, pyr.height, mag_spec, slide_id=pyr.slide_id)


def _mask_window(mask: TissueMask, downsample: int, x: int, y: int, side: int):
    """Mask pixels covering the level-0 rect, clipped to mask bounds."""
    mx0 = x // downsample
    my0 = y // downsample
    mx1 = -(-(x + side) // downsample)
    my1 = -(-(y + side) // downsample)
    mx0c, my0c = max(mx0, 0), max(my0, 0)
    mx1c, my1c = min(mx1, mask.width), min(my1, mask.height)
    if mx1c <= mx0c or my1c <= my0c:
        return None
    return mask.bits[my0c:my1c, mx0c:mx1c]


def tissue_fraction(cell_rect: tuple[int, int, int], mask: TissueMask, downsample: int) -> float:
    """Fraction of the cell's in-bounds area marked tissue, at mask resolution.

    Returns 0 for cells lying entirely outside the mask.
    """
    x, y, side = cell_rect
    window = _mask_window(mask, downsample, x, y, side)
    if window is None:
        return 0.0
    return float(window.sum()) / window.size


def compute_tissue_fractions(grid: PatchGrid, mask: TissueMask, downsample: int) -> np.ndarray:
    """Per-cell tissue fractions for the whole grid (vectorized block sums)."""
    s = grid.mag_spec.patch_size
    if s % downsample == 0:
        cells_per_patch = s // downsample
        bits = mask.bits
        h, w = bits.shape
        ph = grid.rows * cells_per_patch
        pw = grid.cols * cells_per_patch
        padded = np.zeros((ph, pw), dtype=np.uint32)
        padded[:h, :w] = bits
        sums = padded.reshape(grid.rows, cells_per_patch, grid.cols, cells_per_patch).sum(
            axis=(1, 3)
        )
        rows_in = np.minimum((np.arange(grid.rows) + 1) * cells_per_patch, h) - np.minimum(
            np.arange(grid.rows) * cells_per_patch, h
        )
        cols_in = np.minimum((np.arange(grid.cols) + 1) * cells_per_patch, w) - np.minimum(
            np.arange(grid.cols) * cells_per_patch, w
        )
        counts = np.multiply.outer(rows_in, cols_in)
        out = np.zeros((grid.rows, grid.cols), dtype=np.float64)
        nz = counts > 0
        out[nz] = sums[nz] / counts[nz]
        return out
    out = np.zeros((grid.rows, grid.cols), dtype=np.float64)
    for i in range(grid.n_cells):
        out[divmod(i, grid.cols)] = tissue_fraction(grid.cell_rect(i), mask, downsample)
    return out


def filter_by_tissue(
    grid: PatchGrid, mask: TissueMask, tau: float = DEFAULT_TAU, downsample: int | None = None
) -> PatchGrid:
    """Set in_tissue = (tissue_fraction >= tau); returns a new grid."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    if downsample is None:
        # mask width ~ slide width / downsample; recover the factor
        downsample = max(1, round(grid.slide_width / mask.width))
    fractions = compute_tissue_fractions(grid, mask, downsample)
    return PatchGrid(
        slide_id=grid.slide_id,
        mag_spec=grid.mag_spec,
        rows=grid.rows,
        cols=grid.cols,
        slide_width=grid.slide_width,
        slide_height=grid.slide_height,
        tissue_fraction=fractions,
        in_tissue=fractions >= tau,
        tau=tau,
    )


def extract_patch(pyr: PyramidImage, grid: PatchGrid, index: int) -> np.ndarray:
    """256x256 RGB pixels of one cell (block-mean downsample, white padding)."""
    x, y, side = grid.cell_rect(index)
    return read_region(pyr, x, y, side)


# ---------------------------------------------------------------------------
# grid.json + patch export


def grid_to_header(grid: PatchGrid, labels: np.ndarray | None = None) -> dict:
    header = {
        "slide_id": grid.slide_id,
        "magnification": grid.mag_spec.magnification,
        "patch_size": grid.mag_spec.patch_size,
        "rows": grid.rows,
        "cols": grid.cols,
        "slide_width": grid.slide_width,
        "slide_height": grid.slide_height,
        "tau": grid.tau,
        "in_tissue": None
        if grid.in_tissue is None
        else [int(v) for v in grid.in_tissue.ravel()],
    }
    if labels is not None:
        header["labels"] = [int(v) for v in np.asarray(labels).ravel()]
    return header


def save_grid(grid: PatchGrid, path: str | Path, labels: np.ndarray | None = None) -> None:
    with open(path, "w") as fh:
        json.dump(grid_to_header(grid, labels), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_grid(path: str | Path) -> tuple[PatchGrid, np.ndarray | None]:
    """Read grid.json; returns (grid, labels or None)."""
    try:
        with open(path) as fh:
            header = json.load(fh)
    except FileNotFoundError as exc:
        raise FormatError(f"missing grid file {path}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc
    mag_spec = MagSpec(int(header["magnification"]), int(header["patch_size"]))
    rows, cols = int(header["rows"]), int(header["cols"])
    in_tissue = header.get("in_tissue")
    if in_tissue is not None:
        in_tissue = np.asarray(in_tissue, dtype=bool)
        if in_tissue.size != rows * cols:
            raise ConsistencyError(f"{path}: in_tissue bitmap size mismatch")
        in_tissue = in_tissue.reshape(rows, cols)
    grid = PatchGrid(
        slide_id=str(header["slide_id"]),
        mag_spec=mag_spec,
        rows=rows,
        cols=cols,
        slide_width=int(header["slide_width"]),
        slide_height=int(header["slide_height"]),
        in_tissue=in_tissue,
        tau=header.get("tau"),
    )
    labels = header.get("labels")
    if labels is not None:
        labels = np.asarray(labels, dtype=np.uint8)
        if labels.size != rows * cols:
            raise ConsistencyError(f"{path}: labels size mismatch")
        labels = labels.reshape(rows, cols)
    return grid, labels


def export_patches(
    pyr: PyramidImage,
    grid: PatchGrid,
    out_dir: str | Path,
    labels: np.ndarray | None = None,
    indices=None,
) -> int:
    """Write patch_<row>_<col>.ppm files plus grid.json; returns patch count.

    By default exports all in_tissue cells (all cells when the grid carries
    no tissue flags); pass explicit ``indices`` to export a subset.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if indices is None:
        if grid.in_tissue is not None:
            indices = np.flatnonzero(grid.in_tissue.ravel())
        else:
            indices = range(grid.n_cells)
    for i in indices:
        row, col = divmod(int(i), grid.cols)
        write_ppm(out / f"patch_{row}_{col}.ppm", extract_patch(pyr, grid, int(i)))
    save_grid(grid, out / "grid.json", labels)
    return len(list(indices))
