"""Prediction maps and multi-magnification fusion.

Because every grid is anchored at slide origin (0, 0) and the patch sizes are
exact multiples of the finest one, a coarse cell covers a j x j block of
finest cells (j = patch_size / 256). Upsampling is therefore bare block
replication, and fusing an ensemble is a uniform average of the replicated
maps on the finest grid.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConsistencyError, FormatError
from .grid import FINEST, MagSpec

DEFAULT_THRESHOLD = 0.5


@dataclass
class PredictionMap:
    """Per-cell tumor scores in [0, 1] from one model at one magnification."""

    slide_id: str
    model_id: str
    mag_spec: MagSpec
    rows: int
    cols: int
    scores: np.ndarray  # (rows, cols) float

    def __post_init__(self) -> None:
        self.scores = np.asarray(self.scores)
        if self.scores.shape != (self.rows, self.cols):
            raise ConsistencyError(
                f"score array is {self.scores.shape}, header declares "
                f"({self.rows}, {self.cols})"
            )
        if self.scores.size:
            if not np.all(np.isfinite(self.scores)):
                raise FormatError(f"{self.model_id}: non-finite scores")
            lo, hi = float(self.scores.min()), float(self.scores.max())
            if lo < 0.0 or hi > 1.0:
                raise FormatError(
                    f"{self.model_id}: scores outside [0, 1] (min {lo}, max {hi})"
                )


@dataclass
class FusedMap:
    """Uniform average of ensemble members on the finest grid."""

    slide_id: str
    model_ids: list[str]
    rows: int
    cols: int
    scores: np.ndarray  # (rows, cols) float64
    mag_spec: MagSpec = field(default=FINEST)

    def to_prediction_map(self, model_id: str | None = None) -> PredictionMap:
        if model_id is None:
            model_id = "fused:" + "+".join(self.model_ids)
        return PredictionMap(
            slide_id=self.slide_id,
            model_id=model_id,
            mag_spec=self.mag_spec,
            rows=self.rows,
            cols=self.cols,
            scores=self.scores,
        )


def replication_factor(mag_spec: MagSpec) -> int:
    return mag_spec.patch_size // FINEST.patch_size


def upsample_to_finest(pm: PredictionMap, finest_rows: int, finest_cols: int) -> np.ndarray:
    """Replicate each coarse score over its j x j block of finest cells.

    The coarse grid must be exactly the one induced by the finest grid:
    ceil(finest / j) rows and cols. Edge blocks replicate partially.
    """
    j = replication_factor(pm.mag_spec)
    want_rows = -(-finest_rows // j)
    want_cols = -(-finest_cols // j)
    if (pm.rows, pm.cols) != (want_rows, want_cols):
        raise ConsistencyError(
            f"{pm.model_id}: {pm.rows}x{pm.cols} grid at magnification "
            f"{pm.mag_spec.magnification} does not cover a {finest_rows}x"
            f"{finest_cols} finest grid (expected {want_rows}x{want_cols})"
        )
    if j == 1:
        return np.asarray(pm.scores, dtype=np.float64).copy()
    up = np.repeat(np.repeat(np.asarray(pm.scores, dtype=np.float64), j, axis=0), j, axis=1)
    return up[:finest_rows, :finest_cols]


def fuse_uniform(
    maps: list[PredictionMap], finest_rows: int, finest_cols: int
) -> FusedMap:
    """Average the upsampled members with equal weight.

    Per cell, the member values are accumulated in ascending value order, so
    the result is exactly independent of the order the maps are passed in
    (plain left-to-right float addition is not).
    """
    if not maps:
        raise ValueError("cannot fuse an empty ensemble")
    slide_ids = {pm.slide_id for pm in maps}
    if len(slide_ids) != 1:
        raise ConsistencyError(f"ensemble mixes slides {sorted(slide_ids)}")
    stacked = np.stack(
        [upsample_to_finest(pm, finest_rows, finest_cols) for pm in maps], axis=0
    )
    stacked.sort(axis=0)
    acc = np.zeros((finest_rows, finest_cols), dtype=np.float64)
    for k in range(stacked.shape[0]):
        acc += stacked[k]
    acc /= len(maps)
    return FusedMap(
        slide_id=maps[0].slide_id,
        model_ids=[pm.model_id for pm in maps],
        rows=finest_rows,
        cols=finest_cols,
        scores=acc,
    )


def binarize(scores: np.ndarray, threshold: float = DEFAULT_THRESHOLD) -> np.ndarray:
    """Strict comparison: a cell is positive iff score > threshold."""
    return (np.asarray(scores) > threshold).astype(np.uint8)


# ---------------------------------------------------------------------------
# Wire format: <name>.json header + <name>.f32 row-major little-endian floats


def save_prediction_map(pm: PredictionMap, out_dir: str | Path, name: str) -> None:
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    header = {
        "slide_id": pm.slide_id,
        "model_id": pm.model_id,
        "magnification": pm.mag_spec.magnification,
        "patch_size": pm.mag_spec.patch_size,
        "rows": pm.rows,
        "cols": pm.cols,
        "dtype": "f32le",
    }
    with open(root / f"{name}.json", "w") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(root / f"{name}.f32", "wb") as fh:
        fh.write(np.ascontiguousarray(pm.scores, dtype="<f4").tobytes())


def load_prediction_map(out_dir: str | Path, name: str) -> PredictionMap:
    root = Path(out_dir)
    json_path = root / f"{name}.json"
    try:
        with open(json_path) as fh:
            header = json.load(fh)
    except FileNotFoundError as exc:
        raise FormatError(f"missing prediction header {json_path}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{json_path}: invalid JSON ({exc})") from exc
    if header.get("dtype") != "f32le":
        raise FormatError(f"{json_path}: unsupported dtype {header.get('dtype')!r}")
    rows, cols = int(header["rows"]), int(header["cols"])
    f32_path = root / f"{name}.f32"
    if not f32_path.is_file():
        raise FormatError(f"missing score file {f32_path}")
    raw = np.fromfile(f32_path, dtype="<f4")
    if raw.size != rows * cols:
        raise ConsistencyError(
            f"{f32_path}: {raw.size} floats, header declares {rows}x{cols}"
        )
    return PredictionMap(
        slide_id=str(header["slide_id"]),
        model_id=str(header["model_id"]),
        mag_spec=MagSpec(int(header["magnification"]), int(header["patch_size"])),
        rows=rows,
        cols=cols,
        scores=raw.reshape(rows, cols),
    )
