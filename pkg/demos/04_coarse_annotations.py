"""Simulate coarse annotations: expanded outlines and missed tumors.

Real-world tumor outlines err in two ways: the boundary is drawn loosely
(too wide), and entire small deposits are missed. Both are modeled on the
label grid: square dilation by a cell margin, then whole 8-connected
regions dropped with probability eta. Expansion happens first, so a merged
pair of regions lives or dies together.
"""

import numpy as np

from magfuse.annotations import (
    LabelGrid,
    NoiseConfig,
    apply_noise,
    build_dataset,
    drop_tumor_regions,
    expand_labels,
)
from magfuse.grid import MagSpec, build_grid

M40 = MagSpec.for_magnification(40)
rng = np.random.default_rng(0)

# A 24x24 grid with three tumor deposits of different sizes.
labels = np.zeros((24, 24), dtype=np.uint8)
labels[2, 3] = 1  # single cell
labels[8:11, 6:10] = 1  # 3x4 block
labels[16:18, 18:22] = 1  # 2x4 block
clean = LabelGrid(slide_id="demo", mag_spec=M40, rows=24, cols=24, labels=labels)
print(f"clean: {int(clean.labels.sum())} positive cells in 3 regions")

for margin in (0, 1, 2):
    grown = expand_labels(clean, margin)
    print(f"  margin {margin}: {int(grown.labels.sum())} cells")

for eta in (0.0, 0.5, 1.0):
    kept = drop_tumor_regions(clean, eta, seed=1)
    print(f"  eta {eta}: {int(kept.labels.sum())} cells survive")

# The presets bundle both knobs; provenance records what happened.
noisy = apply_noise(clean, NoiseConfig.preset("weak", seed=9))
print(f"weak preset: {int(noisy.labels.sum())} cells, provenance {noisy.provenance}")
noisy = apply_noise(clean, NoiseConfig.preset("strong", seed=9))
print(f"strong preset: {int(noisy.labels.sum())} cells, provenance {noisy.provenance}")

# Training sets draw balanced cells from the tissue region: the majority
# class is undersampled to match the minority, deterministically per seed.
grid = build_grid(24 * 256, 24 * 256, M40, slide_id="demo")
grid.in_tissue = np.ones((24, 24), dtype=bool)
ds = build_dataset([(grid, clean)], undersample=True, seed=1)
pos = sum(e["label"] for e in ds.entries)
print(f"balanced dataset: {len(ds.entries)} cells, {pos} positive / "
      f"{len(ds.entries) - pos} negative")
