"""Deterministic stand-in classifiers that emit prediction maps.

None of these learn anything; they exist so the full pipeline, its file
formats, and the evaluation stack can be exercised end to end without a
neural network. The fraction_threshold stub in particular turns exact
per-cell tumor area fractions into hard decisions, which makes detection
behaviour across magnifications a matter of geometry rather than training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .annotations import LabelGrid
from .ensemble import PredictionMap
from .grid import PatchGrid, extract_patch
from .pyramid import PyramidImage

STUB_KINDS = ("oracle", "noisy_oracle", "color_stat", "fraction_threshold")


@dataclass(frozen=True)
class StubSpec:
    kind: str
    flip_p: float = 0.0
    score_noise_sd: float = 0.0
    theta: float = 0.5
    weights: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in STUB_KINDS:
            raise ValueError(f"kind must be one of {STUB_KINDS}")
        if not 0.0 <= self.flip_p <= 1.0:
            raise ValueError("flip_p must lie in [0, 1]")
        if self.score_noise_sd < 0.0:
            raise ValueError("score_noise_sd must be non-negative")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")

    def default_model_id(self) -> str:
        if self.kind == "oracle":
            return "oracle"
        if self.kind == "noisy_oracle":
            return f"noisy_oracle_p{self.flip_p:g}_sd{self.score_noise_sd:g}_s{self.seed}"
        if self.kind == "color_stat":
            return "color_stat"
        return f"fraction_threshold_{self.theta:g}"


def _logistic(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def run_stub(
    spec: StubSpec,
    grid: PatchGrid,
    labels: LabelGrid | None = None,
    pyramid: PyramidImage | None = None,
    fractions: np.ndarray | None = None,
    model_id: str | None = None,
) -> PredictionMap:
    """Produce scores for every grid cell; deterministic given the spec's seed.

    Required side input depends on the kind: oracle and noisy_oracle need the
    clean labels, color_stat needs the slide pixels, fraction_threshold needs
    the exact per-cell tumor area fractions.
    """
    shape = (grid.rows, grid.cols)
    if spec.kind in ("oracle", "noisy_oracle"):
        if labels is None:
            raise ValueError(f"stub kind '{spec.kind}' requires labels")
        if labels.labels.shape != shape:
            raise ValueError(
                f"label grid {labels.labels.shape} does not match patch grid {shape}"
            )
        scores = labels.labels.astype(np.float64)
        if spec.kind == "noisy_oracle":
            rng = np.random.default_rng(spec.seed)
            flips = rng.random(shape) < spec.flip_p
            scores = np.where(flips, 1.0 - scores, scores)
            if spec.score_noise_sd > 0.0:
                scores = scores + rng.normal(0.0, spec.score_noise_sd, shape)
            scores = np.clip(scores, 0.0, 1.0)
    elif spec.kind == "color_stat":
        if pyramid is None:
            raise ValueError("stub kind 'color_stat' requires the slide pixels")
        # Score from the mean RGB of the extracted 256x256 patch (channel
        # means scaled to [0,1]), i.e. exactly what a patch-level model sees.
        scores = np.zeros(shape, dtype=np.float64)
        in_tissue = grid.in_tissue
        b, wr, wg, wb = spec.weights
        w = np.array([wr, wg, wb])
        for i in range(grid.n_cells):
            r, c = divmod(i, grid.cols)
            if in_tissue is not None and not in_tissue[r, c]:
                continue
            patch = extract_patch(pyramid, grid, i)
            means = patch.reshape(-1, 3).mean(axis=0) / 255.0
            scores[r, c] = _logistic(np.array([b + float(means @ w)]))[0]
    else:  # fraction_threshold
        if fractions is None:
            raise ValueError("stub kind 'fraction_threshold' requires tumor area fractions")
        fractions = np.asarray(fractions, dtype=np.float64)
        if fractions.shape != shape:
            raise ValueError(
                f"fraction array {fractions.shape} does not match patch grid {shape}"
            )
        scores = (fractions >= spec.theta).astype(np.float64)
    return PredictionMap(
        slide_id=grid.slide_id,
        model_id=model_id or spec.default_model_id(),
        mag_spec=grid.mag_spec,
        rows=grid.rows,
        cols=grid.cols,
        scores=scores,
    )
