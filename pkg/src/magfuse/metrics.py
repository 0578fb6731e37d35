"""Evaluation: confusion metrics, MCC, AUROC, metastasis detection, Welch test.

All per-slide metrics are restricted to in-tissue cells and are treated as
optional values: a metric whose denominator vanishes on a slide (recall on a
normal slide, AUROC without both classes) is None there and is simply left
out of the across-slide average, which reports how many slides contributed.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage
from scipy.special import betainc

from .errors import ConsistencyError, FormatError

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)
SIZE_THRESHOLDS_UM = (200.0, 2000.0)  # itc < 200 <= micro < 2000 <= macro
METRIC_NAMES = ("precision", "recall", "specificity", "auroc", "mcc")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass
class SlideMetrics:
    slide_id: str
    confusion: ConfusionCounts
    precision: float | None
    recall: float | None
    specificity: float | None
    mcc: float | None
    auroc: float | None

    def value(self, name: str) -> float | None:
        return getattr(self, name)


@dataclass
class MetricSummary:
    mean: float | None
    std: float | None
    n: int


@dataclass
class AggregateMetrics:
    metrics: dict[str, MetricSummary]
    n_slides: int


@dataclass
class MetastasisRegion:
    region_id: str
    cells: list[tuple[int, int]]  # (row, col) on the finest grid
    area_um2: float
    max_diameter_um: float
    size_class: str  # itc | micro | macro


@dataclass
class WelchResult:
    t: float
    df: float
    p: float


# ---------------------------------------------------------------------------
# Confusion-derived metrics


def confusion(
    pred: np.ndarray, labels: np.ndarray, in_tissue: np.ndarray | None = None
) -> ConfusionCounts:
    """Count agreement over in-tissue cells only (all cells when mask is None)."""
    pred = np.asarray(pred)
    labels = np.asarray(labels)
    if pred.shape != labels.shape:
        raise ConsistencyError(f"prediction {pred.shape} vs labels {labels.shape}")
    if in_tissue is None:
        in_tissue = np.ones(pred.shape, dtype=bool)
    else:
        in_tissue = np.asarray(in_tissue, dtype=bool)
        if in_tissue.shape != pred.shape:
            raise ConsistencyError(f"tissue mask {in_tissue.shape} vs grid {pred.shape}")
    p = pred[in_tissue].astype(bool)
    t = labels[in_tissue].astype(bool)
    return ConfusionCounts(
        tp=int(np.count_nonzero(p & t)),
        fp=int(np.count_nonzero(p & ~t)),
        tn=int(np.count_nonzero(~p & ~t)),
        fn=int(np.count_nonzero(~p & t)),
    )


def precision(c: ConfusionCounts) -> float | None:
    d = c.tp + c.fp
    return c.tp / d if d else None


def recall(c: ConfusionCounts) -> float | None:
    d = c.tp + c.fn
    return c.tp / d if d else None


def specificity(c: ConfusionCounts) -> float | None:
    d = c.tn + c.fp
    return c.tn / d if d else None


def mcc(c: ConfusionCounts) -> float:
    """Matthews correlation; 0 by convention when any marginal is empty.

    Both the numerator and the product under the sqrt are exact integer
    arithmetic, so perfect classifiers come out as exactly +-1.0; the
    product stays far below float range for any realistic grid size.
    """
    f1 = c.tp + c.fp
    f2 = c.tp + c.fn
    f3 = c.tn + c.fp
    f4 = c.tn + c.fn
    if 0 in (f1, f2, f3, f4):
        return 0.0
    num = c.tp * c.tn - c.fp * c.fn
    return num / math.sqrt(f1 * f2 * f3 * f4)


def _midranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    n = values.size
    order = np.argsort(values, kind="mergesort")
    sorted_v = values[order]
    starts = np.flatnonzero(np.r_[True, sorted_v[1:] != sorted_v[:-1]])
    counts = np.diff(np.r_[starts, n])
    mid = starts + (counts + 1) / 2.0
    ranks = np.empty(n, dtype=np.float64)
    ranks[order] = np.repeat(mid, counts)
    return ranks


def auroc(scores: np.ndarray, labels: np.ndarray) -> float | None:
    """Mann-Whitney AUROC with midrank tie handling, O(n log n).

    None when either class is absent.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel().astype(bool)
    if scores.shape != labels.shape:
        raise ConsistencyError(f"scores {scores.shape} vs labels {labels.shape}")
    n_pos = int(np.count_nonzero(labels))
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = _midranks(scores)
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def compute_slide_metrics(
    slide_id: str,
    scores: np.ndarray,
    labels: np.ndarray,
    in_tissue: np.ndarray | None = None,
    threshold: float = 0.5,
) -> SlideMetrics:
    """Binarize scores with a strict > threshold and score against clean labels."""
    scores = np.asarray(scores)
    labels = np.asarray(labels)
    pred = (scores > threshold).astype(np.uint8)
    c = confusion(pred, labels, in_tissue)
    if in_tissue is None:
        sel = np.ones(scores.shape, dtype=bool)
    else:
        sel = np.asarray(in_tissue, dtype=bool)
    return SlideMetrics(
        slide_id=slide_id,
        confusion=c,
        precision=precision(c),
        recall=recall(c),
        specificity=specificity(c),
        mcc=mcc(c) if c.total else None,
        auroc=auroc(scores[sel], labels[sel]),
    )


# ---------------------------------------------------------------------------
# Across-slide (and across-seed) aggregation


def _summarize(values: list[float]) -> MetricSummary:
    n = len(values)
    if n == 0:
        return MetricSummary(mean=None, std=None, n=0)
    mean = float(np.mean(values))
    std = 0.0 if n == 1 else float(np.std(values, ddof=1))
    return MetricSummary(mean=mean, std=std, n=n)


def aggregate(slides: list[SlideMetrics]) -> AggregateMetrics:
    """Mean and sample std of each metric over the slides where it is defined."""
    if not slides:
        raise ValueError("at least one slide is required")
    out = {}
    for name in METRIC_NAMES:
        out[name] = _summarize([m.value(name) for m in slides if m.value(name) is not None])
    return AggregateMetrics(metrics=out, n_slides=len(slides))


def aggregate_runs(runs: list[list[SlideMetrics]]) -> AggregateMetrics:
    """Average per-run slide means, then mean and std across runs (seeds)."""
    if not runs:
        raise ValueError("at least one run is required")
    per_run = [aggregate(r) for r in runs]
    out = {}
    for name in METRIC_NAMES:
        means = [a.metrics[name].mean for a in per_run if a.metrics[name].n > 0]
        out[name] = _summarize(means)
    return AggregateMetrics(metrics=out, n_slides=sum(a.n_slides for a in per_run))


# ---------------------------------------------------------------------------
# Metastasis regions and detection rate


def find_regions(
    labels: np.ndarray,
    microns_per_pixel: float,
    patch_size: int = 256,
    thresholds_um: tuple[float, float] = SIZE_THRESHOLDS_UM,
) -> list[MetastasisRegion]:
    """8-connected positive components of a finest-grid label array.

    The grid is too coarse to know a region's true extent, so the reported
    diameter is an upper bound: the maximum pairwise cell-center distance
    plus one cell diagonal. Size classes split at the configured thresholds
    (defaults: itc < 200 um <= micro < 2000 um <= macro).
    """
    if microns_per_pixel <= 0:
        raise ValueError("microns_per_pixel must be positive")
    lo, hi = thresholds_um
    if not 0 < lo < hi:
        raise ValueError("size thresholds must satisfy 0 < itc/micro < micro/macro")
    labels = np.asarray(labels)
    labeled, n = ndimage.label(labels.astype(bool), structure=EIGHT_CONNECTED)
    side_um = patch_size * microns_per_pixel
    diag_um = side_um * math.sqrt(2.0)
    regions = []
    for k in range(1, n + 1):
        rows, cols = np.nonzero(labeled == k)
        cy = (rows + 0.5) * side_um
        cx = (cols + 0.5) * side_um
        max_d = 0.0
        # O(n^2) pairwise max in row chunks; component sizes stay modest on
        # patch grids so this beats setting up a convex hull.
        for i in range(0, cy.size, 2048):
            dy = cy[i : i + 2048, None] - cy[None, :]
            dx = cx[i : i + 2048, None] - cx[None, :]
            max_d = max(max_d, float(np.sqrt(dy * dy + dx * dx).max()))
        diameter = max_d + diag_um
        if diameter >= hi:
            size_class = "macro"
        elif diameter >= lo:
            size_class = "micro"
        else:
            size_class = "itc"
        regions.append(
            MetastasisRegion(
                region_id=f"r{k}",
                cells=list(zip(rows.tolist(), cols.tolist())),
                area_um2=rows.size * side_um * side_um,
                max_diameter_um=diameter,
                size_class=size_class,
            )
        )
    return regions


def detection_rate(
    regions: list[MetastasisRegion], pred: np.ndarray
) -> dict[str, dict]:
    """Per-size-class detection: a region counts iff >= 1 cell predicted positive.

    Returns {class: {detected, total, rate}} with rate None for empty classes.
    """
    pred = np.asarray(pred).astype(bool)
    out = {cls: {"detected": 0, "total": 0, "rate": None} for cls in ("itc", "micro", "macro")}
    for region in regions:
        cls = out[region.size_class]
        cls["total"] += 1
        if any(pred[r, c] for r, c in region.cells):
            cls["detected"] += 1
    for cls in out.values():
        if cls["total"]:
            cls["rate"] = cls["detected"] / cls["total"]
    return out


# ---------------------------------------------------------------------------
# Welch's t-test


def welch_t(sample_a, sample_b) -> WelchResult:
    """Unequal-variance t-test with Welch-Satterthwaite degrees of freedom.

    Degenerate samples (both variances zero) fall back to conventions:
    equal means give t=0, p=1; unequal means give t=+-inf, p=0 with a warning.
    """
    a = np.asarray(sample_a, dtype=np.float64).ravel()
    b = np.asarray(sample_b, dtype=np.float64).ravel()
    if a.size < 2 or b.size < 2:
        raise ValueError("each sample needs at least two observations")
    ma, mb = float(a.mean()), float(b.mean())
    va = float(a.var(ddof=1))
    vb = float(b.var(ddof=1))
    sa = va / a.size
    sb = vb / b.size
    se2 = sa + sb
    if se2 == 0.0:
        if ma == mb:
            return WelchResult(t=0.0, df=float("nan"), p=1.0)
        warnings.warn(
            "both samples have zero variance with different means; p = 0 by convention",
            stacklevel=2,
        )
        return WelchResult(t=math.copysign(math.inf, ma - mb), df=float("nan"), p=0.0)
    t = (ma - mb) / math.sqrt(se2)
    df = se2 * se2 / (sa * sa / (a.size - 1) + sb * sb / (b.size - 1))
    if t == 0.0:
        p = 1.0
    else:
        # two-sided p = I_{df/(df+t^2)}(df/2, 1/2), the survival function of |t|
        p = float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    return WelchResult(t=t, df=df, p=min(max(p, 0.0), 1.0))


# ---------------------------------------------------------------------------
# Evaluation report files


def _metrics_block(m: SlideMetrics) -> dict:
    return {
        "slide_id": m.slide_id,
        "tp": m.confusion.tp,
        "fp": m.confusion.fp,
        "tn": m.confusion.tn,
        "fn": m.confusion.fn,
        "precision": m.precision,
        "recall": m.recall,
        "specificity": m.specificity,
        "auroc": m.auroc,
        "mcc": m.mcc,
    }


def write_report(
    slides: list[SlideMetrics],
    agg: AggregateMetrics,
    path: str | Path,
    csv_path: str | Path | None = None,
    extra: dict | None = None,
) -> None:
    """JSON report with per-slide and aggregate blocks; optional CSV table.

    The CSV lists each slide's metrics as percentages (two decimals) and a
    final "aggregate" row formatted mean +/- std, blank where undefined.
    """
    doc = {
        "slides": [_metrics_block(m) for m in slides],
        "aggregate": {
            name: {"mean": s.mean, "std": s.std, "n": s.n}
            for name, s in agg.metrics.items()
        },
        "n_slides": agg.n_slides,
    }
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if csv_path is None:
        return
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["slide_id", "precision", "recall", "specificity", "auroc", "mcc"])
        for m in slides:
            writer.writerow(
                [m.slide_id]
                + [
                    "" if m.value(n) is None else f"{100.0 * m.value(n):.2f}"
                    for n in METRIC_NAMES
                ]
            )
        agg_row = ["aggregate"]
        for name in METRIC_NAMES:
            s = agg.metrics[name]
            if s.n == 0:
                agg_row.append("")
            else:
                agg_row.append(f"{100.0 * s.mean:.2f} ± {100.0 * s.std:.2f}")
        writer.writerow(agg_row)


def load_report(path: str | Path) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError as exc:
        raise FormatError(f"missing report {path}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc
    if "slides" not in doc:
        raise FormatError(f"{path}: not an evaluation report (no 'slides' block)")
    return doc
