"""Pipeline driver: one subcommand per stage, files as the only data channel.

Every stage reads and writes the documented on-disk formats, so any stage can
be replaced or interposed by an external tool (the toy trainer does exactly
that). Slide-level work is embarrassingly parallel and fans out over --jobs
processes; everything is deterministic given the explicit --seed flags, and
rerunning a stage with unchanged inputs reproduces its outputs byte for byte.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import zlib
from dataclasses import dataclass, field
from functools import partial
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from .annotations import (
    NoiseConfig,
    apply_noise,
    build_dataset,
    load_annotations,
    load_labels,
    rasterize_labels,
    save_annotations,
    save_labels,
    tumor_area_fractions,
)
from .ensemble import (
    binarize,
    fuse_uniform,
    load_prediction_map,
    save_prediction_map,
    upsample_to_finest,
)
from .errors import ConsistencyError, FormatError
from .grid import (
    FINEST,
    MagSpec,
    build_grid,
    export_patches,
    filter_by_tissue,
    grid_for_slide,
    load_grid,
    save_grid,
)
from .metrics import (
    aggregate,
    compute_slide_metrics,
    detection_rate,
    find_regions,
    load_report,
    welch_t,
    write_report,
)
from .pyramid import SynthConfig, generate_synthetic_slide, load_pyramid, save_pyramid
from .stubs import StubSpec, run_stub
from .tissue import load_mask, save_mask, segment_tissue

ALL_MAGS = (40, 20, 10, 5)


@dataclass
class RunConfig:
    """Shared flags for a pipeline invocation."""

    slides: Path
    magnifications: list[int] = field(default_factory=lambda: list(ALL_MAGS))
    tau: float = 0.25
    min_frac: float = 0.0
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    threshold: float = 0.5
    seeds: list[int] = field(default_factory=lambda: [0])
    jobs: int = 1

    def __post_init__(self) -> None:
        bad = [m for m in self.magnifications if m not in ALL_MAGS]
        if bad:
            raise ValueError(f"unsupported magnifications {bad}; choose from {ALL_MAGS}")
        if self.jobs < 1:
            raise ValueError("--jobs must be at least 1")


# ---------------------------------------------------------------------------
# Helpers


def _parse_mags(text: str) -> list[int]:
    try:
        mags = [int(part) for part in text.split(",") if part]
    except ValueError as exc:
        raise ValueError(f"--mags expects comma-separated integers, got {text!r}") from exc
    if not mags:
        raise ValueError("--mags must name at least one magnification")
    return mags


def discover_slides(path: str | Path) -> list[Path]:
    """A slide dir itself, or every slide dir directly below the given root."""
    root = Path(path)
    if (root / "meta.json").is_file():
        return [root]
    if not root.is_dir():
        raise FormatError(f"no such slide directory: {root}")
    found = sorted(p for p in root.iterdir() if (p / "meta.json").is_file())
    if not found:
        raise FormatError(f"no slides found under {root}")
    return found


def _run_parallel(fn, items: list, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with get_context("fork").Pool(min(jobs, len(items))) as pool:
        return pool.map(fn, items)


def _stage_seed(seed: int, slide_id: str, magnification: int) -> int:
    """Per-slide, per-magnification seed, stable across runs and job counts."""
    return (seed * 1000003 + zlib.crc32(f"{slide_id}:{magnification}".encode())) % 2**63


def _load_clean_labels(slide_dir: Path, mag: int):
    return load_labels(slide_dir / f"labels_{mag}")


def _labels_dir_name(mag: int, kind: str) -> str:
    if kind == "clean":
        return f"labels_{mag}"
    if kind == "noisy":
        return f"labels_{mag}_noisy"
    raise ValueError(f"unknown labels kind '{kind}'")


def _finest_shape(pyr_width: int, pyr_height: int) -> tuple[int, int]:
    g = build_grid(pyr_width, pyr_height, FINEST)
    return g.rows, g.cols


# ---------------------------------------------------------------------------
# Stage workers (top level so they pickle for multiprocessing)


def _synth_one(task: tuple) -> str:
    out_dir, cfg = task
    pyr, annots = generate_synthetic_slide(cfg)
    save_pyramid(pyr, out_dir)
    save_annotations(annots, Path(out_dir) / "annotations.json")
    return pyr.slide_id


def _segment_one(slide_dir: Path, method: str, level: int | None) -> str:
    pyr = load_pyramid(slide_dir)
    mask = segment_tissue(pyr, method=method, level=level)
    save_mask(mask, slide_dir)
    return pyr.slide_id


def _grid_one(slide_dir: Path, mags: list[int], tau: float) -> str:
    pyr = load_pyramid(slide_dir)
    mask = load_mask(slide_dir)
    if mask.slide_id != pyr.slide_id:
        raise ConsistencyError(
            f"{slide_dir}: mask belongs to {mask.slide_id}, slide is {pyr.slide_id}"
        )
    for mag in mags:
        grid = grid_for_slide(pyr, MagSpec.for_magnification(mag))
        grid = filter_by_tissue(grid, mask, tau=tau)
        save_grid(grid, slide_dir / f"grid_{mag}.json")
    return pyr.slide_id


def _label_one(slide_dir: Path, mags: list[int], min_frac: float, annot_name: str) -> str:
    annots = load_annotations(slide_dir / annot_name)
    for mag in mags:
        grid, _ = load_grid(slide_dir / f"grid_{mag}.json")
        if grid.slide_id != annots.slide_id:
            raise ConsistencyError(
                f"{slide_dir}: annotations belong to {annots.slide_id}, "
                f"grid is {grid.slide_id}"
            )
        labels = rasterize_labels(annots, grid, min_frac=min_frac)
        save_labels(labels, slide_dir / f"labels_{mag}")
    return annots.slide_id


def _noise_one(slide_dir: Path, mags: list[int], cfg: NoiseConfig) -> str:
    slide_id = ""
    for mag in mags:
        clean = _load_clean_labels(slide_dir, mag)
        slide_id = clean.slide_id
        per_mag = NoiseConfig(
            margin_cells=cfg.margin_cells,
            eta=cfg.eta,
            seed=_stage_seed(cfg.seed, clean.slide_id, mag),
        )
        save_labels(apply_noise(clean, per_mag), slide_dir / f"labels_{mag}_noisy")
    return slide_id


def _export_one(
    slide_dir: Path,
    mag: int,
    out_root: Path,
    labels_kind: str,
    balance: bool,
    limit: int | None,
    seed: int,
) -> str:
    pyr = load_pyramid(slide_dir)
    grid, _ = load_grid(slide_dir / f"grid_{mag}.json")
    labels = None
    if labels_kind != "none":
        labels = load_labels(slide_dir / _labels_dir_name(mag, labels_kind))
    indices = None
    if balance:
        if labels is None:
            raise ValueError("--balance requires labels")
        ds = build_dataset([(grid, labels)], undersample=True, seed=seed)
        indices = sorted(e["index"] for e in ds.entries)
    elif grid.in_tissue is not None:
        indices = [int(i) for i in np.flatnonzero(grid.in_tissue.ravel())]
    if indices is not None and limit is not None:
        indices = indices[:limit]
    export_patches(
        pyr,
        grid,
        out_root / f"{pyr.slide_id}_{mag}",
        labels=None if labels is None else labels.labels,
        indices=indices,
    )
    return pyr.slide_id


def _predict_one(
    slide_dir: Path,
    mags: list[int],
    spec: StubSpec,
    labels_kind: str,
    prefix: str,
) -> str:
    slide_id = ""
    for mag in mags:
        grid, _ = load_grid(slide_dir / f"grid_{mag}.json")
        slide_id = grid.slide_id
        kwargs = {}
        if spec.kind in ("oracle", "noisy_oracle"):
            kwargs["labels"] = load_labels(slide_dir / _labels_dir_name(mag, labels_kind))
        elif spec.kind == "color_stat":
            kwargs["pyramid"] = load_pyramid(slide_dir)
        else:
            annots = load_annotations(slide_dir / "annotations.json")
            kwargs["fractions"] = tumor_area_fractions(annots, grid)
        per_mag = StubSpec(
            kind=spec.kind,
            flip_p=spec.flip_p,
            score_noise_sd=spec.score_noise_sd,
            theta=spec.theta,
            weights=spec.weights,
            seed=_stage_seed(spec.seed, grid.slide_id, mag),
        )
        name = f"{prefix}_{mag}"
        pm = run_stub(per_mag, grid, model_id=name, **kwargs)
        save_prediction_map(pm, slide_dir / "maps", name)
    return slide_id


def _fuse_one(slide_dir: Path, prefix: str, mags: list[int], out_name: str) -> str:
    pyr = load_pyramid(slide_dir)
    maps = [load_prediction_map(slide_dir / "maps", f"{prefix}_{mag}") for mag in mags]
    rows, cols = _finest_shape(pyr.width, pyr.height)
    fused = fuse_uniform(maps, rows, cols)
    save_prediction_map(fused.to_prediction_map(model_id=out_name), slide_dir / "maps", out_name)
    return pyr.slide_id


def _eval_one(slide_dir: Path, pred_name: str, threshold: float):
    pm = load_prediction_map(slide_dir / "maps", pred_name)
    mag = pm.mag_spec.magnification
    labels = _load_clean_labels(slide_dir, mag)
    grid, _ = load_grid(slide_dir / f"grid_{mag}.json")
    if not labels.matches(grid):
        raise ConsistencyError(f"{slide_dir}: labels and grid disagree at {mag}x")
    if (pm.rows, pm.cols) != (grid.rows, grid.cols):
        raise ConsistencyError(
            f"{slide_dir}: map {pred_name} is {pm.rows}x{pm.cols}, grid is "
            f"{grid.rows}x{grid.cols}"
        )
    return compute_slide_metrics(
        pm.slide_id, pm.scores, labels.labels, grid.in_tissue, threshold
    )


def _detect_one(slide_dir: Path, pred_name: str, threshold: float) -> tuple[str, dict]:
    pyr = load_pyramid(slide_dir)
    pm = load_prediction_map(slide_dir / "maps", pred_name)
    labels = _load_clean_labels(slide_dir, FINEST.magnification)
    rows, cols = _finest_shape(pyr.width, pyr.height)
    pred = binarize(upsample_to_finest(pm, rows, cols), threshold)
    regions = find_regions(
        labels.labels, pyr.microns_per_pixel, FINEST.patch_size
    )
    return pyr.slide_id, detection_rate(regions, pred)


# ---------------------------------------------------------------------------
# Subcommand handlers


def _cmd_synth(args) -> int:
    levels = tuple(int(v) for v in args.levels.split(","))
    out_root = Path(args.out)
    tasks = []
    for k in range(args.count):
        seed = args.seed + k
        cfg = SynthConfig(
            width=args.width,
            height=args.height,
            tissue_blob_count=args.blobs,
            tumor_region_count=args.tumors,
            tumor_diameter_range_um=(args.tumor_um_min, args.tumor_um_max),
            dark_noise_speckle_density=args.speckle,
            seed=seed,
            microns_per_pixel=args.mpp,
            base_magnification=args.base_mag,
            level_downsamples=levels,
        )
        out_dir = out_root if args.count == 1 else out_root / f"synth-{seed:08x}"
        tasks.append((out_dir, cfg))
    ids = _run_parallel(_synth_one, tasks, args.jobs)
    for slide_id in ids:
        print(f"synth: wrote {slide_id}")
    return 0


def _cmd_segment(args) -> int:
    slides = discover_slides(args.slides)
    fn = partial(_segment_one, method=args.method, level=args.level)
    for slide_id in _run_parallel(fn, slides, args.jobs):
        print(f"segment: {slide_id}")
    return 0


def _cmd_grid(args) -> int:
    cfg = RunConfig(slides=Path(args.slides), magnifications=_parse_mags(args.mags),
                    tau=args.tau, jobs=args.jobs)
    slides = discover_slides(cfg.slides)
    fn = partial(_grid_one, mags=cfg.magnifications, tau=cfg.tau)
    for slide_id in _run_parallel(fn, slides, cfg.jobs):
        print(f"grid: {slide_id}")
    return 0


def _cmd_label(args) -> int:
    cfg = RunConfig(slides=Path(args.slides), magnifications=_parse_mags(args.mags),
                    min_frac=args.min_frac, jobs=args.jobs)
    slides = discover_slides(cfg.slides)
    fn = partial(
        _label_one, mags=cfg.magnifications, min_frac=cfg.min_frac,
        annot_name=args.annotations,
    )
    for slide_id in _run_parallel(fn, slides, cfg.jobs):
        print(f"label: {slide_id}")
    return 0


def _cmd_noise(args) -> int:
    if args.preset:
        noise = NoiseConfig.preset(args.preset, seed=args.seed)
    else:
        noise = NoiseConfig(margin_cells=args.margin_cells, eta=args.eta, seed=args.seed)
    cfg = RunConfig(slides=Path(args.slides), magnifications=_parse_mags(args.mags),
                    noise=noise, jobs=args.jobs)
    slides = discover_slides(cfg.slides)
    fn = partial(_noise_one, mags=cfg.magnifications, cfg=noise)
    for slide_id in _run_parallel(fn, slides, cfg.jobs):
        print(f"noise: {slide_id}")
    return 0


def _cmd_export_patches(args) -> int:
    slides = discover_slides(args.slides)
    fn = partial(
        _export_one,
        mag=args.mag,
        out_root=Path(args.out),
        labels_kind=args.labels,
        balance=args.balance,
        limit=args.limit,
        seed=args.seed,
    )
    for slide_id in _run_parallel(fn, slides, args.jobs):
        print(f"export-patches: {slide_id}")
    return 0


def _cmd_predict_stub(args) -> int:
    weights = tuple(float(v) for v in args.weights.split(","))
    if len(weights) != 4:
        raise ValueError("--weights expects 4 comma-separated reals (bias,r,g,b)")
    spec = StubSpec(
        kind=args.stub,
        flip_p=args.flip_p,
        score_noise_sd=args.score_noise_sd,
        theta=args.theta,
        weights=weights,
        seed=args.seed,
    )
    prefix = args.name or spec.default_model_id()
    cfg = RunConfig(slides=Path(args.slides), magnifications=_parse_mags(args.mags),
                    jobs=args.jobs)
    slides = discover_slides(cfg.slides)
    fn = partial(
        _predict_one, mags=cfg.magnifications, spec=spec,
        labels_kind=args.labels, prefix=prefix,
    )
    for slide_id in _run_parallel(fn, slides, cfg.jobs):
        print(f"predict-stub[{prefix}]: {slide_id}")
    return 0


def _cmd_fuse(args) -> int:
    cfg = RunConfig(slides=Path(args.slides), magnifications=_parse_mags(args.mags),
                    jobs=args.jobs)
    slides = discover_slides(cfg.slides)
    fn = partial(_fuse_one, prefix=args.prefix, mags=cfg.magnifications,
                 out_name=args.out_name)
    for slide_id in _run_parallel(fn, slides, cfg.jobs):
        print(f"fuse: {slide_id}")
    return 0


def _cmd_eval(args) -> int:
    slides = discover_slides(args.slides)
    fn = partial(_eval_one, pred_name=args.pred, threshold=args.threshold)
    per_slide = _run_parallel(fn, slides, args.jobs)
    per_slide.sort(key=lambda m: m.slide_id)
    agg = aggregate(per_slide)
    write_report(
        per_slide,
        agg,
        args.out,
        csv_path=args.csv,
        extra={"pred": args.pred, "threshold": args.threshold},
    )
    for m in per_slide:
        parts = []
        for name in ("mcc", "auroc"):
            v = m.value(name)
            parts.append(f"{name}={'-' if v is None else f'{v:.4f}'}")
        print(f"eval[{m.slide_id}]: {' '.join(parts)}")
    print(f"eval: report -> {args.out}")
    return 0


def _cmd_detect_rate(args) -> int:
    slides = discover_slides(args.slides)
    fn = partial(_detect_one, pred_name=args.pred, threshold=args.threshold)
    results = _run_parallel(fn, slides, args.jobs)
    results.sort(key=lambda r: r[0])
    pooled = {
        cls: {"detected": 0, "total": 0, "rate": None} for cls in ("itc", "micro", "macro")
    }
    per_slide = {}
    for slide_id, rates in results:
        per_slide[slide_id] = rates
        for cls, block in rates.items():
            pooled[cls]["detected"] += block["detected"]
            pooled[cls]["total"] += block["total"]
    for block in pooled.values():
        if block["total"]:
            block["rate"] = block["detected"] / block["total"]
    doc = {"per_slide": per_slide, "pooled": pooled, "pred": args.pred,
           "threshold": args.threshold}
    with open(args.out, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for cls, block in pooled.items():
        rate = block["rate"]
        print(f"detect-rate[{cls}]: {'-' if rate is None else f'{rate:.4f}'} "
              f"({block['detected']}/{block['total']})")
    return 0


def _cmd_compare(args) -> int:
    rep_a = load_report(args.a)
    rep_b = load_report(args.b)
    out = {}
    for name in ("precision", "recall", "specificity", "auroc", "mcc"):
        va = [s[name] for s in rep_a["slides"] if s.get(name) is not None]
        vb = [s[name] for s in rep_b["slides"] if s.get(name) is not None]
        if len(va) < 2 or len(vb) < 2:
            out[name] = None
            print(f"compare[{name}]: insufficient data")
            continue
        res = welch_t(va, vb)
        out[name] = {"t": res.t, "df": res.df, "p": res.p}
        df_s = "-" if math.isnan(res.df) else f"{res.df:.3f}"
        print(f"compare[{name}]: t={res.t:.6g} df={df_s} p={res.p:.6g}")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(out, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="magfuse",
        description="Multi-magnification tumor localization pipeline on synthetic slides.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_jobs(p):
        p.add_argument("--jobs", type=int, default=1, help="parallel slide workers")

    p = sub.add_parser("synth", help="generate synthetic slides")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--width", type=int, default=4096)
    p.add_argument("--height", type=int, default=4096)
    p.add_argument("--blobs", type=int, default=3)
    p.add_argument("--tumors", type=int, default=2)
    p.add_argument("--tumor-um-min", type=float, default=300.0)
    p.add_argument("--tumor-um-max", type=float, default=900.0)
    p.add_argument("--speckle", type=float, default=0.0)
    p.add_argument("--mpp", type=float, default=0.25)
    p.add_argument("--base-mag", type=float, default=40.0)
    p.add_argument("--levels", default="1,4,16,32")
    add_jobs(p)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("segment", help="tissue mask per slide")
    p.add_argument("--slides", required=True)
    p.add_argument("--method", choices=["colorization", "saturation"],
                   default="colorization")
    p.add_argument("--level", type=int, default=None)
    add_jobs(p)
    p.set_defaults(func=_cmd_segment)

    p = sub.add_parser("grid", help="patch grids filtered to tissue")
    p.add_argument("--slides", required=True)
    p.add_argument("--mags", default="40,20,10,5")
    p.add_argument("--tau", type=float, default=0.25)
    add_jobs(p)
    p.set_defaults(func=_cmd_grid)

    p = sub.add_parser("label", help="clean labels from annotations")
    p.add_argument("--slides", required=True)
    p.add_argument("--annotations", default="annotations.json",
                   help="annotation file name inside each slide dir")
    p.add_argument("--mags", default="40,20,10,5")
    p.add_argument("--min-frac", type=float, default=0.0)
    add_jobs(p)
    p.set_defaults(func=_cmd_label)

    p = sub.add_parser("noise", help="simulate coarse annotations")
    p.add_argument("--slides", required=True)
    p.add_argument("--mags", default="40,20,10,5")
    p.add_argument("--margin-cells", type=int, default=0)
    p.add_argument("--eta", type=float, default=0.0)
    p.add_argument("--preset", choices=["weak", "strong"], default=None)
    p.add_argument("--seed", type=int, default=0)
    add_jobs(p)
    p.set_defaults(func=_cmd_noise)

    p = sub.add_parser("export-patches", help="write patch pixels + labels")
    p.add_argument("--slides", required=True)
    p.add_argument("--mag", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--labels", choices=["clean", "noisy", "none"], default="clean")
    p.add_argument("--balance", action="store_true",
                   help="undersample the majority class")
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    add_jobs(p)
    p.set_defaults(func=_cmd_export_patches)

    p = sub.add_parser("predict-stub", help="run a stub classifier")
    p.add_argument("--slides", required=True)
    p.add_argument("--mags", default="40,20,10,5")
    p.add_argument("--stub", choices=["oracle", "noisy_oracle", "color_stat",
                                      "fraction_threshold"], required=True)
    p.add_argument("--labels", choices=["clean", "noisy"], default="clean")
    p.add_argument("--flip-p", type=float, default=0.0)
    p.add_argument("--score-noise-sd", type=float, default=0.0)
    p.add_argument("--theta", type=float, default=0.5)
    p.add_argument("--weights", default="0,0,0,0", help="bias,r,g,b for color_stat")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--name", default=None, help="map name prefix (default: stub id)")
    add_jobs(p)
    p.set_defaults(func=_cmd_predict_stub)

    p = sub.add_parser("fuse", help="average per-magnification maps on the finest grid")
    p.add_argument("--slides", required=True)
    p.add_argument("--prefix", required=True, help="member map name prefix")
    p.add_argument("--mags", default="40,20,10,5")
    p.add_argument("--out-name", default="fused")
    add_jobs(p)
    p.set_defaults(func=_cmd_fuse)

    p = sub.add_parser("eval", help="score a prediction map against clean labels")
    p.add_argument("--slides", required=True)
    p.add_argument("--pred", required=True, help="prediction map name")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", required=True, help="JSON report path")
    p.add_argument("--csv", default=None, help="optional CSV table path")
    add_jobs(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("detect-rate", help="per-size-class metastasis detection")
    p.add_argument("--slides", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", required=True)
    add_jobs(p)
    p.set_defaults(func=_cmd_detect_rate)

    p = sub.add_parser("compare", help="Welch's t-test between two eval reports")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_compare)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FormatError, ConsistencyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
