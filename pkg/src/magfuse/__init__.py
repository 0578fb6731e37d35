"""Multi-magnification tumor localization on whole-slide image pyramids.

The package covers the full desk-scale pipeline: synthetic slide generation,
colorization-based tissue segmentation, aligned patch grids at 5/10/20/40x,
exact polygon label rasterization with coarse-annotation noise, stub
classifiers, multi-magnification fusion, and the evaluation stack
(MCC, AUROC, metastasis detection rates, Welch's t-test).
"""

from .annotations import (
    Dataset,
    LabelGrid,
    NoiseConfig,
    apply_noise,
    build_dataset,
    drop_tumor_regions,
    expand_labels,
    load_annotations,
    load_labels,
    project_labels,
    rasterize_labels,
    save_annotations,
    save_labels,
    tumor_area_fractions,
)
from .ensemble import (
    FusedMap,
    PredictionMap,
    binarize,
    fuse_uniform,
    load_prediction_map,
    save_prediction_map,
    upsample_to_finest,
)
from .errors import ConsistencyError, FormatError
from .geometry import (
    clip_polygon_to_rect,
    clipped_area,
    polygon_area,
    polygon_diameter,
    polygon_is_simple,
)
from .grid import (
    FINEST,
    MAG_TO_PATCH_SIZE,
    MagSpec,
    PatchGrid,
    build_grid,
    compute_tissue_fractions,
    export_patches,
    extract_patch,
    filter_by_tissue,
    grid_for_slide,
    load_grid,
    save_grid,
    tissue_fraction,
)
from .metrics import (
    AggregateMetrics,
    ConfusionCounts,
    MetastasisRegion,
    SlideMetrics,
    WelchResult,
    aggregate,
    aggregate_runs,
    auroc,
    compute_slide_metrics,
    confusion,
    detection_rate,
    find_regions,
    mcc,
    precision,
    recall,
    specificity,
    welch_t,
    write_report,
)
from .pyramid import (
    AnnotationRegion,
    AnnotationSet,
    LevelInfo,
    PyramidImage,
    SynthConfig,
    SynthTruth,
    block_mean_u8,
    generate_synthetic_slide,
    generate_synthetic_slide_with_truth,
    load_pyramid,
    read_ppm,
    read_region,
    save_pyramid,
    write_ppm,
)
from .stubs import StubSpec, run_stub
from .tissue import (
    TissueMask,
    colorization_map,
    load_mask,
    otsu_threshold,
    saturation_map,
    save_mask,
    segment_tissue,
)

__version__ = "0.1.0"

__all__ = [
    "AggregateMetrics",
    "AnnotationRegion",
    "AnnotationSet",
    "ConfusionCounts",
    "ConsistencyError",
    "Dataset",
    "FINEST",
    "FormatError",
    "FusedMap",
    "LabelGrid",
    "LevelInfo",
    "MAG_TO_PATCH_SIZE",
    "MagSpec",
    "MetastasisRegion",
    "NoiseConfig",
    "PatchGrid",
    "PredictionMap",
    "PyramidImage",
    "SlideMetrics",
    "StubSpec",
    "SynthConfig",
    "SynthTruth",
    "TissueMask",
    "WelchResult",
    "aggregate",
    "aggregate_runs",
    "apply_noise",
    "auroc",
    "binarize",
    "block_mean_u8",
    "build_dataset",
    "build_grid",
    "clip_polygon_to_rect",
    "clipped_area",
    "colorization_map",
    "compute_slide_metrics",
    "compute_tissue_fractions",
    "confusion",
    "detection_rate",
    "drop_tumor_regions",
    "expand_labels",
    "export_patches",
    "extract_patch",
    "filter_by_tissue",
    "find_regions",
    "fuse_uniform",
    "generate_synthetic_slide",
    "generate_synthetic_slide_with_truth",
    "grid_for_slide",
    "load_annotations",
    "load_grid",
    "load_labels",
    "load_mask",
    "load_prediction_map",
    "load_pyramid",
    "mcc",
    "otsu_threshold",
    "polygon_area",
    "polygon_diameter",
    "polygon_is_simple",
    "precision",
    "project_labels",
    "rasterize_labels",
    "read_ppm",
    "read_region",
    "recall",
    "run_stub",
    "saturation_map",
    "save_annotations",
    "save_grid",
    "save_labels",
    "save_mask",
    "save_prediction_map",
    "save_pyramid",
    "segment_tissue",
    "specificity",
    "tissue_fraction",
    "tumor_area_fractions",
    "upsample_to_finest",
    "welch_t",
    "write_ppm",
    "write_report",
]
