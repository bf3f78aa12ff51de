"""crownfuse: tree crown detection from aerial imagery.

A traditional detection pipeline (green color invariance + Gabor texture ->
joint probability map -> watershed -> crown centers), weighted boxes fusion
of external detector outputs, and rule-based integration of both result
streams.
"""
from .config import PipelineConfig, load_config
from .evaluation import EvalReport, GroundTruthBox, combine_reports, match_and_rate
from .features import (
    GaborBankSpec,
    GreenDominanceSpec,
    gabor_bank,
    gabor_feature_map,
    green_dominance_map,
    rgb_to_hsv,
)
from .integrate import (
    AvgCrownSize,
    IntegrationConfig,
    ReliableSet,
    average_crown_size,
    filter_boxes,
    refine_segmentation,
    validate_centers,
)
from .pipeline import TraditionalOutputs, detect_traditional, integrated_predictions
from .probmap import ProbabilityMap, candidate_mask, joint_probability_map
from .raster import (
    Contour,
    connected_components,
    distance_transform,
    find_contours,
    local_maxima,
    morphological_open,
    otsu_threshold,
)
from .segmentation import (
    Segment,
    SegmentationResult,
    TreeCenter,
    extract_centers,
    watershed_split,
)
from .synth import SceneSpec, random_scene_spec, render_scene, simulate_detections
from .wbf import DetectionBox, FusedBox, WbfConfig, fuse, iou

__version__ = "0.1.0"

__all__ = [
    "AvgCrownSize",
    "Contour",
    "DetectionBox",
    "EvalReport",
    "FusedBox",
    "GaborBankSpec",
    "GreenDominanceSpec",
    "GroundTruthBox",
    "IntegrationConfig",
    "PipelineConfig",
    "ProbabilityMap",
    "ReliableSet",
    "SceneSpec",
    "Segment",
    "SegmentationResult",
    "TraditionalOutputs",
    "TreeCenter",
    "WbfConfig",
    "average_crown_size",
    "candidate_mask",
    "combine_reports",
    "connected_components",
    "detect_traditional",
    "distance_transform",
    "extract_centers",
    "filter_boxes",
    "find_contours",
    "fuse",
    "gabor_bank",
    "gabor_feature_map",
    "green_dominance_map",
    "integrated_predictions",
    "iou",
    "joint_probability_map",
    "load_config",
    "local_maxima",
    "match_and_rate",
    "morphological_open",
    "otsu_threshold",
    "random_scene_spec",
    "refine_segmentation",
    "render_scene",
    "rgb_to_hsv",
    "simulate_detections",
    "validate_centers",
    "watershed_split",
]
