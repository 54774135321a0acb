"""Radar object detection toolkit: FMCW simulation, fused annotations, RODNet
models built on a numpy autograd stack, location-based post-processing and
OLS-based evaluation."""

from .config import PipelineConfig, load_config
from .crf import (
    Annotation,
    CameraAnnotation,
    ClassParams,
    CRFAnnotator,
    RadarPeak,
    camera_prob_map,
    detect_annotations,
    fuse,
    gen_confmap,
    radar_prob_map,
    simulate_co_annotations,
)
from .evaluate import EvalReport, ap_ar_sweep, cfar_baseline, format_table, split_report
from .exceptions import ConfigError, DimensionError, DomainError, NumericalError, RodkitError
from .nn import ModelSpec, ParamStore, RODNet, TrainConfig, build_model, forward, train
from .postproc import Detection, OlsParams, find_peaks, l_nms, merge_confmaps, ols
from .radar import (
    CFARDetector,
    RadarConfig,
    RAMap,
    RAMapTransformer,
    RawCube,
    Scene,
    SceneObject,
    cfar_detect,
    raw_to_ramap,
    synth_raw_frame,
)

__version__ = "0.1.0"

__all__ = [
    "Annotation",
    "CFARDetector",
    "CRFAnnotator",
    "CameraAnnotation",
    "ClassParams",
    "ConfigError",
    "Detection",
    "DimensionError",
    "DomainError",
    "EvalReport",
    "ModelSpec",
    "NumericalError",
    "OlsParams",
    "ParamStore",
    "PipelineConfig",
    "RAMap",
    "RAMapTransformer",
    "RODNet",
    "RadarConfig",
    "RadarPeak",
    "RawCube",
    "RodkitError",
    "Scene",
    "SceneObject",
    "TrainConfig",
    "ap_ar_sweep",
    "build_model",
    "camera_prob_map",
    "cfar_baseline",
    "cfar_detect",
    "detect_annotations",
    "find_peaks",
    "format_table",
    "forward",
    "fuse",
    "gen_confmap",
    "l_nms",
    "load_config",
    "merge_confmaps",
    "ols",
    "radar_prob_map",
    "raw_to_ramap",
    "simulate_co_annotations",
    "split_report",
    "synth_raw_frame",
    "train",
]
