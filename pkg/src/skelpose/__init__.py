"""Occlusion-aware stick-figure maps for 3D pose regression, desk scale."""

__version__ = "0.1.0"

from .skeleton import SkeletonModel, standard_model, bone_of_child, ROOT_INDEX
from .geometry import Camera, CropWindow, project, project_pose, back_project, crop_window, to_canvas, from_canvas
from .render import MapConfig, SkeletonMapPair, render_pair, render_pair_reference, render_all
from .metrics import mpjpe, pckh, aggregate, EvalReport
from .hypotheses import Hypothesis, HypothesisSet, config_grid, match_to_2d, oracle_select
from .dataio import Sample, Dataset, synth_dataset, load_dataset, save_dataset
from .networks import NetworkSpec, TrainConfig, build_generator, build_regressor, train_generator, train_regressor, infer_pose

__all__ = [
    "SkeletonModel", "standard_model", "bone_of_child", "ROOT_INDEX",
    "Camera", "CropWindow", "project", "project_pose", "back_project",
    "crop_window", "to_canvas", "from_canvas",
    "MapConfig", "SkeletonMapPair", "render_pair", "render_pair_reference", "render_all",
    "mpjpe", "pckh", "aggregate", "EvalReport",
    "Hypothesis", "HypothesisSet", "config_grid", "match_to_2d", "oracle_select",
    "Sample", "Dataset", "synth_dataset", "load_dataset", "save_dataset",
    "NetworkSpec", "TrainConfig", "build_generator", "build_regressor",
    "train_generator", "train_regressor", "infer_pose",
]
