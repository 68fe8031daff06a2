"""Skywave over-the-horizon radar multitarget tracking with joint
ionospheric height inference, plus the synthetic benchmark scenario used
for its RMSE studies."""

from .config import Config, ScenarioConfig, TrackerConfig, default_config, load_config
from .ecm import VIH_FIXED, VIH_FULL, VIH_IONOSONDE, run_tracker, run_window
from .experiment import ExperimentSpec, run_experiment
from .geometry import (
    IonosphereGrid,
    PropagationMode,
    RadarGeometry,
    RadarMeasurement,
    TargetState,
    jacobian_heights,
    jacobian_state,
    reflection_subregions,
    slant_transform,
)
from .gmrf import GmrfField, JointField, build_precision, combine, dense_marginals, sample
from .sim import GroundTruth, simulate
from .vih import UsedVihs, lgbp

__version__ = "0.1.0"

__all__ = [
    "Config",
    "ScenarioConfig",
    "TrackerConfig",
    "default_config",
    "load_config",
    "VIH_FIXED",
    "VIH_FULL",
    "VIH_IONOSONDE",
    "run_tracker",
    "run_window",
    "ExperimentSpec",
    "run_experiment",
    "IonosphereGrid",
    "PropagationMode",
    "RadarGeometry",
    "RadarMeasurement",
    "TargetState",
    "jacobian_heights",
    "jacobian_state",
    "reflection_subregions",
    "slant_transform",
    "GmrfField",
    "JointField",
    "build_precision",
    "combine",
    "dense_marginals",
    "sample",
    "GroundTruth",
    "simulate",
    "UsedVihs",
    "lgbp",
    "__version__",
]
