"""Context-aware opportunistic transmission of buffered vehicular sensor data."""

from .cat import CatParams, CatPolicy, PeriodicPolicy, execute_transmission, step, tx_probability
from .geomap import GridMap, build_map, lookup
from .metrics import PredictedRateMetric, SingleMetric, WeightedMetric, evaluate_metric, normalize_indicator
from .predictor import RateModel, TreeParams, assemble_features, best_split, cross_validate, predict, train
from .sim import SimConfig, SimReport, compare, run
from .synth import Scenario, derive_link, generate_trace, highway_scenario, rsrp_at
from .trace import ContextSnapshot, Trace, parse_trace, resample, write_trace

__version__ = "0.1.0"

__all__ = [
    "CatParams",
    "CatPolicy",
    "PeriodicPolicy",
    "execute_transmission",
    "step",
    "tx_probability",
    "GridMap",
    "build_map",
    "lookup",
    "PredictedRateMetric",
    "SingleMetric",
    "WeightedMetric",
    "evaluate_metric",
    "normalize_indicator",
    "RateModel",
    "TreeParams",
    "assemble_features",
    "best_split",
    "cross_validate",
    "predict",
    "train",
    "SimConfig",
    "SimReport",
    "compare",
    "run",
    "Scenario",
    "derive_link",
    "generate_trace",
    "highway_scenario",
    "rsrp_at",
    "ContextSnapshot",
    "Trace",
    "parse_trace",
    "resample",
    "write_trace",
]
