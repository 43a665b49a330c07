"""Road roughness (IRI) from smartphone vibration: ingest, align, regress, report."""

__version__ = "0.1.0"

from .align import PairedSample, SurveyGeometry, pair_by_chainage, pair_by_time, split_by_distance
from .ingest import AccelSample, IriRecord, parse_accel_log, parse_iri_log, resample_gaps
from .metrics import CorrelationReport, build_report, pearson_r, r_squared
from .model import TansigRegressor, TrainConfig, forward, gradient_check, predict, tansig, train
from .signal import per_second_features, rms_magnitude, validate_shake, validate_standstill
from .synth import SynthScenario, generate, paper_like_scenario

__all__ = [
    "AccelSample",
    "CorrelationReport",
    "IriRecord",
    "PairedSample",
    "SurveyGeometry",
    "SynthScenario",
    "TansigRegressor",
    "TrainConfig",
    "build_report",
    "forward",
    "generate",
    "gradient_check",
    "pair_by_chainage",
    "pair_by_time",
    "paper_like_scenario",
    "parse_accel_log",
    "parse_iri_log",
    "pearson_r",
    "per_second_features",
    "predict",
    "r_squared",
    "resample_gaps",
    "rms_magnitude",
    "split_by_distance",
    "tansig",
    "train",
    "validate_shake",
    "validate_standstill",
]
