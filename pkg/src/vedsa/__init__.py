"""Early viral-cascade detection with a parametric deep survival model.

A recurrent network (gamma) maps per-bin reshare counts to the parameters of an
Exponential, Rayleigh or Weibull hazard; a small convolutional classifier
(delta) labels the resulting survival curve as viral or not.
"""

from .core import (
    BinnedCascade,
    Cascade,
    Label,
    LabeledCascade,
    ViralityConfig,
    bin_cascade,
    censor,
    label_and_bin,
    label_cascade,
    viral_state_sequence,
)
from .delta import DeltaConfig, DeltaModel, Prediction, predict_pipeline, train_delta
from .errors import (
    ConfigurationError,
    DomainError,
    NumericHealthError,
    ParseError,
    SchemaError,
    SingularityError,
    StructuralError,
    UsageError,
    VedsaError,
)
from .evaluation import EvalReport, RunConfig, compute_metrics, emit_report, window_sweep
from .gamma import GammaConfig, GammaModel, SurvivalCurve, infer_survival, survival_nll, train_gamma
from .ingest import SplitSpec, build_dataset, load_dataset, read_canonical, write_canonical
from .survdist import DistFamily, DistParams, kaplan_meier
from .synth import ClassSpec, SynthSpec, gen_dataset, separable_spec

__version__ = "0.1.0"

__all__ = [
    "BinnedCascade", "Cascade", "ClassSpec", "ConfigurationError", "DeltaConfig", "DeltaModel",
    "DistFamily", "DistParams", "DomainError", "EvalReport", "GammaConfig", "GammaModel", "Label",
    "LabeledCascade", "NumericHealthError", "ParseError", "Prediction", "RunConfig", "SchemaError",
    "SingularityError", "SplitSpec", "StructuralError", "SurvivalCurve", "SynthSpec", "UsageError",
    "VedsaError", "ViralityConfig", "bin_cascade", "build_dataset", "censor", "compute_metrics",
    "emit_report", "gen_dataset", "infer_survival", "kaplan_meier", "label_and_bin", "label_cascade",
    "load_dataset", "predict_pipeline", "read_canonical", "separable_spec", "survival_nll",
    "train_delta", "train_gamma", "viral_state_sequence", "window_sweep", "write_canonical",
]
