"""Safe controllability, periodic controller synthesis and cost optimisation
for linear-rate multi-mode systems."""

from .core import (
    FrequencyVector,
    InvalidInstance,
    MmsInstance,
    Mode,
    PeriodicController,
    SafeBox,
    TimedAction,
    classify_vector,
    eval_F,
    flow_segment,
)
from .synthesis import RejectedInput, SynthesisResult, synthesize

__all__ = [
    "FrequencyVector",
    "InvalidInstance",
    "MmsInstance",
    "Mode",
    "PeriodicController",
    "RejectedInput",
    "SafeBox",
    "SynthesisResult",
    "TimedAction",
    "classify_vector",
    "eval_F",
    "flow_segment",
    "synthesize",
]

__version__ = "0.1.0"
