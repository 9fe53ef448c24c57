"""Online CP subspace tracking of partially observed tensor slice streams."""

__version__ = "0.1.0"

from olstec.core import FactorModel, MaskedSlice, StreamSource, TrackerParams, masked_residual, reconstruct_slice
from olstec.tracker import OlstecTracker, TrackerState, init_state, solve_weights, step

__all__ = [
    "FactorModel",
    "MaskedSlice",
    "OlstecTracker",
    "StreamSource",
    "TrackerParams",
    "TrackerState",
    "init_state",
    "masked_residual",
    "reconstruct_slice",
    "solve_weights",
    "step",
]
