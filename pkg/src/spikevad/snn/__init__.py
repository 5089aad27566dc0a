"""Spiking primitives with a minimal reverse-mode tape."""

from .autodiff import Tape, TapeError, Var, backward
from .checkpoint import CheckpointError, decode_arrays, encode_arrays, load_arrays, save_arrays
from .conv import dilated_conv1d, pointwise_conv
from .neurons import (
    DEFAULT_BETA,
    DEFAULT_TAU,
    DEFAULT_V_TH,
    LifState,
    lif_sequence,
    lif_step,
    surrogate_grad,
)

__all__ = [
    "Tape", "TapeError", "Var", "backward",
    "CheckpointError", "decode_arrays", "encode_arrays", "load_arrays", "save_arrays",
    "dilated_conv1d", "pointwise_conv",
    "DEFAULT_BETA", "DEFAULT_TAU", "DEFAULT_V_TH",
    "LifState", "lif_sequence", "lif_step", "surrogate_grad",
]
