"""Dense-tensor numerics with reverse-mode autodiff.

Everything is 64-bit float. Forward passes are deterministic given the seed,
and every layer's analytic gradient is validated against central finite
differences (see ``gradcheck``).
"""

from .rng import SplitMix64, derive_seed
from .tensor import Tensor, concat, no_grad, set_debug_checks
from .params import ParamStore, load_arrays, save_arrays
from .layers import (
    RunningStats,
    activation,
    batchnorm_forward,
    bigru_forward,
    bigru_forward_batch,
    dense_forward,
    gru_cell,
    mse_loss,
)
from .adam import AdamState, adam_step
from .gradcheck import gradient_check

__all__ = [
    "AdamState",
    "ParamStore",
    "RunningStats",
    "SplitMix64",
    "Tensor",
    "activation",
    "adam_step",
    "batchnorm_forward",
    "bigru_forward",
    "bigru_forward_batch",
    "concat",
    "dense_forward",
    "derive_seed",
    "gradient_check",
    "gru_cell",
    "load_arrays",
    "mse_loss",
    "no_grad",
    "save_arrays",
    "set_debug_checks",
]
