"""Safe transfer active learning with Gaussian processes."""

from .gp_core import FitOptions, GPModel, LabeledDataset, fit, posterior
from .kernels import KernelFamily, KernelSpec, radius_for_delta
from .safe_loop import (
    LoopConfig,
    run_full_transfer,
    run_modular_transfer,
    run_sal,
)
from .theory import exploration_radius, find_delta, safety_probability_bound
from .transfer import TransferModel, transfer_posterior

__version__ = "0.1.0"

__all__ = [
    "FitOptions",
    "GPModel",
    "KernelFamily",
    "KernelSpec",
    "LabeledDataset",
    "LoopConfig",
    "TransferModel",
    "exploration_radius",
    "find_delta",
    "fit",
    "posterior",
    "radius_for_delta",
    "run_full_transfer",
    "run_modular_transfer",
    "run_sal",
    "safety_probability_bound",
    "transfer_posterior",
]
