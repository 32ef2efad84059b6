"""Complex-valued convolutional networks as multiscale windowed spectra (1-D)."""
from .signal import (
    AveragingKernel,
    ModulatedFilter,
    WindowSpec,
    boxcar_window,
    build_averaging_kernel,
    convolve,
    gaussian_window,
    local_average,
    modulus,
    shift,
    subsample,
)

__version__ = "0.1.0"

__all__ = [
    "AveragingKernel",
    "ModulatedFilter",
    "WindowSpec",
    "boxcar_window",
    "build_averaging_kernel",
    "convolve",
    "gaussian_window",
    "local_average",
    "modulus",
    "shift",
    "subsample",
]
