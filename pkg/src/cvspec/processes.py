"""Reproducible generators for stationary and locally stationary processes.

Each process is a frozen dataclass carrying its own ``length`` and ``seed``;
:func:`generate` turns it into a float64 array. The same seed always yields
the same bytes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Union

import numpy as np

from .signal import shift

__all__ = [
    "FilteredWhiteNoise",
    "LocallyStationary",
    "RandomPhaseSinusoid",
    "PulseTrain",
    "LowpassGaussian",
    "ProcessSpec",
    "generate",
    "shift",
    "trial_rng",
]

NOISES = ("gaussian", "poisson")


def _as_taps(taps) -> np.ndarray:
    arr = np.array(taps, dtype=np.float64).reshape(-1)
    if arr.size == 0:
        raise ValueError("filter needs at least one tap")
    if not np.all(np.isfinite(arr)):
        raise ValueError("filter taps must be finite")
    arr.setflags(write=False)
    return arr


def _check_common(length: int) -> None:
    if length < 1:
        raise ValueError("length must be >= 1")


def _draw_noise(rng: np.random.Generator, shape, noise: str, scale: float) -> np.ndarray:
    if noise == "gaussian":
        return scale * rng.standard_normal(shape)
    if noise == "poisson":
        return rng.poisson(scale, shape).astype(np.float64)
    raise ValueError(f"unknown noise distribution {noise!r}")


def _circular_filter(z: np.ndarray, taps: np.ndarray, origin: int) -> np.ndarray:
    # X_j = sum_i f_{i-origin} Z_{j-(i-origin)}, indices modulo N
    out = np.zeros_like(z)
    for i, f in enumerate(taps):
        if f != 0:
            out += f * np.roll(z, i - origin, axis=-1)
    return out


@dataclass(frozen=True)
class FilteredWhiteNoise:
    """``X_j = sum_k f[j-k] Z_k`` with i.i.d. ``Z``, circular in ``j``.

    ``taps[i]`` is ``f`` at index ``i - origin``. For ``noise="gaussian"``,
    ``noise_scale`` is the standard deviation of ``Z``; for ``"poisson"`` it is
    the rate.
    """

    taps: np.ndarray
    length: int
    seed: int = 0
    noise: str = "gaussian"
    noise_scale: float = 1.0
    origin: int = 0

    def __post_init__(self):
        object.__setattr__(self, "taps", _as_taps(self.taps))
        _check_common(self.length)
        if self.noise not in NOISES:
            raise ValueError(f"unknown noise distribution {self.noise!r}")
        if not math.isfinite(self.noise_scale) or self.noise_scale < 0:
            raise ValueError("noise_scale must be finite and nonnegative")

    def _draw(self, rng):
        z = _draw_noise(rng, self.length, self.noise, self.noise_scale)
        return _circular_filter(z, self.taps, self.origin)


@dataclass(frozen=True)
class LocallyStationary:
    """Filtered white noise whose filter drifts with position.

    ``filters`` are given at ``knots`` (sample positions, increasing); the
    filter used at index ``j`` is linearly interpolated between the nearest
    knots and held constant outside them. Default knots are evenly spaced
    across ``0..length-1``.
    """

    filters: tuple
    length: int
    seed: int = 0
    knots: tuple | None = None
    noise: str = "gaussian"
    noise_scale: float = 1.0
    origin: int = 0

    def __post_init__(self):
        _check_common(self.length)
        taps = [_as_taps(f) for f in self.filters]
        if not taps:
            raise ValueError("need at least one filter")
        width = max(t.size for t in taps)
        padded = tuple(np.pad(t, (0, width - t.size)) for t in taps)
        object.__setattr__(self, "filters", padded)
        if self.knots is None:
            knots = tuple(np.linspace(0, self.length - 1, len(padded)).tolist())
        else:
            knots = tuple(float(k) for k in self.knots)
        if len(knots) != len(padded):
            raise ValueError("need one knot per filter")
        if any(b <= a for a, b in zip(knots, knots[1:])):
            raise ValueError("knots must be strictly increasing")
        object.__setattr__(self, "knots", knots)
        if self.noise not in NOISES:
            raise ValueError(f"unknown noise distribution {self.noise!r}")

    def interpolation_weights(self) -> np.ndarray:
        """Weights ``w[i, j]`` of knot filter ``i`` at sample ``j``."""
        j = np.arange(self.length, dtype=np.float64)
        eye = np.eye(len(self.knots))
        return np.stack([np.interp(j, self.knots, eye[i]) for i in range(len(self.knots))])

    def filter_at(self, j: int) -> np.ndarray:
        w = self.interpolation_weights()[:, j]
        return np.tensordot(w, np.stack(self.filters), axes=1)

    def _draw(self, rng):
        z = _draw_noise(rng, self.length, self.noise, self.noise_scale)
        # linear in the filter, so interpolate the knot outputs
        outs = np.stack([_circular_filter(z, f, self.origin) for f in self.filters])
        return np.sum(self.interpolation_weights() * outs, axis=0)


@dataclass(frozen=True)
class RandomPhaseSinusoid:
    """``X_k = 1 + sin(pi (k + J) / (period / 2))`` with ``J`` uniform on ``1..offset_max``.

    Defaults give ``1 + sin(pi (k + J) / 1000)`` with ``J`` in ``1..2000``.
    """

    length: int
    seed: int = 0
    period: float = 2000.0
    offset_max: int = 2000

    def __post_init__(self):
        _check_common(self.length)
        if self.period <= 0 or self.offset_max < 1:
            raise ValueError("period and offset_max must be positive")

    def _draw(self, rng):
        J = int(rng.integers(1, self.offset_max + 1))
        k = np.arange(self.length, dtype=np.float64)
        return 1.0 + np.sin(np.pi * (k + J) / (self.period / 2))


@dataclass(frozen=True)
class PulseTrain:
    """Unit pulses of ``width`` samples every ``period`` samples, random offset.

    ``X_k = 1`` when ``(k + J) mod period < width``, else 0, with ``J`` uniform
    on ``1..period``.
    """

    length: int
    seed: int = 0
    period: int = 1000
    width: int = 10

    def __post_init__(self):
        _check_common(self.length)
        if self.period < 1 or not 0 < self.width <= self.period:
            raise ValueError("need period >= 1 and 0 < width <= period")

    def _draw(self, rng):
        J = int(rng.integers(1, self.period + 1))
        k = np.arange(self.length)
        return ((k + J) % self.period < self.width).astype(np.float64)


@dataclass(frozen=True)
class LowpassGaussian:
    """Gaussian white noise smoothed by a truncated Gaussian filter.

    ``cutoff`` (radians/sample) is the standard deviation of the filter's
    frequency response; the time-domain filter has std ``1 / cutoff`` and is
    truncated at four standard deviations. Taps are scaled to unit energy, so
    the output has standard deviation ``std`` around ``mean``.
    """

    length: int
    seed: int = 0
    cutoff: float = 0.5
    mean: float = 0.0
    std: float = 1.0

    def __post_init__(self):
        _check_common(self.length)
        if not self.cutoff > 0:
            raise ValueError("cutoff must be positive")

    def filter_taps(self) -> np.ndarray:
        sigma = 1.0 / self.cutoff
        half = max(1, int(math.ceil(4 * sigma)))
        t = np.arange(-half, half + 1, dtype=np.float64)
        f = np.exp(-0.5 * (t / sigma) ** 2)
        return f / np.sqrt(np.sum(f**2))

    def as_filtered_noise(self) -> FilteredWhiteNoise:
        taps = self.filter_taps()
        return FilteredWhiteNoise(taps, self.length, self.seed, origin=(taps.size - 1) // 2)

    def _draw(self, rng):
        return self.mean + self.std * self.as_filtered_noise()._draw(rng)


ProcessSpec = Union[FilteredWhiteNoise, LocallyStationary, RandomPhaseSinusoid, PulseTrain, LowpassGaussian]

KINDS = {
    "filtered_white_noise": FilteredWhiteNoise,
    "locally_stationary": LocallyStationary,
    "random_phase_sinusoid": RandomPhaseSinusoid,
    "pulse_train": PulseTrain,
    "lowpass_gaussian": LowpassGaussian,
}


def kind_of(spec: ProcessSpec) -> str:
    for name, cls in KINDS.items():
        if isinstance(spec, cls):
            return name
    raise TypeError(f"not a process spec: {spec!r}")


def trial_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for realization ``index`` under ``seed``."""
    return np.random.default_rng([int(seed), int(index)])


def generate(spec: ProcessSpec, rng: np.random.Generator | None = None) -> np.ndarray:
    """Draw one realization; uses ``spec.seed`` unless ``rng`` is given."""
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    return spec._draw(rng)


def with_length(spec: ProcessSpec, length: int) -> ProcessSpec:
    return replace(spec, length=length)
