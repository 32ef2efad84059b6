"""Finite sequences and the primitive stage operations.

Signals are plain numpy arrays. Every operation acts on the last axis, so a
batch of signals is a 2-D array of shape ``(batch, N)``.

Filters are stored as odd-length tap arrays indexed ``-m..m``; array position
``m`` holds tap 0 and lines up with the output sample ("same" convolution):

    y[j] = sum_t f[t] * x[j - t]

Two boundary modes exist. ``"circular"`` reads ``x`` modulo ``N``;
``"zero_pad"`` treats samples outside ``0..N-1`` as zero.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

MODES = ("circular", "zero_pad")


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise ValueError(f"unknown boundary mode {mode!r}; expected one of {MODES}")


def _check_finite(x: np.ndarray, what: str = "signal") -> None:
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{what} contains non-finite values")


def as_real_signal(x, *, nonnegative: bool = False) -> np.ndarray:
    """Validate and return ``x`` as a float64 array with a nonempty last axis."""
    arr = np.asarray(x)
    if np.iscomplexobj(arr):
        raise TypeError("expected a real signal, got complex values")
    arr = arr.astype(np.float64, copy=False)
    if arr.ndim == 0 or arr.shape[-1] < 1:
        raise ValueError("signal must have at least one sample")
    _check_finite(arr)
    if nonnegative and np.any(arr < 0):
        raise ValueError("signal must be nonnegative")
    return arr


def as_complex_signal(x) -> np.ndarray:
    arr = np.asarray(x).astype(np.complex128, copy=False)
    if arr.ndim == 0 or arr.shape[-1] < 1:
        raise ValueError("signal must have at least one sample")
    _check_finite(arr)
    return arr


def _check_taps(taps, what: str = "filter") -> np.ndarray:
    arr = np.asarray(taps)
    if arr.ndim != 1 or arr.size % 2 != 1:
        raise ValueError(f"{what} must be a 1-D array of odd length (indices -m..m)")
    _check_finite(arr, what)
    return arr


@dataclass(frozen=True, eq=False)
class WindowSpec:
    """Even, nonnegative window ``g`` with taps at indices ``-n..n``."""

    g: np.ndarray

    def __post_init__(self):
        g = np.array(_check_taps(self.g, "window"), dtype=np.float64)
        if np.any(g < 0):
            raise ValueError("window taps must be nonnegative")
        if not np.array_equal(g, g[::-1]):
            raise ValueError("window must be even: g[-k] == g[k]")
        g.setflags(write=False)
        object.__setattr__(self, "g", g)

    @property
    def n(self) -> int:
        return (self.g.size - 1) // 2

    @property
    def indices(self) -> np.ndarray:
        return np.arange(-self.n, self.n + 1)

    def __repr__(self) -> str:
        return f"WindowSpec(n={self.n})"


def boxcar_window(n: int) -> WindowSpec:
    return WindowSpec(np.ones(2 * n + 1))


def gaussian_window(n: int, std: float | None = None) -> WindowSpec:
    """Gaussian samples on ``-n..n``, default std ``n / 2``, peak value 1."""
    if n < 0:
        raise ValueError("half-width must be nonnegative")
    if n == 0:
        return WindowSpec(np.ones(1))
    std = n / 2 if std is None else std
    k = np.arange(-n, n + 1, dtype=np.float64)
    g = np.exp(-0.5 * (k / std) ** 2)
    # exp of equal arguments is bitwise symmetric, but be explicit about it
    g = 0.5 * (g + g[::-1])
    return WindowSpec(g)


@dataclass(frozen=True, eq=False)
class ModulatedFilter:
    """Complex filter ``taps[k] = exp(i k omega) g[k]`` built from a window."""

    omega: float
    taps: np.ndarray
    window: WindowSpec

    def __post_init__(self):
        if not 0.0 <= self.omega < 2 * np.pi:
            raise ValueError("omega must lie in [0, 2*pi)")
        expected = np.exp(1j * self.window.indices * self.omega) * self.window.g
        taps = np.asarray(self.taps, dtype=np.complex128)
        if taps.shape != expected.shape or np.max(np.abs(taps - expected)) > 1e-14:
            raise ValueError("taps do not match exp(i k omega) g[k]")
        taps = taps.copy()
        taps.setflags(write=False)
        object.__setattr__(self, "taps", taps)

    @classmethod
    def from_window(cls, window: WindowSpec, omega: float) -> "ModulatedFilter":
        taps = np.exp(1j * window.indices * omega) * window.g
        return cls(float(omega), taps, window)

    @property
    def n(self) -> int:
        return self.window.n


@dataclass(frozen=True, eq=False)
class AveragingKernel:
    """Boxcar-averaged window; support ``-(n+p)..(n+p)``."""

    h: np.ndarray
    n: int
    pool: int

    @property
    def half_width(self) -> int:
        return self.n + self.pool


def build_averaging_kernel(window: WindowSpec, pool: int | None = None) -> AveragingKernel:
    """Average the window over a sliding block of ``2p+1`` indices.

    ``h[l] = 1/(2p+1) * sum_{j=l-p}^{l+p} g[j]`` with ``g`` zero outside
    ``-n..n``. With the default ``p = n`` the support is ``-2n..2n``.
    """
    n = window.n
    p = n if pool is None else int(pool)
    if p < 0:
        raise ValueError("pool half-width must be nonnegative")
    h = np.convolve(window.g, np.ones(2 * p + 1)) / (2 * p + 1)
    h = np.maximum(h, 0.0)  # guards -0.0 only; all summands are >= 0
    h.setflags(write=False)
    return AveragingKernel(h, n, p)


def _shift(x: np.ndarray, t: int, mode: str) -> np.ndarray:
    """Return ``x[j - t]`` along the last axis."""
    if mode == "circular":
        return np.roll(x, t, axis=-1)
    out = np.zeros_like(x)
    N = x.shape[-1]
    if t >= 0:
        if t < N:
            out[..., t:] = x[..., : N - t]
    elif -t < N:
        out[..., : N + t] = x[..., -t:]
    return out


def _correlate_shift(x: np.ndarray, t: int, mode: str) -> np.ndarray:
    """Return ``x[j + t]`` along the last axis (adjoint of ``_shift``)."""
    return _shift(x, -t, mode)


def convolve(x, taps, *, mode: str = "circular", normalize: bool = False) -> np.ndarray:
    """Centered convolution ``y[j] = sum_t f[t] x[j - t]`` along the last axis.

    Parameters
    ----------
    x : array_like
        Real or complex signal(s), shape ``(..., N)``.
    taps : array_like or ModulatedFilter or WindowSpec or AveragingKernel
        Odd-length filter indexed ``-m..m``.
    mode : {"circular", "zero_pad"}
    normalize : bool
        Multiply by ``1/sqrt(2m+1)``, with ``m`` the filter half-width.
    """
    _check_mode(mode)
    f = _filter_taps(taps)
    x = np.asarray(x)
    if x.ndim == 0 or x.shape[-1] < 1:
        raise ValueError("signal must have at least one sample")
    _check_finite(x)
    N = x.shape[-1]
    m = (f.size - 1) // 2
    if mode == "circular" and f.size > N:
        raise ValueError(f"filter of length {f.size} is longer than the signal ({N})")
    dtype = np.result_type(x.dtype, f.dtype, np.float64)
    y = np.zeros(x.shape, dtype=dtype)
    for i, t in enumerate(range(-m, m + 1)):
        if f[i] != 0:
            y += f[i] * _shift(x, t, mode)
    if normalize:
        y *= 1.0 / math.sqrt(f.size)
    return y


def _filter_taps(taps) -> np.ndarray:
    if isinstance(taps, ModulatedFilter):
        return taps.taps
    if isinstance(taps, WindowSpec):
        return taps.g
    if isinstance(taps, AveragingKernel):
        return taps.h
    arr = _check_taps(taps)
    if not np.iscomplexobj(arr):
        arr = arr.astype(np.float64, copy=False)
    return arr


def modulus(x) -> np.ndarray:
    """Entrywise absolute value."""
    x = np.asarray(x)
    _check_finite(x)
    return np.abs(x).astype(np.float64, copy=False)


def local_average(x, pool_width: int, *, mode: str = "circular") -> np.ndarray:
    """Moving average over ``pool_width = 2p+1`` samples centered on each index."""
    _check_mode(mode)
    if pool_width < 1 or pool_width % 2 == 0:
        raise ValueError("pool_width must be a positive odd integer")
    x = np.asarray(x)
    _check_finite(x)
    p = pool_width // 2
    y = np.zeros(x.shape, dtype=np.result_type(x.dtype, np.float64))
    for t in range(-p, p + 1):
        y += _shift(x, t, mode)
    return y / pool_width


def subsample(x, factor: int, phase: int = 0) -> np.ndarray:
    """Keep ``x[factor*k + phase]`` along the last axis."""
    if factor < 1:
        raise ValueError("subsample factor must be >= 1")
    if not 0 <= phase < factor:
        raise ValueError("phase must satisfy 0 <= phase < factor")
    x = np.asarray(x)
    N = x.shape[-1]
    if factor > 1 and factor >= N:
        warnings.warn(f"subsample factor {factor} >= signal length {N}", RuntimeWarning, stacklevel=2)
    return x[..., phase::factor]


def upsample_adjoint(g, length: int, factor: int, phase: int = 0) -> np.ndarray:
    """Adjoint of :func:`subsample`: scatter ``g`` back into zeros of ``length``."""
    g = np.asarray(g)
    out = np.zeros(g.shape[:-1] + (length,), dtype=g.dtype)
    out[..., phase::factor] = g
    return out


def shift(x, s: int) -> np.ndarray:
    """Circular lag: ``y[k] = x[(k - s) mod N]``."""
    return np.roll(np.asarray(x), s, axis=-1)
