"""Monte-Carlo absolute/power spectra and windowed local spectra.

The block sum used by the global estimators is

    S(omega) = (2n+1)^{-1/2} * sum_{k=-n}^{n} exp(-i k omega) X_k

averaged as ``|S|`` (absolute spectrum) or ``|S|^2`` (power spectrum) over
independent realizations. Local spectra come in two forms that agree for
even windows: a literal windowed sum (:func:`local_spectrum_direct`) and
convolution, modulus, then moving average (:func:`local_spectrum_conv`).
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import processes
from .signal import (
    ModulatedFilter,
    WindowSpec,
    _check_mode,
    as_real_signal,
    convolve,
    local_average,
    modulus,
)

# trial blocks have a fixed size so results never depend on thread count
TRIAL_BLOCK = 256


def frequency_grid(m: int) -> np.ndarray:
    """``omega_j = 2 pi j / m`` for ``j = 0..m-1``."""
    if m < 1:
        raise ValueError("need at least one frequency")
    return 2 * np.pi * np.arange(m) / m


def _check_omegas(omegas) -> np.ndarray:
    om = np.atleast_1d(np.asarray(omegas, dtype=np.float64))
    if om.ndim != 1 or om.size == 0:
        raise ValueError("omegas must be a nonempty 1-D grid")
    if np.any(np.diff(om) <= 0):
        raise ValueError("omegas must be strictly increasing")
    return om


@dataclass(frozen=True, eq=False)
class SpectrumEstimate:
    omegas: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    trials: int
    n: int

    def to_csv(self, path) -> None:
        """Header row of frequencies, then a value row and a standard-error row."""
        rows = [self.omegas, self.values, self.stderr]
        Path(path).write_text("".join(",".join(repr(float(v)) for v in r) + "\n" for r in rows))


@dataclass(frozen=True, eq=False)
class LocalSpectrum:
    omegas: np.ndarray
    values: np.ndarray  # (location, frequency)
    window: WindowSpec | np.ndarray
    pool: int

    def to_csv(self, path) -> None:
        rows = [self.omegas, *self.values]
        Path(path).write_text("".join(",".join(repr(float(v)) for v in r) + "\n" for r in rows))


@dataclass(frozen=True)
class Lagged:
    """A process read with a circular lag: ``Y_k = X_{k - lag}``."""

    base: processes.ProcessSpec
    lag: int

    @property
    def length(self) -> int:
        return self.base.length

    @property
    def seed(self) -> int:
        return self.base.seed

    def _draw(self, rng):
        return processes.shift(processes.generate(self.base, rng), self.lag)


def _resize(proc, length: int):
    if isinstance(proc, Lagged):
        return replace(proc, base=processes.with_length(proc.base, length))
    return processes.with_length(proc, length)


def _block_sums(proc, omegas: np.ndarray, n: int, seed: int, start: int, stop: int) -> np.ndarray:
    L = 2 * n + 1
    k = np.arange(-n, n + 1, dtype=np.float64)
    basis = np.exp(-1j * np.outer(k, omegas)) / math.sqrt(L)
    block = np.empty((stop - start, L))
    for row, t in enumerate(range(start, stop)):
        block[row] = processes.generate(proc, processes.trial_rng(seed, t))
    return block @ basis


def _monte_carlo(proc, omegas, n, trials, seed, threads, power) -> SpectrumEstimate:
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if n < 1:
        raise ValueError("block half-width n must be >= 1")
    om = _check_omegas(omegas)
    sized = _resize(proc, 2 * n + 1)
    bounds = [(s, min(s + TRIAL_BLOCK, trials)) for s in range(0, trials, TRIAL_BLOCK)]

    def work(b):
        s = _block_sums(sized, om, n, seed, *b)
        a = np.abs(s)
        return a * a if power else a

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, bounds))
    else:
        parts = [work(b) for b in bounds]
    samples = np.concatenate(parts, axis=0)
    mean = samples.mean(axis=0)
    if trials > 1:
        stderr = samples.std(axis=0, ddof=1) / math.sqrt(trials)
    else:
        stderr = np.zeros_like(mean)
    return SpectrumEstimate(om, mean, stderr, trials, n)


def estimate_absolute_spectrum(proc, omegas, n: int, trials: int, seed: int, *, threads: int = 1) -> SpectrumEstimate:
    """Monte-Carlo mean of ``|S(omega)|`` over ``trials`` realizations.

    Realization ``t`` is drawn from ``trial_rng(seed, t)`` at length ``2n+1``
    and indexed ``-n..n``.
    """
    return _monte_carlo(proc, omegas, n, trials, seed, threads, power=False)


def estimate_power_spectrum(proc, omegas, n: int, trials: int, seed: int, *, threads: int = 1) -> SpectrumEstimate:
    """Monte-Carlo mean of ``|S(omega)|^2``; see :func:`estimate_absolute_spectrum`."""
    return _monte_carlo(proc, omegas, n, trials, seed, threads, power=True)


def _window_taps(window) -> np.ndarray:
    if isinstance(window, WindowSpec):
        return window.g
    g = np.asarray(window, dtype=np.float64)
    if g.ndim != 1 or g.size % 2 != 1:
        raise ValueError("window must have odd length")
    return g


def local_spectrum_direct(x, window, omegas, pool: int | None = None, *, mode: str = "circular") -> LocalSpectrum:
    """Evaluate the windowed local spectrum term by term.

    For each location ``l`` and frequency ``omega``::

        (1/(2p+1)) sum_{j=l-p}^{l+p} | (2n+1)^{-1/2} sum_k exp(-i k omega) g[k-j] x[k] |

    The inner sum runs over ``k = j-n..j+n``. In circular mode ``x`` is read
    modulo ``N`` while the phase uses the unwrapped ``k``; in zero-pad mode
    terms outside the signal vanish and so do outer terms with ``j`` outside
    ``0..N-1``. ``window`` may be a raw tap array, which skips the evenness
    check.
    """
    _check_mode(mode)
    x = as_real_signal(x)
    if x.ndim != 1:
        raise ValueError("expected a single 1-D signal")
    g = _window_taps(window)
    om = _check_omegas(omegas)
    N = x.size
    n = (g.size - 1) // 2
    p = n if pool is None else int(pool)
    j = np.arange(N)
    t = np.arange(-n, n + 1)
    k = j[:, None] + t[None, :]
    if mode == "circular":
        xk = x[k % N]
    else:
        inside = (k >= 0) & (k < N)
        xk = np.where(inside, x[np.clip(k, 0, N - 1)], 0.0)
    weighted = xk * g[None, :]  # g[k - j] = g[t]
    values = np.empty((N, om.size))
    for col, w in enumerate(om):
        inner = np.sum(np.exp(-1j * k * w) * weighted, axis=1) / math.sqrt(2 * n + 1)
        mag = np.abs(inner)
        acc = np.zeros(N)
        for s in range(-p, p + 1):
            jj = j + s
            if mode == "circular":
                acc += mag[jj % N]
            else:
                ok = (jj >= 0) & (jj < N)
                acc[ok] += mag[jj[ok]]
        values[:, col] = acc / (2 * p + 1)
    return LocalSpectrum(om, values, window, p)


def local_spectrum_conv(x, window, omegas, pool: int | None = None, *, mode: str = "circular") -> LocalSpectrum:
    """Windowed local spectrum as convolution, modulus, then moving average."""
    x = as_real_signal(x)
    g = _window_taps(window)
    om = _check_omegas(omegas)
    n = (g.size - 1) // 2
    p = n if pool is None else int(pool)
    cols = []
    for w in om:
        if isinstance(window, WindowSpec):
            taps = ModulatedFilter.from_window(window, float(w)).taps
        else:
            taps = np.exp(1j * np.arange(-n, n + 1) * w) * g
        z = convolve(x, taps, mode=mode, normalize=True)
        cols.append(local_average(modulus(z), 2 * p + 1, mode=mode))
    return LocalSpectrum(om, np.stack(cols, axis=-1), window, p)
