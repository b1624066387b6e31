"""Fourier-series view of the QPE filter: sigma factors and the step-function DFT.

The kept probability can be written as a truncated Fourier series of the
discretized step function ``g(y) = [y <= y_c]``, damped by the window
autocorrelation ``sigma_j``::

    R(E) = sum_{|j| < N} g~(j) sigma_j exp(-i E T j)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid_windows import QpeGrid, Window, WindowKind

__all__ = [
    "SigmaFactor",
    "StepDft",
    "reconstruct_filter",
    "sigma_closed_form",
    "sigma_factor",
    "sigma_limit",
    "step_dft",
]


@dataclass(frozen=True, eq=False)
class SigmaFactor:
    """Window autocorrelation; ``sigma[j]`` holds ``sigma_{+-j}`` for ``j = 0..N-1``."""

    grid: QpeGrid
    kind: WindowKind
    sigma: np.ndarray = field(repr=False)

    def full(self) -> np.ndarray:
        """Values for ``j = -(N-1)..N-1``."""
        return np.concatenate([self.sigma[:0:-1], self.sigma])


@dataclass(frozen=True, eq=False)
class StepDft:
    """``g~(j)`` for ``j = -(N-1)..N-1`` (index ``j + N - 1``)."""

    grid: QpeGrid
    y_c: int
    coeffs: np.ndarray = field(repr=False)

    @property
    def z_c(self) -> float:
        return 2.0 * math.pi * self.y_c / self.grid.N

    def __getitem__(self, j: int) -> complex:
        return complex(self.coeffs[j + self.grid.N - 1])


def sigma_factor(window: Window, grid: QpeGrid) -> SigmaFactor:
    a = np.asarray(window.coeffs, dtype=float)
    if a.size != grid.N:
        raise ValueError("window length does not match grid")
    # full autocorrelation; entries N-1.. are lags 0..N-1
    sigma = np.correlate(a, a, mode="full")[grid.N - 1:]
    return SigmaFactor(grid=grid, kind=window.kind, sigma=sigma)


def sigma_closed_form(kind, N: int, j) -> np.ndarray:
    """Exact finite-N sigma factors for the rectangular and sine windows."""
    kind = WindowKind.parse(kind)
    j = np.abs(np.asarray(j, dtype=float))
    if kind is WindowKind.RECTANGULAR:
        return (N - j) / N
    if kind is WindowKind.SINE:
        s = math.sin(math.pi / N)
        return (np.sin(np.pi * j / N) * math.cos(math.pi / N) + (N - j) * np.cos(np.pi * j / N) * s) / (N * s)
    raise ValueError("no closed form for the Kaiser sigma factor")


def sigma_limit(kind, x):
    """Large-N limit of sigma as a function of ``x = j / N``."""
    kind = WindowKind.parse(kind)
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > 1):
        raise ValueError("x must lie in [-1, 1]")
    ax = np.abs(x)
    if kind is WindowKind.RECTANGULAR:
        out = 1.0 - ax
    elif kind is WindowKind.SINE:
        out = np.sin(np.pi * ax) / np.pi + (1.0 - ax) * np.cos(np.pi * x)
    else:
        raise ValueError("no closed-form large-N limit for the Kaiser sigma factor")
    return float(out) if out.ndim == 0 else out


def step_dft(grid: QpeGrid, y_c: int) -> StepDft:
    """Closed-form DFT of the 0/1 step ``[0 <= y <= y_c]``.

    ``g~(j) = e^{i pi y_c j / N} sin(pi (y_c+1) j / N) / (N sin(pi j / N))``
    and ``g~(0) = (y_c + 1) / N``.
    """
    N = grid.N
    if not 0 < y_c < N:
        raise ValueError(f"y_c must satisfy 0 < y_c < N={N}")
    j = np.arange(-(N - 1), N)
    safe = np.where(j == 0, 1, j)
    val = np.exp(1j * np.pi * y_c * safe / N) * np.sin(np.pi * (y_c + 1) * safe / N) / (N * np.sin(np.pi * safe / N))
    val = np.where(j == 0, (y_c + 1) / N, val)
    return StepDft(grid=grid, y_c=y_c, coeffs=val)


def reconstruct_filter(sigma: SigmaFactor, step: StepDft, E: float, return_imag: bool = False):
    """Evaluate the damped Fourier series for ``R(E)``.

    The sum is real analytically; ``return_imag=True`` also returns the
    numerical imaginary residue.
    """
    if sigma.grid != step.grid:
        raise ValueError("sigma factor and step DFT live on different grids")
    grid = sigma.grid
    N = grid.N
    j = np.arange(-(N - 1), N)
    phase = np.mod(float(E) * grid.T, 2.0 * np.pi)
    terms = step.coeffs * sigma.full() * np.exp(-1j * np.mod(phase * j, 2.0 * np.pi))
    total = np.sum(terms)
    if return_imag:
        return float(total.real), float(total.imag)
    return float(total.real)
