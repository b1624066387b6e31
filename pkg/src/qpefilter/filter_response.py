"""Weight-renormalization filter R(E) built from the kept QPE outcomes ``y <= y_c``."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .grid_windows import QpeGrid, Window, WindowKind, make_window
from .qpe_response import probabilities_many

__all__ = [
    "FilterConfig",
    "FilterCurve",
    "KaiserFilterParams",
    "filter_curve",
    "kaiser_params",
    "measure_transition",
    "renormalization",
    "renormalization_many",
]

DEFAULT_SAMPLES = 10_000
SCAN_POINTS = 4096


@dataclass(frozen=True)
class FilterConfig:
    """Low-pass cutoff ``y_c``; with ``m`` given, ``y_c = 2^(n-m) - 1``."""

    grid: QpeGrid
    y_c: int | None = None
    m: int | None = None

    def __post_init__(self):
        if self.m is not None:
            if not 0 < self.m < self.grid.n:
                raise ValueError(f"m must satisfy 0 < m < n={self.grid.n}, got {self.m}")
            derived = (1 << (self.grid.n - self.m)) - 1
            if self.y_c is not None and self.y_c != derived:
                raise ValueError(f"y_c={self.y_c} conflicts with m={self.m} (expects {derived})")
            object.__setattr__(self, "y_c", derived)
        if self.y_c is None:
            raise ValueError("either y_c or m is required")
        if not 0 < self.y_c < self.grid.N:
            raise ValueError(f"y_c must satisfy 0 < y_c < N={self.grid.N}, got {self.y_c}")

    @property
    def omega_c(self) -> float:
        return float(self.grid.omega(self.y_c))


@dataclass(frozen=True, eq=False)
class FilterCurve:
    energies: np.ndarray = field(repr=False)
    R: np.ndarray = field(repr=False)
    dR: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class KaiserFilterParams:
    alpha: float
    epsilon: float
    delta: float
    E_targ: float
    N_estimate: float
    delta_meas: float
    E_targ_meas: float
    # measured edges: pass band [pass_lo, pass_hi], stop band [stop_lo, stop_hi]
    pass_lo: float
    pass_hi: float
    stop_lo: float
    stop_hi: float


def _split(P: np.ndarray, y_c: int):
    """Kept and discarded probability, each summed directly (no ``1 - x``)."""
    return P[:, : y_c + 1].sum(axis=1), P[:, y_c + 1:].sum(axis=1)


def renormalization_many(window: Window, config: FilterConfig, energies):
    """Return ``(R, dR)`` arrays for many energies."""
    grid = config.grid
    E = grid.reduce(np.atleast_1d(np.asarray(energies, dtype=float)))
    P = probabilities_many(window, grid, E)
    kept, cut = _split(P, config.y_c)
    # E exactly at omega_c counts as inside the pass band
    inside = E <= config.omega_c * (1 + 1e-15)
    return kept, np.where(inside, cut, kept)


def renormalization(window: Window, grid: QpeGrid, config: FilterConfig, E: float):
    """``R = sum_{y<=y_c} P(y)`` and its deviation from the ideal step filter."""
    if config.grid != grid:
        raise ValueError("config grid does not match grid")
    R, dR = renormalization_many(window, config, [E])
    return float(R[0]), float(dR[0])


def filter_curve(window: Window, grid: QpeGrid, config: FilterConfig, energy_samples=None,
                 threads: int = 1) -> FilterCurve:
    if config.grid != grid:
        raise ValueError("config grid does not match grid")
    if energy_samples is None:
        energy_samples = np.arange(DEFAULT_SAMPLES) * (grid.period / DEFAULT_SAMPLES)
    E = np.asarray(energy_samples, dtype=float)
    if np.any(E < 0) or np.any(E >= grid.period):
        raise ValueError(f"energy samples must lie in [0, {grid.period})")
    chunks = np.array_split(E, max(1, min(threads, E.size)))
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(lambda c: renormalization_many(window, config, c), chunks))
    else:
        parts = [renormalization_many(window, config, c) for c in chunks]
    R = np.concatenate([p[0] for p in parts])
    dR = np.concatenate([p[1] for p in parts])
    return FilterCurve(energies=E, R=R, dR=dR)


def measure_transition(window: Window, config: FilterConfig, epsilon: float, scan: int = SCAN_POINTS):
    """Measured pass/stop band edges of ``R`` at tolerance ``epsilon``.

    Pass band: ``R >= 1 - eps``; stop band: ``R <= eps``.  Both are located on a
    uniform scan of one period and their edges refined by root finding on the
    ``R`` threshold crossings.  Returns ``(pass_lo, pass_hi, stop_lo, stop_hi)``.
    """
    grid = config.grid
    E = np.arange(scan) * (grid.period / scan)
    R, _ = renormalization_many(window, config, E)
    keep = 1.0 - R  # tiny cancellation is harmless for a 1e-7-level threshold
    passing = np.flatnonzero(keep <= epsilon)
    stopping = np.flatnonzero(R <= epsilon)
    if passing.size == 0 or stopping.size == 0:
        raise ValueError("pass band or stop band is empty at this tolerance")
    p_lo, p_hi = _run_containing(passing, int(round(config.omega_c / 2 / grid.period * scan)))
    s_lo, s_hi = _run_containing(stopping, None)

    def R_at(x):
        return renormalization_many(window, config, [x])[0][0]

    h = grid.period / scan

    def edge(i_in, direction, fn):
        # E[i_in] satisfies the band condition, its outward scan neighbour does not
        a = E[i_in]
        return float(brentq(fn, a, a + direction * h, xtol=1e-13))

    pass_fn = lambda x: (1.0 - R_at(x)) - epsilon  # noqa: E731
    stop_fn = lambda x: R_at(x) - epsilon  # noqa: E731
    return (
        edge(p_lo, -1, pass_fn),
        edge(p_hi, +1, pass_fn),
        edge(s_lo, -1, stop_fn),
        edge(s_hi, +1, stop_fn),
    )


def _run_containing(idx: np.ndarray, prefer: int | None):
    """Longest (or the one containing ``prefer``) run of consecutive indices."""
    breaks = np.flatnonzero(np.diff(idx) != 1)
    starts = np.r_[idx[0], idx[breaks + 1]]
    ends = np.r_[idx[breaks], idx[-1]]
    if prefer is not None:
        for s, e in zip(starts, ends):
            if s <= prefer <= e:
                return int(s), int(e)
    k = int(np.argmax(ends - starts))
    return int(starts[k]), int(ends[k])


def kaiser_params(alpha: float, grid: QpeGrid, config: FilterConfig, epsilon: float) -> KaiserFilterParams:
    """Kaiser filter width parameters, from the approximate formulas and measured.

    ``delta ~ omega_{ceil(2 alpha)}``, ``E_targ ~ omega_{y_c} - delta`` and
    ``N ~ (2 pi / (delta T)) 2 alpha``.  The measured values come from the band
    edges: ``E_targ_meas`` is the pass band width and ``2 delta_meas`` is the
    rest of the period left over after the pass and stop bands.
    """
    if config.grid != grid:
        raise ValueError("config grid does not match grid")
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    width = math.ceil(2 * alpha)
    if config.y_c <= width:
        raise ValueError(f"target interval is empty: need y_c > ceil(2 alpha) = {width}")
    delta = float(grid.omega(width))
    E_targ = config.omega_c - delta
    N_est = 2 * math.pi / (delta * grid.T) * 2 * alpha
    window = make_window(WindowKind.KAISER, grid, alpha)
    p_lo, p_hi, s_lo, s_hi = measure_transition(window, config, epsilon)
    E_targ_meas = p_hi - p_lo
    delta_meas = 0.5 * (grid.period - E_targ_meas - (s_hi - s_lo))
    return KaiserFilterParams(
        alpha=float(alpha), epsilon=float(epsilon), delta=delta, E_targ=E_targ, N_estimate=N_est,
        delta_meas=delta_meas, E_targ_meas=E_targ_meas,
        pass_lo=p_lo, pass_hi=p_hi, stop_lo=s_lo, stop_hi=s_hi,
    )
