"""Two-step spectral simulation: coarse QPE filtering, then fine-grid QPE.

Stage 1 multiplies each line weight by its renormalization factor ``R``;
stage 2 spreads the (filtered) weights over the fine grid through the stage-2
point-spread functions ``P'(y)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import find_peaks

from .filter_response import FilterConfig, renormalization_many
from .grid_windows import QpeGrid, Window, WindowKind, make_window
from .qpe_response import probabilities_many

__all__ = [
    "SpectralResult",
    "Spectrum",
    "SpectrumError",
    "StageConfig",
    "TwoStepConfig",
    "alias_peaks",
    "error_decomposition",
    "estimator",
    "load_spectrum",
    "query_counts",
    "two_step",
]


# surviving weight below this fraction of the total is rounding noise
EMPTY_TOL = 1e-24


class SpectrumError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Spectrum:
    energies: np.ndarray
    weights: np.ndarray
    label: str = ""
    units: str = ""

    def __post_init__(self):
        E = np.asarray(self.energies, dtype=float).ravel()
        w = np.asarray(self.weights, dtype=float).ravel()
        if E.shape != w.shape:
            raise SpectrumError("energies and weights differ in length")
        if E.size == 0:
            raise SpectrumError("empty spectrum")
        if not (np.all(np.isfinite(E)) and np.all(np.isfinite(w))):
            raise SpectrumError("energies and weights must be finite")
        if np.any(w < 0):
            raise SpectrumError("weights must be non-negative")
        order = np.argsort(E, kind="stable")
        object.__setattr__(self, "energies", E[order])
        object.__setattr__(self, "weights", w[order])

    @property
    def total_weight(self) -> float:
        return float(np.sum(self.weights))

    def __len__(self):
        return self.energies.size

    def shifted(self, shift: float) -> "Spectrum":
        return Spectrum(self.energies - shift, self.weights, self.label, self.units)

    def negated(self) -> "Spectrum":
        return Spectrum(-self.energies, self.weights, self.label, self.units)


def load_spectrum(path, format: str = "csv", shift: float = 0.0, label: str | None = None,
                  units: str = "") -> Spectrum:
    """Read ``energy,weight`` rows; ``#`` lines are comments, a header row is optional.

    ``shift`` is subtracted from every energy (e.g. a reference energy E0).
    """
    if format != "csv":
        raise SpectrumError(f"unsupported spectrum format {format!r}")
    path = Path(path)
    energies, weights = [], []
    with path.open(newline="") as fh:
        rows = csv.reader(line for line in fh if not line.lstrip().startswith("#"))
        first = True
        for lineno, row in enumerate(rows, start=1):
            cells = [c.strip() for c in row]
            if not cells or all(c == "" for c in cells):
                continue
            if len(cells) < 2:
                raise SpectrumError(f"{path}: line {lineno}: expected 'energy,weight'")
            try:
                e, w = float(cells[0]), float(cells[1])
            except ValueError:
                if first and cells[0].lower().startswith("energy"):
                    first = False
                    continue
                raise SpectrumError(f"{path}: line {lineno}: cannot parse {','.join(cells)!r}") from None
            first = False
            if w < 0:
                raise SpectrumError(f"{path}: line {lineno}: negative weight {w}")
            energies.append(e - shift)
            weights.append(w)
    if not energies:
        raise SpectrumError(f"{path}: empty spectrum")
    return Spectrum(np.array(energies), np.array(weights), label or path.stem, units)


@dataclass(frozen=True)
class StageConfig:
    kind: WindowKind
    n: int
    T: float
    alpha: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", WindowKind.parse(self.kind))
        if not self.T > 0:
            raise ValueError("time step must be positive")

    @property
    def grid(self) -> QpeGrid:
        return QpeGrid(self.n, self.T)

    def window(self) -> Window:
        return make_window(self.kind, self.grid, self.alpha)


@dataclass(frozen=True)
class TwoStepConfig:
    stage1: StageConfig
    y_c: int
    stage2: StageConfig = None
    negate_energies: bool = False

    def __post_init__(self):
        if self.stage2 is None:
            object.__setattr__(self, "stage2", StageConfig(WindowKind.SINE, self.stage1.n, self.stage1.T))
        FilterConfig(self.stage1.grid, self.y_c)  # validates y_c

    @property
    def beta(self) -> float:
        return self.stage2.T / self.stage1.T

    @property
    def filter_config(self) -> FilterConfig:
        return FilterConfig(self.stage1.grid, self.y_c)

    @property
    def omega_c(self) -> float:
        return self.filter_config.omega_c


@dataclass(frozen=True, eq=False)
class SpectralResult:
    config: TwoStepConfig
    omega: np.ndarray = field(repr=False)
    raw: np.ndarray = field(repr=False)
    filtered: np.ndarray = field(repr=False)
    filtered_normalized: np.ndarray = field(repr=False)
    reference: np.ndarray = field(repr=False)
    kept_error: np.ndarray = field(repr=False)
    cut_error: np.ndarray = field(repr=False)
    R: np.ndarray = field(repr=False)
    kept_side: np.ndarray = field(repr=False)
    p0: float = 0.0
    queries_naive: int = 0
    queries_filtered: int = 0

    @property
    def error(self) -> np.ndarray:
        return self.filtered - self.reference


def _weighted_sum(weights: np.ndarray, P: np.ndarray) -> np.ndarray:
    # contiguous last-axis reduction -> numpy's pairwise summation
    return np.sum(np.ascontiguousarray((weights[:, None] * P).T), axis=1)


def estimator(spectrum: Spectrum, window: Window, grid: QpeGrid, weights=None) -> np.ndarray:
    """``S(y) = sum_mu weight_mu P_mu(y)`` on ``grid``."""
    if len(spectrum) == 0:
        raise SpectrumError("empty spectrum")
    w = spectrum.weights if weights is None else np.asarray(weights, dtype=float)
    P = probabilities_many(window, grid, spectrum.energies)
    return _weighted_sum(w, P)


def query_counts(p0: float, N: int, N2: int, beta: float) -> tuple[int, int]:
    """Unit-constant query estimates ``(naive, filtered)``.

    Naive amplitude amplification: ``p0^-1/2 beta N'``; with the coarse filter:
    ``p0^-1/2 N + beta N'``.
    """
    if not 0 < p0 <= 1:
        raise ValueError("p0 must lie in (0, 1]")
    amp = 1.0 / math.sqrt(p0)
    return math.ceil(amp * beta * N2), math.ceil(amp * N + beta * N2)


def two_step(spectrum: Spectrum, config: TwoStepConfig) -> SpectralResult:
    """Filter on the stage-1 grid, resolve on the stage-2 grid.

    With ``negate_energies`` the energies are negated before both stages (a
    high-pass filter through the low-pass machinery) and the output axis is
    mirrored back, ``S_out[y] = S[-y mod N']``.
    """
    s1, s2 = config.stage1, config.stage2
    grid1, grid2 = s1.grid, s2.grid
    # per-line arrays (R, kept_side) stay in the input spectrum's order
    E = -spectrum.energies if config.negate_energies else spectrum.energies
    w = spectrum.weights

    R, _ = renormalization_many(s1.window(), config.filter_config, E)
    kept_side = grid1.reduce(E) <= config.omega_c * (1 + 1e-15)

    P2 = probabilities_many(s2.window(), grid2, E)
    raw = _weighted_sum(w, P2)
    filtered = _weighted_sum(w * R, P2)
    reference = _weighted_sum(np.where(kept_side, w, 0.0), P2)
    kept_error = _weighted_sum(np.where(kept_side, w * (R - 1.0), 0.0), P2)
    cut_error = _weighted_sum(np.where(kept_side, 0.0, w * R), P2)

    total = float(np.sum(w))
    passed = float(np.sum(w * R))
    if passed <= EMPTY_TOL * total:
        raise SpectrumError("every line was filtered out")
    normalized = filtered / passed
    p0 = passed / total if total > 0 else 0.0
    naive, filt = query_counts(p0, grid1.N, grid2.N, config.beta)

    if config.negate_energies:
        mirror = (-np.arange(grid2.N)) % grid2.N
        raw, filtered, normalized, reference, kept_error, cut_error = (
            v[mirror] for v in (raw, filtered, normalized, reference, kept_error, cut_error))

    return SpectralResult(
        config=config, omega=grid2.omegas, raw=raw, filtered=filtered,
        filtered_normalized=normalized, reference=reference, kept_error=kept_error,
        cut_error=cut_error, R=R, kept_side=kept_side, p0=p0,
        queries_naive=naive, queries_filtered=filt,
    )


def error_decomposition(result: SpectralResult, spectrum: Spectrum | None = None,
                        config: TwoStepConfig | None = None):
    """Signed deviation from the kept-lines-only reference, split by line side.

    ``kept`` collects ``w (R - 1) P'`` over lines inside ``[0, omega_c]``;
    ``cut`` collects ``w R P'`` over the rest.  ``kept + cut`` equals
    ``filtered - reference``.
    """
    return result.kept_error, result.cut_error


def alias_peaks(result: SpectralResult, spectrum: Spectrum, which: str = "cut",
                prominence: float = 1e-12):
    """Match stage-2 replicas of out-of-window lines to detected error peaks.

    A line at ``E`` (output frame) appears at ``E + (2 pi / T') r``
    reduced into ``[0, 2 pi / T')``.  Returns ``(E, r, predicted, detected)``
    tuples for lines with ``r >= 1``; ``detected`` is the nearest peak
    location or ``None``.
    """
    config = result.config
    grid2 = config.stage2.grid
    signal = np.abs(result.cut_error if which == "cut" else result.error)
    thr = prominence * spectrum.total_weight
    # wrap so peaks at the array ends are found
    padded = np.r_[signal[-3:], signal, signal[:3]]
    peaks, _ = find_peaks(padded, prominence=thr)
    peaks = np.unique((peaks - 3) % grid2.N)
    found = grid2.omegas[peaks]

    E = spectrum.energies
    frame = -E if config.negate_energies else E
    kept = config.stage1.grid.reduce(frame) <= config.omega_c * (1 + 1e-15)
    out = []
    for e_line, k in zip(E, kept):
        if which == "cut" and k:
            continue
        # the output axis is always in the caller's (un-negated) frame
        r = -math.floor(e_line / grid2.period)
        if r < 1:
            continue
        predicted = float(grid2.reduce(e_line))
        if found.size:
            dist = np.abs(found - predicted)
            dist = np.minimum(dist, grid2.period - dist)
            detected = float(found[int(np.argmin(dist))])
        else:
            detected = None
        out.append((float(e_line), int(r), predicted, detected))
    return out
