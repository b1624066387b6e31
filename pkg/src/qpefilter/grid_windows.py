"""QPE frequency grid and ancilla window coefficients."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

__all__ = [
    "QpeGrid",
    "Window",
    "WindowKind",
    "bessel_i0",
    "make_grid",
    "make_window",
]

MAX_QUBITS = 20

# Above this the asymptotic series reaches full double precision
# (smallest term is ~exp(-2x)); below it the power series is used.
_I0_SERIES_LIMIT = 30.0


class WindowKind(str, Enum):
    RECTANGULAR = "rect"
    SINE = "sine"
    KAISER = "kaiser"

    @classmethod
    def parse(cls, value: "str | WindowKind") -> "WindowKind":
        if isinstance(value, cls):
            return value
        aliases = {"rectangular": "rect", "rect": "rect", "sine": "sine", "kaiser": "kaiser"}
        try:
            return cls(aliases[str(value).lower()])
        except KeyError:
            raise ValueError(f"unknown window kind {value!r}") from None


@dataclass(frozen=True)
class QpeGrid:
    """Discrete QPE frequency grid ``omega_y = 2 pi y / (N T)``."""

    n: int
    T: float = 1.0

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or not 1 <= self.n <= MAX_QUBITS:
            raise ValueError(f"n must be an integer in [1, {MAX_QUBITS}], got {self.n!r}")
        if not (math.isfinite(self.T) and self.T > 0):
            raise ValueError(f"T must be positive and finite, got {self.T!r}")

    @property
    def N(self) -> int:
        return 1 << self.n

    @property
    def spacing(self) -> float:
        """Distance between neighbouring frequency points."""
        return 2.0 * math.pi / (self.N * self.T)

    @property
    def period(self) -> float:
        return 2.0 * math.pi / self.T

    def omega(self, y):
        """Frequency point(s) for (possibly fractional) index ``y``."""
        return np.multiply(y, self.spacing)

    @property
    def omegas(self) -> np.ndarray:
        return np.arange(self.N) * self.spacing

    def reduce(self, E):
        """Map energies into ``[0, 2 pi / T)``."""
        r = np.mod(E, self.period)
        # np.mod rounds tiny negative inputs up to exactly the period
        r = np.where(r >= self.period, 0.0, r)
        return r if r.ndim else float(r)


def make_grid(n: int, T: float = 1.0) -> QpeGrid:
    return QpeGrid(n=n, T=T)


@dataclass(frozen=True, eq=False)
class Window:
    kind: WindowKind
    coeffs: np.ndarray = field(repr=False)
    alpha: float | None = None

    @property
    def N(self) -> int:
        return len(self.coeffs)

    @property
    def label(self) -> str:
        if self.kind is WindowKind.KAISER:
            return f"kaiser(alpha={self.alpha:g})"
        return self.kind.value


def _series_i0(x: np.ndarray) -> np.ndarray:
    # sum_k (x/2)^{2k} / (k!)^2; all terms positive so no cancellation
    q = 0.25 * x * x
    total = np.ones_like(x)
    term = np.ones_like(x)
    k = 0
    while True:
        k += 1
        term = term * q / (k * k)
        total = total + term
        if np.all(term <= 1e-17 * total):
            return total


def _asymptotic_i0(x: np.ndarray) -> np.ndarray:
    # e^x / sqrt(2 pi x) * sum_k ((2k-1)!!)^2 / (k! (8x)^k), truncated at its smallest term
    total = np.ones_like(x)
    term = np.ones_like(x)
    for k in range(1, 200):
        nxt = term * (2 * k - 1) ** 2 / (8.0 * k * x)
        if np.all(np.abs(nxt) <= 1e-17 * total) or np.any(np.abs(nxt) > np.abs(term)):
            break
        term = nxt
        total = total + term
    return np.exp(x) / np.sqrt(2.0 * np.pi * x) * total


def bessel_i0(x):
    """Modified Bessel function of the first kind, order zero, for ``0 <= x <= 100``.

    Scalar in, float out; array in, array out.
    """
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ValueError("bessel_i0 requires finite, non-negative arguments")
    if np.any(arr > 100.0):
        raise ValueError("bessel_i0 is only supported for x <= 100")
    flat = arr.ravel()
    out = np.empty_like(flat)
    small = flat <= _I0_SERIES_LIMIT
    if small.any():
        out[small] = _series_i0(flat[small])
    if (~small).any():
        out[~small] = _asymptotic_i0(flat[~small])
    out = out.reshape(arr.shape)
    return float(out) if out.ndim == 0 else out


def make_window(kind, grid: QpeGrid, alpha: float | None = None) -> Window:
    """Build the L2-normalized ancilla window ``a_j``, ``j = 0..N-1``.

    The Kaiser profile is ``I0(pi alpha sqrt(1 - (2j/N - 1)^2))`` so it is
    symmetric about ``j = N/2`` (``a_j = a_{N-j}``), with ``a_0`` the lone edge sample.
    """
    kind = WindowKind.parse(kind)
    N = grid.N
    j = np.arange(N)
    if kind is WindowKind.RECTANGULAR:
        a = np.full(N, 1.0 / math.sqrt(N))
        alpha = None
    elif kind is WindowKind.SINE:
        # sin(pi j/N) == sin(pi (N-j)/N); folding j keeps the symmetry bit-exact
        a = math.sqrt(2.0 / N) * np.sin(np.pi * np.minimum(j, N - j) / N)
        alpha = None
    else:
        if alpha is None or not math.isfinite(alpha) or alpha <= 0:
            raise ValueError(f"Kaiser window needs alpha > 0, got {alpha!r}")
        if math.pi * alpha > 100.0:
            raise ValueError("Kaiser alpha too large (pi * alpha must be <= 100)")
        u = 2.0 * j / N - 1.0
        a = bessel_i0(np.pi * alpha * np.sqrt(np.clip(1.0 - u * u, 0.0, None)))
        alpha = float(alpha)
    a = a / np.linalg.norm(a)
    a.setflags(write=False)
    return Window(kind=kind, coeffs=a, alpha=alpha)
