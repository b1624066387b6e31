"""Brute-force statevector simulation of the QPE circuit for diagonal Hamiltonians.

Independent of ``qpe_response``: the ancilla state is built explicitly,
phases are accumulated term by term and a dense inverse-QFT matrix is applied.
Inverse-QFT convention: ``Q^-1[y, j] = exp(-2 pi i y j / N) / sqrt(N)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid_windows import QpeGrid, Window

__all__ = ["JointState", "build_state", "inverse_qft_matrix", "postselect_expectation"]

MAX_QUBITS = 12
MAX_STATES = 4096
# kept probability below this fraction is rounding noise (about 1e-26 at n = 12)
EMPTY_TOL = 1e-24


@dataclass(frozen=True, eq=False)
class JointState:
    """Amplitudes ``amps[y, mu]`` of ``sum C_mu A_mu(y) |y>|phi_mu>``."""

    amps: np.ndarray = field(repr=False)
    C: np.ndarray = field(repr=False)

    @property
    def probabilities(self) -> np.ndarray:
        return np.abs(self.amps) ** 2


def inverse_qft_matrix(N: int) -> np.ndarray:
    idx = np.arange(N)
    return np.exp(-2j * np.pi * (np.outer(idx, idx) % N) / N) / math.sqrt(N)


def build_state(window: Window, grid: QpeGrid, energies, C) -> JointState:
    E = np.asarray(energies, dtype=float).ravel()
    C = np.asarray(C, dtype=complex).ravel()
    if E.size != C.size:
        raise ValueError("energies and amplitudes differ in length")
    if grid.n > MAX_QUBITS or E.size > MAX_STATES:
        raise ValueError(f"statevector oracle is capped at n <= {MAX_QUBITS}, {MAX_STATES} states")
    if window.N != grid.N:
        raise ValueError("window length does not match grid")
    norm = float(np.sum(np.abs(C) ** 2))
    if abs(norm - 1.0) > 1e-10:
        raise ValueError(f"amplitudes must be normalized (sum |C|^2 = {norm})")
    N = grid.N
    Q = inverse_qft_matrix(N)
    j = np.arange(N)
    amps = np.empty((N, E.size), dtype=complex)
    for mu in range(E.size):
        # controlled-U^j leaves the phase exp(i E T j) on ancilla basis state j
        register = window.coeffs * np.exp(1j * np.mod(E[mu] * grid.T * j, 2.0 * np.pi))
        amps[:, mu] = C[mu] * (Q @ register)
    return JointState(amps=amps, C=C)


def postselect_expectation(state: JointState, y_c: int) -> np.ndarray:
    """Expected post-measurement weight of each eigenstate given ``y <= y_c``.

    For each kept outcome ``y`` the collapsed state's squared amplitudes are
    weighted by the conditional probability of ``y``, then summed.
    """
    probs = state.probabilities[: y_c + 1]  # (y, mu)
    per_outcome = probs.sum(axis=1)
    kept = float(np.sum(per_outcome))
    if kept <= EMPTY_TOL * float(np.sum(state.probabilities)):
        raise ValueError("empty post-selection: no probability on outcomes y <= y_c")
    out = np.zeros(probs.shape[1])
    for y in range(probs.shape[0]):
        if per_outcome[y] == 0.0:
            continue
        collapsed = probs[y] / per_outcome[y]
        out += collapsed * (per_outcome[y] / kept)
    return out
