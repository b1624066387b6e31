"""Even Chebyshev minimax filters for QETU and their minimal degree.

The target is ``f(w) = c`` on ``[w+, 1]`` and ``0`` on ``[0, w-]`` with
``w = cos(E T / 4)``; the energy filter is ``F(E) = f(cos(E T / 4))^2``.
Coefficients come from a discretized minimax problem, which is a linear
program in ``(c_0, c_2, ..., c_d, t)``::

    min t   s.t.  |f_d(w_m) - c| <= t  (w_m >= w+)
                  |f_d(w_m)|     <= t  (w_m <= w-)
                  |f_d(w_m)|     <= 1  (all m)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import highspy
import numpy as np

from .filter_response import FilterConfig, kaiser_params
from .grid_windows import QpeGrid
from .qpe_response import kaiser_eps_max

__all__ = [
    "ChebyshevEvenPoly",
    "FitReport",
    "KaiserDesign",
    "NoFitFound",
    "QetuSpec",
    "certify",
    "fit_polynomial",
    "fitting_grid",
    "kaiser_design",
    "minimal_degree",
    "queries_qpe_kaiser",
]

CERT_POINTS = 100_000
LP_TOL = 1e-9
MAX_DEGREE = 4096
MIN_EPSILON = 1e-6


class NoFitFound(RuntimeError):
    """No certified polynomial within the degree cap (or the sample budget)."""

    def __init__(self, message: str, history: dict | None = None):
        super().__init__(message)
        self.history = history or {}


@dataclass(frozen=True)
class QetuSpec:
    E_targ: float
    two_delta: float
    epsilon: float
    T: float = 1.0

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("T must be positive")
        if not self.E_targ > 0:
            raise ValueError("E_targ must be positive")
        if not self.two_delta > 0:
            raise ValueError("two_delta must be positive")
        if not self.E_targ + self.two_delta < 2 * math.pi / self.T:
            raise ValueError("E_targ + 2 delta must be below 2 pi / T")
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")

    @property
    def c(self) -> float:
        return 0.5 * (1.0 + math.sqrt(1.0 - self.epsilon))

    @property
    def w_plus(self) -> float:
        return math.cos(self.E_targ * self.T / 4)

    @property
    def w_minus(self) -> float:
        return math.cos((self.E_targ + self.two_delta) * self.T / 4)

    @property
    def half_gap(self) -> float:
        """Largest uniform residual that still guarantees the energy conditions."""
        return min(1.0 - self.c, self.c - math.sqrt(1.0 - self.epsilon), math.sqrt(self.epsilon))


@dataclass(frozen=True, eq=False)
class ChebyshevEvenPoly:
    """``f_d(w) = sum_l c_{2l} T_{2l}(w)``; ``coeffs[l]`` is ``c_{2l}``."""

    coeffs: np.ndarray = field(repr=False)

    @property
    def degree(self) -> int:
        return 2 * (len(self.coeffs) - 1)

    def __call__(self, w):
        # T_{2l}(w) = T_l(2w^2 - 1): Clenshaw in x keeps evenness exact
        w = np.asarray(w, dtype=float)
        x = 2.0 * w * w - 1.0
        b1 = np.zeros_like(x)
        b2 = np.zeros_like(x)
        for ck in self.coeffs[:0:-1]:
            b1, b2 = 2.0 * x * b1 - b2 + ck, b1
        out = x * b1 - b2 + self.coeffs[0]
        return float(out) if out.ndim == 0 else out

    def direct(self, w):
        """Reference evaluation through ``cos(2 l arccos w)``."""
        w = np.asarray(w, dtype=float)
        l2 = 2 * np.arange(len(self.coeffs))
        return np.cos(np.multiply.outer(np.arccos(np.clip(w, -1, 1)), l2)) @ self.coeffs

    def energy_filter(self, E, T: float = 1.0):
        return self(np.cos(np.asarray(E, dtype=float) * T / 4)) ** 2


@dataclass
class FitReport:
    degree: int
    M: int
    residual: float
    passed: bool
    violations: list = field(default_factory=list)
    worst: dict = field(default_factory=dict)
    solver_status: str = ""
    lp_rounds: int = 0

    @property
    def query_count(self) -> int:
        return self.degree // 2


def _basis(w: np.ndarray, L: int) -> np.ndarray:
    return np.cos(np.multiply.outer(np.arccos(w), 2 * np.arange(L)))


def fitting_grid(M: int, kind: str = "chebyshev") -> np.ndarray:
    """Ascending fitting points in ``[0, 1]``.

    ``"chebyshev"`` takes the non-negative half of the ``2M`` Chebyshev nodes,
    which keeps the energy spacing near ``E = 0`` (where ``dw ~ E dE``) from
    collapsing; ``"uniform"`` is an equispaced grid including both ends.
    """
    if M < 2:
        raise ValueError("M must be at least 2")
    if kind == "chebyshev":
        return np.cos(np.pi * (np.arange(M)[::-1] + 0.5) / (2 * M))
    if kind == "uniform":
        return np.linspace(0.0, 1.0, M)
    raise ValueError(f"unknown fitting grid {kind!r}")


def _solve_lp(spec: QetuSpec, d: int, M: int, grid: str = "chebyshev"):
    """Solve the discretized minimax LP by constraint generation.

    Starts from a Chebyshev-like subset of the M points, then repeatedly adds
    the local maxima of the constraint violation until none remain, warm
    starting the dual simplex each round.  The optimum equals the optimum of
    the LP over all M points.
    """
    L = d // 2 + 1
    w = fitting_grid(M, grid)
    B = _basis(w, L)
    plateau = w >= spec.w_plus
    stop = w <= spec.w_minus
    band = plateau | stop
    target = np.where(plateau, spec.c, 0.0)

    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("threads", 1)
    h.setOptionValue("primal_feasibility_tolerance", LP_TOL)
    h.setOptionValue("dual_feasibility_tolerance", LP_TOL)
    inf = highspy.kHighsInf
    h.addVars(L + 1, np.full(L + 1, -inf), np.full(L + 1, inf))
    cost = np.zeros(L + 1)
    cost[-1] = 1.0
    h.changeColsCost(L + 1, np.arange(L + 1, dtype=np.int32), cost)
    h.changeObjectiveSense(highspy.ObjSense.kMinimize)

    cols = np.arange(L, dtype=np.int32)
    cols_t = np.arange(L + 1, dtype=np.int32)

    def add_points(idx):
        for i in idx:
            h.addRow(-1.0, 1.0, L, cols, B[i])
            if band[i]:
                h.addRow(-inf, target[i], L + 1, cols_t, np.append(B[i], -1.0))
                h.addRow(target[i], inf, L + 1, cols_t, np.append(B[i], 1.0))

    k = min(M, 4 * L)
    nodes = np.abs(np.cos(np.pi * (np.arange(k) + 0.5) / k))
    start = np.union1d(np.searchsorted(w, nodes).clip(0, M - 1),
                       np.linspace(0, M - 1, min(M, 2 * L)).round().astype(int))
    active = np.zeros(M, dtype=bool)
    active[start] = True
    add_points(start)

    rounds = 0
    while True:
        rounds += 1
        h.run()
        status = h.getModelStatus()
        if status != highspy.HighsModelStatus.kOptimal:
            raise RuntimeError(f"LP solver failed at degree {d}: {h.modelStatusToString(status)}")
        x = np.array(h.getSolution().col_value)
        f = B @ x[:L]
        t = x[-1]
        viol = np.maximum(np.abs(f) - 1.0, np.where(band, np.abs(f - target) - t, -np.inf))
        left = np.r_[-np.inf, viol[:-1]]
        right = np.r_[viol[1:], -np.inf]
        peaks = (viol > 10 * LP_TOL) & (viol >= left) & (viol >= right) & ~active
        new = np.flatnonzero(peaks)
        if new.size == 0 or rounds >= 200:
            break
        active[new] = True
        add_points(new)
    return x[:L], float(t), h.modelStatusToString(status), rounds


def _golden_max(fn, lo: np.ndarray, hi: np.ndarray, iters: int = 60):
    """Vectorized golden-section maximization of ``fn`` on each ``[lo, hi]``."""
    g = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo.copy(), hi.copy()
    c = b - g * (b - a)
    d = a + g * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(iters):
        left = fc > fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        new_c = b - g * (b - a)
        new_d = a + g * (b - a)
        c, d = np.where(left, new_c, d), np.where(left, c, new_d)
        fc_new = np.where(left, fn(c), fd)
        fd_new = np.where(left, fc, fn(d))
        fc, fd = fc_new, fd_new
    x = np.where(fc > fd, c, d)
    return x, np.maximum(fc, fd)


def certify(poly: ChebyshevEvenPoly, spec: QetuSpec, points: int = CERT_POINTS,
            residual: float = float("nan"), M: int = 0) -> FitReport:
    """Check the energy-domain conditions on a dense grid with local refinement.

    Conditions: ``F <= 1`` everywhere, ``1 - F <= eps`` on ``[0, E_targ]`` and
    ``F <= eps`` on ``[E_targ + 2 delta, 2 pi / T]``.  Every grid local maximum
    of a constraint excess within ``0.9 eps`` of its bound is refined by
    golden-section search over ``+-2`` grid cells.
    """
    if poly.degree % 2:
        raise ValueError("polynomial degree must be even")
    T = spec.T
    top = 2 * math.pi / T
    E = np.linspace(0.0, top, points)
    h = E[1] - E[0]
    e1 = spec.E_targ
    e2 = spec.E_targ + spec.two_delta
    eps = spec.epsilon

    def excess(name, x):
        F = poly.energy_filter(x, T)
        if name == "bounded":
            return F - 1.0
        if name == "pass":
            return (1.0 - F) - eps
        return F - eps

    domains = {"bounded": (0.0, top), "pass": (0.0, e1), "stop": (e2, top)}
    violations = []
    worst = {}
    for name, (lo, hi) in domains.items():
        sel = (E >= lo) & (E <= hi)
        xs = E[sel]
        g = excess(name, xs)
        worst_val = float(g.max())
        worst_at = float(xs[int(np.argmax(g))])
        left = np.r_[-np.inf, g[:-1]]
        right = np.r_[g[1:], -np.inf]
        cand = np.flatnonzero((g >= left) & (g >= right) & (g >= -0.9 * eps))
        if cand.size:
            a = np.clip(xs[cand] - 2 * h, lo, hi)
            b = np.clip(xs[cand] + 2 * h, lo, hi)
            xr, gr = _golden_max(lambda x: excess(name, x), a, b)
            # endpoints of each refinement interval are checked too
            ga, gb = excess(name, a), excess(name, b)
            stack = np.vstack([gr, ga, gb])
            pick = np.argmax(stack, axis=0)
            loc = np.choose(pick, [xr, a, b])
            val = stack.max(axis=0)
            k = int(np.argmax(val))
            if val[k] > worst_val:
                worst_val, worst_at = float(val[k]), float(loc[k])
            bad = val > 0
            violations.extend((name, float(x), float(v)) for x, v in zip(loc[bad], val[bad]))
        bad_grid = g > 0
        violations.extend((name, float(x), float(v)) for x, v in zip(xs[bad_grid], g[bad_grid]))
        worst[name] = {"excess": worst_val, "at": worst_at}
    violations.sort(key=lambda item: -item[2])
    return FitReport(degree=poly.degree, M=M, residual=residual,
                     passed=all(v["excess"] <= 0 for v in worst.values()),
                     violations=violations, worst=worst)


def fit_polynomial(spec: QetuSpec, d: int, M: int, grid: str = "chebyshev"):
    """Minimax-fit an even polynomial of degree ``d`` on ``M`` points and certify it."""
    if d < 2 or d % 2:
        raise ValueError(f"degree must be even and >= 2, got {d}")
    if M < d:
        raise ValueError(f"M={M} sample points is fewer than the degree {d}")
    coeffs, t, status, rounds = _solve_lp(spec, d, M, grid)
    poly = ChebyshevEvenPoly(coeffs=coeffs)
    report = certify(poly, spec, residual=t, M=M)
    report.solver_status = status
    report.lp_rounds = rounds
    return poly, report


def minimal_degree(spec: QetuSpec, M: int, start: int = 8, cap: int = MAX_DEGREE,
                   grid: str = "chebyshev"):
    """Smallest certified even degree: doubling bracket, then binary search.

    Returns ``(d_min, poly, report)``.  Raises ``NoFitFound`` when no degree up
    to ``min(cap, M)`` passes.  A solver failure counts as a failed degree.
    """
    if spec.epsilon < MIN_EPSILON:
        raise ValueError(f"epsilon below {MIN_EPSILON:g} is outside the supported range")
    history: dict[int, tuple] = {}

    def probe(d):
        if d not in history:
            try:
                history[d] = fit_polynomial(spec, d, M, grid)
            except RuntimeError as exc:
                history[d] = (None, FitReport(degree=d, M=M, residual=float("nan"), passed=False,
                                              solver_status=str(exc)))
        return history[d][1].passed

    lo, d = 0, start
    while True:
        if d > cap or d > M:
            summary = {k: (v[1].passed, v[1].residual) for k, v in sorted(history.items())}
            raise NoFitFound(f"no certified polynomial up to degree {min(cap, M)} (M={M})", summary)
        if probe(d):
            break
        lo, d = d, 2 * d
    hi = d
    # invariant: lo fails (or is 0), hi passes; both even
    while hi - lo > 2:
        mid = (lo + hi) // 2
        mid -= mid % 2
        if probe(mid):
            hi = mid
        else:
            lo = mid
    poly, report = history[hi]
    return hi, poly, report


@dataclass(frozen=True)
class KaiserDesign:
    n: int
    N: int
    alpha: float
    y_c: int
    E_targ_meas: float
    two_delta_meas: float


def _smallest_alpha(grid: QpeGrid, epsilon: float, step: float, alpha_max: float) -> float:
    alpha = step
    while alpha <= alpha_max + 1e-12:
        if kaiser_eps_max(alpha, grid) <= epsilon:
            return alpha
        alpha += step
    raise ValueError(f"no alpha <= {alpha_max} reaches epsilon={epsilon:g}")


def kaiser_design(spec: QetuSpec, T: float | None = None, alpha_step: float = 0.5,
                  alpha_max: float = 20.0, rel_tol: float = 0.05, n_max: int = 16) -> KaiserDesign:
    """Smallest Kaiser QPE filter meeting the target and transition widths of ``spec``.

    For each ``n`` the window parameter is the smallest multiple of
    ``alpha_step`` whose worst-case leakage is below ``epsilon``; the cutoff is
    the smallest ``y_c`` whose measured pass band covers ``E_targ``.  The
    measured transition must not exceed ``2 delta`` by more than ``rel_tol``.
    """
    T = spec.T if T is None else T
    for n in range(2, n_max + 1):
        grid = QpeGrid(n=n, T=T)
        alpha = _smallest_alpha(grid, spec.epsilon, alpha_step, alpha_max)
        width = math.ceil(2 * alpha)
        if grid.N <= 2 * width + 2:
            continue
        y_c = max(width + 1, int(spec.E_targ / grid.spacing))
        params = None
        while y_c < grid.N - width - 1:
            try:
                params = kaiser_params(alpha, grid, FilterConfig(grid, y_c), spec.epsilon)
            except ValueError:
                params = None
            if params is not None and params.E_targ_meas >= spec.E_targ:
                break
            y_c += 1
        else:
            continue
        if 2 * params.delta_meas <= spec.two_delta * (1 + rel_tol):
            return KaiserDesign(n=n, N=grid.N, alpha=alpha, y_c=y_c,
                                E_targ_meas=params.E_targ_meas, two_delta_meas=2 * params.delta_meas)
    raise ValueError(f"no Kaiser design with n <= {n_max}")


def queries_qpe_kaiser(spec: QetuSpec, T: float | None = None) -> int:
    """Time-evolution queries ``N = 2^n`` of the smallest adequate Kaiser QPE filter."""
    return kaiser_design(spec, T).N
