"""Command-line entry point: ``qpefl <subcommand> ...``.

Exit status: 0 on success, 1 on a domain error, 2 on a usage error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__
from .filter_response import FilterConfig, filter_curve
from .gibbs_sigma import sigma_factor
from .grid_windows import QpeGrid, WindowKind, make_window
from .qetu_minimax import NoFitFound, QetuSpec, fit_polynomial, kaiser_design, minimal_degree
from .qpe_response import amplitude
from .spectral_pipeline import SpectrumError, StageConfig, TwoStepConfig, load_spectrum, two_step
from .statevector_oracle import build_state, postselect_expectation

KINDS = ("rect", "sine", "kaiser")


class DomainError(Exception):
    pass


class UsageError(Exception):
    pass


def _ranged(kind, lo=None, hi=None, lo_open=False):
    def parse(text):
        try:
            value = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected {kind.__name__}, got {text!r}") from None
        if kind is float and not math.isfinite(value):
            raise argparse.ArgumentTypeError(f"must be finite, got {text!r}")
        if lo is not None and (value <= lo if lo_open else value < lo):
            raise argparse.ArgumentTypeError(f"must be {'>' if lo_open else '>='} {lo}, got {value}")
        if hi is not None and value > hi:
            raise argparse.ArgumentTypeError(f"must be <= {hi}, got {value}")
        return value
    return parse


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _config_json(config: dict) -> str:
    return json.dumps(config, sort_keys=True, separators=(",", ":"))


@contextmanager
def _sink(path):
    if path is None or str(path) == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def write_csv(path, header, rows, config: dict):
    """CSV with a ``# config:`` line, a header row and full-precision values."""
    with _sink(path) as fh:
        fh.write(f"# config: {_config_json(config)}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("QPEFL_THREADS")
    if env is None:
        return 1
    try:
        value = int(env)
    except ValueError:
        raise DomainError(f"QPEFL_THREADS must be a positive integer, got {env!r}") from None
    if value < 1:
        raise DomainError(f"QPEFL_THREADS must be a positive integer, got {env!r}")
    return value


def _window_args(p, with_T=True):
    p.add_argument("--kind", choices=KINDS, required=True)
    p.add_argument("--alpha", type=_ranged(float, lo=0, lo_open=True), default=None,
                   help="Kaiser shape parameter")
    p.add_argument("--n", type=_ranged(int, lo=1, hi=20), required=True, help="ancilla qubits")
    if with_T:
        p.add_argument("--T", type=_ranged(float, lo=0, lo_open=True), default=1.0)


def _make(args, n=None, T=None):
    kind = WindowKind.parse(args.kind)
    if kind is WindowKind.KAISER and args.alpha is None:
        raise UsageError("--alpha is required for --kind kaiser")
    grid = QpeGrid(n if n is not None else args.n, T if T is not None else getattr(args, "T", 1.0))
    return grid, make_window(kind, grid, args.alpha if kind is WindowKind.KAISER else None)


def _base_config(args) -> dict:
    skip = {"func", "command"}
    cfg = {k: v for k, v in vars(args).items() if k not in skip}
    cfg["command"] = args.command
    cfg["threads"] = _threads(args)
    cfg["version"] = __version__
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in cfg.items()}


def cmd_window(args):
    grid, window = _make(args)
    write_csv(args.out, ["j", "a_j"], enumerate(window.coeffs), _base_config(args))


def cmd_response(args):
    grid, window = _make(args)
    curve = amplitude(window, grid, args.energy)
    header = ["y", "omega_y", "P_y"]
    if args.log:
        header.append("log10_P_y")
    with np.errstate(divide="ignore"):
        logp = np.log10(curve.probs)
    rows = []
    for y in range(grid.N):
        row = [y, grid.omegas[y], curve.probs[y]]
        if args.log:
            row.append(logp[y])
        rows.append(row)
    write_csv(args.out, header, rows, _base_config(args))


def cmd_filter(args):
    grid, window = _make(args)
    config = FilterConfig(grid, y_c=args.yc, m=args.m)
    E = np.arange(args.samples) * (grid.period / args.samples)
    curve = filter_curve(window, grid, config, E, threads=_threads(args))
    cfg = _base_config(args)
    cfg["y_c"] = config.y_c
    cfg["omega_c"] = config.omega_c
    write_csv(args.out, ["E", "R", "dR"], zip(curve.energies, curve.R, curve.dR), cfg)


def cmd_sigma(args):
    grid, window = _make(args)
    sf = sigma_factor(window, grid)
    j = np.arange(-(grid.N - 1), grid.N)
    write_csv(args.out, ["x", "sigma_j"], zip(j / grid.N, sf.full()), _base_config(args))


def cmd_qetu(args):
    cfg = _base_config(args)
    rows = []
    dumped = None
    for eps in args.eps:
        spec = QetuSpec(args.e_targ, args.two_delta, eps, args.T)
        for M in args.M:
            if args.degree is not None:
                poly, report = fit_polynomial(spec, args.degree, M, args.grid)
                rows.append([eps, M, args.degree, report.query_count, report.residual, int(report.passed)])
            else:
                try:
                    d, poly, report = minimal_degree(spec, M, grid=args.grid)
                except NoFitFound as exc:
                    print(f"# eps={eps:g} M={M}: {exc}", file=sys.stderr)
                    rows.append([eps, M, -1, -1, float("nan"), 0])
                    continue
                rows.append([eps, M, d, report.query_count, report.residual, int(report.passed)])
            dumped = poly
    if args.kaiser_eps is not None:
        design = kaiser_design(QetuSpec(args.e_targ, args.two_delta, args.kaiser_eps, args.T))
        cfg["kaiser"] = {"epsilon": args.kaiser_eps, "n": design.n, "N": design.N, "alpha": design.alpha,
                         "y_c": design.y_c, "queries": design.N}
        print(f"# kaiser: epsilon={args.kaiser_eps:g} n={design.n} alpha={design.alpha:g} "
              f"y_c={design.y_c} queries={design.N}", file=sys.stderr)
    dcol = "degree" if args.degree is not None else "d_min"
    write_csv(args.out, ["epsilon", "M", dcol, "queries", "residual", "certified"], rows, cfg)
    if args.dump_poly and dumped is not None:
        write_csv(args.dump_poly, ["l", "c_2l"], enumerate(dumped.coeffs), cfg)
    if rows and not all(r[-1] for r in rows):
        raise DomainError("at least one fit failed certification")


def cmd_spectrum(args):
    spectrum = load_spectrum(args.input, shift=args.shift, units=args.units)
    if args.stage1_kind == "kaiser" and args.alpha is None:
        raise UsageError("--alpha is required for --stage1-kind kaiser")
    if args.stage2_kind == "kaiser" and args.alpha2 is None:
        raise UsageError("--alpha2 is required for --stage2-kind kaiser")
    stage1 = StageConfig(args.stage1_kind, args.n, args.T, args.alpha if args.stage1_kind == "kaiser" else None)
    stage2 = StageConfig(args.stage2_kind, args.n2, args.T2, args.alpha2 if args.stage2_kind == "kaiser" else None)
    config = TwoStepConfig(stage1, args.yc, stage2, negate_energies=args.negate)
    result = two_step(spectrum, config)
    cfg = _base_config(args)
    cfg["units"] = spectrum.units
    prefix = args.out_prefix
    Path(prefix).parent.mkdir(parents=True, exist_ok=True)
    write_csv(f"{prefix}_raw.csv", ["y", "omega", "S_raw"],
              zip(range(len(result.omega)), result.omega, result.raw), cfg)
    write_csv(f"{prefix}_filtered.csv", ["y", "omega", "S_filtered", "S_filtered_normalized", "D_reference"],
              zip(range(len(result.omega)), result.omega, result.filtered, result.filtered_normalized,
                  result.reference), cfg)
    write_csv(f"{prefix}_error_kept.csv", ["y", "omega", "error", "abs_error"],
              zip(range(len(result.omega)), result.omega, result.kept_error, np.abs(result.kept_error)), cfg)
    write_csv(f"{prefix}_error_cut.csv", ["y", "omega", "error", "abs_error"],
              zip(range(len(result.omega)), result.omega, result.cut_error, np.abs(result.cut_error)), cfg)
    report = {
        "config": cfg,
        "lines": len(spectrum),
        "total_weight": spectrum.total_weight,
        "omega_c": config.omega_c,
        "beta": config.beta,
        "p0": result.p0,
        "queries": {"naive": result.queries_naive, "filtered": result.queries_filtered},
        "max_abs_error": float(np.max(np.abs(result.error))),
    }
    with open(f"{prefix}_report.json", "w") as fh:
        json.dump(report, fh, sort_keys=True, indent=2)
        fh.write("\n")


def run_verify(seed: int, n: int, kind: str, alpha, states: int, y_c: int | None = None):
    """Randomized oracle suites; returns ``[(name, max_deviation, tolerance), ...]``."""
    from .filter_response import renormalization_many
    from .qpe_response import probabilities_many

    grid = QpeGrid(n, 1.0)
    window = make_window(kind, grid, alpha if WindowKind.parse(kind) is WindowKind.KAISER else None)
    rng = np.random.default_rng(seed)
    E = rng.uniform(0, grid.period, states)
    C = rng.normal(size=states) + 1j * rng.normal(size=states)
    C /= np.linalg.norm(C)
    y_c = grid.N // 4 - 1 if y_c is None else y_c
    y_c = max(1, y_c)
    state = build_state(window, grid, E, C)
    analytic = probabilities_many(window, grid, E).T * np.abs(C) ** 2
    dev_oracle = float(np.max(np.abs(state.probabilities - analytic)))
    R, _ = renormalization_many(window, FilterConfig(grid, y_c), E)
    target = np.abs(C) ** 2 * R
    dev_postselect = float(np.max(np.abs(postselect_expectation(state, y_c) - target / target.sum())))
    dev_unitary = abs(float(np.sum(state.probabilities)) - 1.0)
    return [
        ("oracle_equivalence", dev_oracle, 1e-10),
        ("postselection_identity", dev_postselect, 1e-12),
        ("unitarity", dev_unitary, 1e-12),
    ]


def cmd_verify(args):
    if args.kind == "kaiser" and args.alpha is None:
        raise UsageError("--alpha is required for --kind kaiser")
    if args.n > 12:
        raise UsageError("--n must be <= 12 for the statevector oracle")
    results = run_verify(args.seed, args.n, args.kind, args.alpha, args.states, args.yc)
    out = sys.stdout
    out.write(f"# config: {_config_json(_base_config(args))}\n")
    out.write("suite,max_deviation,tolerance,status\n")
    ok = True
    for name, dev, tol in results:
        passed = dev <= tol
        ok &= passed
        out.write(f"{name},{_fmt(dev)},{_fmt(tol)},{'pass' if passed else 'FAIL'}\n")
    if not ok:
        raise DomainError("verification failed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qpefl", description="QPE-based eigenvalue filtering toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--threads", type=_ranged(int, lo=1), default=None,
                        help="worker threads (default: $QPEFL_THREADS or 1)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("window", help="window coefficients a_j")
    _window_args(p, with_T=False)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_window)

    p = sub.add_parser("response", help="QPE outcome distribution P(y) for one energy")
    _window_args(p)
    p.add_argument("--energy", type=_ranged(float), required=True)
    p.add_argument("--log", action="store_true", help="add a log10(P) column")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_response)

    p = sub.add_parser("filter", help="renormalization filter R(E) and its deviation")
    _window_args(p)
    cut = p.add_mutually_exclusive_group(required=True)
    cut.add_argument("--yc", type=_ranged(int, lo=1))
    cut.add_argument("--m", type=_ranged(int, lo=1))
    p.add_argument("--samples", type=_ranged(int, lo=1, hi=10_000_000), default=10_000)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("sigma", help="sigma factor (window autocorrelation)")
    _window_args(p, with_T=False)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_sigma)

    p = sub.add_parser("qetu", help="minimal QETU polynomial degree")
    p.add_argument("--e-targ", type=_ranged(float, lo=0, lo_open=True), required=True)
    p.add_argument("--two-delta", type=_ranged(float, lo=0, lo_open=True), required=True)
    p.add_argument("--eps", type=_ranged(float, lo=1e-6, hi=0.999), nargs="+", required=True)
    p.add_argument("--T", type=_ranged(float, lo=0, lo_open=True), default=1.0)
    p.add_argument("--M", type=_ranged(int, lo=2, hi=1_000_000), nargs="+", default=[12800])
    p.add_argument("--degree", type=_ranged(int, lo=2, hi=4096), default=None,
                   help="fit this even degree only")
    p.add_argument("--kaiser-eps", type=_ranged(float, lo=0, lo_open=True, hi=0.5),
                   default=None, help="also size the Kaiser QPE filter at this tolerance")
    p.add_argument("--grid", choices=("chebyshev", "uniform"), default="chebyshev",
                   help="fitting point layout in w")
    p.add_argument("--dump-poly", type=Path)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_qetu)

    p = sub.add_parser("spectrum", help="two-step filtered spectral simulation")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--stage1-kind", choices=KINDS, required=True)
    p.add_argument("--alpha", type=_ranged(float, lo=0, lo_open=True), default=None)
    p.add_argument("--n", type=_ranged(int, lo=1, hi=20), required=True)
    p.add_argument("--T", type=_ranged(float, lo=0, lo_open=True), required=True)
    p.add_argument("--yc", type=_ranged(int, lo=1), required=True)
    p.add_argument("--stage2-kind", choices=KINDS, default="sine")
    p.add_argument("--alpha2", type=_ranged(float, lo=0, lo_open=True), default=None)
    p.add_argument("--n2", type=_ranged(int, lo=1, hi=20), required=True)
    p.add_argument("--T2", type=_ranged(float, lo=0, lo_open=True), required=True)
    p.add_argument("--negate", action="store_true", help="negate energies (high-pass via low-pass)")
    p.add_argument("--shift", type=_ranged(float), default=0.0, help="subtract E0 from energies")
    p.add_argument("--units", default="")
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("verify", help="statevector oracle self-check")
    p.add_argument("--seed", type=_ranged(int, lo=0), default=0)
    p.add_argument("--n", type=_ranged(int, lo=1, hi=12), required=True)
    p.add_argument("--kind", choices=KINDS, required=True)
    p.add_argument("--alpha", type=_ranged(float, lo=0, lo_open=True), default=None)
    p.add_argument("--states", type=_ranged(int, lo=1, hi=4096), default=16)
    p.add_argument("--yc", type=_ranged(int, lo=1), default=None)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else 2
    try:
        args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"qpefl {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (DomainError, ValueError, SpectrumError, NoFitFound, RuntimeError, OSError) as exc:
        print(f"qpefl {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
