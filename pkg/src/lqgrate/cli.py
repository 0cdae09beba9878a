"""Command-line entry point: ``lqgrate <command> MODEL [options]``."""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from .errors import LqgRateError, ParseError
from .loop import LoopDesign, simulate, write_summary_csv
from .lqr import PlantModel, min_cost, solve_dare
from .sdp import solve_di, tradeoff_curve
from .sensor import (
    format_matrix,
    format_number,
    parse_sections,
    realize_or_open_loop,
    write_design,
)
from .validation import gap_report

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_RICCATI = 3
EXIT_SDP = 4
EXIT_SIMULATION = 5
EXIT_BOUND = 6

MODEL_SECTIONS = ("A", "B", "W", "Q", "R", "P0")
COST_SLACK = 0.05
COV_TOLERANCE = 0.03


class StageError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _stage(code: int, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except LqgRateError as exc:
        raise StageError(code, f"{type(exc).__name__}: {exc}") from exc


# --- model files -------------------------------------------------------------

def read_model(path) -> PlantModel:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror}") from None
    starts: dict[str, int] = {}
    blocks = parse_sections(text, MODEL_SECTIONS, str(path), starts)
    n = blocks["A"].shape[0]
    m = blocks["B"].shape[1]
    expected = {"A": (n, n), "B": (n, m), "W": (n, n), "Q": (n, n), "R": (m, m), "P0": (n, n)}
    for name, shape in expected.items():
        if blocks[name].shape != shape:
            rows, cols = blocks[name].shape
            raise ParseError(
                f"{path}:{starts[name]}: section {name} is {rows}x{cols}, expected {shape[0]}x{shape[1]}"
            )
    try:
        return PlantModel(blocks["A"], blocks["B"], blocks["W"], blocks["Q"], blocks["R"], blocks["P0"])
    except LqgRateError as exc:
        raise ParseError(f"{path}: {exc}") from None


def write_model(model: PlantModel, path) -> None:
    lines = []
    for name, M in zip(MODEL_SECTIONS, (model.A, model.B, model.W, model.Q, model.R, model.P_prior)):
        lines.append(name)
        lines.extend(format_matrix(M))
    Path(path).write_text("\n".join(lines) + "\n")


# --- output helpers ----------------------------------------------------------

def _emit(out, name, value) -> None:
    if isinstance(value, np.ndarray):
        out.write(f"{name}\n")
        for row in format_matrix(value):
            out.write(f"{row}\n")
    elif isinstance(value, float):
        out.write(f"{name} {format_number(value)}\n")
    else:
        out.write(f"{name} {value}\n")


def _gamma(args) -> float:
    if args.gamma is None:
        raise StageError(EXIT_PARSE, "--gamma is required")
    return float(args.gamma)


# --- subcommands -------------------------------------------------------------

def cmd_lqr(args, out) -> int:
    model = _stage(EXIT_PARSE, read_model, args.model)
    cert = _stage(EXIT_RICCATI, solve_dare, model)
    _emit(out, "S", cert.S)
    _emit(out, "K", cert.K)
    _emit(out, "Theta", cert.Theta)
    _emit(out, "min_cost", min_cost(model, cert))
    return EXIT_OK


def cmd_di(args, out) -> int:
    model = _stage(EXIT_PARSE, read_model, args.model)
    cert = _stage(EXIT_RICCATI, solve_dare, model)
    sol = _stage(EXIT_SDP, solve_di, model, cert, _gamma(args))
    _emit(out, "gamma", sol.gamma)
    _emit(out, "di_bits", sol.di_bits)
    _emit(out, "upper_bits", sol.upper_bits)
    _emit(out, "rank_r", sol.rank_r)
    _emit(out, "kkt_residual", sol.kkt_residual)
    _emit(out, "P", sol.P_opt)
    _emit(out, "Pi", sol.Pi_opt)
    _emit(out, "SNR", sol.snr)
    return EXIT_OK


def cmd_tradeoff(args, out) -> int:
    model = _stage(EXIT_PARSE, read_model, args.model)
    cert = _stage(EXIT_RICCATI, solve_dare, model)
    floor = min_cost(model, cert)
    if args.points < 2:
        raise StageError(EXIT_PARSE, "--points must be at least 2")
    if args.gamma_min is None or args.gamma_max is None:
        raise StageError(EXIT_PARSE, "--gamma-min and --gamma-max are required")
    if not args.gamma_min > floor:
        raise StageError(EXIT_SDP, f"gamma-min {format_number(args.gamma_min)} is not above the minimum cost "
                                   f"Tr(WS) = {format_number(floor)}")
    if not args.gamma_max >= args.gamma_min:
        raise StageError(EXIT_PARSE, "--gamma-max must not be below --gamma-min")
    if args.linear:
        gammas = np.linspace(args.gamma_min, args.gamma_max, args.points)
    else:
        gammas = np.geomspace(args.gamma_min, args.gamma_max, args.points)
    points = tradeoff_curve(model, cert, gammas)
    for p in points:
        if p.error:
            print(f"warning: gamma {format_number(p.gamma)} failed: {p.error}", file=sys.stderr)
    rows = ["gamma,di_bits,upper_bits,rank_r"]
    for p in points:
        rank = "nan" if p.error else str(p.rank_r)
        rows.append(",".join([format_number(p.gamma), _csv_number(p.di_bits), _csv_number(p.upper_bits), rank]))
    text = "\n".join(rows) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        out.write(text)
    if all(p.error for p in points):
        raise StageError(EXIT_SDP, "every grid point failed")
    return EXIT_OK


def _csv_number(v: float) -> str:
    return "nan" if math.isnan(v) else format_number(v)


def _design(args):
    model = _stage(EXIT_PARSE, read_model, args.model)
    cert = _stage(EXIT_RICCATI, solve_dare, model)
    sol = _stage(EXIT_SDP, solve_di, model, cert, _gamma(args))
    sensor = _stage(EXIT_SDP, realize_or_open_loop, sol)
    if getattr(args, "delta_scale", 1.0) != 1.0:
        sensor = sensor.scaled(args.delta_scale)
    return LoopDesign(model, cert, sensor, sol, args.seed)


def cmd_synthesize(args, out) -> int:
    design = _design(args)
    header = {"gamma": format_number(design.sol.gamma), "di_bits": format_number(design.sol.di_bits),
              "rank_r": design.sensor.r}
    text = write_design(design.sensor, design.cert.K, args.out, header)
    if not args.out:
        out.write(text)
    return EXIT_OK


def _run(args, design):
    return _stage(EXIT_SIMULATION, simulate, design, args.steps, args.trials, trace=args.trace)


def cmd_simulate(args, out) -> int:
    design = _design(args)
    summary = _run(args, design)
    for name, value in summary.scalars().items():
        _emit(out, name, value)
    if args.out:
        write_summary_csv(args.out, summary)
    return EXIT_OK


def cmd_verify(args, out) -> int:
    design = _design(args)
    s = _run(args, design)
    gamma = design.sol.gamma
    upper = s.upper_bits + s.rate_ci_halfwidth
    checks = [
        ("cost", s.avg_cost <= gamma * (1.0 + COST_SLACK),
         f"avg_cost {format_number(s.avg_cost)} <= gamma*(1+{COST_SLACK:g}) {format_number(gamma * (1 + COST_SLACK))}"),
        ("rate_lower", s.avg_rate_bits >= s.di_bits - s.rate_ci_halfwidth,
         f"avg_rate_bits {format_number(s.avg_rate_bits)} >= di_bits - ci "
         f"{format_number(s.di_bits - s.rate_ci_halfwidth)}"),
        # the open-loop placeholder sits exactly on the bound
        ("rate_upper", s.avg_rate_bits < upper or (s.rank_r == 0 and s.avg_rate_bits <= upper),
         f"avg_rate_bits {format_number(s.avg_rate_bits)} < upper_bits + ci "
         f"{format_number(s.upper_bits + s.rate_ci_halfwidth)}"),
        ("covariance", s.stationary_cov_error < COV_TOLERANCE,
         f"stationary_cov_error {format_number(s.stationary_cov_error)} < {COV_TOLERANCE:g}"),
    ]
    for name in ("gamma", "di_bits", "avg_rate_bits", "upper_bits", "avg_cost", "rate_ci_halfwidth",
                 "cost_ci_halfwidth", "entropy_bits", "rank_r", "steps", "trials", "seed"):
        _emit(out, name, getattr(s, name))
    if design.sensor.r:
        report = gap_report(design.theta_cov, design.sensor.Delta, s.entropy_bits)
        for line in report.lines():
            out.write(f"gap.{line}\n")
    else:
        out.write("open_loop 1-bit placeholder per step; zero-length rate 0\n")
    for name, ok, detail in checks:
        out.write(f"{'PASS' if ok else 'FAIL'} {name}: {detail}\n")
    passed = all(ok for _, ok, _ in checks)
    out.write(f"verdict {'PASS' if passed else 'FAIL'}\n")
    return EXIT_OK if passed else EXIT_BOUND


# --- argument parsing --------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise StageError(EXIT_PARSE, message)


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lqgrate", description="Rate-cost tradeoff tools for quantized LQG control.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help_text, gamma=False, sim=False):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("model", help="plant model file with sections A B W Q R P0")
        if gamma:
            p.add_argument("--gamma", type=float, help="LQG cost budget")
            p.add_argument("--seed", type=_u64, default=0)
        if sim:
            p.add_argument("--steps", type=int, default=200_000)
            p.add_argument("--trials", type=int, default=4)
            p.add_argument("--trace", help="per-step CSV of the first trial")
            p.add_argument("--_delta-scale", dest="delta_scale", type=float, default=1.0, help=argparse.SUPPRESS)
        p.set_defaults(func=fn)
        return p

    add("lqr", cmd_lqr, "solve the control Riccati equation")
    add("di", cmd_di, "minimum directed information at one budget", gamma=True)
    t = add("tradeoff", cmd_tradeoff, "DI and upper bound over a budget grid")
    t.add_argument("--gamma-min", type=float)
    t.add_argument("--gamma-max", type=float)
    t.add_argument("--points", type=int, default=20)
    t.add_argument("--linear", action="store_true", help="linear instead of log spacing")
    t.add_argument("--out")
    s = add("synthesize", cmd_synthesize, "sensor, quantizer steps and gains", gamma=True)
    s.add_argument("--out")
    s = add("simulate", cmd_simulate, "closed-loop Monte Carlo", gamma=True, sim=True)
    s.add_argument("--out", help="summary CSV")
    add("verify", cmd_verify, "check the rate sandwich end to end", gamma=True, sim=True)
    return parser


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
        return args.func(args, out)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
