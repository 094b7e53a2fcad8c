"""Command-line front end.

    irsfbl analyze       --scenario S [--theta T] [--out DIR]
    irsfbl bounds        --scenario S [--r-grid a:b:s] [--theta T] [--out DIR]
    irsfbl optimize      --scenario S [--theta T] [--seed K] [--threads J] [--out DIR]
    irsfbl validate-clt  --scenario S [--samples N] [--seed K] [--threads J] [--out DIR]

Exit codes: 0 success, 2 invalid input, 3 solver or quadrature failure,
4 stability violation.
"""

from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path

import numpy as np

from .errors import (ConvergenceError, DomainError, NotPSDError, QuadratureError,
                     SchemaError, StabilityError)
from .fbl import analyze
from .montecarlo import clt_validate, sample_mid
from .phase_opt import optimize
from .scenario import Scenario, load_scenario, parse_grid

EXIT_OK, EXIT_SCHEMA, EXIT_SOLVER, EXIT_STABILITY = 0, 2, 3, 4


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_rows(path: Path, header, rows, footer=()) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
        for line in footer:
            fh.write(f"# {line}\n")


def _write_report(path: Path, items) -> None:
    _write_rows(path, ("key", "value"), items)
    for k, v in items:
        print(f"{k}={_fmt(v)}")


def _theta(args, scenario: Scenario) -> np.ndarray:
    L = scenario.config.L
    src = args.theta
    if src == "zero":
        return np.zeros(L)
    if src == "random":
        seed = args.seed if args.seed is not None else scenario.mc_seed
        return np.random.default_rng(seed).uniform(0.0, 2.0 * np.pi, L)
    try:
        vals = [float(line) for line in Path(src).read_text(encoding="utf-8").split()]
    except (OSError, ValueError) as exc:
        raise SchemaError(f"cannot read theta file {src}: {exc}") from exc
    if len(vals) != L:
        raise SchemaError(f"theta file {src} has {len(vals)} angles, expected {L}")
    return np.array(vals)


def cmd_analyze(args, scenario: Scenario, out: Path) -> int:
    an = analyze(scenario.config, _theta(args, scenario))
    fp, st = an.fixed_point, an.stats
    items = [
        ("config_hash", scenario.config.fingerprint()),
        ("mean_capacity", an.mean_capacity),
        ("delta", fp.delta),
        ("omega", fp.omega),
        ("xi", fp.xi),
        ("V_minus", an.V_minus),
        ("V_plus", an.V_plus),
        ("V_n", an.V_n(scenario.codeword.gram())),
        ("codeword", scenario.codeword.kind),
        ("Xi", st.Xi),
        ("Delta_S", st.delta_S),
        ("iterations", fp.iterations),
    ]
    _write_report(out / "analyze.csv", items)
    return EXIT_OK


def cmd_bounds(args, scenario: Scenario, out: Path) -> int:
    an = analyze(scenario.config, _theta(args, scenario))
    if args.r_grid is not None:
        r_values = parse_grid(args.r_grid)
    else:
        r_values = scenario.second_order_rates(an.mean_capacity)
    if len(r_values) == 0:
        raise SchemaError("no rates given: use --r-grid or a [rates] section")
    rows = []
    for r in np.sort(r_values):
        b = an.bounds(float(r))
        rows.append((b.r, b.rate, b.lower, b.upper))
    _write_rows(out / "bounds.csv", ("r", "R", "lower_bound", "upper_bound"), rows)
    print(f"mean_capacity={_fmt(an.mean_capacity)}")
    print(f"V_minus={_fmt(an.V_minus)}")
    print(f"V_plus={_fmt(an.V_plus)}")
    print(f"rows={len(rows)}")
    return EXIT_OK


def cmd_optimize(args, scenario: Scenario, out: Path) -> int:
    theta0 = _theta(args, scenario)
    an = analyze(scenario.config, theta0)
    r_values = scenario.second_order_rates(an.mean_capacity)
    if len(r_values) != 1:
        raise SchemaError(f"optimize needs exactly one rate in [rates], got {len(r_values)}")
    r = float(r_values[0])
    opts = scenario.optimizer
    if args.threads > 1:
        opts = type(opts)(**{**opts.__dict__, "threads": args.threads})
    trace = optimize(theta0, scenario.config, r, opts)
    rows = [(rec.iteration, rec.K, rec.grad_norm, rec.step) for rec in trace.records]
    _write_rows(out / "trace.csv", ("iteration", "K", "grad_norm", "step"), rows,
                footer=(f"termination={trace.reason}", f"r={r!r}"))
    with open(out / "theta.txt", "w", encoding="utf-8") as fh:
        for t in trace.wrapped_theta:
            fh.write(f"{float(t)!r}\n")
    print(f"r={_fmt(r)}")
    print(f"K_initial={_fmt(trace.records[0].K)}")
    print(f"K_final={_fmt(trace.final_K)}")
    print(f"iterations={len(trace.records) - 1}")
    print(f"termination={trace.reason}")
    return EXIT_OK


def cmd_validate_clt(args, scenario: Scenario, out: Path) -> int:
    count = args.samples if args.samples is not None else scenario.mc_count
    seed = args.seed if args.seed is not None else scenario.mc_seed
    theta = _theta(args, scenario)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rep = clt_validate(scenario.config, theta, scenario.codeword, count, seed,
                           threads=args.threads, bins=scenario.mc_bins)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    items = [
        ("config_hash", scenario.config.fingerprint()),
        ("seed", seed),
        ("count", rep.count),
        ("codeword", scenario.codeword.kind),
        ("mean_capacity", rep.mean_capacity),
        ("V_n", rep.V_n),
        ("empirical_mean", rep.mean),
        ("empirical_variance", rep.variance),
        ("variance_ratio", rep.variance / rep.V_n),
        ("ks", rep.ks),
        ("ks_critical_5pct", rep.ks_critical),
        ("warning", "; ".join(rep.warnings) or "none"),
    ]
    _write_report(out / "clt_report.csv", items)
    centers = rep.bin_centers
    pdf = np.exp(-centers ** 2 / 2) / np.sqrt(2 * np.pi)
    _write_rows(out / "histogram.csv", ("bin_center", "density", "gaussian_pdf"),
                zip(centers, rep.density, pdf))
    if args.save_samples:
        sample_mid(scenario.config, theta, scenario.codeword, count, seed,
                   args.threads).to_csv(out / "mid_samples.csv")
    return EXIT_OK


COMMANDS = {
    "analyze": cmd_analyze,
    "bounds": cmd_bounds,
    "optimize": cmd_optimize,
    "validate-clt": cmd_validate_clt,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="irsfbl", description=__doc__.split("\n")[0] or None,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--scenario", required=True, help="scenario INI file")
        p.add_argument("--out", default=".", help="output directory (created if missing)")
        p.add_argument("--seed", type=int, default=None, help="RNG seed (non-negative)")
        p.add_argument("--samples", type=int, default=None, help="Monte Carlo sample count")
        p.add_argument("--r-grid", default=None, help="second-order rates start:stop:step")
        p.add_argument("--theta", default="zero", help="phase source: zero, random or a file")
        p.add_argument("--threads", type=int, default=1, help="worker threads")
        if name == "validate-clt":
            p.add_argument("--save-samples", action="store_true",
                           help="also write every MID draw to mid_samples.csv")
    return parser


def _join_grid(argv):
    # argparse would read a negative grid start such as "-2:0:0.5" as a flag
    out = []
    it = iter(argv)
    for tok in it:
        if tok == "--r-grid":
            out.append(f"--r-grid={next(it, '')}")
        else:
            out.append(tok)
    return out


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(_join_grid(argv))
    try:
        if args.seed is not None and args.seed < 0:
            raise SchemaError("--seed must be non-negative")
        if args.samples is not None and args.samples < 1:
            raise SchemaError("--samples must be >= 1")
        if args.threads < 1:
            raise SchemaError("--threads must be >= 1")
        scenario = load_scenario(args.scenario)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](args, scenario, out)
    except (SchemaError, DomainError, NotPSDError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (ConvergenceError, QuadratureError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except StabilityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STABILITY


if __name__ == "__main__":
    sys.exit(main())
