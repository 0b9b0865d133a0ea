"""Command-line front end: ``aloha-relay {eval,sweep,figure,optimize,validate}``.

Exit codes: 0 success, 1 usage error, 2 validation failure, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import math
import os
import sys
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from . import analytic as an
from . import simulate as sim
from .config import ConfigError, RunConfig, apply_overrides, load_config, resolve_seed
from .figures import FIGURES, Table, build_figure, format_value, write_csv
from .numerics import IntegrationError, maximize_unimodal, Tolerance
from .sinr import (
    expected_delay_factor_poisson_field,
    expected_delay_factor_poisson_line,
    route_delay_fixed,
    route_speed_fixed,
)
from .validation import SUITES, run_suite

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("aloha_relay")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# Quantities
# ---------------------------------------------------------------------------

def _estimate_ratio(num: float, est: sim.Estimate) -> sim.Estimate:
    """num / X from an estimate of X (delta method)."""
    if not math.isfinite(est.mean) or est.mean == 0:
        return sim.Estimate(0.0, math.inf, est.n)
    return sim.Estimate(num / est.mean, num * est.stderr / est.mean ** 2, est.n)


@dataclass(frozen=True)
class Quantity:
    unit: str
    analytic: Callable
    mc: Callable | None = None


def _pr(c: RunConfig):
    return c.poisson_route()


def _field_spec(c: RunConfig):
    return an.InterfererSpec("poisson_field", mu=c.interferers.mu, p_prime=c.mac.p_prime)


def _line_spec(c: RunConfig):
    i = c.interferers
    return an.InterfererSpec("poisson_line", nu=i.nu, lambda_prime=i.lambda_prime, p_prime=c.mac.p_prime)


def _deterministic(c: RunConfig):
    if len(c.route.positions) < 2:
        raise ConfigError("route.positions needs at least two coordinates")
    return c.route.positions


QUANTITIES = {
    "capture_nn": Quantity(
        "-", lambda c: an.capture_nn(_pr(c)),
        lambda c, n, s: sim.estimate_capture_nn(_pr(c), n=n or 100_000, window=c.window(), seed=s, W=0.0)),
    "capture_nr": Quantity(
        "-", lambda c: an.capture_nr(_pr(c)),
        lambda c, n, s: sim.estimate_capture_nr(replace(_pr(c), ch=replace(c.channel, W=0.0)), n=n or 100_000,
                                                window=c.window(), seed=s)),
    "capture_nn_noise": Quantity(
        "-", lambda c: an.capture_nn_noise(_pr(c)),
        lambda c, n, s: sim.estimate_capture_nn_noise(_pr(c), c.channel.W, n=n or 100_000, window=c.window(),
                                                      seed=s)),
    "local_delay": Quantity(
        "slot", lambda c: an.mean_local_delay_noise_flag(_pr(c), interferers=c.interferer_spec()),
        lambda c, n, s: sim.estimate_mean_local_delay(_pr(c), interferers=c.interferer_spec(), n=n or 100_000,
                                                      window=c.window(), seed=s)),
    "critical_p": Quantity("-", lambda c: an.critical_p(c.channel)),
    "speed": Quantity(
        "m/slot", lambda c: an.long_distance_speed(_pr(c)),
        lambda c, n, s: sim.simulate_long_distance_speed(_pr(c), 500, n or 1000, c.window(), s)),
    "density": Quantity("1/slot", lambda c: an.density_of_progress(_pr(c))),
    "e2e_delay": Quantity(
        "slot", lambda c: an.end_to_end_delay_noise(c.M, _pr(c), interferers=c.interferer_spec()),
        lambda c, n, s: sim.simulate_end_to_end(c.M, _pr(c), interferers=c.interferer_spec(), n=n or 10_000,
                                                window=c.window(), seed=s)),
    "e2e_speed": Quantity(
        "m/slot", lambda c: an.end_to_end_speed(c.M, _pr(c), interferers=c.interferer_spec()),
        lambda c, n, s: _estimate_ratio(c.M, sim.simulate_end_to_end(
            c.M, _pr(c), interferers=c.interferer_spec(), n=n or 10_000, window=c.window(), seed=s))),
    "lattice_delay": Quantity(
        "slot", lambda c: an.lattice_mean_local_delay(c.lattice_route(), interferers=c.interferer_spec()),
        lambda c, n, s: sim.simulate_lattice_local_delay(c.lattice_route(), interferers=c.interferer_spec(),
                                                         n=n or 20_000, window=c.window(), seed=s)),
    "lattice_speed": Quantity(
        "m/slot", lambda c: an.lattice_speed(c.lattice_route(), interferers=c.interferer_spec()),
        lambda c, n, s: _estimate_ratio(1.0 / (c.route.lam + 1.0 / c.route.delta), sim.simulate_lattice_local_delay(
            c.lattice_route(), interferers=c.interferer_spec(), n=n or 20_000, window=c.window(), seed=s))),
    "Eprime_P": Quantity(
        "-", lambda c: expected_delay_factor_poisson_field(c.r, c.interferers.mu, c.mac, c.channel),
        lambda c, n, s: sim.estimate_delay_factor(c.r, _field_spec(c), c.channel, n or 20_000, c.window(), s)),
    "Eprime_PL": Quantity(
        "-", lambda c: expected_delay_factor_poisson_line(c.r, c.interferers.nu, c.interferers.lambda_prime,
                                                          c.mac, c.channel),
        lambda c, n, s: sim.estimate_delay_factor(c.r, _line_spec(c), c.channel, n or 20_000, c.window(), s)),
    "route_delay": Quantity(
        "slot", lambda c: route_delay_fixed(_deterministic(c), np.zeros((0, 2)), c.mac, c.channel)),
    "route_speed": Quantity(
        "m/slot", lambda c: route_speed_fixed(_deterministic(c), np.zeros((0, 2)), c.mac, c.channel)),
}

# sweep aliases -> config key (or a callable building the config)
SWEEP_ALIASES = {
    "p": "mac.p",
    "p_prime": "mac.p_prime",
    "M": "segment.M",
    "r": "segment.r",
    "W": "channel.W",
    "delta": "route.delta",
    "lambda": "route.lambda",
    "mu": "interferers.mu",
    "lambda_prime": "interferers.lambda_prime",
    "nu": "interferers.nu",
}


def _set_param(cfg: RunConfig, name: str, value: float) -> RunConfig:
    if name == "nu_lambda_prime":
        lp = cfg.interferers.lambda_prime
        if not lp > 0:
            raise ConfigError("sweeping nu_lambda_prime needs interferers.lambda_prime > 0")
        return apply_overrides(cfg, [f"interferers.nu={value / lp!r}"])
    key = SWEEP_ALIASES.get(name, name)
    return apply_overrides(cfg, [f"{key}={value!r}"])


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

@contextlib.contextmanager
def _output(path: str | None, default_name: str | None = None):
    if path is None and default_name is None:
        yield sys.stdout
        return
    target = path or default_name
    if os.path.isdir(target) and default_name:
        target = os.path.join(target, default_name)
    with open(target, "w", encoding="utf-8", newline="") as fh:
        yield fh


def _params_line(cfg: RunConfig) -> str:
    ch, mac, rt = cfg.channel, cfg.mac, cfg.route
    return (f"# lambda={rt.lam!r} A={ch.A!r} beta={ch.beta!r} T={ch.T!r} W={ch.W!r} p={mac.p!r} "
            f"p_prime={mac.p_prime!r} M={cfg.M!r} r={cfg.r!r} delta={rt.delta!r} "
            f"interferers={cfg.interferers.kind}")


def cmd_eval(args, cfg: RunConfig, seed: int) -> int:
    q = QUANTITIES[args.quantity]
    value = q.analytic(cfg)
    print(_params_line(cfg))
    print(f"{args.quantity} = {format_value(value)} [{q.unit}]")
    if args.mc:
        if q.mc is None:
            print(f"# no simulator for {args.quantity}")
        else:
            est = q.mc(cfg, args.samples or cfg.sim.samples, seed)
            print(f"{args.quantity}_mc = {format_value(est.mean)} +- {format_value(est.stderr)} (n={est.n})")
            if getattr(est, "diverging", False):
                print("# divergence diagnostic: running mean not settling")
    return EXIT_OK


def _grid(args) -> list:
    if args.values:
        try:
            vals = [float(v) for v in args.values.split(",") if v.strip()]
        except ValueError as exc:
            raise UsageError(f"bad --values list: {args.values}") from exc
    else:
        lo, hi, steps = args.range
        steps = int(steps)
        if steps < 1:
            raise UsageError("--range needs at least one step")
        if args.log:
            if lo <= 0 or hi <= 0:
                raise UsageError("log grid needs positive bounds")
            vals = [float(f"{v:.12g}") for v in np.logspace(math.log10(lo), math.log10(hi), steps)]
        else:
            vals = list(np.linspace(lo, hi, steps))
    if not vals:
        raise UsageError("empty sweep grid")
    return [float(v) for v in vals]


def cmd_sweep(args, cfg: RunConfig, seed: int) -> int:
    q = QUANTITIES[args.quantity]
    grid = _grid(args)
    name = args.param
    if name not in SWEEP_ALIASES and name != "nu_lambda_prime":
        from .config import KEYS
        if name not in KEYS:
            raise UsageError(f"unknown sweep parameter {name!r}")
    subs = sim.seed_sequence(seed).spawn(len(grid))
    columns = [name, args.quantity, "mc_mean", "mc_stderr", "mc_diverging", "status"]
    rows = []
    for v, ss in zip(grid, subs):
        try:
            c = _set_param(cfg, name, v)
            value = q.analytic(c)
            est = q.mc(c, args.samples or cfg.sim.samples, ss) if (args.mc and q.mc) else None
            mc = [None, None, None] if est is None else [est.mean, est.stderr, bool(getattr(est, "diverging", False))]
            rows.append([v, value] + mc + ["ok"])
        except (ConfigError, ValueError, IntegrationError) as exc:
            log.warning("grid point %s=%r failed: %s", name, v, exc)
            rows.append([v, None, None, None, None, f"error: {exc}".replace(",", ";")])
    table = Table(f"sweep_{args.quantity}", columns, {args.quantity: q.unit, "mc_mean": q.unit}, rows)
    with _output(args.out) as fh:
        fh.write(_params_line(cfg) + "\n")
        _write_rows_with_status(table, fh)
    return EXIT_OK


def _write_rows_with_status(table: Table, fh):
    for col in table.columns:
        if col in table.units:
            fh.write(f"# {col} [{table.units[col]}]\n")
    fh.write(",".join(table.columns) + "\n")
    for row in table.rows:
        fh.write(",".join(v if isinstance(v, str) else format_value(v) for v in row) + "\n")


def _figure_overrides(args) -> dict:
    out = {}
    for item in args.option or ():
        if "=" not in item:
            raise UsageError(f"--option {item!r} is not name=value")
        k, v = item.split("=", 1)
        try:
            vals = [float(x) for x in v.split(",") if x.strip()]
        except ValueError as exc:
            raise UsageError(f"bad value list for {k}") from exc
        out[k.strip()] = vals
    if args.samples:
        out["samples"] = args.samples
    elif cfg_samples := getattr(args, "_cfg_samples", None):
        out["samples"] = cfg_samples
    return out


def cmd_figure(args, cfg: RunConfig, seed: int) -> int:
    names = list(FIGURES) if args.name == "all" else [args.name]
    args._cfg_samples = cfg.sim.samples
    try:
        overrides = _figure_overrides(args)
    except (KeyError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    for name in names:
        try:
            table = build_figure(name, cfg, mc=args.mc, seed=seed, overrides=overrides)
        except (KeyError, TypeError) as exc:
            raise UsageError(f"figure {name}: {exc}") from exc
        out = args.out
        if len(names) > 1 and out is not None and not os.path.isdir(out):
            raise UsageError("--out must be a directory when writing several figures")
        with _output(out, f"{name}.csv") as fh:
            fh.write(_params_line(cfg) + "\n")
            fh.write(f"# seed={seed} mc={int(args.mc)}\n")
            write_csv(table, fh)
        print(f"{name}: {len(table.rows)} rows written to {fh.name}")
    return EXIT_OK


def cmd_optimize(args, cfg: RunConfig, seed: int) -> int:
    trace: list = []
    pr = cfg.poisson_route()
    spec = cfg.interferer_spec()
    if args.target == "p_for_speed":
        x, fx = an.optimal_p_for_speed(pr, trace=trace)
        print(f"p_for_speed: p* = {x!r}  speed = {fx!r} [m/slot]  bracket = (0, {an.critical_p(cfg.channel)!r})")
    elif args.target == "p_for_density":
        res = an.density_argmax(cfg.channel, trace=trace)
        print(f"p_for_density: p* = {res['numeric']!r}  density = {res['max_density']!r}  bracket = (0, 1)")
        print(f"  stationary point 1/(2 + C1) = {res['stationary']!r}")
        print(f"  alternate cubic-root formula = {res['cubic_formula']!r} (not a stationary point)")
    else:
        W = cfg.channel.W
        lo, hi = args.bracket or (10.0, 2000.0)
        x, fx = an.optimal_delta(cfg.lattice_route(), W, spec, bracket=(lo, hi), trace=trace)
        print(f"delta_for_speed: delta* = {x!r} [m]  speed = {fx!r} [m/slot]  bracket = ({lo!r}, {hi!r})  W = {W!r}")
        if W > 0:
            m_trace: list = []
            m_star, v_star = maximize_unimodal(lambda M: an.end_to_end_speed(M, pr, W, spec),
                                               (lo, hi), Tolerance(abs=0.5), m_trace)
            print(f"  end-to-end speed peaks at M = {m_star!r} [m] (speed {v_star!r}); "
                  f"delta*/M_peak = {x / m_star!r}")
    table = Table(args.target, ["step", "x", "value"], {}, [[i, a, b] for i, (a, b) in enumerate(trace)])
    if args.out:
        with _output(args.out) as fh:
            write_csv(table, fh)
    return EXIT_OK


def cmd_validate(args, cfg: RunConfig, seed: int) -> int:
    checks = run_suite(args.suite, cfg.poisson_route(), seed, n=args.samples or cfg.sim.samples)
    failed = [c for c in checks if not c.passed]
    for c in checks:
        print(c.line())
    if failed:
        print(f"{args.suite}: {len(failed)} of {len(checks)} checks failed: " + ", ".join(c.name for c in failed))
        return EXIT_VALIDATION
    print(f"{args.suite}: all {len(checks)} checks passed")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _common(suppress: bool = False) -> argparse.ArgumentParser:
    # subcommand copies use SUPPRESS so they do not reset flags given before the subcommand
    p = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS if suppress else None)
    p.add_argument("--config", metavar="PATH", help="plain-text key = value configuration file")
    p.add_argument("--set", dest="overrides_sub" if suppress else "overrides", action="append", metavar="KEY=VALUE",
                   help="override one configuration key (repeatable)")
    p.add_argument("--seed", type=int, help="master seed (fallback: $ALOHA_RELAY_SEED, then 0)")
    p.add_argument("--samples", type=int, help="Monte Carlo sample count")
    p.add_argument("--out", metavar="PATH", help="CSV output file (or directory for figures)")
    p.add_argument("--mc", action="store_true", default=argparse.SUPPRESS if suppress else False,
                   help="add Monte Carlo columns")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS if suppress else False)
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="aloha-relay", description=__doc__.splitlines()[0], parents=[_common()])
    common = _common(suppress=True)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    e = sub.add_parser("eval", parents=[common], help="evaluate one analytic quantity")
    e.add_argument("quantity", choices=sorted(QUANTITIES))

    s = sub.add_parser("sweep", parents=[common], help="sweep one parameter over a grid")
    s.add_argument("quantity", choices=sorted(QUANTITIES))
    s.add_argument("--param", required=True, help="p, M, W, delta, mu, lambda_prime, nu_lambda_prime or a config key")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--values", help="comma-separated grid")
    g.add_argument("--range", nargs=3, type=float, metavar=("LO", "HI", "STEPS"))
    s.add_argument("--log", action="store_true", help="logarithmic spacing for --range")

    f = sub.add_parser("figure", parents=[common], help="write the CSV behind a performance figure")
    f.add_argument("name", choices=sorted(FIGURES) + ["all"])
    f.add_argument("--option", action="append", metavar="NAME=V1,V2",
                   help="replace a grid option, e.g. W=1e-11,1e-13 or M=10000")

    o = sub.add_parser("optimize", parents=[common], help="golden-section optimum")
    o.add_argument("target", choices=["p_for_speed", "p_for_density", "delta_for_speed"])
    o.add_argument("--bracket", nargs=2, type=float, metavar=("LO", "HI"))

    v = sub.add_parser("validate", parents=[common], help="analytic versus Monte Carlo checks")
    v.add_argument("suite", choices=sorted(SUITES))
    return parser


COMMANDS = {"eval": cmd_eval, "sweep": cmd_sweep, "figure": cmd_figure, "optimize": cmd_optimize,
            "validate": cmd_validate}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        cfg = apply_overrides(cfg, (args.overrides or []) + getattr(args, "overrides_sub", []))
        seed = resolve_seed(args.seed, cfg)
        if args.samples is not None and args.samples < 1:
            raise UsageError("--samples must be >= 1")
        return COMMANDS[args.command](args, cfg, seed)
    except (ConfigError, UsageError, OSError) as exc:
        print(f"aloha-relay: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (IntegrationError, FloatingPointError, OverflowError, ZeroDivisionError) as exc:
        print(f"aloha-relay: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
