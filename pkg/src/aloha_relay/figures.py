"""Parameter sweeps behind the performance curves, emitted as CSV tables.

Every table has a fixed column list.  Simulator columns are always present and
left empty unless Monte Carlo is requested; each grid point then draws from
its own substream of the master seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .analytic import (
    InterfererSpec,
    LatticeRouteConfig,
    density_of_progress,
    end_to_end_delay_noise,
    end_to_end_speed,
    lattice_mean_local_delay,
    long_distance_speed,
)
from .config import RunConfig
from .simulate import (
    seed_sequence,
    simulate_end_to_end,
    simulate_lattice_local_delay,
    simulate_long_distance_speed,
)

__all__ = ["Table", "FIGURES", "FIGURE_DEFAULTS", "build_figure", "format_value", "write_csv"]


@dataclass
class Table:
    name: str
    columns: list
    units: dict
    rows: list

    def column(self, name: str) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([math.nan if r[i] is None else r[i] for r in self.rows], dtype=float)


def format_value(v) -> str:
    """CSV cell: full-precision decimal, 'inf' for infinity, empty when not computed."""
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return ""
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def write_csv(table: Table, fh) -> None:
    for col in table.columns:
        if col in table.units:
            fh.write(f"# {col} [{table.units[col]}]\n")
    fh.write(",".join(table.columns) + "\n")
    for row in table.rows:
        fh.write(",".join(format_value(v) for v in row) + "\n")


def _log_grid(lo_exp: float, hi_exp: float, n: int) -> list:
    return [float(f"{v:.6g}") for v in np.logspace(lo_exp, hi_exp, n)]


FIGURE_DEFAULTS = {
    "speed1": {"p": [round(0.005 * k, 3) for k in range(1, 61)], "k_hops": 500, "samples": 200},
    "varM": {"M": [25.0 * k for k in range(1, 81)], "samples": 1000},
    "varMW": {"W": [1e-11, 1e-12, 1e-13], "M": [25.0 * k for k in range(1, 121)], "samples": 500},
    "varWM": {"M": [100.0, 1000.0, 10000.0], "W": _log_grid(-17, -9, 33), "samples": 200},
    "chlambda": {"M": 10000.0, "p_prime": [0.15, 0.015], "lambda_prime": _log_grid(-9, -5, 33),
                 "samples": 20},
    "ppl": {"M": 10000.0, "p_prime": [0.15, 0.015], "nu_lambda_prime": _log_grid(-9, -5, 33),
            "nu": 0.01, "samples": 20},
    "grw": {"W": [1e-11, 1e-12], "delta": [20.0 * k for k in range(1, 51)], "samples": 5000},
}

MC_COLS = ["mc_mean", "mc_stderr", "mc_diverging"]


def _mc_cells(est):
    if est is None:
        return [None, None, None]
    return [est.mean, est.stderr, bool(getattr(est, "diverging", False))]


def _streams(seed, n):
    return seed_sequence(seed).spawn(n)


def _speed1(cfg: RunConfig, opts, mc, seed):
    pr = cfg.poisson_route()
    grid = opts["p"]
    subs = _streams(seed, len(grid)) if mc else [None] * len(grid)
    rows = []
    for p, ss in zip(grid, subs):
        c = pr.with_p(p)
        est = simulate_long_distance_speed(c, opts["k_hops"], opts["samples"], cfg.window(), ss) if mc else None
        rows.append([p, long_distance_speed(c), density_of_progress(c) / c.lam] + _mc_cells(est))
    return Table("speed1", ["p", "speed", "density_over_lambda"] + MC_COLS,
                 {"p": "-", "speed": "m/slot", "density_over_lambda": "m/slot", "mc_mean": "m/slot"}, rows)


def _e2e_rows(cfg, points, mc, seed, samples):
    """points: iterable of (leading cells, M, W, InterfererSpec)."""
    pr = cfg.poisson_route()
    points = list(points)
    subs = _streams(seed, len(points)) if mc else [None] * len(points)
    rows = []
    for (lead, M, W, spec), ss in zip(points, subs):
        delay = end_to_end_delay_noise(M, pr, W, spec)
        speed = 0.0 if math.isinf(delay) else M / delay
        est = simulate_end_to_end(M, pr, W, spec, samples, cfg.window(), ss) if mc else None
        rows.append(list(lead) + [speed, delay] + _mc_cells(est))
    return rows


E2E_UNITS = {"M": "m", "W": "power", "e2e_speed": "m/slot", "e2e_delay": "slot", "mc_mean": "slot"}


def _varM(cfg, opts, mc, seed):
    W, spec = cfg.channel.W, cfg.interferer_spec()
    v = long_distance_speed(cfg.poisson_route())
    rows = _e2e_rows(cfg, (((M,), M, W, spec) for M in opts["M"]), mc, seed, opts["samples"])
    for r in rows:
        r.insert(3, v)
    return Table("varM", ["M", "e2e_speed", "e2e_delay", "long_distance_speed"] + MC_COLS,
                 dict(E2E_UNITS, long_distance_speed="m/slot"), rows)


def _varMW(cfg, opts, mc, seed):
    spec = cfg.interferer_spec()
    pts = (((W, M), M, W, spec) for W in opts["W"] for M in opts["M"])
    return Table("varMW", ["W", "M", "e2e_speed", "e2e_delay"] + MC_COLS, E2E_UNITS,
                 _e2e_rows(cfg, pts, mc, seed, opts["samples"]))


def _varWM(cfg, opts, mc, seed):
    spec = cfg.interferer_spec()
    pts = (((M, float(W)), M, float(W), spec) for M in opts["M"] for W in opts["W"])
    return Table("varWM", ["M", "W", "e2e_speed", "e2e_delay"] + MC_COLS, E2E_UNITS,
                 _e2e_rows(cfg, pts, mc, seed, opts["samples"]))


def _chlambda(cfg, opts, mc, seed):
    M, W = opts["M"], cfg.channel.W
    pts = (((pp, float(lp)), M, W, InterfererSpec("poisson_field", mu=float(lp), p_prime=pp))
           for pp in opts["p_prime"] for lp in opts["lambda_prime"])
    return Table("chlambda", ["p_prime", "lambda_prime", "e2e_speed", "e2e_delay"] + MC_COLS,
                 dict(E2E_UNITS, lambda_prime="1/m^2"), _e2e_rows(cfg, pts, mc, seed, opts["samples"]))


def _ppl(cfg, opts, mc, seed):
    M, W, nu = opts["M"], cfg.channel.W, opts["nu"]
    pr = cfg.poisson_route()
    pts = []
    for pp in opts["p_prime"]:
        for mu in opts["nu_lambda_prime"]:
            mu = float(mu)
            spec = InterfererSpec("poisson_line", nu=nu, lambda_prime=mu / nu, p_prime=pp)
            pts.append(((pp, mu, nu, mu / nu), M, W, spec))
    rows = _e2e_rows(cfg, pts, mc, seed, opts["samples"])
    for row, (lead, _, _, _) in zip(rows, pts):
        field = InterfererSpec("poisson_field", mu=lead[1], p_prime=lead[0])
        row.insert(6, end_to_end_speed(M, pr, W, field))
    return Table("ppl", ["p_prime", "nu_lambda_prime", "nu", "lambda_prime", "e2e_speed", "e2e_delay",
                         "field_e2e_speed"] + MC_COLS,
                 dict(E2E_UNITS, nu_lambda_prime="1/m^2", nu="1/m", lambda_prime="1/m", field_e2e_speed="m/slot"),
                 rows)


def _grw(cfg, opts, mc, seed):
    pr = cfg.poisson_route()
    spec = cfg.interferer_spec()
    pts = [(W, d) for W in opts["W"] for d in opts["delta"]]
    subs = _streams(seed, len(pts)) if mc else [None] * len(pts)
    rows = []
    for (W, d), ss in zip(pts, subs):
        lc = LatticeRouteConfig(pr, d)
        delay = lattice_mean_local_delay(lc, W, spec)
        fast = 0.0 if math.isinf(delay) else 1.0 / ((pr.lam + 1.0 / d) * delay)
        lam_norm = 0.0 if math.isinf(delay) else 1.0 / (pr.lam * delay)
        est = simulate_lattice_local_delay(lc, W, spec, opts["samples"], cfg.window(), ss) if mc else None
        rows.append([W, d, fast, lam_norm, delay] + _mc_cells(est))
    return Table("grw", ["W", "delta", "lattice_speed", "lattice_speed_lambda_norm", "lattice_delay"] + MC_COLS,
                 {"W": "power", "delta": "m", "lattice_speed": "m/slot", "lattice_speed_lambda_norm": "m/slot",
                  "lattice_delay": "slot", "mc_mean": "slot"}, rows)


FIGURES = {
    "speed1": _speed1,
    "varM": _varM,
    "varMW": _varMW,
    "varWM": _varWM,
    "chlambda": _chlambda,
    "ppl": _ppl,
    "grw": _grw,
}


def _coerce_option(name, value, default):
    """Match the shape (list or scalar) and type of the default option value."""
    values = list(value) if isinstance(value, (list, tuple, np.ndarray)) else [value]
    if isinstance(default, list):
        return [float(v) for v in values]
    if len(values) != 1:
        raise TypeError(f"option {name} takes a single value")
    return type(default)(values[0])


def build_figure(name: str, cfg: RunConfig, mc: bool = False, seed=0, overrides: dict | None = None) -> Table:
    """Table for figure ``name``; ``overrides`` replaces entries of its default grid options."""
    if name not in FIGURES:
        raise KeyError(name)
    opts = dict(FIGURE_DEFAULTS[name])
    for k, v in (overrides or {}).items():
        if k not in opts:
            raise KeyError(f"{name} has no option {k!r}")
        opts[k] = _coerce_option(k, v, opts[k])
    return FIGURES[name](cfg, opts, mc, seed)
