"""Analytic-versus-simulation comparison suites.

Each suite returns a list of ``Check`` records; a check passes when the
simulator estimate lies within ``k`` standard errors of the analytic value (or
when a qualitative flag has the expected value).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .analytic import (
    InterfererSpec,
    LatticeRouteConfig,
    PoissonRouteConfig,
    capture_nn,
    capture_nr,
    critical_p,
    end_to_end_delay,
    lattice_mean_local_delay,
    mean_local_delay_nn,
)
from .simulate import (
    estimate_capture_nn,
    estimate_capture_nr,
    estimate_delay_factor,
    estimate_mean_local_delay,
    seed_sequence,
    simulate_end_to_end,
    simulate_lattice_local_delay,
    simulate_slots,
)
from .sinr import ChannelConfig, MacConfig, capture_prob_fixed

__all__ = ["Check", "SUITES", "LEMMA1_CASES", "run_suite"]


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    z: float = math.nan
    analytic: float = math.nan
    estimate: float = math.nan
    stderr: float = math.nan

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.name}: analytic={self.analytic:.8g} mc={self.estimate:.8g} "
                f"stderr={self.stderr:.3g} z={self.z:+.2f}")


def _compare(name, analytic, est, k):
    z = est.z_score(analytic)
    return Check(name, abs(z) <= k, z, analytic, est.mean, est.stderr)


# (label, tx, rx, interferers, W); all with p = 0.15
LEMMA1_CASES = [
    ("no_interferer_W0", (0.0, 0.0), (150.0, 0.0), np.zeros((0, 2)), 0.0),
    ("one_interferer_W1e-11", (0.0, 0.0), (150.0, 0.0), np.array([[260.0, 80.0]]), 1e-11),
    ("five_interferers_W1e-11", (0.0, 0.0), (150.0, 0.0),
     np.array([[-120.0, 0.0], [330.0, 0.0], [150.0, 200.0], [40.0, -90.0], [520.0, 310.0]]), 1e-11),
]


def suite_lemma1(cfg: PoissonRouteConfig, seed, n=None, k=3.0, **_):
    n = n or 1_000_000
    subs = seed_sequence(seed).spawn(len(LEMMA1_CASES))
    out = []
    for (label, tx, rx, pts, W), ss in zip(LEMMA1_CASES, subs):
        ch = ChannelConfig(A=cfg.ch.A, beta=cfg.ch.beta, T=cfg.ch.T, W=W)
        mac = MacConfig(p=cfg.mac.p)
        analytic = capture_prob_fixed(tx, rx, pts, mac, ch)
        out.append(_compare(f"lemma1[{label}]", analytic, simulate_slots(tx, rx, pts, mac, ch, n, ss), k))
    return out


def suite_prop1(cfg: PoissonRouteConfig, seed, n=None, k=3.0, p_values=(0.05, 0.1, 0.3), **_):
    n = n or 100_000
    subs = seed_sequence(seed).spawn(2 * len(p_values))
    out = []
    for i, p in enumerate(p_values):
        c = cfg.with_p(p)
        out.append(_compare(f"capture_nn[p={p}]", capture_nn(c), estimate_capture_nn(c, n=n, seed=subs[2 * i]), k))
        out.append(_compare(f"capture_nr[p={p}]", capture_nr(c),
                            estimate_capture_nr(c, n=n, seed=subs[2 * i + 1]), k))
    grid = np.linspace(0.0, 1.0, 50)
    ok = all(capture_nr(cfg.with_p(p)) >= capture_nn(cfg.with_p(p)) for p in grid)
    out.append(Check("capture_nr>=capture_nn[50-point grid]", ok))
    return out


def suite_prop2(cfg: PoissonRouteConfig, seed, n=None, k=3.0, below=0.5, above=1.2, **_):
    n = n or 100_000
    pc = critical_p(cfg.ch)
    lo, hi = seed_sequence(seed).spawn(2)
    c_lo, c_hi = cfg.with_p(below * pc), cfg.with_p(above * pc)
    est_lo = estimate_mean_local_delay(c_lo, W=0.0, n=n, seed=lo)
    est_hi = estimate_mean_local_delay(c_hi, W=0.0, n=n, seed=hi)
    check_lo = _compare(f"local_delay[p={below}*p_c]", mean_local_delay_nn(c_lo), est_lo, k)
    return [
        Check(check_lo.name, check_lo.passed and not est_lo.diverging, check_lo.z, check_lo.analytic,
              check_lo.estimate, check_lo.stderr),
        Check(f"local_delay_infinite[p={above}*p_c]", math.isinf(mean_local_delay_nn(c_hi))),
        Check(f"divergence_flag[p={above}*p_c]", est_hi.diverging, estimate=est_hi.mean),
    ]


def suite_prop5(cfg: PoissonRouteConfig, seed, n=None, k=3.0, M_values=(100.0, 500.0, 1000.0, 2000.0), **_):
    n = n or 10_000
    subs = seed_sequence(seed).spawn(len(M_values))
    return [_compare(f"e2e_delay[M={M:g}]", end_to_end_delay(M, cfg),
                     simulate_end_to_end(M, cfg, W=0.0, n=n, seed=ss), k)
            for M, ss in zip(M_values, subs)]


def suite_prop9(cfg: PoissonRouteConfig, seed, n=None, k=3.0, r=100.0, p_prime=0.15, mu=1e-4,
                nu=0.01, lambda_prime=0.01, **_):
    n = n or 20_000
    ch = cfg.ch
    specs = [InterfererSpec("poisson_field", mu=mu, p_prime=p_prime),
             InterfererSpec("poisson_line", nu=nu, lambda_prime=lambda_prime, p_prime=p_prime)]
    subs = seed_sequence(seed).spawn(len(specs))
    return [_compare(f"delay_factor[{s.kind},r={r:g}]", math.exp(float(s.log_factor(r, ch))),
                     estimate_delay_factor(r, s, ch, n=n, seed=ss), k)
            for s, ss in zip(specs, subs)]


def suite_prop10(cfg: PoissonRouteConfig, seed, n=None, k=3.0, W=1e-11, deltas=(120.0, 240.0, 480.0), **_):
    n = n or 20_000
    subs = seed_sequence(seed).spawn(len(deltas))
    out = []
    for d, ss in zip(deltas, subs):
        lc = LatticeRouteConfig(cfg, d)
        out.append(_compare(f"lattice_delay[delta={d:g},W={W:g}]", lattice_mean_local_delay(lc, W),
                            simulate_lattice_local_delay(lc, W, n=n, seed=ss), k))
    return out


SUITES = {
    "lemma1": suite_lemma1,
    "prop1": suite_prop1,
    "prop2": suite_prop2,
    "prop5": suite_prop5,
    "prop9": suite_prop9,
    "prop10": suite_prop10,
}


def run_suite(name: str, cfg: PoissonRouteConfig, seed=0, n=None, **kw) -> list:
    if name not in SUITES:
        raise KeyError(name)
    return SUITES[name](cfg, seed, n=n, **kw)
