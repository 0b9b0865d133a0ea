"""Closed-form and quadrature performance of NN relaying on a Poisson route.

The route is a Poisson process of intensity ``lam`` on a line, every node uses
Aloha with probability ``p`` and packets go to the nearest node on the right.
Most quantities reduce to integrals of

    exp(-lam r) * E(r) * E'(r) * B(r),   E(r) = exp(lam p r D1(p)),

over the hop length r: E is the mean inverse interference factor of the other
route nodes, E' the same for an external interferer field and B(r) =
exp(T W (A r)^beta) the inverse noise factor.  Products of these are evaluated
in log space so that astronomically large delays overflow cleanly to ``inf``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable

import numpy as np

from .numerics import (
    DEFAULT_TOL,
    Tolerance,
    find_root,
    inner_integrals,
    integrate_finite,
    integrate_semi_infinite,
    maximize_unimodal,
)
from .sinr import (
    ChannelConfig,
    MacConfig,
    _log_inv_h,
    log_delay_factor_poisson_field,
    log_delay_factor_poisson_line,
)

log = logging.getLogger(__name__)

__all__ = [
    "PoissonRouteConfig",
    "LatticeRouteConfig",
    "InterfererSpec",
    "ShapeConstants",
    "shape_constants",
    "d1",
    "capture_nn",
    "capture_nr",
    "mean_local_delay_nn",
    "critical_p",
    "long_distance_speed",
    "optimal_p_for_speed",
    "density_of_progress",
    "density_argmax",
    "end_to_end_delay",
    "end_to_end_speed",
    "capture_nn_noise",
    "mean_local_delay_noise_flag",
    "end_to_end_delay_noise",
    "lattice_terms",
    "lattice_mean_local_delay",
    "lattice_speed",
    "optimal_delta",
]

NONE, POISSON_FIELD, POISSON_LINE = "none", "poisson_field", "poisson_line"


@dataclass(frozen=True)
class PoissonRouteConfig:
    lam: float = 0.01
    mac: MacConfig = field(default_factory=MacConfig)
    ch: ChannelConfig = field(default_factory=ChannelConfig)

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("route intensity lam must be > 0")

    def with_p(self, p: float) -> "PoissonRouteConfig":
        return replace(self, mac=replace(self.mac, p=p))


@dataclass(frozen=True)
class LatticeRouteConfig:
    base: PoissonRouteConfig = field(default_factory=PoissonRouteConfig)
    delta: float = 200.0

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("relay spacing delta must be > 0")


@dataclass(frozen=True)
class InterfererSpec:
    """External interferers: none, a planar Poisson field (mu) or Poisson lines (nu, lambda_prime)."""

    kind: str = NONE
    mu: float = 0.0
    nu: float = 0.0
    lambda_prime: float = 0.0
    p_prime: float = 0.0

    def __post_init__(self):
        if self.kind not in (NONE, POISSON_FIELD, POISSON_LINE):
            raise ValueError(f"unknown interferer kind {self.kind!r}")
        if min(self.mu, self.nu, self.lambda_prime) < 0:
            raise ValueError("interferer intensities must be >= 0")
        if not 0.0 <= self.p_prime < 1.0:
            raise ValueError("p_prime must lie in [0, 1)")

    @property
    def intensity(self) -> float:
        """Planar node intensity (nodes / m^2)."""
        if self.kind == POISSON_FIELD:
            return self.mu
        if self.kind == POISSON_LINE:
            return self.nu * self.lambda_prime
        return 0.0

    @property
    def active(self) -> bool:
        return self.intensity > 0 and self.p_prime > 0

    def log_factor(self, r, ch: ChannelConfig):
        """log E'(r), vectorized in r."""
        r = np.asarray(r, dtype=float)
        if not self.active:
            return np.zeros_like(r)
        if self.kind == POISSON_FIELD:
            return log_delay_factor_poisson_field(r, self.mu, self.p_prime, ch)
        return log_delay_factor_poisson_line(r, self.nu, self.lambda_prime, self.p_prime, ch)


NO_INTERFERERS = InterfererSpec()


def _c_tail(a: float, b: float) -> float:
    """C(a, b) = int_a^inf du / (u^b + 1)."""
    return integrate_semi_infinite(lambda u: 1.0 / (u ** b + 1.0), a)


def c_closed(b: float) -> float:
    """C(b) = C(0, b) = pi / (b sin(pi / b))."""
    return math.pi / (b * math.sin(math.pi / b))


@lru_cache(maxsize=4096)
def _d1_cached(p: float, T: float, beta: float) -> float:
    if p >= 1.0:
        return math.inf
    a = T ** (-1.0 / beta)

    def g(u):
        return 1.0 / (u ** beta + 1.0 - p)

    width = (1.0 - p) ** (1.0 / beta)  # the integrand near 0 has this width
    return T ** (1.0 / beta) * (integrate_semi_infinite(g, a)
                                + integrate_semi_infinite(g, 0.0, scale=width))


def d1(p: float, ch: ChannelConfig) -> float:
    """D1(p) = T^(1/beta) (int_{T^-1/beta}^inf + int_0^inf) du / (u^beta + 1 - p)."""
    return _d1_cached(float(p), float(ch.T), float(ch.beta))


@dataclass(frozen=True)
class ShapeConstants:
    T: float
    beta: float
    C_beta: float
    C1: float
    C2: float

    @staticmethod
    def C(a: float, b: float) -> float:
        return _c_tail(a, b)

    def D1(self, p: float) -> float:
        return _d1_cached(float(p), self.T, self.beta)


@lru_cache(maxsize=256)
def _shape_constants(T: float, beta: float) -> ShapeConstants:
    cb = c_closed(beta)
    t = T ** (1.0 / beta)
    c1 = t * (_c_tail(1.0 / t, beta) + cb)
    c2 = 2.0 * t * cb
    return ShapeConstants(T=T, beta=beta, C_beta=cb, C1=c1, C2=c2)


def shape_constants(ch: ChannelConfig) -> ShapeConstants:
    if not ch.beta > 1:
        raise ValueError("beta must exceed 1")
    return _shape_constants(float(ch.T), float(ch.beta))


def capture_nn(cfg: PoissonRouteConfig) -> float:
    """P_NN(p) = (1 - p) / (1 + p C1)."""
    p = cfg.mac.p
    return (1.0 - p) / (1.0 + p * shape_constants(cfg.ch).C1)


def capture_nr(cfg: PoissonRouteConfig) -> float:
    """P_NR(p) = (1 - p) / (1 + p (C2 - 1))."""
    p = cfg.mac.p
    return (1.0 - p) / (1.0 + p * (shape_constants(cfg.ch).C2 - 1.0))


def mean_local_delay_nn(cfg: PoissonRouteConfig) -> float:
    """1 / (p (1-p) (1 - p D1(p))) while p D1(p) < 1, else inf."""
    p = cfg.mac.p
    if p <= 0.0 or p >= 1.0:
        return math.inf
    margin = 1.0 - p * d1(p, cfg.ch)
    if margin <= 0:
        return math.inf
    return 1.0 / (p * (1.0 - p) * margin)


def critical_p(ch: ChannelConfig, tol: Tolerance = DEFAULT_TOL) -> float:
    """Root of p D1(p) = 1 in (0, 1).

    p D1(p) increases strictly from 0 to inf on (0, 1), so the root exists and
    is unique.
    """
    def excess(p):
        return p * d1(p, ch) - 1.0

    lo, hi = 1e-12, 0.5
    while excess(hi) < 0:
        lo, hi = hi, 0.5 * (1.0 + hi)
    return find_root(excess, (lo, hi), Tolerance(rel=tol.rel, abs=max(tol.abs, 1e-14)))


def long_distance_speed(cfg: PoissonRouteConfig) -> float:
    """v = p (1-p) (1 - p D1(p)) / lam, zero past the critical access probability."""
    p = cfg.mac.p
    if p <= 0.0 or p >= 1.0:
        return 0.0
    margin = 1.0 - p * d1(p, cfg.ch)
    if margin <= 0:
        return 0.0
    return p * (1.0 - p) * margin / cfg.lam


def optimal_p_for_speed(cfg: PoissonRouteConfig, tol: Tolerance = Tolerance(abs=1e-9),
                        trace: list | None = None) -> tuple[float, float]:
    pc = critical_p(cfg.ch)
    return maximize_unimodal(lambda p: long_distance_speed(cfg.with_p(p)), (0.0, pc), tol, trace)


def density_of_progress(cfg: PoissonRouteConfig) -> float:
    """d_NN(p) = p (1-p) / (1 + p C1)^2."""
    p = cfg.mac.p
    return p * (1.0 - p) / (1.0 + p * shape_constants(cfg.ch).C1) ** 2


def density_argmax(ch: ChannelConfig, tol: Tolerance = Tolerance(abs=1e-10),
                   trace: list | None = None) -> dict:
    """Maximizer of the density of progress.

    ``numeric`` is the golden-section maximizer; ``stationary`` is the root
    1/(2 + C1) of the derivative; ``cubic_formula`` is the alternate closed
    form (C1 + 1 - sqrt(C1^2 - 1)) / (2 C1), which is not a stationary point
    of d_NN and is reported for comparison only.
    """
    c1 = shape_constants(ch).C1
    base = PoissonRouteConfig(ch=ch)
    x, fx = maximize_unimodal(lambda p: density_of_progress(base.with_p(p)), (0.0, 1.0), tol, trace)
    return {
        "numeric": x,
        "max_density": fx,
        "stationary": 1.0 / (2.0 + c1),
        "cubic_formula": (c1 + 1.0 - math.sqrt(c1 * c1 - 1.0)) / (2.0 * c1) if c1 >= 1 else math.nan,
    }


# ---------------------------------------------------------------------------
# Finite segment [0, M) with fixed end nodes
# ---------------------------------------------------------------------------

def _log_kernel(cfg: PoissonRouteConfig, W: float, interferers: InterfererSpec) -> Callable:
    """r -> log(E(r) E'(r) B(r)) - lam r, vectorized."""
    ch = cfg.ch
    growth = cfg.lam * cfg.mac.p * d1(cfg.mac.p, ch) - cfg.lam

    def f(r):
        r = np.asarray(r, dtype=float)
        out = growth * r + interferers.log_factor(r, ch)
        if W > 0:
            out = out + ch.T * W * (ch.A * r) ** ch.beta
        return out

    return f


def _exp(x):
    with np.errstate(over="ignore"):
        return np.exp(x)


def _segment_delay(M: float, cfg: PoissonRouteConfig, W: float, interferers: InterfererSpec,
                   tol: Tolerance) -> float:
    p, lam, ch = cfg.mac.p, cfg.lam, cfg.ch
    if not M > 0:
        raise ValueError("distance M must be > 0")
    if p <= 0.0 or p >= 1.0:
        return math.inf
    # Past the critical access probability the delay stays finite: the fixed
    # destination bounds every hop.
    logk = _log_kernel(cfg, W, interferers)

    direct = float(_exp(logk(np.array([M]))[0]))  # term (a)

    def relay_pair(r):
        # int_0^{M-r} G_0(s, r) G_M(s, r) ds for each hop length r
        r = np.asarray(r, dtype=float)

        def g(s, t):
            # s: hop length r (outer), t: relay position in [0, M - r]
            return _exp(_log_inv_h(t + s, s, p, ch) + _log_inv_h(M - t - s, s, p, ch))

        return inner_integrals(g, r, (0.0, lambda rr: M - rr), tol)

    def integrand(r):
        r = np.asarray(r, dtype=float)
        k = _exp(logk(r))
        safe = np.maximum(r, 1e-300)
        from_origin = lam * _exp(_log_inv_h(M - r, safe, p, ch))        # term (b)
        into_dest = lam * _exp(_log_inv_h(M, safe, p, ch))              # term (d)
        relayed = lam * lam * relay_pair(safe)                           # term (c)
        with np.errstate(invalid="ignore"):
            out = k * (from_origin + into_dest + relayed)
        return np.where(k == 0, 0.0, out)

    body = integrate_finite(integrand, 0.0, M, tol)
    return (direct + body) / (p * (1.0 - p))


def end_to_end_delay(M: float, cfg: PoissonRouteConfig, tol: Tolerance = DEFAULT_TOL) -> float:
    """Mean slots for a packet to travel from a node at 0 to a node at M (no noise)."""
    return _segment_delay(M, cfg, 0.0, NO_INTERFERERS, tol)


def end_to_end_delay_noise(M: float, cfg: PoissonRouteConfig, W: float | None = None,
                           interferers: InterfererSpec = NO_INTERFERERS,
                           tol: Tolerance = DEFAULT_TOL) -> float:
    """End-to-end delay with every hop kernel multiplied by E'(r) B(r).

    ``W`` defaults to the channel's ambient noise.
    """
    W = cfg.ch.W if W is None else W
    return _segment_delay(M, cfg, W, interferers, tol)


def end_to_end_speed(M: float, cfg: PoissonRouteConfig, W: float | None = None,
                     interferers: InterfererSpec = NO_INTERFERERS, divide_by_lambda: bool = False,
                     tol: Tolerance = DEFAULT_TOL) -> float:
    """Average progression speed over [0, M) in m/slot, M / delay.

    ``divide_by_lambda=True`` divides additionally by lam (M / (lam * delay)).
    """
    delay = end_to_end_delay_noise(M, cfg, W, interferers, tol)
    if math.isinf(delay):
        return 0.0
    return M / (cfg.lam * delay) if divide_by_lambda else M / delay


# ---------------------------------------------------------------------------
# Noise
# ---------------------------------------------------------------------------

def capture_nn_noise(cfg: PoissonRouteConfig, noise_laplace: Callable | None = None,
                     W: float | None = None, tol: Tolerance = DEFAULT_TOL) -> float:
    """NN capture probability under a noise field.

    lam (1-p) int_0^inf exp(-lam r (1 + p C1)) L_{W(r)}(T (A r)^beta) dr, where
    ``noise_laplace(r, theta)`` is the Laplace transform of the noise at the
    receiver.  Without ``noise_laplace`` a constant noise ``W`` (default: the
    channel's) is used, L(theta) = exp(-theta W).
    """
    p, lam, ch = cfg.mac.p, cfg.lam, cfg.ch
    c1 = shape_constants(ch).C1
    if noise_laplace is None:
        w = ch.W if W is None else W
        if w == 0:
            return capture_nn(cfg)

        def noise_laplace(r, theta):
            return np.exp(-theta * w)

    rate = lam * (1.0 + p * c1)

    def f(r):
        theta = ch.T * (ch.A * r) ** ch.beta
        return np.exp(-rate * r) * noise_laplace(r, theta)

    return lam * (1.0 - p) * integrate_semi_infinite(f, 0.0, tol, scale=1.0 / rate)


def mean_local_delay_noise_flag(cfg: PoissonRouteConfig, W: float | None = None,
                                interferers: InterfererSpec = NO_INTERFERERS) -> float:
    """Mean local delay on the pure Poisson route under noise.

    Any noise that exceeds some w > 0 with positive probability (a constant
    W > 0, or an active interferer field) makes the mean infinite: the hop
    length is unbounded and the noise penalty grows like exp(c r^beta).
    """
    W = cfg.ch.W if W is None else W
    if W > 0 or interferers.active:
        log.info("mean local delay is infinite: unbounded Poisson hops under noise (W=%g, field=%s)",
                 W, interferers.kind)
        return math.inf
    return mean_local_delay_nn(cfg)


# ---------------------------------------------------------------------------
# Poisson route plus relay lattice {n delta + U}
# ---------------------------------------------------------------------------

_GRID_EXPLICIT = 32


def _grid_log_inv(z, r, delta, p, ch, n_terms=_GRID_EXPLICIT, include_zero=False):
    """sum over relays n delta + z (n != 0 unless include_zero) of log(1/h(., r)).

    ``z`` and ``r`` are broadcastable arrays with |z| <= delta.  The first
    ``n_terms`` relays on each side are summed exactly; the rest use the
    far-field form p T r^beta s^-beta with a midpoint integral for the tail.
    """
    z = np.asarray(z, dtype=float)
    r = np.asarray(r, dtype=float)
    n = np.arange(1, n_terms + 1, dtype=float)
    zz, rr = z[..., None], r[..., None]
    total = (_log_inv_h(n * delta + zz, rr, p, ch) + _log_inv_h(n * delta - zz, rr, p, ch)).sum(axis=-1)
    b = ch.beta
    edge = (n_terms + 0.5) * delta
    tail = p * ch.T * r ** b * ((edge + z) ** (1 - b) + (edge - z) ** (1 - b)) / (delta * (b - 1))
    total = total + tail
    if include_zero:
        total = total + _log_inv_h(z, r, p, ch)
    return total


def lattice_terms(cfg: LatticeRouteConfig, W: float | None = None,
                  interferers: InterfererSpec = NO_INTERFERERS, uncorrected: bool = False,
                  tol: Tolerance = Tolerance(rel=1e-8, abs=1e-13)) -> dict:
    """The four conditional parts of the lattice-route mean local delay.

    Returns a mapping with, for each part, ``mass`` (probability of that case
    given the typical node's type) and ``delay`` (its contribution to the
    conditional mean), plus the type weights ``w_poisson`` and ``w_grid``.

    * ``poisson_to_grid``: Poisson node, next node is the relay at z ~ U(0, delta)
    * ``poisson_to_poisson``: Poisson node, Poisson neighbour before the relay
    * ``grid_to_poisson``: relay node, Poisson neighbour within delta
    * ``grid_to_grid``: relay node, next relay at delta

    Every part carries E(r) E'(r) B(r) of its own hop length r and the inverse
    interference factors of all relays.  ``uncorrected=True`` instead
    skips these corrections term by term (interference factors not
    inverted, E' of the relay offset in the second part, noise only in the last
    part, 1/delta density in the third part).
    """
    base = cfg.base
    p, lam, ch, delta = base.mac.p, base.lam, base.ch, cfg.delta
    W = ch.W if W is None else W
    if p <= 0.0 or p >= 1.0:
        inf = {"mass": 1.0, "delay": math.inf}
        eps = 1.0 / delta
        return {"w_poisson": lam / (lam + eps), "w_grid": eps / (lam + eps),
                "poisson_to_grid": inf, "poisson_to_poisson": inf, "grid_to_poisson": inf,
                "grid_to_grid": inf}
    n_terms = _GRID_EXPLICIT
    pref = 1.0 / (p * (1.0 - p))
    sign = -1.0 if uncorrected else 1.0   # uncorrected form uses exp(+H)
    growth = lam * p * d1(p, ch)

    def log_e(r):
        return growth * r

    def log_eprime(r):
        return interferers.log_factor(r, ch)

    def log_b(r):
        r = np.asarray(r, dtype=float)
        return ch.T * W * (ch.A * r) ** ch.beta if W > 0 else np.zeros_like(r)

    def log_noise(r):
        return np.zeros_like(np.asarray(r, float)) if uncorrected else log_b(r)

    # Poisson node at 0, relay at z: hop z, relays at z + n delta (n != 0).
    def f_pg(z):
        lg = -lam * z + log_e(z) + log_eprime(z) + log_noise(z) + sign * _grid_log_inv(0.0 * z, z, delta, p, ch, n_terms)
        return _exp(lg)

    pg_delay = pref * integrate_finite(f_pg, 0.0, delta, tol) / delta
    pg_mass = integrate_finite(lambda z: np.exp(-lam * z), 0.0, delta, tol) / delta

    # Poisson node at 0, Poisson receiver at r < z: relays at z + n delta for all n.
    # Integrated as int_0^delta dr lam e^{-lam r} K(r) int_r^delta dz (grid factor at offset z - r).
    def grid_inner(r):
        r = np.asarray(r, dtype=float)

        def g(rr, y):
            return _exp(sign * _grid_log_inv(y, rr, delta, p, ch, n_terms, include_zero=True))

        return inner_integrals(g, r, (0.0, lambda rr: delta - rr), tol)

    def f_pp(r):
        r = np.asarray(r, dtype=float)
        lk = -lam * r + log_e(r) + log_noise(r)
        if uncorrected:
            # E' of the relay offset z rather than of the hop r
            def g(rr, y):
                return _exp(sign * _grid_log_inv(y, rr, delta, p, ch, n_terms, include_zero=True)
                            + log_eprime(rr + y))
            inner = inner_integrals(g, np.maximum(r, 1e-300), (0.0, lambda rr: delta - rr), tol)
        else:
            lk = lk + log_eprime(r)
            inner = grid_inner(np.maximum(r, 1e-300))
        return lam * _exp(lk) * inner

    pp_delay = pref * integrate_finite(f_pp, 0.0, delta, tol) / delta
    pp_mass = 1.0 - pg_mass

    # Relay at 0, Poisson receiver at z < delta: relays at n delta (n != 0).
    def f_gp(z):
        lg = -lam * z + log_e(z) + log_eprime(z) + log_noise(z) + sign * _grid_log_inv(-z, z, delta, p, ch, n_terms)
        return lam * _exp(lg)

    gp_density = (1.0 / delta) if uncorrected else 1.0
    gp_delay = pref * gp_density * integrate_finite(f_gp, 0.0, delta, tol)
    gp_mass = 1.0 - math.exp(-lam * delta)

    # Relay at 0, next relay at delta: other relays at m delta, m != 0, 1.
    lg_gg = (-lam * delta + log_e(delta) + float(log_b(delta))
             + (0.0 if uncorrected else float(log_eprime(delta)))
             + sign * (float(_grid_log_inv(0.0, delta, delta, p, ch, n_terms))
                       - float(_log_inv_h(delta, delta, p, ch))))
    gg_delay = pref * float(_exp(lg_gg))
    gg_mass = math.exp(-lam * delta)

    eps = 1.0 / delta
    return {
        "w_poisson": lam / (lam + eps),
        "w_grid": eps / (lam + eps),
        "poisson_to_grid": {"mass": pg_mass, "delay": float(pg_delay)},
        "poisson_to_poisson": {"mass": pp_mass, "delay": float(pp_delay)},
        "grid_to_poisson": {"mass": gp_mass, "delay": float(gp_delay)},
        "grid_to_grid": {"mass": gg_mass, "delay": gg_delay},
    }


def lattice_mean_local_delay(cfg: LatticeRouteConfig, W: float | None = None,
                             interferers: InterfererSpec = NO_INTERFERERS, uncorrected: bool = False,
                             tol: Tolerance = Tolerance(rel=1e-8, abs=1e-13)) -> float:
    """Mean local delay at the typical node of the Poisson route plus relay lattice."""
    t = lattice_terms(cfg, W, interferers, uncorrected, tol)
    poisson = t["poisson_to_grid"]["delay"] + t["poisson_to_poisson"]["delay"]
    grid = t["grid_to_poisson"]["delay"] + t["grid_to_grid"]["delay"]
    return t["w_poisson"] * poisson + t["w_grid"] * grid


def lattice_speed(cfg: LatticeRouteConfig, W: float | None = None,
                  interferers: InterfererSpec = NO_INTERFERERS, lambda_normalization: bool = False,
                  uncorrected: bool = False) -> float:
    """Long-distance speed on the lattice-equipped route (m/slot).

    Default: mean hop 1/(lam + 1/delta) over the mean local delay.
    ``lambda_normalization=True`` uses 1/(lam * delay) instead.
    """
    delay = lattice_mean_local_delay(cfg, W, interferers, uncorrected)
    if math.isinf(delay):
        return 0.0
    rate = cfg.base.lam if lambda_normalization else cfg.base.lam + 1.0 / cfg.delta
    return 1.0 / (rate * delay)


def optimal_delta(cfg: LatticeRouteConfig, W: float | None = None,
                  interferers: InterfererSpec = NO_INTERFERERS, bracket=(10.0, 2000.0),
                  tol: Tolerance = Tolerance(abs=0.5), trace: list | None = None) -> tuple[float, float]:
    """Relay spacing maximizing ``lattice_speed`` by golden-section search."""
    return maximize_unimodal(lambda d: lattice_speed(replace(cfg, delta=d), W, interferers),
                             bracket, tol, trace)
