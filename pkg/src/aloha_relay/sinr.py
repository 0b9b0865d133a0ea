"""SINR capture calculus for fixed node configurations under Rayleigh fading.

Conventions: distances in meters, delays in slots, unit transmit power.  A
delay that cannot be finite is returned as ``math.inf``.

For an interferer at distance ``s`` from the receiver of a hop of length
``r`` the *interference factor* is

    h(s, r) = 1 - p / ((s/r)^beta / T + 1),

the probability that this node does not break the hop (it is silent, or it
transmits and the signal still wins).  The *noise factor* w(r) =
exp(-T W (A r)^beta) plays the same role for ambient noise.  Expectations over
a Poisson field use  E[prod h] = exp(-mu int (1-h))  and
E[prod 1/h] = exp(mu int (1/h - 1)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .numerics import DEFAULT_TOL, Tolerance, inner_integrals, integrate_finite, integrate_semi_infinite

__all__ = [
    "ChannelConfig",
    "MacConfig",
    "as_route",
    "as_points",
    "interference_factor",
    "noise_factor",
    "capture_prob_fixed",
    "local_delay_fixed",
    "route_delay_fixed",
    "route_speed_fixed",
    "expected_capture_poisson_field",
    "log_delay_factor_poisson_field",
    "expected_delay_factor_poisson_field",
    "log_delay_factor_poisson_line",
    "expected_delay_factor_poisson_line",
]


@dataclass(frozen=True)
class ChannelConfig:
    """Path loss l(r) = (A r)^beta, capture threshold T and ambient noise W."""

    A: float = 1.0
    beta: float = 4.0
    T: float = 10.0
    W: float = 0.0

    def __post_init__(self):
        if not self.A > 0:
            raise ValueError("A must be > 0")
        if not self.beta > 2:
            raise ValueError("beta must be > 2 for planar interference to be finite")
        if not self.T > 0:
            raise ValueError("T must be > 0")
        if not self.W >= 0:
            raise ValueError("W must be >= 0")


@dataclass(frozen=True)
class MacConfig:
    """Aloha medium access probabilities of route nodes (p) and interferers (p_prime)."""

    p: float = 0.15
    p_prime: float = 0.0

    def __post_init__(self):
        for name in ("p", "p_prime"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")


def as_route(positions) -> np.ndarray:
    """Validate a 1-D route: finite, strictly increasing coordinates."""
    x = np.asarray(positions, dtype=float)
    if x.ndim != 1 or not np.isfinite(x).all():
        raise ValueError("route positions must be a finite 1-D sequence")
    if x.size > 1 and not (np.diff(x) > 0).all():
        raise ValueError("route positions must be strictly increasing")
    return x


def as_points(points) -> np.ndarray:
    """Planar points as an (n, 2) array; 1-D input is lifted onto the x axis."""
    a = np.asarray(points, dtype=float)
    if a.size == 0:
        return np.zeros((0, 2))
    if a.ndim == 1:
        return np.column_stack([a, np.zeros_like(a)])
    if a.ndim != 2 or a.shape[1] != 2:
        raise ValueError("planar points must have shape (n, 2)")
    return a


def interference_factor(s, r, p: float, ch: ChannelConfig):
    """h(s, r); ``s`` may be a signed coordinate, only |s| matters."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("hop length r must be > 0")
    ratio = np.abs(np.asarray(s, dtype=float)) / r
    out = 1.0 - p / (ratio ** ch.beta / ch.T + 1.0)
    return float(out) if np.ndim(out) == 0 else out


def _log_inv_h(s, r, p, ch):
    """log(1/h(s, r)) = -log1p(-p / ((s/r)^beta/T + 1)), vectorized."""
    ratio = np.abs(s) / r
    return -np.log1p(-p / (ratio ** ch.beta / ch.T + 1.0))


def noise_factor(s, ch: ChannelConfig):
    """w(s) = exp(-T W (A s)^beta)."""
    out = np.exp(-ch.T * ch.W * (ch.A * np.abs(np.asarray(s, dtype=float))) ** ch.beta)
    return float(out) if np.ndim(out) == 0 else out


def capture_prob_fixed(tx, rx, interferers, mac: MacConfig, ch: ChannelConfig) -> float:
    """Single-slot success probability p(1-p) w(|x-y|) prod_z h(|z-y|, |x-y|).

    Interferers use the route access probability ``mac.p``.
    """
    tx = np.asarray(tx, dtype=float).reshape(-1)
    rx = np.asarray(rx, dtype=float).reshape(-1)
    tx = np.pad(tx, (0, 2 - tx.size)) if tx.size < 2 else tx
    rx = np.pad(rx, (0, 2 - rx.size)) if rx.size < 2 else rx
    r = float(np.hypot(*(tx - rx)))
    if r == 0:
        raise ValueError("transmitter and receiver coincide")
    p = mac.p
    base = p * (1.0 - p) * noise_factor(r, ch)
    pts = as_points(interferers)
    if pts.shape[0] == 0 or base == 0:
        return float(base)
    s = np.hypot(pts[:, 0] - rx[0], pts[:, 1] - rx[1])
    return float(base * np.prod(interference_factor(s, r, p, ch)))


def local_delay_fixed(tx, rx, interferers, mac: MacConfig, ch: ChannelConfig) -> float:
    """Mean number of slots 1/Pi for the hop; ``inf`` when Pi = 0."""
    pi = capture_prob_fixed(tx, rx, interferers, mac, ch)
    return math.inf if pi <= 0 else 1.0 / pi


def route_delay_fixed(route, interferers, mac: MacConfig, ch: ChannelConfig) -> float:
    """Sum of hop delays; for hop k every other route node interferes too."""
    nodes = as_points(route)
    if nodes.shape[0] < 2:
        raise ValueError("a route needs at least two nodes")
    field = as_points(interferers)
    total = 0.0
    for k in range(nodes.shape[0] - 1):
        others = np.delete(nodes, [k, k + 1], axis=0)
        total += local_delay_fixed(nodes[k], nodes[k + 1], np.vstack([field, others]), mac, ch)
        if math.isinf(total):
            return math.inf
    return total


def route_speed_fixed(route, interferers, mac: MacConfig, ch: ChannelConfig) -> float:
    """End-to-end displacement over route delay (m/slot); 0 for an infinite delay."""
    nodes = as_points(route)
    delay = route_delay_fixed(nodes, interferers, mac, ch)
    if math.isinf(delay):
        return 0.0
    return float(np.hypot(*(nodes[-1] - nodes[0]))) / delay


def _radial_moment(beta: float) -> float:
    # int_0^inf u / (u^beta + 1) du
    return (math.pi / beta) / math.sin(2.0 * math.pi / beta)


def expected_capture_poisson_field(r: float, mu: float, mac: MacConfig, ch: ChannelConfig) -> float:
    """Mean of the single-slot success probability over a planar Poisson field.

    p(1-p) w(r) exp(-mu int_{R^2} (1 - h_{p'}(|z|, r)) dz), with the field's
    access probability p' = mac.p_prime inside h.
    """
    if not r > 0:
        raise ValueError("hop length must be > 0")
    if ch.beta <= 2:
        raise ValueError("planar interference integral diverges for beta <= 2")
    p, q = mac.p, mac.p_prime
    # int (1 - h_q) dz = 2 pi q r^2 T^(2/beta) int u/(u^beta + 1) du
    mass = 2.0 * math.pi * q * r * r * ch.T ** (2.0 / ch.beta) * _radial_moment(ch.beta)
    return p * (1.0 - p) * noise_factor(r, ch) * math.exp(-mu * mass)


def log_delay_factor_poisson_field(r, mu: float, p_prime: float, ch: ChannelConfig):
    """log E'_P(r) = mu * 2 pi^2 p' T^(2/beta) r^2 / (beta (1-p')^(1-2/beta) sin(2 pi/beta))."""
    if not 0.0 <= p_prime < 1.0:
        raise ValueError("interferer access probability must lie in [0, 1)")
    b = ch.beta
    coef = (2.0 * math.pi ** 2 * p_prime * ch.T ** (2.0 / b)
            / (b * (1.0 - p_prime) ** (1.0 - 2.0 / b) * math.sin(2.0 * math.pi / b)))
    return mu * coef * np.square(np.asarray(r, dtype=float))


def expected_delay_factor_poisson_field(r: float, mu: float, mac: MacConfig, ch: ChannelConfig) -> float:
    """E'_P(r) = E[prod_{z in Psi} 1/h_{p'}(|z|, r)] for a Poisson field of intensity mu."""
    if r < 0:
        raise ValueError("r must be >= 0")
    with np.errstate(over="ignore"):
        return float(np.exp(log_delay_factor_poisson_field(r, mu, mac.p_prime, ch)))


# Fixed Gauss-Legendre rule for the line integral J(s) = int_0^inf g(sqrt(s^2+t^2)) dt,
# mapped with t = c x/(1-x); accuracy is checked against nested adaptive quadrature.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(160)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


def _line_inverse_excess(s, q, ch):
    """J(s) = int_0^inf q / ((s^2+t^2)^(beta/2)/T + 1 - q) dt for an array of s.

    Distances are normalized by the hop length.
    """
    s = np.asarray(s, dtype=float)
    c = np.maximum(np.abs(s), (ch.T * (1.0 - q)) ** (1.0 / ch.beta))
    x = _GL_X[None, :]
    t = c[..., None] * x / (1.0 - x)
    jac = c[..., None] / (1.0 - x) ** 2
    d2 = s[..., None] ** 2 + t ** 2
    vals = q / (d2 ** (ch.beta / 2.0) / ch.T + 1.0 - q) * jac
    return vals @ _GL_W


_LINE_S_MAX = 1e7


@lru_cache(maxsize=64)
def _line_profile(q: float, beta: float, T: float):
    """Outer integration mesh in normalized s and J(s) on it (composite GL on panels)."""
    ch = ChannelConfig(beta=beta, T=T)
    edges = np.concatenate([[0.0], np.geomspace(1e-3, _LINE_S_MAX, 281)])
    gx, gw = np.polynomial.legendre.leggauss(12)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    s = (mid[:, None] + half[:, None] * gx[None, :]).ravel()
    w = (half[:, None] * gw[None, :]).ravel()
    return s, w, _line_inverse_excess(s, q, ch)


def _line_far_tail(q: float, ch: ChannelConfig, s_max: float = _LINE_S_MAX) -> float:
    """int_S^inf J(s) ds beyond the tabulated mesh, from J(s) ~ q T K s^(1-beta)."""
    b = ch.beta
    k = math.sqrt(math.pi) * math.gamma((b - 1.0) / 2.0) / (2.0 * math.gamma(b / 2.0))
    return q * ch.T * k * s_max ** (2.0 - b) / (b - 2.0)


def log_delay_factor_poisson_line(r, nu: float, lambda_prime: float, p_prime: float, ch: ChannelConfig,
                                  exact: bool = False, tol: Tolerance = DEFAULT_TOL):
    """log E'_PL(r) for interferers on a Poisson line process.

    log E'_PL(r) = -2 nu r int_0^inf (1 - exp(2 lambda' r J(s))) ds with J the
    normalized line integral of 1/h_{p'} - 1.  The default path uses a cached
    composite Gauss-Legendre mesh (vectorized in r); ``exact=True`` evaluates
    the nested integral adaptively for a scalar r.
    """
    if not 0.0 <= p_prime < 1.0:
        raise ValueError("interferer access probability must lie in [0, 1)")
    if nu < 0 or lambda_prime < 0:
        raise ValueError("line intensities must be >= 0")
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0):
        raise ValueError("r must be >= 0")
    if nu == 0 or lambda_prime == 0 or p_prime == 0:
        return np.zeros_like(r_arr) if r_arr.ndim else 0.0
    if exact:
        if r_arr.ndim:
            return np.array([log_delay_factor_poisson_line(x, nu, lambda_prime, p_prime, ch, True, tol)
                             for x in r_arr])
        r = float(r_arr)
        if r == 0:
            return 0.0
        q, b, T = p_prime, ch.beta, ch.T

        core = (T * (1.0 - q)) ** (1.0 / b)

        def inner(s, u):
            # t = c u with c the larger of s and the core width
            c = np.maximum(s, core)
            t = c * u
            return c * q / ((s * s + t * t) ** (b / 2.0) / T + 1.0 - q)

        def outer_integrand(s_arr):
            J = inner_integrals(inner, s_arr, (0.0, math.inf), tol)
            with np.errstate(over="ignore"):
                return np.expm1(2.0 * lambda_prime * r * J)

        # the outer integrand decays like s^(1-beta); on [1, inf) integrate in
        # y = log s, where it decays like exp(-(beta-2) y)
        near = integrate_finite(outer_integrand, 0.0, 1.0, tol)
        y_max = min(60.0 / (b - 2.0), 300.0)
        with np.errstate(over="ignore"):
            far = integrate_finite(lambda y: outer_integrand(np.exp(y)) * np.exp(y), 0.0, y_max, tol)
        far += 2.0 * lambda_prime * r * _line_far_tail(q, ch, math.exp(y_max))
        return 2.0 * nu * r * (near + far)
    s, w, J = _line_profile(float(p_prime), float(ch.beta), float(ch.T))
    flat = r_arr.reshape(-1)
    with np.errstate(over="ignore"):
        vals = np.expm1(2.0 * lambda_prime * flat[:, None] * J[None, :]) @ w
    vals = vals + 2.0 * lambda_prime * flat * _line_far_tail(p_prime, ch)
    out = 2.0 * nu * flat * vals
    return out.reshape(r_arr.shape) if r_arr.ndim else float(out[0])


def expected_delay_factor_poisson_line(r: float, nu: float, lambda_prime: float, mac: MacConfig,
                                       ch: ChannelConfig, exact: bool = False) -> float:
    """E'_PL(r) = E[prod 1/h_{p'}] over a Poisson-line (Cox) field of interferers."""
    with np.errstate(over="ignore"):
        return float(np.exp(log_delay_factor_poisson_line(r, nu, lambda_prime, mac.p_prime, ch, exact)))
