"""Monte Carlo oracles for the Aloha relaying model.

Two modes are offered.  *Semi-analytic* estimators sample the geometry (route
nodes, relay phase, interferer fields) and average the exact conditional
quantity for that geometry: the capture probability Pi or the mean hop delay
1/Pi.  *Slot* estimators additionally sample Aloha indicators and Rayleigh
fades in every slot and test SINR >= T directly; they validate the
conditional formulas themselves.

Randomness comes from a master ``numpy.random.SeedSequence`` split into one
child per fixed-size chunk of samples, so a given seed reproduces every
estimate bit for bit whatever the number of worker processes.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import repeat
from typing import Callable

import numpy as np

from .analytic import (
    NO_INTERFERERS,
    POISSON_FIELD,
    POISSON_LINE,
    InterfererSpec,
    LatticeRouteConfig,
    PoissonRouteConfig,
)
from .sinr import ChannelConfig, MacConfig, _log_inv_h, as_points

__all__ = [
    "Estimate",
    "DelayEstimate",
    "SimWindow",
    "CHUNK",
    "seed_sequence",
    "sample_poisson_route",
    "sample_poisson_field",
    "sample_poisson_line_field",
    "simulate_slots",
    "simulate_hop_delay_slots",
    "estimate_capture_nn",
    "estimate_capture_nr",
    "estimate_capture_nn_noise",
    "divergence_diagnostic",
    "estimate_mean_local_delay",
    "simulate_end_to_end",
    "simulate_long_distance_speed",
    "simulate_lattice_local_delay",
    "estimate_delay_factor",
]

CHUNK = 2048


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float
    n: int

    def z_score(self, value: float) -> float:
        """(mean - value) / stderr; 0 when both agree exactly."""
        diff = self.mean - value
        if diff == 0:
            return 0.0
        return math.copysign(math.inf, diff) if self.stderr == 0 else diff / self.stderr

    def within(self, value: float, k: float = 3.0) -> bool:
        return abs(self.z_score(value)) <= k


@dataclass(frozen=True)
class DelayEstimate(Estimate):
    """Mean delay estimate with heavy-tail summaries and a divergence flag."""

    median: float = math.nan
    trimmed_mean: float = math.nan
    diverging: bool = False
    running: tuple = ()
    max_share: float = 0.0
    censored: int = 0


@dataclass(frozen=True)
class SimWindow:
    """Truncation of the simulated point patterns.

    ``half_width_1d`` bounds the route around the nodes of interest (default
    50 mean hop lengths); ``half_width_2d`` is the half side of the square
    interferer window around a receiver (default 30 T^(1/beta) mean hops).
    """

    half_width_1d: float | None = None
    half_width_2d: float | None = None

    def __post_init__(self):
        for v in (self.half_width_1d, self.half_width_2d):
            if v is not None and not v > 0:
                raise ValueError("window half widths must be > 0")

    def route(self, lam: float) -> float:
        return self.half_width_1d if self.half_width_1d is not None else 50.0 / lam

    def plane(self, hop: float, ch: ChannelConfig) -> float:
        if self.half_width_2d is not None:
            return self.half_width_2d
        return 30.0 * hop * ch.T ** (1.0 / ch.beta)


DEFAULT_WINDOW = SimWindow()


def seed_sequence(seed=None) -> np.random.SeedSequence:
    """Master seed from an int, a SeedSequence or None (fresh entropy)."""
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if seed is not None and (int(seed) != seed or seed < 0):
        raise ValueError("seed must be a non-negative integer")
    return np.random.SeedSequence(None if seed is None else int(seed))


def _chunk_sizes(n: int) -> list[int]:
    if n < 1:
        raise ValueError("sample count must be >= 1")
    sizes = [CHUNK] * (n // CHUNK)
    if n % CHUNK:
        sizes.append(n % CHUNK)
    return sizes


def _run_chunks(kernel: Callable, n: int, seed, args: tuple, workers: int = 1) -> np.ndarray:
    """Concatenate kernel(size, SeedSequence, args) outputs over fixed chunks."""
    sizes = _chunk_sizes(n)
    children = seed_sequence(seed).spawn(len(sizes))
    if workers > 1 and len(sizes) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(kernel, sizes, children, repeat(args)))
    else:
        parts = [kernel(m, c, args) for m, c in zip(sizes, children)]
    return np.concatenate(parts, axis=0)


def _estimate(x: np.ndarray) -> Estimate:
    n = x.shape[0]
    mean = float(x.mean())
    stderr = float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return Estimate(mean, stderr, n)


# ---------------------------------------------------------------------------
# Point pattern samplers
# ---------------------------------------------------------------------------

def sample_poisson_route(lam: float, half_width: float, rng: np.random.Generator) -> np.ndarray:
    """Sorted homogeneous Poisson points of intensity ``lam`` on [-half_width, half_width]."""
    if not lam > 0:
        raise ValueError("lam must be > 0")
    k = rng.poisson(2.0 * half_width * lam)
    return np.sort(rng.uniform(-half_width, half_width, k))


def sample_poisson_field(mu: float, half_width: float, rng: np.random.Generator,
                         center=(0.0, 0.0)) -> np.ndarray:
    """Planar Poisson points of intensity ``mu`` in a square window, shape (n, 2)."""
    if mu < 0:
        raise ValueError("mu must be >= 0")
    if mu == 0:
        return np.zeros((0, 2))
    k = rng.poisson(mu * (2.0 * half_width) ** 2)
    pts = rng.uniform(-half_width, half_width, (k, 2)) + np.asarray(center, dtype=float)
    return pts


def sample_poisson_line_field(nu: float, lambda_prime: float, half_width: float,
                              rng: np.random.Generator, center=(0.0, 0.0),
                              return_lines: bool = False):
    """Poisson(lambda_prime) nodes on isotropic Poisson lines of length density ``nu``.

    Lines are drawn as (theta, rho) with theta ~ U[0, pi) and rho uniform on
    [-R, R], R = sqrt(2) half_width (the disc circumscribing the window).  An
    isotropic line process with length per unit area nu hits a disc of radius
    R a Poisson(2 nu R) number of times, which fixes the line count.  Nodes are
    clipped to the square window.  With ``return_lines`` the (theta, rho)
    array is returned as well.
    """
    if nu < 0 or lambda_prime < 0:
        raise ValueError("intensities must be >= 0")
    c = np.asarray(center, dtype=float)
    R = math.sqrt(2.0) * half_width
    n_lines = rng.poisson(2.0 * nu * R) if nu > 0 else 0
    theta = rng.uniform(0.0, math.pi, n_lines)
    rho = rng.uniform(-R, R, n_lines)
    half_chord = np.sqrt(R * R - rho * rho)
    counts = rng.poisson(lambda_prime * 2.0 * half_chord) if lambda_prime > 0 else np.zeros(n_lines, int)
    t = (rng.uniform(-1.0, 1.0, counts.sum()) * np.repeat(half_chord, counts))
    th, rh = np.repeat(theta, counts), np.repeat(rho, counts)
    # foot of the perpendicular plus t along the line direction
    x = rh * np.cos(th) - t * np.sin(th)
    y = rh * np.sin(th) + t * np.cos(th)
    keep = (np.abs(x) <= half_width) & (np.abs(y) <= half_width)
    pts = np.column_stack([x[keep], y[keep]]) + c
    if return_lines:
        return pts, np.column_stack([theta, rho])
    return pts


def _sample_interferers(spec: InterfererSpec, half_width: float, rng, center=(0.0, 0.0)) -> np.ndarray:
    if spec.kind == POISSON_FIELD and spec.mu > 0:
        return sample_poisson_field(spec.mu, half_width, rng, center)
    if spec.kind == POISSON_LINE and spec.nu > 0 and spec.lambda_prime > 0:
        return sample_poisson_line_field(spec.nu, spec.lambda_prime, half_width, rng, center)
    return np.zeros((0, 2))


def _field_log_inv(spec: InterfererSpec, pts: np.ndarray, rx, r: float, ch: ChannelConfig) -> float:
    """sum over field points of log(1/h) with the interferers' access probability."""
    if pts.shape[0] == 0 or spec.p_prime == 0:
        return 0.0
    s = np.hypot(pts[:, 0] - rx[0], pts[:, 1] - rx[1])
    return float(_log_inv_h(s, r, spec.p_prime, ch).sum())


# ---------------------------------------------------------------------------
# Slot-level simulation of a fixed configuration
# ---------------------------------------------------------------------------

def _slot_success(m, tx, rx, pts, p, ch, rng):
    """Success indicators of m independent slots for the hop tx -> rx."""
    r = float(np.hypot(*(tx - rx)))
    tx_on = rng.random(m) < p
    rx_off = rng.random(m) >= p
    fade0 = rng.exponential(1.0, m)
    signal = fade0 * (ch.A * r) ** (-ch.beta)
    interference = np.zeros(m)
    if pts.shape[0]:
        s = np.hypot(pts[:, 0] - rx[0], pts[:, 1] - rx[1])
        gain = (ch.A * s) ** (-ch.beta)
        on = rng.random((m, pts.shape[0])) < p
        fades = rng.exponential(1.0, (m, pts.shape[0]))
        interference = (on * fades * gain).sum(axis=1)
    return tx_on & rx_off & (signal >= ch.T * (interference + ch.W))


def _slots_kernel(m, ss, args):
    tx, rx, pts, p, ch = args
    return _slot_success(m, tx, rx, pts, p, ch, np.random.default_rng(ss)).astype(float)


def _lift(x):
    x = np.asarray(x, dtype=float).reshape(-1)
    return np.pad(x, (0, 2 - x.size)) if x.size < 2 else x


def simulate_slots(tx, rx, interferers, mac: MacConfig, ch: ChannelConfig, n_slots: int,
                   seed=None, workers: int = 1) -> Estimate:
    """Empirical per-slot capture frequency of the hop tx -> rx.

    Every slot draws fresh Aloha indicators (probability ``mac.p``) for the
    transmitter, the receiver and each interferer, and fresh unit-mean
    exponential fades; success means tx on, rx off and SINR >= T.
    """
    args = (_lift(tx), _lift(rx), as_points(interferers), mac.p, ch)
    return _estimate(_run_chunks(_slots_kernel, n_slots, seed, args, workers))


def simulate_hop_delay_slots(tx, rx, interferers, mac: MacConfig, ch: ChannelConfig, n_hops: int,
                             seed=None, max_slots: int = 10 ** 7) -> DelayEstimate:
    """Slot-by-slot hop delays (number of slots until first success).

    Hops still unsuccessful after ``max_slots`` are censored at that value and
    counted in ``censored``.
    """
    rng = np.random.default_rng(seed_sequence(seed))
    tx, rx, pts = _lift(tx), _lift(rx), as_points(interferers)
    delays = np.zeros(n_hops)
    pending = np.arange(n_hops)
    elapsed = 0
    block = 64
    while pending.size and elapsed < max_slots:
        b = min(block, max_slots - elapsed)
        ok = _slot_success(pending.size * b, tx, rx, pts, mac.p, ch, rng).reshape(pending.size, b)
        hit = ok.any(axis=1)
        first = ok.argmax(axis=1)
        delays[pending[hit]] = elapsed + first[hit] + 1
        pending = pending[~hit]
        elapsed += b
        block = min(2 * block, 4096)
    delays[pending] = max_slots
    est = _estimate(delays)
    return DelayEstimate(est.mean, est.stderr, est.n, median=float(np.median(delays)),
                         trimmed_mean=_trimmed(delays), censored=int(pending.size))


# ---------------------------------------------------------------------------
# Typical nearest-neighbour hop on a Poisson route
# ---------------------------------------------------------------------------

def _far_tail(a, c, beta, terms: int = 14):
    """int_a^inf du / (u^beta + c) for a^beta >= 16 c, by its convergent series."""
    a = np.asarray(a, dtype=float)
    out = np.zeros_like(a)
    for k in range(terms):
        e = beta * (k + 1) - 1.0
        out += (-c) ** k * a ** (-e) / e
    return out


def _hop_neighbourhood(r, lam, base, ch, rng):
    """Route nodes around the receivers of hops of lengths r (tx at 0, rx at r).

    Returns distances s to the receiver, the owning sample index and the
    per-sample window radius.  Nodes lie on both sides of the receiver within
    the window, except in the empty gap between transmitter and receiver.
    """
    t = ch.T ** (1.0 / ch.beta)
    hw = np.maximum(base, 2.0 * t * r)
    k_right = rng.poisson(lam * hw)
    k_left = rng.poisson(lam * hw)
    idx_r = np.repeat(np.arange(r.size), k_right)
    idx_l = np.repeat(np.arange(r.size), k_left)
    s_right = rng.random(idx_r.size) * hw[idx_r]
    s_left = r[idx_l] + rng.random(idx_l.size) * hw[idx_l]
    return np.concatenate([s_right, s_left]), np.concatenate([idx_r, idx_l]), hw


def _far_log_inv(r, hw, lam, p, ch):
    """Exact log E[prod 1/h] of the route beyond the window on both sides."""
    t = ch.T ** (1.0 / ch.beta)
    c = 1.0 - p
    right = _far_tail(hw / (t * r), c, ch.beta)
    left = _far_tail((r + hw) / (t * r), c, ch.beta)
    return lam * p * t * r * (right + left)


def _far_log_h(r, hw, lam, p, ch):
    """Exact log E[prod h] of the route beyond the window on both sides."""
    t = ch.T ** (1.0 / ch.beta)
    right = _far_tail(hw / (t * r), 1.0, ch.beta)
    left = _far_tail((r + hw) / (t * r), 1.0, ch.beta)
    return -lam * p * t * r * (right + left)


def _capture_nn_semi_kernel(m, ss, args):
    lam, p, ch, base, W = args
    rng = np.random.default_rng(ss)
    r = rng.exponential(1.0 / lam, m)
    s, idx, hw = _hop_neighbourhood(r, lam, base, ch, rng)
    log_h = -np.bincount(idx, weights=_log_inv_h(s, r[idx], p, ch), minlength=m)
    log_h += _far_log_h(r, hw, lam, p, ch)
    return (1.0 - p) * np.exp(log_h - ch.T * W * (ch.A * r) ** ch.beta)


def _capture_nn_slot_kernel(m, ss, args):
    lam, p, ch, base, W = args
    rng = np.random.default_rng(ss)
    r = rng.exponential(1.0 / lam, m)
    s, idx, _ = _hop_neighbourhood(r, lam, base, ch, rng)
    on = rng.random(s.size) < p
    fades = rng.exponential(1.0, s.size)
    interference = np.bincount(idx, weights=on * fades * (ch.A * s) ** (-ch.beta), minlength=m)
    rx_off = rng.random(m) >= p
    signal = rng.exponential(1.0, m) * (ch.A * r) ** (-ch.beta)
    return (rx_off & (signal >= ch.T * (interference + W))).astype(float)


def _zero_estimate(n):
    return Estimate(0.0, 0.0, n)


def estimate_capture_nn(cfg: PoissonRouteConfig, mode: str = "semi_analytic", n: int = 100_000,
                        window: SimWindow = DEFAULT_WINDOW, seed=None, W: float | None = None,
                        workers: int = 1) -> Estimate:
    """Capture probability of the nearest-neighbour hop of a transmitting typical node.

    ``semi_analytic`` averages (1-p) w(r) prod h over sampled routes (beyond
    the window the route enters through its exact expectation); ``slot``
    draws Aloha states and fades and records SINR >= T.  With p = 0 nothing
    is ever transmitted and the estimate is exactly 0.
    """
    p, ch = cfg.mac.p, cfg.ch
    W = ch.W if W is None else W
    if p == 0:
        return _zero_estimate(n)
    args = (cfg.lam, p, ch, window.route(cfg.lam), W)
    kernel = {"semi_analytic": _capture_nn_semi_kernel, "slot": _capture_nn_slot_kernel}[mode]
    return _estimate(_run_chunks(kernel, n, seed, args, workers))


def estimate_capture_nn_noise(cfg: PoissonRouteConfig, W: float, mode: str = "semi_analytic",
                              n: int = 100_000, window: SimWindow = DEFAULT_WINDOW, seed=None,
                              workers: int = 1) -> Estimate:
    """NN capture probability under constant ambient noise ``W``."""
    return estimate_capture_nn(cfg, mode, n, window, seed, W=W, workers=workers)


def _capture_nr_kernel(m, ss, args):
    lam, p, ch, hw, W, slot = args
    rng = np.random.default_rng(ss)
    k = rng.poisson(2.0 * hw * lam, m)
    idx = np.repeat(np.arange(m), k)
    x = rng.uniform(-hw, hw, idx.size)
    on = rng.random(idx.size) < p
    cand = (~on) & (x > 0)
    rx = np.full(m, np.inf)
    np.minimum.at(rx, idx[cand], x[cand])
    found = np.isfinite(rx)
    r = np.where(found, rx, 1.0)
    e_idx, s = idx[on], np.abs(x[on] - r[idx[on]])
    if slot:
        fades = rng.exponential(1.0, e_idx.size)
        interference = np.bincount(e_idx, weights=fades * (ch.A * s) ** (-ch.beta), minlength=m)
        signal = rng.exponential(1.0, m) * (ch.A * r) ** (-ch.beta)
        ok = signal >= ch.T * (interference + W)
        return (found & ok).astype(float)
    log_pass = -np.bincount(e_idx, weights=np.log1p(ch.T * (r[e_idx] / s) ** ch.beta), minlength=m)
    val = np.exp(log_pass - ch.T * W * (ch.A * r) ** ch.beta)
    return np.where(found, val, 0.0)


def estimate_capture_nr(cfg: PoissonRouteConfig, mode: str = "semi_analytic", n: int = 100_000,
                        window: SimWindow = DEFAULT_WINDOW, seed=None, workers: int = 1) -> Estimate:
    """Capture probability when the receiver is the nearest node on the right that is silent.

    ``semi_analytic`` samples the route and the Aloha states and averages
    w(r) prod over emitters of 1/(1 + T (r/s)^beta); ``slot`` also draws fades.
    """
    p, ch = cfg.mac.p, cfg.ch
    if p == 0:
        return _zero_estimate(n)
    args = (cfg.lam, p, ch, window.route(cfg.lam), ch.W, mode == "slot")
    if mode not in ("semi_analytic", "slot"):
        raise ValueError(f"unknown mode {mode!r}")
    return _estimate(_run_chunks(_capture_nr_kernel, n, seed, args, workers))


# ---------------------------------------------------------------------------
# Mean local delay and its divergence
# ---------------------------------------------------------------------------

def _trimmed(x: np.ndarray, frac: float = 0.01) -> float:
    x = np.sort(x[np.isfinite(x)]) if np.isinf(x).any() else np.sort(x)
    if x.size == 0:
        return math.inf
    k = int(frac * x.size)
    core = x[k:x.size - k] if x.size - 2 * k > 0 else x
    return float(core.mean())


def divergence_diagnostic(terms: np.ndarray, growth: float = 0.10, share: float = 0.05) -> dict:
    """Running-mean check for an estimator of a possibly infinite mean.

    Reports the running means after n/4, n/2 and n terms, the relative changes
    across the last two doublings and the largest single term's share of the
    total.  ``diverging`` is raised when a term or the mean is infinite, when
    the running mean moves by more than ``growth`` across either doubling, or
    when one term carries more than ``share`` of the whole sum (a finite-mean
    sum of n terms has a vanishing maximal share).
    """
    terms = np.asarray(terms, dtype=float)
    n = terms.size
    cut = [max(1, n // 4), max(1, n // 2), n]
    with np.errstate(over="ignore", invalid="ignore"):
        csum = np.cumsum(terms)
        running = tuple(float(csum[c - 1] / c) for c in cut)
        total = csum[-1]
        max_share = float(terms.max() / total) if np.isfinite(total) and total > 0 else 1.0
    if not all(math.isfinite(v) for v in running):
        return {"running": running, "changes": (math.inf, math.inf), "max_share": max_share,
                "diverging": True}
    changes = tuple((b - a) / a if a > 0 else math.inf for a, b in zip(running[:-1], running[1:]))
    diverging = any(abs(c) > growth for c in changes) or max_share > share
    return {"running": running, "changes": changes, "max_share": max_share, "diverging": diverging}


def _delay_kernel(m, ss, args):
    lam, p, ch, base, W, tilt, interferers, plane_hw = args
    rng = np.random.default_rng(ss)
    if tilt > 0:
        # defensive mixture proposal: half Exp(lam), half a much heavier Exp(tilt)
        pick = rng.random(m) < 0.5
        r = np.where(pick, rng.exponential(1.0 / lam, m), rng.exponential(1.0 / tilt, m))
        q = 0.5 * lam * np.exp(-lam * r) + 0.5 * tilt * np.exp(-tilt * r)
        weight = lam * np.exp(-lam * r) / q
    else:
        r = rng.exponential(1.0 / lam, m)
        weight = np.ones(m)
    s, idx, hw = _hop_neighbourhood(r, lam, base, ch, rng)
    log_inv = np.bincount(idx, weights=_log_inv_h(s, r[idx], p, ch), minlength=m)
    log_inv += _far_log_inv(r, hw, lam, p, ch)
    log_inv += ch.T * W * (ch.A * r) ** ch.beta
    if interferers.active:
        for i in range(m):
            pts = _sample_interferers(interferers, plane_hw, rng, (r[i], 0.0))
            log_inv[i] += _field_log_inv(interferers, pts, (r[i], 0.0), r[i], ch)
    with np.errstate(over="ignore"):
        return weight * np.exp(log_inv) / (p * (1.0 - p))


def estimate_mean_local_delay(cfg: PoissonRouteConfig, W: float | None = None,
                              interferers: InterfererSpec = NO_INTERFERERS, n: int = 100_000,
                              window: SimWindow = DEFAULT_WINDOW, seed=None, tilt: float | None = None,
                              workers: int = 1) -> DelayEstimate:
    """Average of 1/Pi over typical nearest-neighbour hops, with a divergence flag.

    The hop length is drawn from an equal mixture of Exp(lam) and Exp(tilt)
    (default tilt = lam / 20) and reweighted by the likelihood ratio, which
    keeps the long hops that dominate 1/Pi represented.  The route window
    grows with the hop length, and nodes beyond it enter through their exact
    expectation.  ``tilt=0`` gives the plain estimator.
    """
    p, ch = cfg.mac.p, cfg.ch
    W = ch.W if W is None else W
    if p <= 0 or p >= 1:
        return DelayEstimate(math.inf, math.inf, n, median=math.inf, trimmed_mean=math.inf, diverging=True)
    tilt = 0.05 * cfg.lam if tilt is None else tilt
    args = (cfg.lam, p, ch, window.route(cfg.lam), W, tilt, interferers,
            window.plane(1.0 / cfg.lam, ch))
    terms = _run_chunks(_delay_kernel, n, seed, args, workers)
    diag = divergence_diagnostic(terms)
    finite = terms[np.isfinite(terms)]
    mean = float(terms.mean()) if finite.size == terms.size else math.inf
    stderr = float(terms.std(ddof=1) / math.sqrt(n)) if math.isfinite(mean) and n > 1 else math.inf
    return DelayEstimate(mean, stderr, n, median=float(np.median(terms)), trimmed_mean=_trimmed(terms),
                         diverging=diag["diverging"], running=diag["running"], max_share=diag["max_share"])


# ---------------------------------------------------------------------------
# Route-level simulators
# ---------------------------------------------------------------------------

def _route_delay(nodes, hops_from, hops_to, p, ch, W, field_pts, spec):
    """Sum of 1/Pi over hops nodes[i] -> nodes[i+1], i in [hops_from, hops_to)."""
    total = 0.0
    for i in range(hops_from, hops_to):
        tx, rx = nodes[i], nodes[i + 1]
        r = rx - tx
        s = np.abs(np.delete(nodes, [i, i + 1]) - rx)
        log_inv = _log_inv_h(s, r, p, ch).sum() + ch.T * W * (ch.A * r) ** ch.beta
        if field_pts is not None:
            log_inv += _field_log_inv(spec, field_pts, (rx, 0.0), r, ch)
        total += math.exp(min(log_inv, 709.0)) if log_inv < 709.0 else math.inf
    return total / (p * (1.0 - p))


def _e2e_kernel(m, ss, args):
    M, lam, p, ch, W, spec, hw, plane_hw = args
    rng = np.random.default_rng(ss)
    out = np.empty(m)
    for j in range(m):
        inner = np.sort(rng.uniform(0.0, M, rng.poisson(lam * M)))
        left = np.sort(rng.uniform(-hw, 0.0, rng.poisson(lam * hw)))
        right = np.sort(rng.uniform(M, M + hw, rng.poisson(lam * hw)))
        nodes = np.concatenate([left, [0.0], inner, [M], right])
        start = left.size
        field_pts = None
        if spec.active:
            c = (0.5 * M, 0.0)
            field_pts = _sample_interferers(spec, 0.5 * M + plane_hw, rng, c)
        out[j] = _route_delay(nodes, start, start + inner.size + 1, p, ch, W, field_pts, spec)
    return out


def simulate_end_to_end(M: float, cfg: PoissonRouteConfig, W: float | None = None,
                        interferers: InterfererSpec = NO_INTERFERERS, n: int = 10_000,
                        window: SimWindow = DEFAULT_WINDOW, seed=None, workers: int = 1) -> DelayEstimate:
    """Mean delay of nearest-neighbour relaying from a node at 0 to a node at M.

    Each sample draws the route (Poisson nodes inside (0, M) and on both
    sides within the window) and an optional interferer field, then sums
    1/Pi over the hops; every route node and field point interferes.
    """
    if not M > 0:
        raise ValueError("M must be > 0")
    p, ch = cfg.mac.p, cfg.ch
    W = ch.W if W is None else W
    if p <= 0 or p >= 1:
        return DelayEstimate(math.inf, math.inf, n, diverging=True)
    hop = min(M, 1.0 / cfg.lam)
    args = (M, cfg.lam, p, ch, W, interferers, window.route(cfg.lam), window.plane(hop, ch))
    terms = _run_chunks(_e2e_kernel, n, seed, args, workers)
    est = _estimate(terms)
    diag = divergence_diagnostic(terms)
    return DelayEstimate(est.mean, est.stderr, n, median=float(np.median(terms)),
                         trimmed_mean=_trimmed(terms), diverging=not math.isfinite(est.mean),
                         running=diag["running"], max_share=diag["max_share"])


def _speed_kernel(m, ss, args):
    lam, p, ch, k, hw = args
    rng = np.random.default_rng(ss)
    j = int(math.ceil(lam * hw))
    out = np.empty(m)
    for i in range(m):
        gaps = rng.exponential(1.0 / lam, k + 2 * j)
        x = np.cumsum(gaps)
        x -= x[j - 1]  # node j-1 is the origin
        # hop a -> a+1 for a in [j-1, j-1+k); interferers: j nodes on each side of the receiver
        a = np.arange(j - 1, j - 1 + k)
        r = x[a + 1] - x[a]
        offs = np.concatenate([np.arange(-j, -1), np.arange(1, j)])
        nb = x[(a + 1)[:, None] + offs[None, :]]
        s = np.abs(nb - x[a + 1][:, None])
        log_inv = _log_inv_h(s, r[:, None], p, ch).sum(axis=1) + ch.T * ch.W * (ch.A * r) ** ch.beta
        with np.errstate(over="ignore"):
            delay = np.exp(log_inv).sum() / (p * (1.0 - p))
        out[i] = x[j - 1 + k] / delay
    return out


def simulate_long_distance_speed(cfg: PoissonRouteConfig, k_hops: int = 500, n: int = 1000,
                                 window: SimWindow = DEFAULT_WINDOW, seed=None,
                                 workers: int = 1) -> Estimate:
    """Average over routes of X_k / (D_1 + ... + D_k) after k nearest-neighbour hops.

    D_i = 1/Pi_i is the mean delay of hop i given the route.  Each receiver
    sees about lam * half_width route nodes on either side.  The ratio
    estimator carries an O(1/k) bias.
    """
    if k_hops < 1:
        raise ValueError("k_hops must be >= 1")
    p = cfg.mac.p
    if p <= 0 or p >= 1:
        return _zero_estimate(n)
    args = (cfg.lam, p, cfg.ch, k_hops, window.route(cfg.lam))
    return _estimate(_run_chunks(_speed_kernel, n, seed, args, workers))


def _lattice_kernel(m, ss, args):
    lam, p, ch, delta, W, spec, hw, plane_hw, grid_typical = args
    rng = np.random.default_rng(ss)
    out = np.empty(m)
    n_rel = int(math.ceil(hw / delta)) + 1
    ns = np.arange(-n_rel, n_rel + 1)
    for i in range(m):
        poisson = rng.uniform(-hw, hw, rng.poisson(2.0 * hw * lam))
        phase = 0.0 if grid_typical else rng.uniform(0.0, delta)
        relays = ns * delta + phase
        if grid_typical:
            relays = relays[ns != 0]
        others = np.concatenate([poisson, relays])
        r = others[others > 0].min()
        s = np.abs(others[others != r] - r)
        log_inv = _log_inv_h(s, r, p, ch).sum() + ch.T * W * (ch.A * r) ** ch.beta
        if spec.active:
            pts = _sample_interferers(spec, plane_hw, rng, (r, 0.0))
            log_inv += _field_log_inv(spec, pts, (r, 0.0), r, ch)
        out[i] = math.exp(log_inv) / (p * (1.0 - p))
    return out


def simulate_lattice_local_delay(cfg: LatticeRouteConfig, W: float | None = None,
                                 interferers: InterfererSpec = NO_INTERFERERS, n: int = 20_000,
                                 window: SimWindow = DEFAULT_WINDOW, seed=None,
                                 workers: int = 1) -> DelayEstimate:
    """Mean 1/Pi at the typical node of a Poisson route plus relays {n delta + U}.

    The typical node is a route node with probability lam/(lam + 1/delta) and
    a relay otherwise.  The two cases are sampled as strata in proportion to
    these weights (a route node sees a uniform relay phase, a relay sees the
    lattice through itself), then combined with the exact weights.
    """
    base = cfg.base
    p, ch, lam, delta = base.mac.p, base.ch, base.lam, cfg.delta
    W = ch.W if W is None else W
    if p <= 0 or p >= 1:
        return DelayEstimate(math.inf, math.inf, n, diverging=True)
    w_grid = (1.0 / delta) / (lam + 1.0 / delta)
    n_grid = min(max(2, int(round(n * w_grid))), n - 2)
    sizes = {False: n - n_grid, True: n_grid}
    streams = seed_sequence(seed).spawn(2)
    hw = window.route(lam)
    plane_hw = window.plane(min(delta, 1.0 / lam), ch)
    parts = {}
    for grid_typical, ss in zip((False, True), streams):
        args = (lam, p, ch, delta, W, interferers, hw, plane_hw, grid_typical)
        parts[grid_typical] = _run_chunks(_lattice_kernel, sizes[grid_typical], ss, args, workers)
    est = {k: _estimate(v) for k, v in parts.items()}
    mean = (1 - w_grid) * est[False].mean + w_grid * est[True].mean
    stderr = math.hypot((1 - w_grid) * est[False].stderr, w_grid * est[True].stderr)
    allv = np.concatenate([parts[False], parts[True]])
    diag = divergence_diagnostic(parts[False])
    return DelayEstimate(mean, stderr, n, median=float(np.median(allv)), trimmed_mean=_trimmed(allv),
                         diverging=not math.isfinite(mean) or diag["diverging"],
                         running=diag["running"], max_share=diag["max_share"])


# ---------------------------------------------------------------------------
# Interferer-field delay factor
# ---------------------------------------------------------------------------

def _factor_kernel(m, ss, args):
    spec, r, ch, hw = args
    rng = np.random.default_rng(ss)
    out = np.empty(m)
    for i in range(m):
        pts = _sample_interferers(spec, hw, rng)
        out[i] = math.exp(_field_log_inv(spec, pts, (0.0, 0.0), r, ch))
    return out


def estimate_delay_factor(r: float, interferers: InterfererSpec, ch: ChannelConfig, n: int = 20_000,
                          window: SimWindow = DEFAULT_WINDOW, seed=None, workers: int = 1) -> Estimate:
    """Field average of prod over interferers of 1/h(|y|, r) at a receiver at the origin."""
    if not r > 0:
        raise ValueError("r must be > 0")
    if not interferers.active:
        return Estimate(1.0, 0.0, n)
    args = (interferers, float(r), ch, window.plane(r, ch))
    return _estimate(_run_chunks(_factor_kernel, n, seed, args, workers))
