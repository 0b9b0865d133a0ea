"""Deterministic numerical kernels shared by the analytic engine.

All integrators expect *vectorized* integrands: ``f`` receives a 1-D numpy
array of abscissae and returns an array of the same length (scalar-valued
integrand) or of shape ``(len(x), k)`` (``k`` integrals computed at once on a
shared adaptive mesh).  Vector-valued integration is what makes the nested
integrals cheap: every inner integral of an outer Gauss-Kronrod panel is
refined together.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

__all__ = [
    "Tolerance",
    "Bracket",
    "DEFAULT_TOL",
    "IntegrationError",
    "DivergenceError",
    "RootBracketError",
    "LatticeSum",
    "integrate_finite",
    "integrate_semi_infinite",
    "integrate_2d_nested",
    "inner_integrals",
    "lattice_log_sum",
    "lattice_truncation",
    "find_root",
    "maximize_unimodal",
]


@dataclass(frozen=True)
class Tolerance:
    rel: float = 1e-8
    abs: float = 1e-12
    max_subdivisions: int = 2000

    def __post_init__(self):
        if not self.rel > 0:
            raise ValueError(f"rel must be > 0, got {self.rel}")
        if not self.abs >= 0:
            raise ValueError(f"abs must be >= 0, got {self.abs}")
        if int(self.max_subdivisions) < 1:
            raise ValueError("max_subdivisions must be >= 1")


@dataclass(frozen=True)
class Bracket:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"empty bracket ({self.lo}, {self.hi})")


DEFAULT_TOL = Tolerance()


class IntegrationError(RuntimeError):
    """Quadrature failed to reach the requested tolerance.

    ``estimate`` and ``error`` carry the best value found so far.
    """

    def __init__(self, message, estimate=math.nan, error=math.inf):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class DivergenceError(IntegrationError):
    pass


class RootBracketError(ValueError):
    pass


def _as_bracket(bracket) -> Bracket:
    if isinstance(bracket, Bracket):
        return bracket
    lo, hi = bracket
    return Bracket(float(lo), float(hi))


# Gauss-Kronrod 7/15 nodes and weights (QUADPACK qk15), half-rule on [0, 1].
_XK_HALF = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WK_HALF = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG_ODD = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

_XK = np.concatenate([-_XK_HALF[:-1], _XK_HALF[::-1]])
_WK = np.concatenate([_WK_HALF[:-1], _WK_HALF[::-1]])
_WG = np.zeros(15)
# Gauss nodes are the odd-indexed Kronrod nodes: +-xgk[1], +-xgk[3], +-xgk[5], 0.
_WG[[1, 3, 5]] = _WG_ODD[:3]
_WG[7] = _WG_ODD[3]
_WG[[13, 11, 9]] = _WG_ODD[:3]


def _gk_panels(f, a, b):
    """Kronrod estimate, raw error and non-finite flags on each panel [a_i, b_i]."""
    c = 0.5 * (a + b)
    h = 0.5 * (b - a)
    x = (c[:, None] + h[:, None] * _XK[None, :]).ravel()
    y = np.asarray(f(x), dtype=float)
    if y.shape[0] != x.shape[0]:
        raise ValueError("integrand must return one value (or row) per abscissa")
    y = y.reshape(a.size, 15, -1)
    if np.isnan(y).any():
        raise IntegrationError("integrand returned NaN")
    pinf = np.isposinf(y).any(axis=1)
    ninf = np.isneginf(y).any(axis=1)
    if pinf.any() or ninf.any():
        y = np.where(np.isfinite(y), y, 0.0)
    with np.errstate(over="ignore", invalid="ignore"):
        k = h[:, None] * np.einsum("j,mjk->mk", _WK, y)
        g = h[:, None] * np.einsum("j,mjk->mk", _WG, y)
        err = np.abs(k - g)
    # finite samples whose weighted sum overflows count as an infinite panel
    over = ~(np.isfinite(k) & np.isfinite(err))
    if over.any():
        pinf = pinf | (over & ~(k < 0))
        ninf = ninf | (over & (k < 0))
        k = np.where(over, 0.0, k)
        err = np.where(over, 0.0, err)
    return k, err, pinf, ninf


def _adaptive(f, a, b, tol: Tolerance):
    """Globally adaptive GK15 on [a, b]; returns (values, errors) per component."""
    lo = np.array([a], dtype=float)
    hi = np.array([b], dtype=float)
    val, err, pinf, ninf = _gk_panels(f, lo, hi)
    pinf_all = pinf.any(axis=0)
    ninf_all = ninf.any(axis=0)
    n_panels = 1
    while True:
        total = val.sum(axis=0)
        total_err = err.sum(axis=0)
        allowed = np.maximum(tol.abs, tol.rel * np.abs(total))
        settled = pinf_all | ninf_all
        if np.all((total_err <= allowed) | settled):
            break
        if n_panels >= tol.max_subdivisions:
            est = total if total.size > 1 else float(total[0])
            er = total_err if total_err.size > 1 else float(total_err[0])
            raise IntegrationError(
                f"no convergence after {n_panels} subdivisions", est, er)
        # Refine the panels carrying the bulk of the normalized error.
        scale = np.where(settled, np.inf, np.where(allowed > 0, allowed, np.inf))
        share = (err / scale).max(axis=1)
        order = np.argsort(share)
        keep_mask = np.cumsum(share[order]) <= 0.25
        split = np.ones(lo.size, dtype=bool)
        split[order[keep_mask]] = False
        if not split.any():
            split[order[-1]] = True
        budget = tol.max_subdivisions - n_panels
        idx = np.flatnonzero(split)
        if idx.size > budget:
            idx = idx[np.argsort(share[idx])[::-1][:max(budget, 1)]]
            split[:] = False
            split[idx] = True
        mid = 0.5 * (lo[split] + hi[split])
        new_lo = np.concatenate([lo[split], mid])
        new_hi = np.concatenate([mid, hi[split]])
        v, e, pi, ni = _gk_panels(f, new_lo, new_hi)
        pinf_all |= pi.any(axis=0)
        ninf_all |= ni.any(axis=0)
        keep = ~split
        lo = np.concatenate([lo[keep], new_lo])
        hi = np.concatenate([hi[keep], new_hi])
        val = np.concatenate([val[keep], v])
        err = np.concatenate([err[keep], e])
        n_panels += int(split.sum())
    if (pinf_all & ninf_all).any():
        raise IntegrationError("integrand reached both +inf and -inf")
    total = np.where(pinf_all, np.inf, np.where(ninf_all, -np.inf, total))
    total_err = np.where(settled, 0.0, total_err)
    return total, total_err


def _squeeze(values):
    return float(values[0]) if values.size == 1 else values


def integrate_finite(f: Callable, a: float, b: float, tol: Tolerance = DEFAULT_TOL):
    """Integrate a vectorized ``f`` over the finite interval [a, b].

    Returns a float, or an array for vector-valued integrands.  An integrand
    that overflows to +inf makes the affected component +inf.
    """
    a = float(a)
    b = float(b)
    if not (math.isfinite(a) and math.isfinite(b)):
        raise ValueError("use integrate_semi_infinite for unbounded intervals")
    if a > b:
        raise ValueError(f"lower limit {a} exceeds upper limit {b}")
    if a == b:
        probe = np.asarray(f(np.array([a])), dtype=float)
        return _squeeze(np.zeros(probe.reshape(1, -1).shape[1]))
    total, _ = _adaptive(f, a, b, tol)
    return _squeeze(total)


def _tail_check(f, a, scale, tol):
    far = a + scale * np.array([1e6, 1e9])
    with np.errstate(all="ignore"):
        y = np.abs(np.asarray(f(far), dtype=float)).reshape(2, -1).max(axis=1)
    mass = y * (far - a)
    if not np.isfinite(mass).all() or (mass[1] >= 0.5 * mass[0] and mass[1] > tol.abs):
        raise DivergenceError(f"integrand tail does not decay (|u f(u)| ~ {mass[1]:.3g} at u={far[1]:.3g})")


def integrate_semi_infinite(f: Callable, a: float, tol: Tolerance = DEFAULT_TOL, scale: float = 1.0):
    """Integrate ``f`` over [a, inf) via u = a + scale * x / (1 - x).

    ``scale`` should be of the order of the integrand's decay length; it only
    affects efficiency.  A tail for which |u f(u)| does not fall off between
    u ~ 1e6 and u ~ 1e9 (in units of ``scale``) is reported as divergent.
    """
    a = float(a)
    if not scale > 0:
        raise ValueError("scale must be positive")
    _tail_check(f, a, scale, tol)

    def mapped(x):
        one_minus = 1.0 - x
        u = a + scale * x / one_minus
        y = np.asarray(f(u), dtype=float)
        jac = scale / one_minus ** 2
        if y.ndim == 1:
            return y * jac
        return y * jac[:, None]

    total, _ = _adaptive(mapped, 0.0, 1.0, tol)
    return _squeeze(total)


def _limit(bound, s):
    if callable(bound):
        return np.broadcast_to(np.asarray(bound(s), dtype=float), s.shape)
    return np.full(s.shape, float(bound))


def inner_integrals(f, s, inner=(0.0, math.inf), tol: Tolerance = DEFAULT_TOL):
    """Vector of inner integrals  int f(s_i, t) dt  for each outer node s_i.

    All components share one adaptive mesh in the mapped coordinate.
    """
    s = np.asarray(s, dtype=float)
    lo = _limit(inner[0], s)
    hi = _limit(inner[1], s)
    infinite = np.isinf(hi)
    if np.isinf(lo).any():
        raise ValueError("inner lower limit must be finite")
    width = np.where(infinite, 1.0, hi - lo)
    if (width < 0).any():
        raise ValueError("inner limits reversed")

    def g(x):
        x = x[:, None]
        one_minus = 1.0 - x
        t_inf = lo[None, :] + x / one_minus
        t_fin = lo[None, :] + width[None, :] * x
        t = np.where(infinite[None, :], t_inf, t_fin)
        jac = np.where(infinite[None, :], 1.0 / one_minus ** 2, width[None, :])
        return np.asarray(f(np.broadcast_to(s[None, :], t.shape), t), dtype=float) * jac

    vals, _ = _adaptive(g, 0.0, 1.0, tol)
    bad = ~np.isfinite(vals)
    if bad.any():
        raise DivergenceError(f"inner integral diverges at outer coordinate {s[bad][0]:.6g}")
    return vals


def integrate_2d_nested(f: Callable, tol: Tolerance = DEFAULT_TOL, outer=(0.0, math.inf),
                        inner=(0.0, math.inf)):
    """Iterated integral  int_outer ds  int_inner(s) dt  f(s, t).

    ``f(s, t)`` takes broadcastable arrays.  Inner limits may be callables of
    the outer coordinate (vectorized).  Defaults integrate over the quadrant.
    """
    def outer_integrand(s):
        return inner_integrals(f, s, inner, tol)

    a, b = float(outer[0]), float(outer[1])
    if math.isinf(b):
        return integrate_semi_infinite(outer_integrand, a, tol)
    return integrate_finite(outer_integrand, a, b, tol)


class LatticeSum(NamedTuple):
    value: float
    terms: int  # truncation index N: terms 1 <= |n| <= N were summed


def lattice_truncation(bound_constant: float, decay: float, atol: float) -> int:
    """Smallest N with  2 C N^(1-decay) / (decay-1) <= atol."""
    if decay <= 1:
        raise ValueError("power-law tail bound requires decay > 1")
    if bound_constant <= 0:
        return 1
    n = (2.0 * bound_constant / ((decay - 1.0) * atol)) ** (1.0 / (decay - 1.0))
    return max(1, int(math.ceil(n)))


def lattice_log_sum(g: Callable, tol: Tolerance = DEFAULT_TOL, decay: float = 2.0,
                    max_terms: int = 1 << 24) -> LatticeSum:
    """Sum g(n) over nonzero integers n for terms decaying like |n|^-decay.

    The constant of the tail bound is estimated from the last block of terms;
    summation stops once  2 C N^(1-decay)/(decay-1) <= tol.abs.
    """
    if decay <= 1:
        raise ValueError("power-law tail bound requires decay > 1")

    def block(lo, hi):
        n = np.arange(lo, hi + 1)
        vals = np.concatenate([np.asarray(g(n), float), np.asarray(g(-n), float)])
        if not np.isfinite(vals).all():
            raise IntegrationError("lattice term is not finite")
        mags = np.abs(vals) * np.concatenate([n, n]).astype(float) ** decay
        return vals.sum(), mags.max()

    n_hi = 32
    total, _ = block(1, n_hi)
    prev_c = None
    while True:
        s, c = block(n_hi // 2 + 1, n_hi)
        bound = 2.0 * c * n_hi ** (1.0 - decay) / (decay - 1.0)
        if bound <= tol.abs:
            return LatticeSum(float(total), n_hi)
        if prev_c is not None and c > 4.0 * prev_c and n_hi > 1024:
            raise IntegrationError(f"lattice terms decay slower than |n|^-{decay}", float(total), bound)
        if 2 * n_hi > max_terms:
            raise IntegrationError("lattice sum did not reach tolerance", float(total), bound)
        prev_c = c
        s_next, _ = block(n_hi + 1, 2 * n_hi)
        total += s_next
        n_hi *= 2


def find_root(f: Callable[[float], float], bracket, tol: Tolerance = DEFAULT_TOL) -> float:
    """Bisection on a sign-changing bracket; stops when the width <= tol.abs."""
    br = _as_bracket(bracket)
    lo, hi = br.lo, br.hi
    f_lo, f_hi = f(lo), f(hi)
    if f_lo == 0:
        return lo
    if f_hi == 0:
        return hi
    if not f_lo * f_hi < 0:
        raise RootBracketError(f"no sign change on [{lo}, {hi}]: f = ({f_lo}, {f_hi})")
    width_goal = max(tol.abs, 4 * np.finfo(float).eps * max(abs(lo), abs(hi)))
    for _ in range(400):
        if hi - lo <= width_goal:
            break
        mid = 0.5 * (lo + hi)
        f_mid = f(mid)
        if f_mid == 0:
            return mid
        if (f_mid < 0) == (f_lo < 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def maximize_unimodal(f: Callable[[float], float], bracket, tol: Tolerance = DEFAULT_TOL,
                      trace: list | None = None) -> tuple[float, float]:
    """Golden-section search for the maximum of ``f`` on a bracket.

    On a non-unimodal function the result is a local maximum.  Equal values
    keep the left sub-bracket, so ties resolve toward the lower argument.
    Every evaluation is appended to ``trace`` as (x, f(x)) when given.
    """
    br = _as_bracket(bracket)

    def ev(x):
        y = f(x)
        if trace is not None:
            trace.append((x, y))
        return y

    a, b = br.lo, br.hi
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = ev(c), ev(d)
    width_goal = max(tol.abs, 4 * np.finfo(float).eps * max(abs(a), abs(b)))
    while b - a > width_goal:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = ev(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = ev(d)
    if fc >= fd:
        return c, fc
    return d, fd
