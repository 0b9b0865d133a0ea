import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from aloha_relay.sinr import (
    ChannelConfig,
    MacConfig,
    capture_prob_fixed,
    expected_capture_poisson_field,
    expected_delay_factor_poisson_field,
    expected_delay_factor_poisson_line,
    interference_factor,
    local_delay_fixed,
    log_delay_factor_poisson_field,
    log_delay_factor_poisson_line,
    noise_factor,
    route_delay_fixed,
    route_speed_fixed,
)
from aloha_relay.simulate import simulate_slots

CH = ChannelConfig()
MAC = MacConfig(p=0.15)

coords = st.floats(-500, 500)
points = st.lists(st.tuples(coords, coords), min_size=0, max_size=6)


def test_config_validation():
    with pytest.raises(ValueError):
        ChannelConfig(beta=2.0)
    with pytest.raises(ValueError):
        ChannelConfig(W=-1.0)
    with pytest.raises(ValueError):
        MacConfig(p=1.5)


def test_interference_factor_values():
    assert interference_factor(37.0, 12.0, 0.0, CH) == 1.0
    assert interference_factor(5.0, 5.0, 0.5, CH) == pytest.approx(6.0 / 11.0, rel=1e-14)
    assert interference_factor(1e9, 1.0, 0.5, CH) == pytest.approx(1.0, abs=1e-30)
    assert interference_factor(-5.0, 5.0, 0.5, CH) == interference_factor(5.0, 5.0, 0.5, CH)
    with pytest.raises(ValueError):
        interference_factor(1.0, 0.0, 0.1, CH)


@given(s=st.floats(0, 1e4), r=st.floats(0.1, 1e3), p=st.floats(0, 1), c=st.floats(0.01, 100))
@settings(max_examples=100, deadline=None)
def test_interference_factor_properties(s, r, p, c):
    h = interference_factor(s, r, p, CH)
    assert 1 - p - 1e-12 <= h <= 1.0
    assert interference_factor(s * c, r * c, p, CH) == pytest.approx(h, rel=1e-9)
    assert interference_factor(s + 1.0, r, p, CH) >= h - 1e-15
    assert interference_factor(s, r, min(1.0, p + 0.1), CH) <= h + 1e-15


def test_noise_factor_values():
    assert noise_factor(123.0, CH) == 1.0
    assert noise_factor(0.0, ChannelConfig(W=1e-11)) == 1.0
    assert noise_factor(100.0, ChannelConfig(W=1e-11)) == pytest.approx(math.exp(-0.01), rel=1e-14)


def test_capture_prob_fixed_base_cases():
    assert capture_prob_fixed((0, 0), (100, 0), [], MAC, CH) == pytest.approx(0.15 * 0.85)
    for p in (0.0, 1.0):
        assert capture_prob_fixed((0, 0), (100, 0), [[50, 50]], MacConfig(p=p), CH) == 0.0
    with pytest.raises(ValueError):
        capture_prob_fixed((1, 1), (1, 1), [], MAC, CH)


@given(pts=points, z=st.tuples(coords, coords), W=st.sampled_from([0.0, 1e-12, 1e-11]))
@settings(max_examples=100, deadline=None)
def test_capture_recursion(pts, z, W):
    ch = ChannelConfig(W=W)
    tx, rx = (0.0, 0.0), (120.0, 30.0)
    base = capture_prob_fixed(tx, rx, pts, MAC, ch)
    more = capture_prob_fixed(tx, rx, pts + [z], MAC, ch)
    r = math.hypot(120.0, 30.0)
    h = interference_factor(math.hypot(z[0] - rx[0], z[1] - rx[1]), r, MAC.p, ch)
    assert more == pytest.approx(base * h, rel=1e-12, abs=1e-300)
    assert local_delay_fixed(tx, rx, pts, MAC, ch) * base == pytest.approx(1.0, rel=1e-12)


def test_local_delay_values():
    assert local_delay_fixed((0, 0), (10, 0), [], MacConfig(p=0.5), CH) == pytest.approx(4.0)
    assert local_delay_fixed((0, 0), (10, 0), [], MacConfig(p=0.0), CH) == math.inf


def test_route_delay_fixed():
    d = 100.0
    assert route_delay_fixed([0.0, d], [], MAC, CH) == pytest.approx(1 / (0.15 * 0.85))
    three = route_delay_fixed([0.0, d, 2 * d], [], MAC, CH)
    h_far = interference_factor(d, d, 0.15, CH)      # hop 0->d: node 2d is at distance d from rx
    h_back = interference_factor(2 * d, d, 0.15, CH)  # hop d->2d: node 0 is at distance 2d from rx
    assert three == pytest.approx((1 / h_far + 1 / h_back) / (0.15 * 0.85), rel=1e-12)
    sym = [0.0, 50.0, 150.0, 200.0]
    assert route_delay_fixed(sym, [], MAC, CH) == pytest.approx(
        route_delay_fixed([200.0 - x for x in reversed(sym)], [], MAC, CH), rel=1e-12)


def test_route_speed_fixed():
    assert route_speed_fixed([0.0, 80.0], [], MAC, CH) == pytest.approx(80.0 * 0.15 * 0.85)
    assert route_speed_fixed([0.0, 80.0], [], MacConfig(p=0.0), CH) == 0.0
    route = [0.0, 40.0, 130.0, 170.0]
    v = route_speed_fixed(route, [[50.0, 70.0]], MAC, CH)
    v3 = route_speed_fixed([3 * x for x in route], [[150.0, 210.0]], MAC, CH)
    assert v3 == pytest.approx(3 * v, rel=1e-12)


def test_three_node_route_against_slot_simulation():
    d = 100.0
    nodes = np.array([[0.0, 0.0], [d, 0.0], [2 * d, 0.0]])
    total = 0.0
    for k, seed in ((0, 1), (1, 2)):
        others = np.delete(nodes, [k, k + 1], axis=0)
        pi = capture_prob_fixed(nodes[k], nodes[k + 1], others, MAC, CH)
        est = simulate_slots(nodes[k], nodes[k + 1], others, MAC, CH, 200_000, seed=seed)
        assert abs(est.mean - pi) <= 3 * math.sqrt(pi * (1 - pi) / est.n)
        total += 1 / pi
    assert route_delay_fixed(nodes, [], MAC, CH) == pytest.approx(total, rel=1e-12)


def _planar_log_inverse(r, mu, q, ch):
    """mu * 2 pi int_0^inf s (1/h_q(s, r) - 1) ds by scipy quadrature."""
    g = lambda s: s * q / ((s / r) ** ch.beta / ch.T + 1.0 - q)
    val, _ = integrate.quad(g, 0, np.inf, epsabs=0, epsrel=1e-11, limit=500)
    return mu * 2 * math.pi * val


@pytest.mark.parametrize("beta,T,q", [(4.0, 10.0, 0.15), (3.0, 1.0, 0.5), (5.5, 3.0, 0.015)])
def test_poisson_field_delay_factor_against_quadrature(beta, T, q):
    ch = ChannelConfig(beta=beta, T=T)
    got = float(log_delay_factor_poisson_field(100.0, 1e-4, q, ch))
    assert got == pytest.approx(_planar_log_inverse(100.0, 1e-4, q, ch), rel=1e-8)


def test_poisson_field_capture_against_quadrature():
    ch = ChannelConfig(W=1e-11)
    mac = MacConfig(p=0.15, p_prime=0.3)
    g = lambda s: 2 * math.pi * s * 0.3 / ((s / 80.0) ** 4 / 10.0 + 1.0)
    mass, _ = integrate.quad(g, 0, np.inf, epsrel=1e-12)
    expect = 0.15 * 0.85 * noise_factor(80.0, ch) * math.exp(-1e-4 * mass)
    assert expected_capture_poisson_field(80.0, 1e-4, mac, ch) == pytest.approx(expect, rel=1e-9)
    assert expected_capture_poisson_field(80.0, 0.0, mac, CH) == pytest.approx(0.15 * 0.85)
    assert expected_capture_poisson_field(80.0, 1e-3, MacConfig(p=0.15), CH) == pytest.approx(0.15 * 0.85)


def test_delay_factor_trivial_cases():
    mac = MacConfig(p=0.15, p_prime=0.15)
    assert expected_delay_factor_poisson_field(0.0, 1e-4, mac, CH) == 1.0
    assert expected_delay_factor_poisson_field(100.0, 0.0, mac, CH) == 1.0
    assert expected_delay_factor_poisson_line(0.0, 0.01, 0.01, mac, CH) == 1.0
    assert expected_delay_factor_poisson_line(100.0, 0.0, 0.01, mac, CH) == 1.0
    with pytest.raises(ValueError):
        log_delay_factor_poisson_field(1.0, 1e-4, 1.0, CH)


def _line_log_factor_scipy(r, nu, lp, q, ch):
    """2 nu int_0^inf (exp(2 lp int_0^inf g(sqrt(d^2+t^2)) dt) - 1) dd in physical coordinates.

    The inner integral is taken in t = c u with c = max(d, r); the outer tail
    beyond d = r in y = log(d / r).
    """
    g = lambda t, d: q / ((math.hypot(d, t) / r) ** ch.beta / ch.T + 1.0 - q)

    def outer(d):
        c = max(d, r)
        inner, _ = integrate.quad(lambda u: c * g(c * u, d), 0, np.inf, epsabs=0, epsrel=1e-12, limit=200)
        return math.expm1(2 * lp * inner)

    a, _ = integrate.quad(outer, 0, r, epsabs=0, epsrel=1e-11, limit=200)
    b, _ = integrate.quad(lambda y: outer(r * math.exp(y)) * r * math.exp(y), 0, 60 / (ch.beta - 2),
                          epsabs=0, epsrel=1e-11, limit=400)
    return 2 * nu * (a + b)


@pytest.mark.parametrize("r,nu,lp,q,beta", [(100.0, 0.01, 0.01, 0.15, 4.0), (30.0, 1e-3, 0.05, 0.5, 4.0),
                                             (250.0, 0.02, 1e-3, 0.015, 4.0), (10.0, 0.1, 0.01, 0.25, 2.5)])
def test_poisson_line_factor_against_scipy(r, nu, lp, q, beta):
    ch = ChannelConfig(beta=beta)
    ref = _line_log_factor_scipy(r, nu, lp, q, ch)
    fast = float(log_delay_factor_poisson_line(r, nu, lp, q, ch))
    exact = float(log_delay_factor_poisson_line(r, nu, lp, q, ch, exact=True))
    assert exact == pytest.approx(ref, rel=1e-6)
    assert fast == pytest.approx(ref, rel=1e-6)


def test_poisson_line_vectorized_matches_scalar():
    r = np.array([0.0, 10.0, 100.0, 400.0])
    vec = log_delay_factor_poisson_line(r, 0.01, 0.01, 0.15, CH)
    scal = [log_delay_factor_poisson_line(x, 0.01, 0.01, 0.15, CH) for x in r]
    np.testing.assert_allclose(vec, scal, rtol=1e-14)


@given(r=st.floats(1, 400), log_mu=st.floats(-8, -3), log_lp=st.floats(-4, -1), q=st.floats(0.01, 0.9),
       beta=st.floats(2.5, 6), log_T=st.floats(-1, 2))
@settings(max_examples=60, deadline=None)
def test_clustering_inequality(r, log_mu, log_lp, q, beta, log_T):
    ch = ChannelConfig(beta=beta, T=10 ** log_T)
    mu, lp = 10 ** log_mu, 10 ** log_lp
    line = float(log_delay_factor_poisson_line(r, mu / lp, lp, q, ch))
    field = float(log_delay_factor_poisson_field(r, mu, q, ch))
    assert line >= field * (1 - 1e-9)


@given(r=st.floats(1, 300), q=st.floats(0.01, 0.8), k=st.floats(1.01, 3))
@settings(max_examples=50, deadline=None)
def test_delay_factors_monotone(r, q, k):
    f = lambda r, mu, q: float(log_delay_factor_poisson_field(r, mu, q, CH))
    g = lambda r, nu, lp, q: float(log_delay_factor_poisson_line(r, nu, lp, q, CH))
    assert f(k * r, 1e-4, q) >= f(r, 1e-4, q) >= 0
    assert f(r, k * 1e-4, q) >= f(r, 1e-4, q)
    assert f(r, 1e-4, min(0.99, k * q)) >= f(r, 1e-4, q)
    assert g(k * r, 0.01, 0.01, q) >= g(r, 0.01, 0.01, q) >= 0
    assert g(r, k * 0.01, 0.01, q) >= g(r, 0.01, 0.01, q)
    assert g(r, 0.01, k * 0.01, q) >= g(r, 0.01, 0.01, q)
    assert g(r, 0.01, 0.01, min(0.99, k * q)) >= g(r, 0.01, 0.01, q)
