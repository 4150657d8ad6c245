"""Closed-form oracles against frozen independent values.

Every literal here was computed outside the package (30-digit arithmetic
or by hand) so these tests do not share code paths with the module they
check.
"""
import math

import numpy as np
import pytest
from scipy.integrate import quad

from driftbound import oracles
from driftbound.errors import DomainError, NonNormalizableError


def test_c_kappa_closed_values():
    # (2^(1-k) - 1)/(1-k): k=0 -> 1, k=2 -> 1/2, k=3 -> 3/8
    assert oracles.c_kappa(0.0) == pytest.approx(1.0, rel=1e-15)
    assert oracles.c_kappa(2.0) == pytest.approx(0.5, rel=1e-15)
    assert oracles.c_kappa(3.0) == pytest.approx(0.375, rel=1e-15)
    # 2 (sqrt(2) - 1) at k = 1/2
    assert oracles.c_kappa(0.5) == pytest.approx(0.8284271247461901, rel=1e-14)
    assert oracles.c_kappa(1.0) == pytest.approx(math.log(2.0), rel=1e-14)


def test_c_kappa_continuous_at_one():
    for eps in (1e-6, 1e-9):
        assert oracles.c_kappa(1.0 + eps) == pytest.approx(math.log(2.0), abs=1e-5)
        assert oracles.c_kappa(1.0 - eps) == pytest.approx(math.log(2.0), abs=1e-5)


def test_storage_tail_lower_bound_frozen():
    # f_t(R) = 1 - exp(-min(c_k R^(1-k), t) (2R)^(-alpha)); mpmath, 30 digits
    cases = [
        (10.0, 5.0, 0.015687044512734544),
        (10.0, 20.0, 0.00098772364835464921),
        (50.0, 5.0, 0.015687044512734544),   # excursion length saturates at R=5
        (50.0, 20.0, 0.0019744716987037794),
    ]
    for t, level, want in cases:
        got = oracles.storage_tail_lower_bound(2.5, 0.0, t, level)
        assert got == pytest.approx(want, rel=1e-13)


def test_storage_tail_limit_matches_large_t():
    lim = oracles.storage_tail_lower_bound_limit(2.5, 0.0, 20.0)
    assert lim == pytest.approx(0.0019744716987037794, rel=1e-13)
    at = oracles.storage_tail_lower_bound(2.5, 0.0, 1e9, 20.0)
    assert at == pytest.approx(lim, rel=1e-12)
    with pytest.raises(DomainError):
        oracles.storage_tail_lower_bound_limit(2.5, 1.0, 20.0)
    with pytest.raises(DomainError):
        oracles.storage_tail_lower_bound(2.5, 0.0, 10.0, 0.5)


def test_storage_moment_lower_bound_against_direct_quadrature():
    # q-th moment lower bound integrates q R^(q-1) f_inf(R); redo it here
    # from the raw integrand instead of trusting the module's plumbing
    alpha, kappa, q = 2.5, 0.0, 1.4
    got = oracles.storage_moment_lower_bound(alpha, kappa, q, t=math.inf)

    def integrand(r):
        return q * r ** (q - 1.0) * (-math.expm1(
            -oracles.c_kappa(kappa) * r ** (1.0 - kappa) * (2.0 * r) ** -alpha))

    ref, err = quad(integrand, 1.0, np.inf, epsabs=1e-12, epsrel=1e-10)
    assert got == pytest.approx(ref, rel=1e-6)
    assert got > 0


def test_ode_relaxation_closed_form():
    # kappa=3, beta=1: v(t) = (2 t)^(-1/2); time to level 10 is 1/200
    assert oracles.ode_relaxation(1.0, 3.0, 0.5) == pytest.approx(1.0, rel=1e-14)
    assert oracles.ode_relaxation_time(1.0, 3.0, 10.0) == pytest.approx(0.005, rel=1e-14)
    with pytest.raises(DomainError):
        oracles.ode_relaxation(1.0, 0.5, 1.0)


def test_ode_relaxation_roundtrip_identity():
    for kappa in (1.5, 2.0, 3.0, 4.0):
        for beta in (0.5, 1.0, 2.0):
            for level in np.logspace(-3, 3, 13):
                t = oracles.ode_relaxation_time(beta, kappa, level)
                back = oracles.ode_relaxation(beta, kappa, t)
                assert back == pytest.approx(level, rel=1e-12)


def test_diffusion_stationary_density_normalizes():
    # beta=2, sigma^2=1 is the (1+x^2)^-2 law scaled by 2/pi
    dens0 = oracles.diffusion_stationary_density(2.0, 1.0, 0.0)
    assert dens0 == pytest.approx(2.0 / math.pi, rel=1e-13)
    total, _ = quad(lambda x: oracles.diffusion_stationary_density(2.0, 1.0, x),
                    -np.inf, np.inf)
    assert total == pytest.approx(1.0, rel=1e-10)
    with pytest.raises(NonNormalizableError):
        oracles.diffusion_stationary_density(0.25, 1.0, 0.0)


def test_diffusion_stationary_moments():
    # E X^2 = 1 and E|X| = 2/pi for the nu=2 law; threshold 2 nu - 1 = 3
    m2 = oracles.diffusion_stationary_moment(2.0, 1.0, 2.0)
    assert m2.value == pytest.approx(1.0, rel=1e-12)
    assert m2.finite and not m2.ill_conditioned
    m1 = oracles.diffusion_stationary_moment(2.0, 1.0, 1.0)
    assert m1.value == pytest.approx(0.63661977236758134, rel=1e-12)
    assert not oracles.diffusion_stationary_moment(2.0, 1.0, 3.2).finite
    assert oracles.diffusion_stationary_moment(2.0, 1.0, 2.96).ill_conditioned


def test_diffusion_moment_against_direct_quadrature():
    for beta, s2, order in [(2.0, 1.0, 2.0), (3.0, 1.0, 3.5), (2.0, 0.5, 4.0)]:
        got = oracles.diffusion_stationary_moment(beta, s2, order)
        ref, _ = quad(lambda x: abs(x) ** order
                      * oracles.diffusion_stationary_density(beta, s2, x),
                      -np.inf, np.inf)
        assert got.value == pytest.approx(ref, rel=1e-8)


def _fd_check_ode(vals, t, c_upper, c_lower, gamma):
    # closed forms must satisfy v' = C - c v^gamma; centered differences
    h = t[1] - t[0]
    dv = (vals[2:] - vals[:-2]) / (2.0 * h)
    rhs = c_upper - c_lower * vals[1:-1] ** gamma
    assert np.allclose(dv, rhs, rtol=5e-5, atol=5e-5)


def test_upsilon_gamma1_closed_form_satisfies_ode():
    t = np.linspace(0.0, 4.0, 4001)
    for c_up, c_lo, v0 in [(2.0, 1.0, 5.0), (0.0, 0.5, 3.0), (4.0, 2.0, 0.0)]:
        vals = np.array([oracles.upsilon_gamma1_closed_form(c_up, c_lo, v0, s)
                         for s in t])
        assert vals[0] == pytest.approx(v0, abs=1e-14)
        _fd_check_ode(vals, t, c_up, c_lo, 1.0)
        # t -> inf limit is C/c
        assert oracles.upsilon_gamma1_closed_form(c_up, c_lo, v0, 1e3) == \
            pytest.approx(c_up / c_lo, abs=1e-10)


def test_upsilon_gamma2_closed_form_satisfies_ode():
    t = np.linspace(0.0, 4.0, 4001)
    for c_up, c_lo, v0 in [(4.0, 1.0, 5.0), (9.0, 4.0, 0.0), (0.0, 1.0, 3.0)]:
        vals = np.array([oracles.upsilon_gamma2_closed_form(c_up, c_lo, v0, s)
                         for s in t])
        assert vals[0] == pytest.approx(v0, abs=1e-12)
        _fd_check_ode(vals, t, c_up, c_lo, 2.0)
    # pure decay case has the elementary solution v0/(1 + c v0 t)
    got = oracles.upsilon_gamma2_closed_form(0.0, 2.0, 3.0, 1.5)
    assert got == pytest.approx(3.0 / (1.0 + 2.0 * 3.0 * 1.5), rel=1e-12)


def test_evaluate_dispatcher():
    r = oracles.evaluate("c_kappa", kappa=1.0)
    assert r.value == pytest.approx(math.log(2.0), rel=1e-14)
    r = oracles.evaluate("ode_relax_time", beta=1.0, kappa=3.0, level=10.0)
    assert r.value == pytest.approx(0.005, rel=1e-14)
    with pytest.raises(DomainError):
        oracles.evaluate("no-such-formula", x=1.0)
    assert set(oracles.FORMULA_IDS) >= {"f_t", "f_inf", "c_kappa", "ode_relax"}
