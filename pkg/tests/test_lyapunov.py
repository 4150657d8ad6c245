"""Lyapunov profiles, termwise generator quadrature, certificates, flows."""
import math

import numpy as np
import pytest
from scipy.integrate import quad

from driftbound import presets
from driftbound.errors import CertificationError, DomainError
from driftbound.lyapunov import (
    LyapunovProfile,
    eval_V,
    grad_V,
    hess_V,
    certify_L_condition,
    default_decay_coefficient,
    drift_decomposition,
    flow_H,
    flow_phi,
    flow_phi_inverse,
    radial_decay_rate,
    radial_transform_U,
    solve_upsilon,
)


# ---- profile smoothness --------------------------------------------------

def _fd_grad(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return g


@pytest.mark.parametrize("p", [1.4, 2.4, 3.0])
def test_profile_gradient_matches_finite_differences(p):
    prof = LyapunovProfile(p=p)
    for r in (0.2, 0.45, 0.6, 1.1, 4.0, 50.0):
        for dim in (1, 3):
            vec = np.full(dim, r / math.sqrt(dim))
            got = grad_V(prof, vec)
            want = _fd_grad(lambda z: eval_V(prof, z), vec.copy())
            assert np.allclose(got, want, rtol=5e-5, atol=1e-7), (p, r, dim)


def test_profile_hessian_matches_finite_differences():
    prof = LyapunovProfile(p=2.4)
    x = np.array([1.3, -0.4])
    h = 1e-5
    want = np.zeros((2, 2))
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        want[:, j] = (grad_V(prof, x + e) - grad_V(prof, x - e)) / (2.0 * h)
    assert np.allclose(hess_V(prof, x), want, rtol=1e-4, atol=1e-6)


def test_profile_is_polynomial_outside_the_blend():
    prof = LyapunovProfile(p=1.4)
    for r in (2.0, 7.0, 1e3):
        x = np.array([r])
        assert eval_V(prof, x) == pytest.approx(r ** 1.4, rel=1e-12)


# ---- termwise generator quadrature vs plain integrals --------------------

def test_drift_and_diffusion_terms_closed_form():
    # OU at radius 100: drift term p r^(p-2) x.(-x) = -p r^p, diffusion
    # term (1/2) p (p-1) r^(p-2) for the unit coefficient in 1d
    model, params = presets.build("linear_ou", {}, {})
    prof = LyapunovProfile(p=2.0)
    dec = drift_decomposition(model, prof, params, np.array([100.0]))
    assert dec.drift_term == pytest.approx(-2.0 * 100.0 ** 2, rel=1e-10)
    assert dec.diffusion_term == pytest.approx(0.5 * 2.0 * 1.0, rel=1e-10)
    assert dec.small_jump_term == 0.0 and dec.large_jump_term == 0.0


def test_large_jump_term_vs_direct_quadrature():
    # one-sided Pareto under the compensated convention:
    # int_1^inf (V(x+z) - V(x) - z V'(x)) alpha z^(-alpha-1) dz,
    # integrated here without the tail substitution the module uses
    model, params = presets.build("storage", {"compensated": True},
                                  {"p": 1.4})
    prof = LyapunovProfile(p=1.4)
    for r in (5.0, 40.0):
        x = np.array([r])
        dec = drift_decomposition(model, prof, params, x)
        g = float(grad_V(prof, x)[0])
        ref, err = quad(
            lambda z: (eval_V(prof, np.array([r + z])) - eval_V(prof, x)
                       - z * g) * 2.5 * z ** -3.5,
            1.0, np.inf, epsabs=1e-12, epsrel=1e-11, limit=400)
        assert dec.large_jump_term == pytest.approx(ref, rel=1e-5), r


def test_small_jump_term_vs_direct_quadrature():
    # symmetric stable-like small part below 1, second-difference form
    model, params = presets.build("linear_ou", {"alpha": 1.7}, {})
    prof = LyapunovProfile(p=1.5)
    r = 5.0
    x = np.array([r])
    dec = drift_decomposition(model, prof, params, x)
    g = float(grad_V(prof, x)[0])

    def diff(z):
        return (eval_V(prof, np.array([r + z])) - eval_V(prof, x) - z * g)

    # density s/2 |z|^(-s-1) per side; float cancellation in the second
    # difference is noise below z ~ 1e-4, so that stub enters through its
    # quadratic Taylor value (next correction is O(cut^2.3), negligible)
    cut = 1e-4
    up, _ = quad(lambda z: diff(z) * 0.85 * z ** -2.7, cut, 1.0,
                 epsabs=1e-12, epsrel=1e-10, limit=400)
    down, _ = quad(lambda z: diff(-z) * 0.85 * z ** -2.7, cut, 1.0,
                   epsabs=1e-12, epsrel=1e-10, limit=400)
    # z^2 z^(-2.7) integrates to z^0.3/0.3; odd Taylor orders cancel in
    # the two-sided sum, so the next correction is O(cut^2.3)
    h = float(hess_V(prof, x)[0, 0])
    stub = 2.0 * 0.5 * h * 0.85 * cut ** 0.3 / 0.3
    assert dec.small_jump_term == pytest.approx(up + down + stub,
                                                rel=1e-5, abs=1e-10)


def test_decomposition_total_is_the_sum():
    model, params = presets.build("superlinear", {}, {})
    prof = LyapunovProfile(p=2.4)
    dec = drift_decomposition(model, prof, params, np.array([3.0]))
    total = (dec.drift_term + dec.diffusion_term
             + dec.small_jump_term + dec.large_jump_term)
    assert dec.total == pytest.approx(total, rel=1e-12)


# ---- certificates --------------------------------------------------------

def test_default_decay_coefficient_values():
    assert default_decay_coefficient(presets.storage_params(p=1.4)) == \
        pytest.approx(0.9 * 1.4, rel=1e-12)
    assert default_decay_coefficient(presets.superlinear_params()) == \
        pytest.approx(0.9 * 2.4, rel=1e-12)
    # critical boundary subtracts the quadratic correction: p beta = 6,
    # correction 0.5 p (c_tr + (p-2) c_op) = 3, times 0.9 gives 2.7
    assert default_decay_coefficient(presets.gradient_diffusion_params()) == \
        pytest.approx(2.7, rel=1e-12)


def test_certificate_for_compensated_storage():
    model, params = presets.build("storage", {"compensated": True}, {})
    prof, cert = certify_L_condition(model, LyapunovProfile(p=params.p),
                                     params)
    assert cert.passed
    assert cert.worst_margin >= 0.0
    assert cert.small_c == pytest.approx(0.9 * 1.4, rel=1e-12)
    assert 1.0 < cert.v_star_radius < math.inf
    assert prof.small_c == cert.small_c


def test_certificate_rejects_raw_storage():
    # uncompensated queue gains mass at rate 2/3: no decay certificate
    model, params = presets.build("storage", {}, {"p": 1.4})
    _, cert = certify_L_condition(model, LyapunovProfile(p=1.4), params)
    assert not cert.passed
    assert any("excess persists" in n for n in cert.notes)
    assert cert.excess_by_radius[-1] > 0


# ---- flow transforms -----------------------------------------------------

def test_flow_H_identity_and_monotone():
    v = np.linspace(0.0, 20.0, 7)
    assert np.allclose(flow_H(0.4, 2.0, 0.0, v), v, atol=1e-14)
    out = flow_H(0.4, 2.0, 1.5, v)
    assert np.all(np.diff(out) > 0)
    with pytest.raises(DomainError):
        flow_H(1.2, 1.0, 1.0, 1.0)


def test_flow_phi_roundtrip():
    for gamma in (0.3, 0.9, 1.0, 1.7):
        v = np.array([0.5, 1.0, 7.0, 300.0])
        w = flow_phi(gamma, v)
        assert np.allclose(flow_phi_inverse(gamma, w), v, rtol=1e-12)


def test_solve_upsilon_gamma_three_halves_closed_form():
    # v' = -c v^(3/2) solves to (v0^(-1/2) + c t / 2)^(-2)
    c = 0.8
    v0 = 9.0
    t = np.linspace(0.0, 4.0, 9)
    got = solve_upsilon(1.5, 0.0, c, v0, t)
    want = (v0 ** -0.5 + 0.5 * c * t) ** -2.0
    assert np.allclose(got, want, rtol=1e-7)
    with pytest.raises(DomainError):
        solve_upsilon(0.5, 1.0, 1.0, 1.0, t)


def test_radial_helpers():
    x = np.array([[3.0, 4.0]])
    # r = 5, U = r^(1-kappa) = 5^-2
    assert radial_transform_U(3.0, x)[0] == pytest.approx(5.0 ** -2, rel=1e-12)
    assert radial_decay_rate(1.0, 3.0) == pytest.approx(2.0)
    with pytest.raises(DomainError):
        radial_decay_rate(1.0, 0.5)
