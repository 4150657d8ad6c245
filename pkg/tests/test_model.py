"""Kernel moment envelopes, dissipativity checks, exponent arithmetic."""
import math

import numpy as np
import pytest
from scipy.integrate import quad

from driftbound import presets
from driftbound.errors import CertificationError, DivergentIntegralError, DomainError
from driftbound.model import (
    CLAIMS,
    DissipativityParams,
    critical_conditions,
    direction_grid,
    exponent_report,
    verify_dissipativity,
    verify_kernel_bounds,
)


def storage_kernel(compensated=False):
    model, _ = presets.build("storage", {"compensated": compensated}, {})
    return model.kernel


def test_pareto_large_moments_closed_form():
    k = storage_kernel()
    # int_1^inf z^q alpha z^(-alpha-1) dz = alpha/(alpha-q), alpha=2.5
    assert k.large_abs_moment(1.0) == pytest.approx(5.0 / 3.0, rel=1e-12)
    assert k.large_abs_moment(2.0) == pytest.approx(5.0, rel=1e-12)
    with pytest.raises(DivergentIntegralError):
        k.large_abs_moment(2.5)
    with pytest.raises(DivergentIntegralError):
        k.large_abs_moment(3.0)


def test_pareto_survival_and_rate():
    k = storage_kernel()
    assert k.large_rate() == pytest.approx(1.0)
    assert k.large_survival(1.0) == pytest.approx(1.0)
    assert k.large_survival(10.0) == pytest.approx(10.0 ** -2.5, rel=1e-12)


def test_one_sided_mean_vector():
    k = storage_kernel()
    mean = np.asarray(k.large_mean_vector())
    assert mean.shape == (1,)
    assert mean[0] == pytest.approx(5.0 / 3.0, rel=1e-12)


def test_stable_small_second_moment_vs_quadrature():
    model, _ = presets.build("linear_ou", {"alpha": 1.7}, {})
    k = model.kernel
    # int_0^1 z^2 s z^(-s-1) dz = s/(2-s) = 5.666...
    assert k.small_second_moment() == pytest.approx(5.6666666666666667, rel=1e-10)
    # endpoint singularity z^(-0.7): use the algebraic-weight rule
    ref, _ = quad(lambda z: 1.7, 0.0, 1.0, weight="alg", wvar=(-0.7, 0.0))
    assert k.small_second_moment() == pytest.approx(ref, rel=1e-9)


def test_kernel_certificate_passes_for_presets():
    for name, mk in [("storage", {}), ("superlinear", {}),
                     ("lorenz84", {}), ("linear_ou", {"alpha": 1.7})]:
        model, params = presets.build(name, mk, {})
        cert = verify_kernel_bounds(model.kernel, params)
        assert cert.passed, (name, cert)


def test_kernel_certificate_flags_understated_constant():
    model, params = presets.build("storage", {}, {})
    import dataclasses
    bad = dataclasses.replace(params, c_large_p=params.c_large_p * 0.5)
    cert = verify_kernel_bounds(model.kernel, bad)
    assert not cert.passed


def test_dissipativity_margin_zero_for_exact_models():
    # superlinear: x . (-x |x|^2) = -|x|^4 meets beta r^4 with equality
    model, params = presets.build("superlinear", {}, {})
    rep = verify_dissipativity(model, params)
    assert rep.passed
    assert abs(rep.worst_margin) < 1e-9
    # compensated storage at p >= 1: effective drift is -sign(x), margin 0
    model, params = presets.build("storage", {"compensated": True}, {})
    rep = verify_dissipativity(model, params)
    assert rep.passed
    assert abs(rep.worst_margin) < 1e-9


def test_dissipativity_rejects_radii_inside_r0():
    model, params = presets.build("superlinear", {}, {})
    with pytest.raises(DomainError):
        verify_dissipativity(model, params, radii=[0.5, 2.0])


def test_effective_vs_physical_drift_differ_by_jump_mean():
    model, _ = presets.build("storage", {"compensated": True}, {})
    x = np.array([[3.0], [7.0]])
    phys = model.physical_drift(0.0, x)
    eff = model.effective_drift(0.0, x, 1.4)
    assert np.allclose(eff - phys, 5.0 / 3.0, rtol=1e-12)


def test_exponent_report_fields():
    params = presets.storage_params(p=1.4)
    rep = exponent_report(params)
    assert rep.balance_ok
    assert rep.gamma == (1.4 + 0.0 - 1.0) / 1.4
    assert rep.admissible_order_sup == 1.4 + 0.0 - 1.0
    assert rep.passage_moment_order == 1.4 / (1.0 - 0.0)
    assert "uniform-moment-bound" in rep.claims
    assert "passage-time-polynomial" in rep.claims

    rep = exponent_report(presets.linear_ou_params())
    assert rep.exp_rate_sup == 2.0
    assert "passage-time-exponential" in rep.claims

    rep = exponent_report(presets.superlinear_params())
    assert rep.passage_moment_order is None
    assert "uniform-in-x0-bound" in rep.claims
    assert "superlinear-passage-time" in rep.claims


def test_balance_failure_strips_claims():
    params = DissipativityParams(p=0.4, kappa=0.5, beta=1.0, r0=1.0,
                                 c_op=0.0, c_tr=0.0, c_small=0.0,
                                 c_large_p=2.0, c_second=None)
    rep = exponent_report(params)
    assert not rep.balance_ok
    assert rep.claims == ()


def test_critical_conditions():
    ok, detail = critical_conditions(presets.gradient_diffusion_params())
    assert ok is True
    # trace bound 5 exceeds 2 beta = 4: first condition fails
    bad = DissipativityParams(p=2.0, kappa=-1.0, beta=2.0, r0=1.0,
                              c_op=5.0, c_tr=5.0, c_small=0.0,
                              c_large_p=0.0, c_second=0.0)
    ok, _ = critical_conditions(bad)
    assert ok is False
    unstated = DissipativityParams(p=2.0, kappa=-1.0, beta=2.0, r0=1.0,
                                   c_op=1.0, c_tr=1.0, c_small=0.0,
                                   c_large_p=0.0, c_second=None)
    ok, _ = critical_conditions(unstated)
    assert ok is None


def test_direction_grids_are_unit_norm():
    for dim, count in [(1, 8), (2, 16), (3, 64), (5, 32)]:
        dirs = direction_grid(dim, count, seed=3)
        norms = np.linalg.norm(dirs, axis=1)
        assert dirs.shape[1] == dim
        assert np.allclose(norms, 1.0, atol=1e-12)
    assert direction_grid(1, 99).shape[0] == 2   # only two directions exist


def test_claims_registry_covers_scenarios():
    from driftbound.scenarios import _SCENARIO_CLAIMS
    assert len(CLAIMS) == 14
    for text in CLAIMS.values():
        assert isinstance(text, str) and text
    for ids in _SCENARIO_CLAIMS.values():
        for cid in ids:
            assert cid in CLAIMS, cid


def test_lorenz_drift_not_finite_check():
    model, params = presets.build("lorenz84", {}, {})
    rep = verify_dissipativity(model, params)
    assert rep.passed
    assert rep.kappa == 1.0
    assert rep.beta == 0.25
