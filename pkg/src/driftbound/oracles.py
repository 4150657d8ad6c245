"""Closed-form reference values used to cross-check simulation output.

Everything here is independent of the samplers and the integrator: plain
formulas plus one quadrature.  Scenario gates compare Monte Carlo output
against these, so keep this module free of any dependence on the modules
it checks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import gammaln

from .errors import DomainError, NonNormalizableError

FORMULA_IDS = (
    "f_t",              # storage tail lower bound at finite time
    "f_inf",            # its large-time limit
    "c_kappa",          # halving-time constant of the release flow
    "rho",              # stationary density of the critical diffusion
    "rho_moment",       # absolute moment under rho
    "moment_lower",     # tail integral of f_t, lower-bounds a moment
    "ode_relax",        # deterministic decay level after time t
    "ode_relax_time",   # time for the decay to reach a level
    "upsilon_gamma1",   # linear-decay envelope ODE solution
    "upsilon_gamma2",   # quadratic-decay envelope ODE solution
)

# relative closeness to a divergence threshold that flags an oracle value
# as numerically delicate
_ILL_CONDITIONED_WIDTH = 0.05


@dataclass(frozen=True)
class OracleResult:
    formula_id: str
    value: float
    inputs: dict = field(default_factory=dict)
    finite: bool = True
    ill_conditioned: bool = False


def c_kappa(kappa):
    """Time for the unit-rate release flow y' = -y**kappa to fall from 2R to R,
    divided by R**(1-kappa).  Continuous through kappa = 1 where it is log 2."""
    if abs(1.0 - kappa) < 1e-12:
        return math.log(2.0)
    return (2.0 ** (1.0 - kappa) - 1.0) / (1.0 - kappa)


def storage_tail_lower_bound(alpha, kappa, t, level):
    """Lower bound for P(X_t > level) in the storage system.

    One jump beyond 2*level inside the window where the release flow could
    not yet have pulled the state back below level.
    """
    if level <= 1.0:
        raise DomainError("tail bound is stated for levels above 1")
    if t < 0:
        raise DomainError("time must be nonnegative")
    window = min(c_kappa(kappa) * level ** (1.0 - kappa), t)
    rate = (2.0 * level) ** (-alpha)
    return -math.expm1(-window * rate)


def storage_tail_lower_bound_limit(alpha, kappa, level):
    """Large-time limit of the tail bound: 1 - exp(-2^-alpha c_kappa level^(1-alpha-kappa))."""
    if level <= 1.0:
        raise DomainError("tail bound is stated for levels above 1")
    if kappa >= 1.0:
        raise DomainError("the limit form needs kappa < 1")
    expo = c_kappa(kappa) * 2.0 ** (-alpha) * level ** (1.0 - alpha - kappa)
    return -math.expm1(-expo)


def storage_moment_lower_bound(alpha, kappa, order, t, upper=None):
    """q * integral of R**(q-1) f_t(R) over R > 1: lower-bounds E[X_t^q ; X_t > 1].

    Finite for every finite t when q < alpha; its t -> infinity limit
    diverges exactly when q >= alpha + kappa - 1.
    """
    if order <= 0:
        raise DomainError("moment order must be positive")
    if order >= alpha:
        raise DomainError("the finite-time integral needs order < alpha")

    def integrand(r):
        return order * r ** (order - 1.0) * storage_tail_lower_bound(alpha, kappa, t, r)

    hi = upper if upper is not None else math.inf
    val, err = integrate.quad(integrand, 1.0, hi, epsabs=1e-12, epsrel=1e-10,
                              limit=400)
    return val


def ode_relaxation(beta, kappa, t):
    """Level reached at time t by y' = -beta y**kappa started from infinity.

    Defined for kappa > 1 (the descent from infinity resolves in finite
    time); t = 0 is the starting singularity.
    """
    if kappa <= 1.0:
        raise DomainError("relaxation from infinity needs kappa > 1")
    if beta <= 0:
        raise DomainError("decay rate must be positive")
    if t <= 0:
        raise DomainError("the level diverges as t -> 0+")
    return (beta * (kappa - 1.0) * t) ** (-1.0 / (kappa - 1.0))


def ode_relaxation_time(beta, kappa, level):
    """Time for the descent from infinity to reach the given level."""
    if kappa <= 1.0:
        raise DomainError("relaxation from infinity needs kappa > 1")
    if beta <= 0 or level <= 0:
        raise DomainError("decay rate and level must be positive")
    return level ** (1.0 - kappa) / (beta * (kappa - 1.0))


def _nu(beta, sigma_sq):
    if sigma_sq <= 0:
        raise DomainError("diffusion variance must be positive")
    nu = beta / sigma_sq
    if 2.0 * nu <= 1.0:
        raise NonNormalizableError(
            "density (1+x^2)^(-beta/sigma^2) is not integrable for 2 beta <= sigma^2")
    return nu


def diffusion_stationary_density(beta, sigma_sq, x):
    """Stationary density of dX = -beta X/(1+X^2) dt + sigma dW."""
    nu = _nu(beta, sigma_sq)
    log_norm = 0.5 * math.log(math.pi) + gammaln(nu - 0.5) - gammaln(nu)
    return math.exp(-nu * math.log1p(x * x) - log_norm)


def diffusion_stationary_moment(beta, sigma_sq, order):
    """E|X|^order under the stationary law; infinite at orders >= 2 beta/sigma^2 - 1."""
    if order < 0:
        raise DomainError("moment order must be nonnegative")
    nu = _nu(beta, sigma_sq)
    threshold = 2.0 * nu - 1.0
    ill = abs(order - threshold) < _ILL_CONDITIONED_WIDTH * max(1.0, threshold)
    inputs = {"beta": beta, "sigma_sq": sigma_sq, "order": order,
              "threshold": threshold}
    if order >= threshold:
        return OracleResult("rho_moment", math.inf, inputs, finite=False,
                            ill_conditioned=ill)
    h = 0.5 * (order + 1.0)
    log_val = (gammaln(h) + gammaln(nu - h)) - (gammaln(0.5) + gammaln(nu - 0.5))
    return OracleResult("rho_moment", math.exp(log_val), inputs, finite=True,
                        ill_conditioned=ill)


def upsilon_gamma1_closed_form(c_upper, c_lower, v0, t):
    """Solution of v' = C - c v: exponential approach to C/c.  t may be an array."""
    if c_lower <= 0:
        raise DomainError("decay coefficient must be positive")
    equil = c_upper / c_lower
    return equil + (v0 - equil) * np.exp(-c_lower * np.asarray(t, dtype=float))


def upsilon_gamma2_closed_form(c_upper, c_lower, v0, t):
    """Solution of v' = C - c v^2 from v0 >= 0 (tanh-type approach).  t may be an array."""
    if c_lower <= 0:
        raise DomainError("decay coefficient must be positive")
    if c_upper < 0 or v0 < 0:
        raise DomainError("closed form stated for nonnegative C and v0")
    t = np.asarray(t, dtype=float)
    if c_upper == 0.0:
        return v0 / (1.0 + c_lower * v0 * t)
    m = math.sqrt(c_upper / c_lower)
    e = np.exp(-2.0 * c_lower * m * t)
    num = (v0 + m) + (v0 - m) * e
    den = (v0 + m) - (v0 - m) * e
    return m * num / den


def evaluate(formula_id, **inputs):
    """Uniform entry point used by the CLI oracle subcommand."""
    if formula_id == "f_t":
        v = storage_tail_lower_bound(inputs["alpha"], inputs["kappa"],
                                     inputs["t"], inputs["level"])
    elif formula_id == "f_inf":
        v = storage_tail_lower_bound_limit(inputs["alpha"], inputs["kappa"],
                                           inputs["level"])
    elif formula_id == "c_kappa":
        v = c_kappa(inputs["kappa"])
    elif formula_id == "rho":
        v = diffusion_stationary_density(inputs["beta"], inputs["sigma_sq"],
                                         inputs["x"])
    elif formula_id == "rho_moment":
        return diffusion_stationary_moment(inputs["beta"], inputs["sigma_sq"],
                                           inputs["order"])
    elif formula_id == "moment_lower":
        v = storage_moment_lower_bound(inputs["alpha"], inputs["kappa"],
                                       inputs["order"], inputs["t"])
    elif formula_id == "ode_relax":
        v = ode_relaxation(inputs["beta"], inputs["kappa"], inputs["t"])
    elif formula_id == "ode_relax_time":
        v = ode_relaxation_time(inputs["beta"], inputs["kappa"], inputs["level"])
    elif formula_id == "upsilon_gamma1":
        v = upsilon_gamma1_closed_form(inputs["c_upper"], inputs["c_lower"],
                                       inputs["v0"], inputs["t"])
    elif formula_id == "upsilon_gamma2":
        v = upsilon_gamma2_closed_form(inputs["c_upper"], inputs["c_lower"],
                                       inputs["v0"], inputs["t"])
    else:
        raise DomainError("unknown formula id %r; known: %s"
                          % (formula_id, ", ".join(FORMULA_IDS)))
    return OracleResult(formula_id, float(v), dict(inputs))
