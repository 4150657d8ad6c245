"""Mollified norm powers, generator decomposition, and decay certificates.

V(x) = v(|x|) where v equals 1 inside radius rho, |x|**p outside radius 1,
and a C^2 quintic blend in between.  The generator applied to V splits
into drift, diffusion, small-jump, and large-jump terms; each is evaluated
by adaptive quadrature with angular averaging reduced to one dimension.
A certificate fits the decay inequality

    (generator V)(x) <= C_V - c_V V(x)**gamma

on a radius/direction grid and locates the threshold beyond which the
decay term alone dominates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import integrate
from scipy.integrate import solve_ivp

from .errors import (CertificationError, DivergentIntegralError, DomainError,
                     SingularityError)
from .model import (CONVENTION_FULL, DIRECTION_COORDINATE, DIRECTION_ISOTROPIC,
                    DIRECTION_POSITIVE, SMALL_STABLE_LIKE, check_balance,
                    critical_conditions, default_radii, direction_grid)

# fraction of c_V used for the pure-decay threshold
C_STAR_FRACTION = 0.9

# relative excess tolerated at the outer radii before the fit is rejected
_TAIL_EXCESS_RTOL = 1e-6

# number of outermost radii that must show pure decay domination
_TAIL_POINTS = 3


@dataclass(frozen=True)
class LyapunovProfile:
    """Norm power p with mollification radius rho, plus certified constants.

    gamma, C_V, c_V, V_star, c_star stay None until a certificate fills
    them in.  The blend is the unique quintic matching value 1 with flat
    derivatives at rho and the power's value/slope/curvature at 1; it dips
    slightly below 1 inside the blend interval, which is harmless since
    only the outward behavior enters the decay argument.
    """

    p: float
    rho: float = 0.5
    gamma: float | None = None
    big_c: float | None = None
    small_c: float | None = None
    v_star: float | None = None
    c_star: float | None = None

    def __post_init__(self):
        if self.p <= 0:
            raise DomainError("norm power must be positive")
        if not 0.0 < self.rho < 1.0:
            raise DomainError("mollification radius must lie in (0, 1)")

    def _blend_coeffs(self):
        p, h = self.p, 1.0 - self.rho
        a5 = 0.5 * (p * (p - 1.0) * h * h - 6.0 * p * h)
        a4 = 7.0 * p * h - p * (p - 1.0) * h * h
        a3 = -(a4 + a5)
        return a3, a4, a5

    def radial(self, r):
        """v(r), vectorized."""
        r = np.asarray(r, dtype=float)
        a3, a4, a5 = self._blend_coeffs()
        s = np.clip((r - self.rho) / (1.0 - self.rho), 0.0, 1.0)
        blend = 1.0 + s ** 3 * (a3 + s * (a4 + s * a5))
        outer = np.maximum(r, 1.0) ** self.p
        return np.where(r >= 1.0, outer, np.where(r <= self.rho, 1.0, blend))

    def radial_d1(self, r):
        r = np.asarray(r, dtype=float)
        a3, a4, a5 = self._blend_coeffs()
        h = 1.0 - self.rho
        s = np.clip((r - self.rho) / h, 0.0, 1.0)
        blend = (s * s * (3.0 * a3 + s * (4.0 * a4 + s * 5.0 * a5))) / h
        outer = self.p * np.maximum(r, 1.0) ** (self.p - 1.0)
        return np.where(r >= 1.0, outer, np.where(r <= self.rho, 0.0, blend))

    def radial_d2(self, r):
        r = np.asarray(r, dtype=float)
        a3, a4, a5 = self._blend_coeffs()
        h = 1.0 - self.rho
        s = np.clip((r - self.rho) / h, 0.0, 1.0)
        blend = (s * (6.0 * a3 + s * (12.0 * a4 + s * 20.0 * a5))) / (h * h)
        outer = self.p * (self.p - 1.0) * np.maximum(r, 1.0) ** (self.p - 2.0)
        return np.where(r >= 1.0, outer, np.where(r <= self.rho, 0.0, blend))


def eval_V(profile, x):
    """V(x) = v(|x|), over the last axis of x."""
    x = np.asarray(x, dtype=float)
    r = np.sqrt(np.sum(x * x, axis=-1))
    return profile.radial(r)


def grad_V(profile, x):
    x = np.asarray(x, dtype=float)
    r = np.sqrt(np.sum(x * x, axis=-1))
    safe = np.maximum(r, 1e-300)
    scale = np.where(r > profile.rho, profile.radial_d1(r) / safe, 0.0)
    return scale[..., None] * x


def hess_V(profile, x):
    """Hessian at a single point: v'' radially, v'/r tangentially."""
    x = np.asarray(x, dtype=float).reshape(-1)
    n = x.size
    r = float(np.sqrt(np.dot(x, x)))
    if r <= profile.rho:
        return np.zeros((n, n))
    u = x / r
    d1 = float(profile.radial_d1(r))
    d2 = float(profile.radial_d2(r))
    uu = np.outer(u, u)
    return d2 * uu + (d1 / r) * (np.eye(n) - uu)


# ---- angular averaging --------------------------------------------------

_GL_CACHE = {}


def _gl_nodes(order):
    if order not in _GL_CACHE:
        _GL_CACHE[order] = np.polynomial.legendre.leggauss(order)
    return _GL_CACHE[order]


def _shifted_norms(x, r, cosines):
    """|x + r u| for unit u at the given cosines against x."""
    big_r = float(np.sqrt(np.dot(x, x)))
    val = big_r * big_r + 2.0 * big_r * np.asarray(r)[..., None] * cosines \
        + np.asarray(r)[..., None] ** 2
    return np.sqrt(np.maximum(val, 0.0))


def make_angular_average(profile, x, law):
    """Returns mean_u V(x + r u) as a vectorized function of r.

    Exact finite sums for the sign, coordinate, and one-sided laws; fixed
    Gauss-Legendre rules in the isotropic case, with the cosine weight of
    the sphere dimension folded in.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    n = x.size

    if law == DIRECTION_POSITIVE:
        def avg(r):
            return profile.radial(np.abs(x[0] + np.asarray(r, dtype=float)))
        return avg

    if law == DIRECTION_COORDINATE or n == 1:
        if n == 1:
            offsets = np.array([[1.0], [-1.0]])
        else:
            eye = np.eye(n)
            offsets = np.concatenate([eye, -eye], axis=0)

        def avg(r):
            r = np.asarray(r, dtype=float)
            pts = x[None, :] + r[..., None, None] * offsets[None, :, :]
            norms = np.sqrt(np.sum(pts * pts, axis=-1))
            return profile.radial(norms).mean(axis=-1)
        return avg

    if law != DIRECTION_ISOTROPIC:
        raise DomainError("unknown direction law %r" % (law,))

    if n == 2:
        theta, w = _gl_nodes(96)
        ang = 0.5 * math.pi * (theta + 1.0)   # map to (0, pi)
        cosines = np.cos(ang)
        weights = w / w.sum()
    else:
        c, w = _gl_nodes(96)
        power = 0.5 * (n - 3)
        dens = (1.0 - c * c) ** power if power != 0.0 else np.ones_like(c)
        weights = w * dens
        weights = weights / weights.sum()
        cosines = c

    def avg(r):
        r = np.asarray(r, dtype=float)
        norms = _shifted_norms(x, r, cosines)
        return np.sum(profile.radial(norms) * weights, axis=-1)
    return avg


def _mean_direction_gradient(profile, x, law):
    """mean_u grad V(x).u: zero for symmetric laws."""
    if law == DIRECTION_POSITIVE:
        return float(grad_V(profile, x.reshape(1, -1))[0, 0])
    return 0.0


@dataclass(frozen=True)
class DriftDecomposition:
    """Generator of V at one state, split by mechanism."""

    drift_term: float
    diffusion_term: float
    small_jump_term: float
    large_jump_term: float
    total: float
    quad_errors: dict


def drift_decomposition(model, profile, params, x, rel_tol=1e-6, t=0.0):
    """Evaluate the generator applied to V at x, term by term.

    The drift term uses the model's declared drift, and the large-jump
    compensation indicator follows the declared convention, so the total
    is convention-independent.  Small jumps below a cancellation-limited
    radius are integrated through the exact second-order Taylor value of
    the angular average.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != model.dimension:
        raise DomainError("state has dimension %d, expected %d"
                          % (x.size, model.dimension))
    errors = {}

    g = grad_V(profile, x.reshape(1, -1))[0]
    a_decl = np.asarray(model.drift(t, x.reshape(1, -1)), dtype=float)[0]
    term_drift = float(np.dot(g, a_decl))

    hess = hess_V(profile, x)
    big_b = model.diffusion_squared(t, x)
    term_diff = 0.5 * float(np.trace(hess @ big_b))

    term_small = 0.0
    term_large = 0.0
    kernel = model.kernel
    if kernel is not None:
        law = kernel.direction_law
        v_here = float(eval_V(profile, x))
        avg = make_angular_average(profile, x, law)
        mean_grad = _mean_direction_gradient(profile, x, law)
        big_r = float(np.sqrt(np.dot(x, x)))

        if kernel.small_jump_model == SMALL_STABLE_LIKE:
            s = kernel.small_exponent
            # below this radius the centered average is pure cancellation;
            # swap in its exact quadratic limit and integrate it in closed form
            r_switch = min(0.5, max(1e-6, 3e-4 * big_r))
            mean_quad = float(np.trace(hess)) / x.size
            if law == DIRECTION_POSITIVE:
                mean_quad = float(hess[0, 0])
            taylor = 0.5 * mean_quad * kernel.small_radial_moment(2.0, 0.0, r_switch)

            def small_integrand(r):
                centered = avg(np.array([r]))[0] - v_here - r * mean_grad
                return centered * s * r ** (-s - 1.0)

            val, err = integrate.quad(small_integrand, r_switch, 1.0,
                                      epsabs=1e-14, epsrel=rel_tol, limit=200)
            term_small = taylor + val
            errors["small_jump"] = err

        if params is not None and params.p >= kernel.tail_exponent:
            raise DivergentIntegralError(
                "large-jump integral of V diverges: p=%g >= tail exponent %g"
                % (params.p, kernel.tail_exponent))
        compensate = 1.0 if model.drift_convention == CONVENTION_FULL else 0.0
        alpha = kernel.tail_exponent

        def large_integrand(r):
            centered = avg(np.array([r]))[0] - v_here - compensate * r * mean_grad
            return centered * alpha * r ** (-alpha - 1.0)

        mid = 1.0 + 2.0 * max(big_r, 1.0)
        interior = sorted({p for p in (big_r - 1.0, big_r, big_r + 1.0)
                           if 1.0 < p < mid})
        val1, err1 = integrate.quad(large_integrand, 1.0, mid,
                                    points=interior or None,
                                    epsabs=1e-14, epsrel=rel_tol, limit=200)

        # tail piece under u = r**-alpha (the tail CDF), which turns the
        # slowly decaying integrand into a finite integral whose endpoint
        # singularity u**(-p/alpha) QAGS extrapolates cleanly; integrating
        # in r directly loses most digits once p is close to alpha
        def tail_integrand(u):
            r = u ** (-1.0 / alpha)
            return avg(np.array([r]))[0] - v_here - compensate * r * mean_grad

        val2, err2 = integrate.quad(tail_integrand, 0.0, mid ** (-alpha),
                                    epsabs=1e-14, epsrel=rel_tol, limit=200)
        term_large = val1 + val2
        errors["large_jump"] = err1 + err2

    total = term_drift + term_diff + term_small + term_large
    return DriftDecomposition(
        drift_term=term_drift,
        diffusion_term=term_diff,
        small_jump_term=term_small,
        large_jump_term=term_large,
        total=total,
        quad_errors=errors,
    )


# ---- certification ------------------------------------------------------

@dataclass
class LyapunovCertificate:
    passed: bool
    big_c: float
    small_c: float
    gamma: float
    c_star: float
    v_star: float
    v_star_radius: float
    worst_margin: float
    radii: np.ndarray
    generator_by_radius: np.ndarray   # max over directions
    decay_by_radius: np.ndarray       # c_V * V^gamma
    excess_by_radius: np.ndarray      # generator + decay
    directions_per_radius: int
    rel_tol: float
    notes: tuple

    def as_rows(self):
        return [(float(r), float(a), float(d), float(e)) for r, a, d, e in
                zip(self.radii, self.generator_by_radius,
                    self.decay_by_radius, self.excess_by_radius)]


def default_decay_coefficient(params):
    """0.9 p beta, with the diffusion correction at the critical boundary."""
    p, beta = params.p, params.beta
    if params.kappa == -1.0:
        ok, detail = critical_conditions(params)
        if ok is None:
            raise CertificationError(
                "critical boundary needs a stated second-moment bound (%s)" % detail)
        if not ok:
            raise CertificationError(
                "critical boundary conditions fail: %s" % detail)
        second = params.c_second if params.c_second is not None else 0.0
        correction = 0.5 * p * (params.c_tr + (p - 2.0) * params.c_op
                                + (p - 1.0) * second)
        value = 0.9 * (p * beta - correction)
        if value <= 0:
            raise CertificationError(
                "no positive decay coefficient at the critical boundary "
                "(p*beta=%g, correction=%g)" % (p * beta, correction))
        return value
    return 0.9 * p * beta


def certify_L_condition(model, profile, params, radii=None,
                        directions_per_radius=16, small_c=None,
                        rel_tol=1e-6, c_star_fraction=C_STAR_FRACTION,
                        seed=0):
    """Fit and check (generator V) <= C_V - c_V V^gamma on a grid.

    C_V is the smallest nonnegative constant making the inequality hold at
    every grid point for the given c_V.  The fit is rejected when the
    excess still dominates at the outer radii, which is the signature of a
    model whose generator does not decay at the claimed rate.  V_star
    marks the smallest grid level beyond which the pure-decay inequality
    (generator V) <= -c_star V^gamma holds at every larger radius.
    """
    if not check_balance(params):
        raise CertificationError(
            "balance p + kappa > 1 fails (p=%g, kappa=%g): no decay exponent"
            % (params.p, params.kappa))
    gamma = (params.p + params.kappa - 1.0) / params.p
    if small_c is None:
        small_c = default_decay_coefficient(params)
    if small_c <= 0:
        raise CertificationError("decay coefficient must be positive")
    if radii is None:
        radii = default_radii(params.r0)
    radii = np.asarray(radii, dtype=float)
    dirs = direction_grid(model.dimension, directions_per_radius, seed=seed)

    gen_max = np.empty(radii.size)
    decay = np.empty(radii.size)
    quad_err = 0.0
    for i, radius in enumerate(radii):
        worst = -math.inf
        for u in dirs:
            dec = drift_decomposition(model, profile, params, radius * u,
                                      rel_tol=rel_tol)
            worst = max(worst, dec.total)
            quad_err = max(quad_err, sum(dec.quad_errors.values()))
        gen_max[i] = worst
        decay[i] = small_c * float(profile.radial(radius)) ** gamma
    excess = gen_max + decay

    big_c = max(0.0, float(excess.max()))
    worst_margin = big_c - float(excess.max())

    notes = []
    tail = excess[-_TAIL_POINTS:]
    tail_ok = np.all(tail <= _TAIL_EXCESS_RTOL * decay[-_TAIL_POINTS:])
    if not tail_ok:
        notes.append("excess persists at the outer radii: the generator does "
                     "not decay at rate c_V V^gamma")

    c_star = c_star_fraction * small_c
    v_star = math.inf
    v_star_radius = math.inf
    pure = gen_max + c_star * profile.radial(radii) ** gamma
    ok_from = None
    for j in range(radii.size - 1, -1, -1):
        if pure[j] <= _TAIL_EXCESS_RTOL * decay[j]:
            ok_from = j
        else:
            break
    if ok_from is not None:
        v_star_radius = float(radii[ok_from])
        v_star = float(profile.radial(v_star_radius))
    elif tail_ok:
        notes.append("no grid radius reaches pure decay at c_star")

    cert = LyapunovCertificate(
        passed=bool(tail_ok),
        big_c=big_c,
        small_c=float(small_c),
        gamma=float(gamma),
        c_star=float(c_star),
        v_star=v_star,
        v_star_radius=v_star_radius,
        worst_margin=float(worst_margin),
        radii=radii,
        generator_by_radius=gen_max,
        decay_by_radius=decay,
        excess_by_radius=excess,
        directions_per_radius=dirs.shape[0],
        rel_tol=rel_tol,
        notes=tuple(notes),
    )
    done = replace(profile, gamma=float(gamma), big_c=big_c,
                   small_c=float(small_c), v_star=v_star, c_star=float(c_star))
    return done, cert


# ---- flow transforms and envelopes --------------------------------------

def flow_H(gamma, c_star, t, v):
    """Inverse-flow transform ((1-gamma) c t + v^(1-gamma))^(1/(1-gamma)).

    Defined for gamma in (0, 1); it satisfies the semigroup identity
    H(s+t, v) = H(s, H(t, v)) and H(0, v) = v.
    """
    if not 0.0 < gamma < 1.0:
        raise DomainError("flow transform needs gamma in (0, 1), got %g" % gamma)
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any(v < 0) or np.any(t < 0):
        raise DomainError("flow transform needs nonnegative time and value")
    q = 1.0 - gamma
    out = (q * c_star * t + v ** q) ** (1.0 / q)
    if out.shape == ():
        return float(out)
    return out


def flow_phi(gamma, v):
    """Antiderivative scale (v^(1-gamma) - 1)/(1-gamma), increasing in v."""
    if gamma == 1.0:
        return np.log(np.asarray(v, dtype=float))
    q = 1.0 - gamma
    return (np.asarray(v, dtype=float) ** q - 1.0) / q


def flow_phi_inverse(gamma, w):
    if gamma == 1.0:
        return np.exp(np.asarray(w, dtype=float))
    q = 1.0 - gamma
    base = 1.0 + q * np.asarray(w, dtype=float)
    if np.any(base <= 0):
        raise DomainError("value outside the range of the transform")
    return base ** (1.0 / q)


def solve_upsilon(gamma, c_upper, c_lower, v0, t_grid, rtol=1e-10, atol=1e-12):
    """Envelope ODE v' = C - c v^gamma for gamma >= 1, on a time grid.

    The closed forms exist at gamma = 1 and gamma = 2; this integrates the
    general case and is checked against them.
    """
    if gamma < 1.0:
        raise DomainError("envelope ODE is used for gamma >= 1; "
                          "use flow_H below 1")
    if c_lower <= 0:
        raise DomainError("decay coefficient must be positive")
    if v0 < 0:
        raise DomainError("envelope starts nonnegative")
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    if t_grid.size == 0:
        return np.empty(0)

    def rhs(t, y):
        v = y[0]
        # odd extension keeps the solver defined if it probes below zero
        return [c_upper - c_lower * math.copysign(abs(v) ** gamma, v)]

    t_end = float(t_grid.max())
    sol = solve_ivp(rhs, (0.0, max(t_end, 1e-300)), [float(v0)],
                    method="LSODA", t_eval=t_grid, rtol=rtol, atol=atol)
    if not sol.success:
        raise CertificationError("envelope ODE solve failed: %s" % sol.message)
    out = sol.y[0]
    if out.size == 1 and np.isscalar(t_grid[0]):
        return out
    return out


def radial_transform_U(kappa, x):
    """|x|^(1-kappa), the scale in which superlinear descent is linear."""
    x = np.asarray(x, dtype=float)
    r = np.sqrt(np.sum(x * x, axis=-1))
    if kappa > 1.0 and np.any(r == 0.0):
        raise SingularityError("transform is singular at the origin for kappa > 1")
    out = r ** (1.0 - kappa)
    if out.shape == ():
        return float(out)
    return out


def radial_decay_rate(beta, kappa):
    """Constant decay rate of the transformed radius for kappa > 1."""
    if kappa <= 1.0:
        raise DomainError("the transformed rate is constant only for kappa > 1")
    return beta * (kappa - 1.0)
