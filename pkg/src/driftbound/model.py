"""Model descriptions and assumption certificates.

A model is a drift, an optional diffusion factor, and an optional jump
kernel.  The kernel fixes the tail law of large jumps (Pareto, normalized
so that the mass above radius 1 is exactly 1), a direction law, and an
optional small-jump component.  Dissipativity and kernel-moment
assumptions are stated as a parameter block and checked numerically,
producing certificates that downstream bounds cite.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import CertificationError, DivergentIntegralError, DomainError
from .rng import RandomStream
from . import sampling

DIRECTION_ISOTROPIC = "isotropic"
DIRECTION_POSITIVE = "positive"      # one-sided along +e1, dimension 1 only
DIRECTION_COORDINATE = "coordinate"  # one random axis, random sign

SMALL_NONE = "none"
SMALL_STABLE_LIKE = "stable_like"
SMALL_GAUSSIAN_PROXY = "gaussian_proxy"

CONVENTION_TRUNCATED = "truncated"            # drift compensates |z| <= 1 only
CONVENTION_FULL = "fully_compensated"         # drift compensates all jumps

# relative slack for equality-margin dissipativity checks
MARGIN_RTOL = 1e-9

# Claims that certificates and scenario gates cite.  Ids are stable; the
# text is a reminder of what each one asserts.
CLAIMS = {
    "drift-dissipativity": "radial drift dominance -a(x).x >= beta |x|^(1+kappa) outside a ball",
    "kernel-moment-bounds": "stated small-jump and tail moment constants bound the kernel integrals",
    "lyapunov-drift-condition": "certified decay inequality for the generator applied to the Lyapunov norm power",
    "uniform-moment-bound": "time-uniform moment bound at admissible orders",
    "cesaro-moment-bound": "time-averaged moment bound at admissible orders",
    "moment-order-optimality": "moments diverge beyond the admissible order cutoff",
    "passage-time-polynomial": "return times have finite moments up to the polynomial cutoff",
    "passage-time-exponential": "return times have finite exponential moments below the rate cutoff",
    "uniform-in-x0-bound": "moment bounds do not depend on the starting point",
    "superlinear-passage-time": "return from far initial points happens on the relaxation time scale",
    "relaxation-time-scale": "median return time tracks the deterministic decay solution",
    "critical-balance-threshold": "boundary dissipativity still yields bounds under strict noise-size conditions",
    "storage-tail-lower-bound": "explicit tail lower bound for the storage system",
    "stationary-moment-threshold": "stationary diffusion moments are finite exactly below the threshold order",
}


def _as_state(x, dimension):
    x = np.asarray(x, dtype=float)
    if x.shape == () and dimension == 1:
        x = x.reshape(1)
    if x.shape[-1] != dimension:
        raise DomainError("state has trailing dimension %d, expected %d"
                          % (x.shape[-1], dimension))
    return x


@dataclass(frozen=True)
class JumpKernel:
    """Jump intensity with Pareto tail and optional small-jump component.

    The tail is normalized so that the intensity of magnitudes above x is
    x**(-tail_exponent) for x >= 1; in particular large jumps arrive at
    unit rate.  The small component, when present, is either a stable-like
    magnitude density small_exponent * r**(-small_exponent-1) on (0, 1] or
    an explicit Gaussian proxy with per-coordinate variance rate
    proxy_variance.  state_modulation, if given, maps (t, x, z) to the
    displacement actually applied.
    """

    tail_exponent: float
    dimension: int = 1
    direction_law: str = DIRECTION_ISOTROPIC
    small_jump_model: str = SMALL_NONE
    small_exponent: float | None = None
    proxy_variance: float = 0.0
    truncation_eps: float = 0.05
    state_modulation: object = None

    def __post_init__(self):
        if self.tail_exponent <= 0:
            raise DomainError("tail exponent must be positive")
        if self.dimension < 1:
            raise DomainError("dimension must be at least 1")
        if self.direction_law not in (DIRECTION_ISOTROPIC, DIRECTION_POSITIVE,
                                      DIRECTION_COORDINATE):
            raise DomainError("unknown direction law %r" % (self.direction_law,))
        if self.direction_law == DIRECTION_POSITIVE and self.dimension != 1:
            raise DomainError("one-sided jumps are only defined in dimension 1")
        if self.small_jump_model not in (SMALL_NONE, SMALL_STABLE_LIKE,
                                         SMALL_GAUSSIAN_PROXY):
            raise DomainError("unknown small-jump model %r" % (self.small_jump_model,))
        if self.small_jump_model == SMALL_STABLE_LIKE:
            if self.small_exponent is None or not 0 < self.small_exponent < 2:
                raise DomainError("stable-like small jumps need an index in (0, 2)")
        if self.small_jump_model == SMALL_GAUSSIAN_PROXY and self.proxy_variance < 0:
            raise DomainError("proxy variance must be nonnegative")
        if not 0 < self.truncation_eps < 1:
            raise DomainError("truncation threshold must lie in (0, 1)")

    # ---- large component ------------------------------------------------

    def large_rate(self):
        """Total intensity of magnitudes above 1 (unit by normalization)."""
        return 1.0

    def large_survival(self, x):
        return np.asarray(x, dtype=float) ** (-self.tail_exponent)

    def large_abs_moment(self, q):
        """Integral of |z|**q over magnitudes above 1."""
        a = self.tail_exponent
        if q >= a:
            raise DivergentIntegralError(
                "tail moment of order %g diverges for tail exponent %g" % (q, a))
        return a / (a - q)

    def large_mean_vector(self):
        """Mean displacement of the large component, as a vector."""
        if self.direction_law == DIRECTION_POSITIVE:
            m = self.large_abs_moment(1.0)
            return np.array([m])
        return np.zeros(self.dimension)

    # ---- small component ------------------------------------------------

    def small_second_moment(self):
        """Integral of |z|**2 over magnitudes at most 1 (proxy excluded)."""
        if self.small_jump_model == SMALL_STABLE_LIKE:
            s = self.small_exponent
            return s / (2.0 - s)
        return 0.0

    def small_radial_mass(self, lo, hi):
        """Intensity of magnitudes in (lo, hi] for the stable-like part."""
        if self.small_jump_model != SMALL_STABLE_LIKE:
            return 0.0
        s = self.small_exponent
        return lo ** (-s) - hi ** (-s)

    def small_radial_moment(self, q, lo, hi):
        """Integral of r**q over stable-like magnitudes in (lo, hi]."""
        if self.small_jump_model != SMALL_STABLE_LIKE:
            return 0.0
        s = self.small_exponent
        if abs(q - s) < 1e-14:
            return s * math.log(hi / lo)
        return s / (q - s) * (hi ** (q - s) - lo ** (q - s))

    def truncation_drift(self, threshold):
        """Mean displacement of small jumps in (threshold, 1].

        Zero for symmetric direction laws; for the one-sided law it is the
        first radial moment of the band, pointing along +e1.
        """
        if self.direction_law != DIRECTION_POSITIVE:
            return np.zeros(self.dimension)
        m = self.small_radial_moment(1.0, threshold, 1.0)
        return np.array([m])

    def sub_threshold_covariance(self, threshold):
        """Proxy covariance rate matching stable-like jumps below threshold.

        Both symmetric direction laws spread the radial second moment
        evenly over coordinates.
        """
        n = self.dimension
        if self.small_jump_model != SMALL_STABLE_LIKE:
            return np.zeros((n, n))
        m2 = self.small_radial_moment(2.0, 0.0, threshold)
        if self.direction_law == DIRECTION_POSITIVE:
            return np.array([[m2]])
        return (m2 / n) * np.eye(n)

    def sub_threshold_mean(self, threshold):
        """Mean of stable-like jumps below threshold (one-sided law only)."""
        if (self.small_jump_model != SMALL_STABLE_LIKE
                or self.direction_law != DIRECTION_POSITIVE):
            return np.zeros(self.dimension)
        s = self.small_exponent
        if s >= 1:
            raise DivergentIntegralError(
                "sub-threshold mean diverges for one-sided index %g >= 1" % s)
        return np.array([self.small_radial_moment(1.0, 0.0, threshold)])

    # ---- sampling helpers ----------------------------------------------

    def draw_directions(self, stream, count):
        """(count, dimension) unit vectors under the direction law."""
        n = self.dimension
        if self.direction_law == DIRECTION_POSITIVE:
            return np.ones((count, 1))
        if self.direction_law == DIRECTION_COORDINATE:
            u_axis = stream.uniform(count)
            u_sign = stream.uniform(count)
            idx = np.minimum((u_axis * n).astype(int), n - 1)
            out = np.zeros((count, n))
            out[np.arange(count), idx] = np.where(u_sign < 0.5, -1.0, 1.0)
            return out
        if n == 1:
            u = stream.uniform(count)
            return np.where(u < 0.5, -1.0, 1.0).reshape(count, 1)
        g = stream.normal((count, n))
        norm = np.linalg.norm(g, axis=1, keepdims=True)
        # zero norm has probability zero; fall back to e1 defensively
        bad = norm[:, 0] == 0.0
        if bad.any():
            g[bad] = 0.0
            g[bad, 0] = 1.0
            norm[bad] = 1.0
        return g / norm

    def draw_large_magnitudes(self, stream, count):
        return sampling.sample_pareto_magnitude(self.tail_exponent, stream, count)

    def draw_small_magnitudes(self, stream, count):
        """Magnitudes in (truncation_eps, 1] for the stable-like part."""
        s = self.small_exponent
        eps = self.truncation_eps
        u = stream.uniform(count)
        # inverse conditional survival on the band
        return (1.0 + u * (eps ** (-s) - 1.0)) ** (-1.0 / s)

    def small_event_rate(self):
        if self.small_jump_model != SMALL_STABLE_LIKE:
            return 0.0
        return self.small_radial_mass(self.truncation_eps, 1.0)


@dataclass
class ModelSpec:
    """Drift, diffusion factor, and jump kernel of one model.

    drift is (t, x) -> array, vectorized over leading axes of x.
    diffusion is None, a constant (dimension, m) factor, or a callable
    (t, x) -> (..., dimension, m).  drift_convention records which jumps
    the declared drift already compensates; conversions between the two
    conventions use the kernel's large-jump mean.
    """

    dimension: int
    drift: object
    diffusion: object = None
    kernel: JumpKernel | None = None
    drift_convention: str = CONVENTION_TRUNCATED
    clamp_nonnegative: bool = False
    name: str = "generic"

    def __post_init__(self):
        if self.dimension < 1:
            raise DomainError("dimension must be at least 1")
        if self.kernel is not None and self.kernel.dimension != self.dimension:
            raise DomainError("kernel dimension %d does not match model dimension %d"
                              % (self.kernel.dimension, self.dimension))
        if self.drift_convention not in (CONVENTION_TRUNCATED, CONVENTION_FULL):
            raise DomainError("unknown drift convention %r" % (self.drift_convention,))
        if self.diffusion is not None and not callable(self.diffusion):
            d = np.atleast_2d(np.asarray(self.diffusion, dtype=float))
            if d.shape[0] != self.dimension:
                raise DomainError("diffusion factor has %d rows, expected %d"
                                  % (d.shape[0], self.dimension))
            self.diffusion = d

    @property
    def noise_dim(self):
        if self.diffusion is None:
            return 0
        if callable(self.diffusion):
            probe = self.diffusion(0.0, np.zeros(self.dimension))
            return np.asarray(probe).shape[-1]
        return self.diffusion.shape[1]

    def diffusion_at(self, t, x):
        if self.diffusion is None:
            return None
        if callable(self.diffusion):
            return np.asarray(self.diffusion(t, x), dtype=float)
        return self.diffusion

    def diffusion_squared(self, t, x):
        """B(t, x) = sigma sigma^T at one point, proxy variance included."""
        n = self.dimension
        b = np.zeros((n, n))
        s = self.diffusion_at(t, np.asarray(x, dtype=float))
        if s is not None:
            s = np.atleast_2d(s)
            b = b + s @ s.T
        if self.kernel is not None:
            if self.kernel.small_jump_model == SMALL_GAUSSIAN_PROXY:
                b = b + self.kernel.proxy_variance * np.eye(n)
        return b

    def physical_drift(self, t, x):
        """Drift actually integrated between plain (uncompensated) jumps."""
        a = np.asarray(self.drift(t, x), dtype=float)
        if self.drift_convention == CONVENTION_FULL and self.kernel is not None:
            a = a - self.kernel.large_mean_vector()
        return a

    def effective_drift(self, t, x, p):
        """Drift against which dissipativity at moment order p is read.

        For p >= 1 the large-jump mean must be folded in, which requires a
        finite first tail moment.
        """
        a = self.physical_drift(t, x)
        if p >= 1 and self.kernel is not None:
            a = a + self.kernel.large_mean_vector()
        return a


@dataclass(frozen=True)
class DissipativityParams:
    """Assumption constants: moment order, drift shape, and kernel bounds.

    p is the kernel moment order, kappa the drift power, beta and r0 the
    dissipativity strength and radius.  The c_* fields bound the diffusion
    operator norm and trace, the small-jump second moment, the tail
    p-moment, and (optionally) the full second moment.  None means "not
    stated"; certificates can infer the value instead of checking it.
    """

    p: float
    kappa: float
    beta: float
    r0: float = 1.0
    c_op: float = 0.0
    c_tr: float = 0.0
    c_small: float | None = None
    c_large_p: float | None = None
    c_second: float | None = None

    def __post_init__(self):
        if self.p <= 0:
            raise DomainError("moment order p must be positive")
        if self.kappa < -1:
            raise DomainError("drift power below -1 is outside the covered range")
        if self.beta <= 0:
            raise DomainError("dissipativity strength must be positive")
        if self.r0 <= 0:
            raise DomainError("dissipativity radius must be positive")
        if self.c_op < 0 or self.c_tr < 0:
            raise DomainError("diffusion bounds must be nonnegative")
        for name in ("c_small", "c_large_p", "c_second"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise DomainError("%s must be nonnegative" % name)


def check_balance(params):
    """Strict balance p + kappa > 1 between tail weight and drift power."""
    return params.p + params.kappa > 1.0


@dataclass(frozen=True)
class ExponentReport:
    """Derived exponents and the claims they activate."""

    balance_ok: bool
    gamma: float
    admissible_order_sup: float
    passage_moment_order: float | None
    exp_rate_sup: float | None
    critical_ok: bool | None
    claims: tuple


def critical_conditions(params):
    """The two strict conditions required at the boundary kappa = -1.

    Returns (ok, detail) where ok is None when the needed constants are
    not stated.
    """
    if params.c_second is None:
        return None, "second-moment bound not stated"
    lhs = params.c_tr + params.c_second
    cond1 = lhs < 2.0 * params.beta
    denom = params.c_op + params.c_second
    if denom == 0.0:
        cond2 = True
        p_cap = math.inf
    else:
        p_cap = 2.0 + (2.0 * params.beta - lhs) / denom
        cond2 = params.p < p_cap
    detail = ("trace+second=%g vs 2*beta=%g; p=%g vs cap=%g"
              % (lhs, 2.0 * params.beta, params.p, p_cap))
    return cond1 and cond2, detail


def exponent_report(params):
    p, kappa, beta = params.p, params.kappa, params.beta
    balance = check_balance(params)
    gamma = (p + kappa - 1.0) / p
    admissible = p + kappa - 1.0
    passage = None
    exp_rate = None
    critical_ok = None
    claims = []
    if balance:
        claims.append("uniform-moment-bound")
        claims.append("cesaro-moment-bound")
        if kappa < 1.0:
            passage = p / (1.0 - kappa)
            claims.append("passage-time-polynomial")
        elif kappa == 1.0:
            exp_rate = p * beta
            claims.append("passage-time-exponential")
        else:
            claims.append("uniform-in-x0-bound")
            claims.append("superlinear-passage-time")
        if kappa == -1.0:
            critical_ok, _ = critical_conditions(params)
            claims.append("critical-balance-threshold")
            if not critical_ok:
                # boundary case without the strict noise conditions: no bound
                claims = ["critical-balance-threshold"]
    return ExponentReport(
        balance_ok=balance,
        gamma=gamma,
        admissible_order_sup=admissible,
        passage_moment_order=passage,
        exp_rate_sup=exp_rate,
        critical_ok=critical_ok,
        claims=tuple(claims),
    )


# ---- direction grids ----------------------------------------------------

def direction_grid(dimension, count, seed=0):
    """Deterministic well-spread unit vectors.

    Dimension 1 uses both signs, 2 an even angular grid, 3 a Fibonacci
    sphere; higher dimensions fall back to seeded normalized Gaussians.
    """
    n = dimension
    if n == 1:
        return np.array([[1.0], [-1.0]])
    if n == 2:
        ang = 2.0 * math.pi * np.arange(count) / count
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)
    if n == 3:
        i = np.arange(count) + 0.5
        z = 1.0 - 2.0 * i / count
        phi = i * (math.pi * (3.0 - math.sqrt(5.0)))
        r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
        return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    g = RandomStream(seed, 0).normal((count, n))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def default_radii(r0, span=1e4, count=12):
    """Geometric radius grid from r0 out to span * r0."""
    return r0 * np.geomspace(1.0, span, count)


# ---- certificates -------------------------------------------------------

@dataclass
class DissipativityCertificate:
    passed: bool
    worst_margin: float           # relative to beta |x|^(1+kappa)
    worst_radius: float
    worst_direction: np.ndarray
    beta: float
    kappa: float
    radii: np.ndarray
    directions_per_radius: int
    margin_by_radius: np.ndarray  # min over directions, relative
    convention: str

    def as_rows(self):
        return [(float(r), float(m)) for r, m in
                zip(self.radii, self.margin_by_radius)]


def verify_dissipativity(model, params, radii=None, directions_per_radius=64,
                         t=0.0, seed=0):
    """Check -a(x).x >= beta |x|^(1+kappa) on a radius/direction grid.

    a is the effective drift at order p (large-jump mean folded in when
    p >= 1).  Margins are reported relative to beta |x|^(1+kappa), so an
    exact-equality model certifies with margin 0 up to rounding.
    """
    if radii is None:
        radii = default_radii(params.r0)
    radii = np.asarray(radii, dtype=float)
    if np.any(radii < params.r0 * (1.0 - 1e-12)):
        raise DomainError("dissipativity is only asserted at radii >= r0")
    dirs = direction_grid(model.dimension, directions_per_radius, seed=seed)
    k = dirs.shape[0]
    margins = np.empty((radii.size, k))
    for i, radius in enumerate(radii):
        x = radius * dirs
        a = model.effective_drift(t, x, params.p)
        if not np.all(np.isfinite(a)):
            raise CertificationError(
                "drift evaluation is not finite at radius %g" % radius)
        radial = np.sum(a * x, axis=-1)
        need = params.beta * radius ** (1.0 + params.kappa)
        margins[i] = (-radial - need) / need
    by_radius = margins.min(axis=1)
    flat = int(np.argmin(margins))
    i, j = divmod(flat, k)
    worst = float(margins[i, j])
    return DissipativityCertificate(
        passed=bool(worst >= -MARGIN_RTOL),
        worst_margin=worst,
        worst_radius=float(radii[i]),
        worst_direction=dirs[j].copy(),
        beta=params.beta,
        kappa=params.kappa,
        radii=radii,
        directions_per_radius=k,
        margin_by_radius=by_radius,
        convention=("effective" if params.p >= 1 else "physical"),
    )


@dataclass
class KernelCertificate:
    passed: bool
    small_sq: float
    small_sq_stated: float | None
    large_p: float
    large_p_stated: float | None
    second: float | None
    second_stated: float | None
    quad_errors: dict
    notes: tuple


def verify_kernel_bounds(kernel, params, rel_tol=1e-9):
    """Check stated kernel moment constants against quadrature.

    Closed forms exist for every preset law; quadrature is still run and
    compared so that the certificate does not depend on the closed forms
    alone.  A requested order at or above the tail exponent raises.
    """
    a = kernel.tail_exponent
    notes = []
    errs = {}

    # small-jump second moment over magnitudes <= 1
    small_closed = kernel.small_second_moment()
    if kernel.small_jump_model == SMALL_STABLE_LIKE:
        s = kernel.small_exponent
        val, err = integrate.quad(lambda r: r * r * s * r ** (-s - 1.0),
                                  0.0, 1.0, epsabs=0.0, epsrel=1e-11)
        errs["small_sq"] = err
        if not math.isclose(val, small_closed, rel_tol=1e-7):
            raise CertificationError(
                "small-jump quadrature %g disagrees with closed form %g"
                % (val, small_closed))
    if kernel.small_jump_model == SMALL_GAUSSIAN_PROXY:
        notes.append("gaussian proxy counts toward diffusion bounds, not c_small")

    # tail moment of order p
    if params.p >= a:
        raise DivergentIntegralError(
            "tail moment of order %g diverges for tail exponent %g"
            % (params.p, a))
    large_closed = kernel.large_abs_moment(params.p)
    val, err = integrate.quad(lambda r: r ** params.p * a * r ** (-a - 1.0),
                              1.0, np.inf, epsabs=0.0, epsrel=1e-11)
    errs["large_p"] = err
    if not math.isclose(val, large_closed, rel_tol=1e-7):
        raise CertificationError(
            "tail-moment quadrature %g disagrees with closed form %g"
            % (val, large_closed))

    # full second moment, needed when p >= 2 or at the critical boundary
    second = None
    want_second = params.p >= 2 or params.c_second is not None
    if want_second:
        if a <= 2:
            if params.c_second is not None:
                raise DivergentIntegralError(
                    "second moment diverges for tail exponent %g" % a)
            notes.append("second moment diverges; orders p >= 2 unavailable")
        else:
            second = small_closed + kernel.large_abs_moment(2.0)

    def ok(stated, computed):
        if stated is None or computed is None:
            return True
        return computed <= stated * (1.0 + rel_tol) + 1e-12

    passed = (ok(params.c_small, small_closed)
              and ok(params.c_large_p, large_closed)
              and ok(params.c_second, second))
    return KernelCertificate(
        passed=bool(passed),
        small_sq=small_closed,
        small_sq_stated=params.c_small,
        large_p=large_closed,
        large_p_stated=params.c_large_p,
        second=second,
        second_stated=params.c_second,
        quad_errors=errs,
        notes=tuple(notes),
    )
