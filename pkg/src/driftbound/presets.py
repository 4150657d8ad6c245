"""Built-in model families used by the scenarios and the CLI.

Each preset comes as a pair of factories: one for the ModelSpec and one
for the assumption constants that go with it.  Constants are exact closed
forms of the preset laws, so kernel certificates check them rather than
infer them.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import ConfigError, DomainError
from .model import (CONVENTION_FULL, CONVENTION_TRUNCATED, DIRECTION_COORDINATE,
                    DIRECTION_ISOTROPIC, DIRECTION_POSITIVE, SMALL_NONE,
                    SMALL_STABLE_LIKE, DissipativityParams, JumpKernel, ModelSpec)


# ---- storage system -----------------------------------------------------

def _storage_release_rate(kappa):
    def rate(y):
        # y = |x|; power rate above 1, linear taper below keeps the origin regular
        ys = np.maximum(y, 1.0)
        return np.where(y > 1.0, ys ** kappa, y)
    return rate


def storage(kappa=0.0, alpha=2.5, compensated=False):
    """One-dimensional release/arrival system with one-sided Pareto jumps.

    The declared drift is -r(|x|) sgn(x) with r(y) = y**kappa above 1 and
    a linear taper below.  compensated=True declares the drift under the
    fully compensated convention, so the physically integrated drift gains
    a -mean(large jumps) correction and the state may dip negative; the
    raw variant keeps plain jumps and clamps at zero instead.
    """
    rate = _storage_release_rate(kappa)

    def drift(t, x):
        y = np.abs(x)
        return -np.sign(x) * rate(y)

    kernel = JumpKernel(tail_exponent=alpha, dimension=1,
                        direction_law=DIRECTION_POSITIVE)
    return ModelSpec(
        dimension=1,
        drift=drift,
        diffusion=None,
        kernel=kernel,
        drift_convention=CONVENTION_FULL if compensated else CONVENTION_TRUNCATED,
        clamp_nonnegative=not compensated,
        name="storage",
    )


def storage_params(kappa=0.0, alpha=2.5, p=1.4):
    if p >= alpha:
        raise DomainError("storage moment order p=%g needs p < alpha=%g" % (p, alpha))
    c_second = None
    if alpha > 2.0 and p >= 2.0:
        c_second = alpha / (alpha - 2.0)
    return DissipativityParams(
        p=p, kappa=kappa, beta=1.0, r0=1.0,
        c_op=0.0, c_tr=0.0, c_small=0.0,
        c_large_p=alpha / (alpha - p),
        c_second=c_second,
    )


# ---- linear Ornstein-Uhlenbeck ------------------------------------------

def linear_ou(beta=1.0, alpha=2.0, scale=1.0):
    """Linear pull -beta x driven by Gaussian (alpha=2) or stable-like noise.

    For alpha < 2 the noise is a symmetric pure-jump law: Pareto tail above
    1 and a matching stable-like density below, approximating a symmetric
    alpha-stable driver.
    """
    if beta <= 0:
        raise DomainError("mean-reversion rate must be positive")

    def drift(t, x):
        return -beta * x

    if alpha >= 2.0:
        return ModelSpec(dimension=1, drift=drift,
                         diffusion=np.array([[float(scale)]]),
                         kernel=None, name="linear_ou")
    kernel = JumpKernel(tail_exponent=alpha, dimension=1,
                        direction_law=DIRECTION_ISOTROPIC,
                        small_jump_model=SMALL_STABLE_LIKE,
                        small_exponent=alpha)
    return ModelSpec(dimension=1, drift=drift, diffusion=None,
                     kernel=kernel, name="linear_ou")


def linear_ou_params(beta=1.0, alpha=2.0, scale=1.0, p=None):
    if alpha >= 2.0:
        if p is None:
            p = 2.0
        s2 = float(scale) ** 2
        return DissipativityParams(p=p, kappa=1.0, beta=beta, r0=1.0,
                                   c_op=s2, c_tr=s2, c_small=0.0,
                                   c_large_p=0.0, c_second=0.0)
    if p is None:
        p = 0.9 * alpha
    if p >= alpha:
        raise DomainError("moment order p=%g needs p < alpha=%g" % (p, alpha))
    return DissipativityParams(p=p, kappa=1.0, beta=beta, r0=1.0,
                               c_op=0.0, c_tr=0.0,
                               c_small=alpha / (2.0 - alpha),
                               c_large_p=alpha / (alpha - p))


# ---- superlinear damping ------------------------------------------------

def superlinear(kappa=3.0, alpha=2.5, beta=1.0):
    """Odd power drift -beta |x|^(kappa-1) x with symmetric Pareto jumps."""
    if kappa < 1.0:
        raise DomainError("superlinear preset expects kappa >= 1")

    def drift(t, x):
        y = np.abs(x)
        with np.errstate(invalid="ignore"):
            g = np.where(y > 0.0, y ** (kappa - 1.0), 0.0)
        return -beta * g * x

    kernel = JumpKernel(tail_exponent=alpha, dimension=1,
                        direction_law=DIRECTION_ISOTROPIC)
    return ModelSpec(dimension=1, drift=drift, diffusion=None,
                     kernel=kernel, name="superlinear")


def superlinear_params(kappa=3.0, alpha=2.5, beta=1.0, p=2.4):
    if p >= alpha:
        raise DomainError("moment order p=%g needs p < alpha=%g" % (p, alpha))
    c_second = alpha / (alpha - 2.0) if (alpha > 2.0 and p >= 2.0) else None
    return DissipativityParams(p=p, kappa=kappa, beta=beta, r0=1.0,
                               c_op=0.0, c_tr=0.0, c_small=0.0,
                               c_large_p=alpha / (alpha - p),
                               c_second=c_second)


# ---- critical diffusion -------------------------------------------------

def gradient_diffusion(beta=2.0, sigma_sq=1.0):
    """Diffusion with drift -beta x / (1 + x^2), the boundary decay case.

    The radial drift bound with the nominal beta holds only in the large
    radius limit, so pointwise dissipativity checks at finite radius fall
    short of beta; the decay certificate is obtained directly from the
    generator inequality instead.
    """

    def drift(t, x):
        return -beta * x / (1.0 + x * x)

    return ModelSpec(dimension=1, drift=drift,
                     diffusion=np.array([[math.sqrt(sigma_sq)]]),
                     kernel=None, name="gradient_diffusion")


def gradient_diffusion_params(beta=2.0, sigma_sq=1.0, p=3.0):
    return DissipativityParams(p=p, kappa=-1.0, beta=beta, r0=1.0,
                               c_op=sigma_sq, c_tr=sigma_sq,
                               c_small=0.0, c_large_p=0.0, c_second=0.0)


# ---- Lorenz-84 with state-dependent speed -------------------------------

def lorenz84(a=0.25, b=4.0, c=1.0, gamma_exp=0.0, alpha=1.5, eps=0.1):
    """Three-dimensional circulation model with coordinate-wise heavy noise.

    The vector field is multiplied by the speed factor c * max(|x|, 1)**gamma_exp;
    its cross terms cancel radially, leaving a.x = -phi(x) (a X^2 + Y^2 + Z^2).
    Noise enters additively through one random coordinate per jump with a
    stable-like small component below 1.
    """

    def drift(t, x):
        big_x = x[..., 0]
        big_y = x[..., 1]
        big_z = x[..., 2]
        norm = np.sqrt(np.sum(x * x, axis=-1))
        phi = c * np.maximum(norm, 1.0) ** gamma_exp
        f = np.empty_like(x)
        f[..., 0] = -big_y * big_y - big_z * big_z - a * big_x
        f[..., 1] = big_x * big_y - b * big_x * big_z - big_y
        f[..., 2] = b * big_x * big_y + big_x * big_z - big_z
        return phi[..., None] * f

    kernel = JumpKernel(tail_exponent=alpha, dimension=3,
                        direction_law=DIRECTION_COORDINATE,
                        small_jump_model=SMALL_STABLE_LIKE,
                        small_exponent=alpha, truncation_eps=eps)
    return ModelSpec(dimension=3, drift=drift, diffusion=None,
                     kernel=kernel, name="lorenz84")


def lorenz84_params(a=0.25, b=4.0, c=1.0, gamma_exp=0.0, alpha=1.5, p=1.45):
    if p >= alpha:
        raise DomainError("moment order p=%g needs p < alpha=%g" % (p, alpha))
    return DissipativityParams(
        p=p, kappa=1.0 + gamma_exp, beta=c * min(a, 1.0), r0=1.0,
        c_op=0.0, c_tr=0.0,
        c_small=alpha / (2.0 - alpha),
        c_large_p=alpha / (alpha - p),
    )


# ---- registry -----------------------------------------------------------

_MODEL_KEYS = {
    "storage": ("kappa", "alpha", "compensated"),
    "linear_ou": ("beta", "alpha", "scale"),
    "superlinear": ("kappa", "alpha", "beta"),
    "gradient_diffusion": ("beta", "sigma_sq"),
    "lorenz84": ("a", "b", "c", "gamma_exp", "alpha", "eps"),
}

_FACTORIES = {
    "storage": (storage, storage_params, ("kappa", "alpha", "p")),
    "linear_ou": (linear_ou, linear_ou_params, ("beta", "alpha", "scale", "p")),
    "superlinear": (superlinear, superlinear_params, ("kappa", "alpha", "beta", "p")),
    "gradient_diffusion": (gradient_diffusion, gradient_diffusion_params,
                           ("beta", "sigma_sq", "p")),
    "lorenz84": (lorenz84, lorenz84_params,
                 ("a", "b", "c", "gamma_exp", "alpha", "p")),
}


def preset_names():
    return sorted(_FACTORIES)


def build(preset, model_kwargs=None, params_kwargs=None):
    """Instantiate (ModelSpec, DissipativityParams) for a named preset."""
    if preset not in _FACTORIES:
        raise ConfigError("unknown preset %r; known: %s"
                          % (preset, ", ".join(preset_names())))
    model_fn, params_fn, params_keys = _FACTORIES[preset]
    model_kwargs = dict(model_kwargs or {})
    params_kwargs = dict(params_kwargs or {})
    allowed = set(_MODEL_KEYS[preset])
    for key in model_kwargs:
        if key not in allowed:
            raise ConfigError("preset %s does not take model key %r" % (preset, key))
    for key in params_kwargs:
        if key not in params_keys:
            raise ConfigError("preset %s does not take parameter key %r" % (preset, key))
    # shared keys default the params factory to the model's values
    merged = dict(model_kwargs)
    merged.update(params_kwargs)
    params_args = {k: v for k, v in merged.items() if k in params_keys}
    model = model_fn(**model_kwargs)
    params = params_fn(**params_args)
    return model, params
