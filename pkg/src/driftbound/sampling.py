"""Variate generation for the driving noise.

Covers the Pareto magnitude law used for large jumps, symmetric stable
increments (Chambers-Mallows-Stuck), Poisson jump clocks drawn as
exponential gaps in fixed-size blocks, and the drift correction that
appears when small jumps below a threshold are dropped or replaced.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

MAGNITUDE_SMALL = "small"   # |z| <= 1
MAGNITUDE_LARGE = "large"   # |z| > 1


@dataclass(frozen=True)
class JumpEvent:
    """One realized jump: arrival time, displacement vector, size class."""

    time: float
    size: np.ndarray
    magnitude_class: str

    def __post_init__(self):
        if self.magnitude_class not in (MAGNITUDE_SMALL, MAGNITUDE_LARGE):
            raise DomainError("unknown magnitude class %r" % (self.magnitude_class,))

# gap block size floor keeps the draw count schedule deterministic even
# for tiny horizons
_MIN_GAP_BLOCK = 16


def sample_pareto_magnitude(alpha, stream, size=None):
    """Pareto magnitudes r with P(r > x) = x**(-alpha) for x >= 1.

    Strictly greater than 1: the boundary value (a zero-probability draw)
    is bumped to the next float up.
    """
    if alpha <= 0:
        raise DomainError("pareto tail exponent must be positive, got %r" % (alpha,))
    u = stream.uniform(size)
    r = (1.0 - u) ** (-1.0 / alpha)
    one_up = np.nextafter(1.0, 2.0)
    if size is None:
        return max(float(r), one_up)
    return np.maximum(r, one_up)


def sample_symmetric_stable(alpha, scale, stream, size=None):
    """Symmetric alpha-stable increments via Chambers-Mallows-Stuck.

    alpha = 2 reduces to a centered Gaussian with variance 2*scale**2,
    alpha = 1 to a Cauchy law.  Two uniforms are consumed per variate
    whatever the value of alpha, which keeps draw schedules aligned.
    """
    if not 0.0 < alpha <= 2.0:
        raise DomainError("stable index must lie in (0, 2], got %r" % (alpha,))
    if scale < 0:
        raise DomainError("scale must be nonnegative")
    u = stream.uniform(size)
    w_raw = stream.uniform(size)
    theta = math.pi * (np.asarray(u) - 0.5)  # uniform on (-pi/2, pi/2)
    w = -np.log1p(-np.asarray(w_raw))        # unit exponential
    with np.errstate(divide="ignore"):
        if alpha == 1.0:
            z = np.tan(theta)
        else:
            # CMS in the symmetric case
            z = (np.sin(alpha * theta) / np.cos(theta) ** (1.0 / alpha)
                 * (np.cos((1.0 - alpha) * theta) / w) ** ((1.0 - alpha) / alpha))
    out = scale * z
    if size is None:
        return float(out)
    return out


def sample_jump_times(rate, horizon, stream):
    """Arrival times of a Poisson(rate) clock on (0, horizon].

    Gaps are drawn in fixed-size blocks so the number of consumed variates
    depends only on (rate, horizon, realized gaps), not on caller layout.
    Returns a sorted float array, possibly empty.
    """
    if rate < 0:
        raise DomainError("jump rate must be nonnegative")
    if horizon <= 0:
        raise DomainError("horizon must be positive")
    if rate == 0:
        return np.empty(0)
    block = max(_MIN_GAP_BLOCK, int(math.ceil(2.0 * rate * horizon)) + 8)
    times = []
    t = 0.0
    while True:
        gaps = stream.exponential(block) / rate
        for g in gaps:
            t += g
            if t > horizon:
                return np.array(times)
            times.append(t)


def compensator_correction(kernel, threshold):
    """Mean of the kernel over magnitudes in (threshold, 1].

    This is the drift that must be re-added when jumps below 1 but above
    the simulation threshold are moved out of the compensated integral.
    Symmetric direction laws give an exact zero vector.
    """
    if not 0.0 < threshold <= 1.0:
        raise DomainError("threshold must lie in (0, 1], got %r" % (threshold,))
    return kernel.truncation_drift(threshold)
