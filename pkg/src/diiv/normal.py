"""Standard normal CDF and interval masses."""

import math

_SQRT2 = math.sqrt(2.0)


def norm_cdf(x: float) -> float:
    # erfc keeps full relative precision in the lower tail
    return 0.5 * math.erfc(-x / _SQRT2)


def interval_mass(lo: float, hi: float, scale: float = 1.0) -> float:
    """P(lo <= eta < hi) for eta ~ N(0, scale**2); negative if hi < lo."""
    if scale <= 0:
        raise ValueError("scale must be positive")
    a, b = lo / scale, hi / scale
    if a > 0:
        # upper tail: difference of survival functions avoids cancellation
        return norm_cdf(-a) - norm_cdf(-b)
    return norm_cdf(b) - norm_cdf(a)
