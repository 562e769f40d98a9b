"""Regularized incomplete gamma function and chi-square quantiles.

P(a, x) uses the power series for x < a + 1 and the modified-Lentz continued
fraction for Q(a, x) = 1 - P(a, x) otherwise.
"""
import math

from .errors import InvalidAlpha

_EPS = 1e-16
_TINY = 1e-300
_MAX_TERMS = 10_000


def _lower_series(a, x):
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAX_TERMS):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _upper_continued_fraction(a, x):
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_TERMS):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def gammainc_lower(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x)."""
    if a <= 0:
        raise ValueError("shape a must be positive")
    if x <= 0:
        return 0.0
    if x < a + 1.0:
        return min(1.0, _lower_series(a, x))
    return max(0.0, 1.0 - _upper_continued_fraction(a, x))


def gammainc_upper(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x)."""
    if x <= 0:
        return 1.0
    if x < a + 1.0:
        return max(0.0, 1.0 - _lower_series(a, x))
    return min(1.0, _upper_continued_fraction(a, x))


def chi2_cdf(x: float, df: int) -> float:
    return gammainc_lower(0.5 * df, 0.5 * x)


def chi2_quantile(df: int, alpha: float) -> float:
    """Return q with P(chi2_df <= q) = 1 - alpha, by bisection."""
    if int(df) != df or df < 1:
        raise ValueError("degrees of freedom must be a positive integer")
    if not (0.0 < alpha <= 1.0):
        raise InvalidAlpha(f"alpha must lie in (0, 1], got {alpha}")
    if alpha == 1.0:
        return 0.0
    target = 1.0 - alpha
    # bisect on the upper tail where it is the better-conditioned side
    use_upper = alpha < 0.5

    def below(x):
        if use_upper:
            return gammainc_upper(0.5 * df, 0.5 * x) > alpha
        return gammainc_lower(0.5 * df, 0.5 * x) < target

    lo, hi = 0.0, max(1.0, float(df))
    while below(hi):
        lo, hi = hi, 2.0 * hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if below(mid):
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-13 * max(1.0, hi):
            break
    return 0.5 * (lo + hi)
