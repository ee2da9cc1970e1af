"""Upper quantiles of Student's t distribution."""

import math

from scipy.special import betainc, betaincinv


def t_sf(t: float, df: float) -> float:
    """P(T > t) for T ~ t(df)."""
    if df <= 0:
        raise ValueError(f"degrees of freedom must be positive, got {df}")
    t2 = t * t
    if df < t2:
        # Far tail: P(|T| > |t|) = I_x(df/2, 1/2) with small x keeps precision.
        tail = 0.5 * betainc(df / 2.0, 0.5, df / (df + t2))
        return tail if t >= 0 else 1.0 - tail
    # Near the centre: P(|T| < |t|) = I_y(1/2, df/2) with small y.
    half_mass = 0.5 * betainc(0.5, df / 2.0, t2 / (df + t2))
    return 0.5 - half_mass if t >= 0 else 0.5 + half_mass


def t_upper_quantile(q: float, df: float) -> float:
    """Return t such that P(T > t) = q, for T ~ t(df).

    Uses the two-sided identity P(|T| > t) = I_x(df/2, 1/2) with
    x = df / (df + t^2) and inverts the regularized incomplete beta.
    """
    if not 0.0 < q < 1.0:
        raise ValueError(f"tail probability must lie in (0, 1), got {q}")
    if df <= 0:
        raise ValueError(f"degrees of freedom must be positive, got {df}")
    if q == 0.5:
        return 0.0
    if q > 0.5:
        return -t_upper_quantile(1.0 - q, df)
    if q < 0.25:
        x = float(betaincinv(df / 2.0, 0.5, 2.0 * q))
        return math.sqrt(df * (1.0 - x) / x)
    # Close to the median invert the complementary form to avoid 1 - x cancellation.
    y = float(betaincinv(0.5, df / 2.0, 1.0 - 2.0 * q))
    return math.sqrt(df * y / (1.0 - y))
