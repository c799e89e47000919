"""Statistical battery for width-series comparisons.

Group summary with a Student-t confidence interval, Bartlett's test for
equal variances, one-way ANOVA, and the two-sample t test (pooled by
default, mirroring the Bartlett-then-t workflow; Welch available behind
an option).

Distribution tail areas come from in-module regularized incomplete beta
and gamma functions (continued-fraction evaluation), keeping the module
self-contained and reproducible.  Target accuracy is well below the 1e-8
quantile contract these tests rely on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from math import fsum, lgamma
from typing import Sequence

_EPS = 1e-15
_FPMIN = 1e-300
_MAX_ITER = 500


# ----------------------------------------------------------------------
# special functions
# ----------------------------------------------------------------------

def _beta_cf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError(f"incomplete beta did not converge for a={a}, b={b}, x={x}")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if a <= 0.0 or b <= 0.0:
        raise ValueError("a and b must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        lgamma(a + b) - lgamma(a) - lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cf(a, b, x) / a
    return 1.0 - front * _beta_cf(b, a, 1.0 - x) / b


def regularized_gamma_p(s: float, x: float) -> float:
    """Lower regularized incomplete gamma P(s, x), s > 0, x >= 0."""
    if s <= 0.0:
        raise ValueError("s must be positive")
    if x < 0.0:
        raise ValueError("x must be non-negative")
    if x == 0.0:
        return 0.0
    if x < s + 1.0:
        # series representation
        term = 1.0 / s
        total = term
        k = s
        for _ in range(_MAX_ITER):
            k += 1.0
            term *= x / k
            total += term
            if abs(term) < abs(total) * _EPS:
                return total * math.exp(-x + s * math.log(x) - lgamma(s))
        raise ArithmeticError(f"incomplete gamma series did not converge for s={s}, x={x}")
    return 1.0 - _gamma_q_cf(s, x)


def regularized_gamma_q(s: float, x: float) -> float:
    """Upper regularized incomplete gamma Q(s, x) = 1 - P(s, x)."""
    if x < s + 1.0:
        return 1.0 - regularized_gamma_p(s, x)
    return _gamma_q_cf(s, x)


def _gamma_q_cf(s: float, x: float) -> float:
    """Continued fraction for Q(s, x), valid for x > s + 1 (Lentz)."""
    b = x + 1.0 - s
    c = 1.0 / _FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER + 1):
        an = -i * (i - s)
        b += 2.0
        d = an * d + b
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = b + an / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h * math.exp(-x + s * math.log(x) - lgamma(s))
    raise ArithmeticError(f"incomplete gamma fraction did not converge for s={s}, x={x}")


def student_t_sf(t: float, df: float) -> float:
    """One-sided survival P(T > t) for Student's t with df degrees of freedom."""
    if df <= 0.0:
        raise ValueError("df must be positive")
    x = df / (df + t * t)
    tail = 0.5 * regularized_incomplete_beta(df / 2.0, 0.5, x)
    return tail if t >= 0.0 else 1.0 - tail


def chi_square_sf(x: float, df: float) -> float:
    """Survival P(X > x) for the chi-square distribution."""
    if df <= 0.0:
        raise ValueError("df must be positive")
    if x <= 0.0:
        return 1.0
    return regularized_gamma_q(df / 2.0, x / 2.0)


def f_sf(f: float, d1: float, d2: float) -> float:
    """Survival P(F > f) for the F distribution with (d1, d2) df."""
    if d1 <= 0.0 or d2 <= 0.0:
        raise ValueError("degrees of freedom must be positive")
    if f <= 0.0:
        return 1.0
    return regularized_incomplete_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f))


def student_t_quantile(p: float, df: float) -> float:
    """Inverse CDF of Student's t, |error| < 1e-10 via bisection."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must be in (0, 1)")
    if df <= 0.0:
        raise ValueError("df must be positive")
    if p == 0.5:
        return 0.0
    if p < 0.5:
        return -student_t_quantile(1.0 - p, df)
    target = 1.0 - p  # sf(t) = target, t > 0
    hi = 1.0
    while student_t_sf(hi, df) > target:
        hi *= 2.0
        if hi > 1e12:
            raise ArithmeticError("t quantile bracket exceeded range")
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if student_t_sf(mid, df) > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ----------------------------------------------------------------------
# descriptive statistics and tests
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class GroupStats:
    n: int
    mean: float
    sample_variance: float
    ci95: tuple[float, float]  # at the requested confidence (0.95 default)


@dataclass(frozen=True)
class TestResult:
    statistic: float
    degrees_of_freedom: float | tuple[float, float]
    p_value: float


def _mean(xs: Sequence[float]) -> float:
    return fsum(xs) / len(xs)


def _sample_variance(xs: Sequence[float], mean: float | None = None) -> float:
    m = _mean(xs) if mean is None else mean
    return fsum((x - m) ** 2 for x in xs) / (len(xs) - 1)


def group_stats(samples: Sequence[float], confidence: float = 0.95) -> GroupStats:
    """Mean, n-1 variance and the Student-t confidence interval of the mean."""
    n = len(samples)
    if n < 2:
        raise ValueError(f"need at least 2 samples for variance and CI, got {n}")
    if not 0.0 < confidence < 1.0:
        raise ValueError("confidence must be in (0, 1)")
    m = _mean(samples)
    var = _sample_variance(samples, m)
    t = student_t_quantile(1.0 - (1.0 - confidence) / 2.0, n - 1)
    half = t * math.sqrt(var / n)
    return GroupStats(n=n, mean=m, sample_variance=var, ci95=(m - half, m + half))


def bartlett(groups: Sequence[Sequence[float]]) -> TestResult:
    """Bartlett's test of equal variances across k groups.

    Statistic is chi-square distributed with k-1 df under homoscedasticity.
    Undefined when any group has zero variance.
    """
    k = len(groups)
    if k < 2:
        raise ValueError("need at least 2 groups")
    ns = [len(g) for g in groups]
    if any(n < 2 for n in ns):
        raise ValueError("every group needs at least 2 samples")
    variances = [_sample_variance(g) for g in groups]
    if any(v == 0.0 for v in variances):
        raise ValueError("Bartlett statistic is undefined for a zero-variance group")
    n_total = sum(ns)
    pooled = fsum((n - 1) * v for n, v in zip(ns, variances)) / (n_total - k)
    numerator = (n_total - k) * math.log(pooled) - fsum(
        (n - 1) * math.log(v) for n, v in zip(ns, variances)
    )
    correction = 1.0 + (
        fsum(1.0 / (n - 1) for n in ns) - 1.0 / (n_total - k)
    ) / (3.0 * (k - 1))
    statistic = numerator / correction
    return TestResult(statistic, float(k - 1), chi_square_sf(statistic, k - 1))


def anova_oneway(groups: Sequence[Sequence[float]]) -> TestResult:
    """One-way ANOVA: F = between-group over within-group mean square."""
    k = len(groups)
    if k < 2:
        raise ValueError("need at least 2 groups")
    ns = [len(g) for g in groups]
    if any(n < 1 for n in ns):
        raise ValueError("every group needs at least 1 sample")
    n_total = sum(ns)
    if n_total <= k:
        raise ValueError("need more samples than groups for the within-group variance")
    means = [_mean(g) for g in groups]
    grand = fsum(fsum(g) for g in groups) / n_total
    ss_between = fsum(n * (m - grand) ** 2 for n, m in zip(ns, means))
    ss_within = fsum(fsum((x - m) ** 2 for x in g) for g, m in zip(groups, means))
    if ss_within == 0.0:
        raise ValueError("F is undefined with zero within-group variance everywhere")
    d1 = float(k - 1)
    d2 = float(n_total - k)
    statistic = (ss_between / d1) / (ss_within / d2)
    return TestResult(statistic, (d1, d2), f_sf(statistic, d1, d2))


def ttest_two_sample(a: Sequence[float], b: Sequence[float], welch: bool = False) -> TestResult:
    """Two-sample t test, two-sided.

    Pooled-variance Student form by default (use after checking
    homoscedasticity, e.g. with :func:`bartlett`); ``welch=True`` drops the
    equal-variance assumption.  Degenerate data is handled explicitly:
    when both groups have zero variance, p is 1 for equal means and 0
    otherwise.
    """
    na, nb = len(a), len(b)
    if na < 2 or nb < 2:
        raise ValueError("each group needs at least 2 samples")
    ma, mb = _mean(a), _mean(b)
    va, vb = _sample_variance(a, ma), _sample_variance(b, mb)

    if welch:
        sa, sb = va / na, vb / nb
        se2 = sa + sb
        if se2 == 0.0:
            return _degenerate_t(ma, mb, float(na + nb - 2))
        df = se2 ** 2 / (sa ** 2 / (na - 1) + sb ** 2 / (nb - 1))
        statistic = (ma - mb) / math.sqrt(se2)
    else:
        df = float(na + nb - 2)
        pooled = ((na - 1) * va + (nb - 1) * vb) / df
        if pooled == 0.0:
            return _degenerate_t(ma, mb, df)
        statistic = (ma - mb) / math.sqrt(pooled * (1.0 / na + 1.0 / nb))

    p = 2.0 * student_t_sf(abs(statistic), df)
    return TestResult(statistic, df, min(p, 1.0))


def _degenerate_t(ma: float, mb: float, df: float) -> TestResult:
    if ma == mb:
        return TestResult(0.0, df, 1.0)
    return TestResult(math.copysign(math.inf, ma - mb), df, 0.0)
