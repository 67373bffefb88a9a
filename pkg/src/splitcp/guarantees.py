"""Exact finite-sample guarantees for split conformal calibration.

What a calibration set of size m buys at miscoverage level alpha, in
closed form: the exact marginal coverage, the distribution of
calibration-conditional coverage for tie-free scores, tail (shortfall)
probabilities of that distribution, the (epsilon, delta)
conditional-validity bound, and the smallest calibration size meeting a
(alpha, epsilon, delta) target.

All of it reduces to binomial tail sums. The key quantity is
l = floor((m + 1) * alpha): the number of calibration order statistics
that sit above the threshold rank. l = 0 is the degenerate regime where
the predictor must cover every class and conditional coverage is
identically 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath

from .core import calibration_rank
from .errors import InputError

# Above this m, double-precision log-gamma summation can no longer meet
# the 1e-12 relative-error contract; switch to 30-digit arithmetic.
_EXACT_COMB_LIMIT = 1024
_MPMATH_DPS = 30


@dataclass(frozen=True)
class GuaranteeQuery:
    """Inputs of the conditional-validity bound.

    ``alpha_tilde`` is the relaxed miscoverage alpha + epsilon, clamped
    to 1 when used as a binomial success probability.
    """

    m: int
    alpha: float
    epsilon: float

    def __post_init__(self) -> None:
        _validate_m_alpha(self.m, self.alpha)
        if not (self.epsilon > 0.0) or not math.isfinite(self.epsilon):
            raise InputError(f"epsilon must be > 0, got {self.epsilon!r}")

    @property
    def alpha_tilde(self) -> float:
        return min(self.alpha + self.epsilon, 1.0)


@dataclass(frozen=True)
class CoverageLaw:
    """Distribution of calibration-conditional coverage, tie-free scores.

    Beta(a, b) with a = m + 1 - l and b = l, where l = floor((m+1) alpha).
    ``degenerate`` marks l = 0 (the cover-everything regime): coverage is
    then a point mass at 1 and the Beta shapes are not meaningful.
    """

    m: int
    alpha: float
    a: int
    b: int
    degenerate: bool

    @property
    def mean(self) -> float:
        """Expected conditional coverage; equals the exact marginal coverage."""
        if self.degenerate:
            return 1.0
        return self.a / (self.m + 1)


@dataclass(frozen=True)
class PlanSpec:
    """Calibration-size planning target: find the smallest non-degenerate
    m whose conditional-validity delta is at most ``delta_target``."""

    alpha: float
    epsilon: float
    delta_target: float
    m_max: int

    def __post_init__(self) -> None:
        if not (0.0 < self.alpha < 1.0):
            raise InputError(f"alpha must be in (0, 1), got {self.alpha!r}")
        if not (self.epsilon > 0.0) or not math.isfinite(self.epsilon):
            raise InputError(f"epsilon must be > 0, got {self.epsilon!r}")
        if not (0.0 < self.delta_target <= 1.0):
            raise InputError(f"delta_target must be in (0, 1], got {self.delta_target!r}")
        if not isinstance(self.m_max, int) or self.m_max < 1:
            raise InputError(f"m_max must be an integer >= 1, got {self.m_max!r}")


@dataclass(frozen=True)
class PlanResult:
    """Outcome of a planning scan; ``found=False`` means no m up to
    ``scanned_up_to`` met the target."""

    found: bool
    m_min: int | None
    delta_at_m_min: float | None
    scanned_up_to: int


def _binom_cdf(t: int, m: int, p: float) -> float:
    """P(X <= t) for X ~ Binomial(m, p).

    Direct log-space summation of the t + 1 probability terms, with exact
    integer binomial coefficients and compensated (fsum) accumulation.
    For m beyond _EXACT_COMB_LIMIT the rounding error of the summed logs
    would exceed 1e-12 relative, so the regularized incomplete beta is
    evaluated at 30 digits instead (CDF(t; m, p) = I_{1-p}(m - t, t + 1)).
    """
    if t < 0:
        return 0.0
    if t >= m:
        return 1.0
    if p <= 0.0:
        return 1.0
    if p >= 1.0:
        return 0.0
    if m <= _EXACT_COMB_LIMIT:
        log_p = math.log(p)
        log_1mp = math.log1p(-p)
        total = math.fsum(
            math.exp(math.log(math.comb(m, j)) + j * log_p + (m - j) * log_1mp)
            for j in range(t + 1)
        )
        return min(total, 1.0)
    with mpmath.workdps(_MPMATH_DPS):
        val = mpmath.betainc(m - t, t + 1, 0, 1.0 - p, regularized=True)
        return float(val)


def _binom_tail_ge(k: int, m: int, p: float) -> float:
    """P(X >= k) for X ~ Binomial(m, p); same numerics as _binom_cdf."""
    if k <= 0:
        return 1.0
    if k > m:
        return 0.0
    if p <= 0.0:
        return 0.0
    if p >= 1.0:
        return 1.0
    if m <= _EXACT_COMB_LIMIT:
        log_p = math.log(p)
        log_1mp = math.log1p(-p)
        total = math.fsum(
            math.exp(math.log(math.comb(m, j)) + j * log_p + (m - j) * log_1mp)
            for j in range(k, m + 1)
        )
        return min(total, 1.0)
    with mpmath.workdps(_MPMATH_DPS):
        val = mpmath.betainc(k, m - k + 1, 0, p, regularized=True)
        return float(val)


def vovk_delta(query: GuaranteeQuery) -> float:
    """Smallest valid delta of the (epsilon, delta) conditional guarantee.

    The probability that a calibration draw of size m yields conditional
    coverage below 1 - alpha - epsilon is at most the Binomial(m,
    alpha_tilde) CDF at t = floor(alpha * (m + 1) - 1); this returns that
    CDF value, the tightest delta (any larger delta is also valid).

    t is computed as l - 1 with l = floor((m + 1) * alpha) under the
    shared 12-decimal rounding rule (the two floors agree for every real
    argument), so the bound, the coverage law, and the calibration rank
    stay mutually consistent. t < 0 is the degenerate regime: the
    predictor always covers, so delta = 0.
    """
    l = (query.m + 1) - calibration_rank(query.m, query.alpha)
    return _binom_cdf(l - 1, query.m, query.alpha_tilde)


def coverage_law(m: int, alpha: float) -> CoverageLaw:
    """Exact law of calibration-conditional coverage for tie-free scores.

    Coverage given the calibration draw equals the CDF of the score
    distribution at the selected order statistic; for continuous scores
    that is the k-th of m uniform order statistics, hence
    Beta(m + 1 - l, l). For l = 0 the law is a point mass at 1.
    """
    _validate_m_alpha(m, alpha)
    l = (m + 1) - calibration_rank(m, alpha)
    return CoverageLaw(m=m, alpha=float(alpha), a=(m + 1) - l, b=l, degenerate=(l == 0))


def shortfall_probability(law: CoverageLaw, threshold: float) -> float:
    """Probability a calibration draw delivers conditional coverage below
    ``threshold``.

    This is the Beta(a, b) CDF at the threshold; with integer shapes it
    equals the finite binomial sum I_x(a, b) = P(Binomial(a + b - 1, x) >= a),
    so no continued-fraction evaluation is needed. Degenerate laws never
    fall short.
    """
    if not (0.0 < threshold < 1.0):
        raise InputError(f"threshold must be in (0, 1), got {threshold!r}")
    if law.degenerate:
        return 0.0
    return _binom_tail_ge(law.a, law.a + law.b - 1, threshold)


def marginal_coverage_exact(m: int, alpha: float) -> float:
    """Exact marginal (calibration-unconditional) coverage for tie-free
    exchangeable scores: min(k, m + 1) / (m + 1) with the calibration
    rank k. Always >= 1 - alpha, and <= 1 - alpha + 1/(m + 1) when the
    predictor is non-degenerate."""
    k = calibration_rank(m, alpha)
    return min(k, m + 1) / (m + 1)


def plan_min_m(spec: PlanSpec) -> PlanResult:
    """Smallest non-degenerate calibration size meeting a delta target.

    Scans m = 1 .. m_max linearly: delta(m) is non-monotone in m because
    of the floor in its index, so bisection is unsound. Degenerate sizes
    (l = 0) are excluded: their delta is trivially 0 but the predictor
    emits full-label-space sets, which is useless in practice.
    """
    for m in range(1, spec.m_max + 1):
        l = (m + 1) - calibration_rank(m, spec.alpha)
        if l < 1:
            continue
        delta = vovk_delta(GuaranteeQuery(m=m, alpha=spec.alpha, epsilon=spec.epsilon))
        if delta <= spec.delta_target:
            return PlanResult(found=True, m_min=m, delta_at_m_min=delta, scanned_up_to=m)
    return PlanResult(found=False, m_min=None, delta_at_m_min=None, scanned_up_to=spec.m_max)


def _validate_m_alpha(m: int, alpha: float) -> None:
    if not isinstance(m, int) or m < 1:
        raise InputError(f"m must be an integer >= 1, got {m!r}")
    if not (0.0 < alpha < 1.0):
        raise InputError(f"alpha must be in (0, 1), got {alpha!r}")
