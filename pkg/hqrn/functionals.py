"""
Estimation of quantiles, expectiles and Huber quantiles.

This module provides utilities to:
- Estimate the functionals from a finite sample
- Evaluate them under a fitted log-normal law by quadrature
- Fit a log-normal law by maximum likelihood
- Compute the level a prediction implies against a sample or a law
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Tuple

import numpy as np
from scipy.integrate import quad
from scipy.stats import norm

from .scoring import ScoreParams

logger = logging.getLogger(__name__)

FUNCTIONAL_KINDS = ("quantile", "expectile", "huber")

BISECTION_TOL = 1e-10
BISECTION_MAX_ITER = 200
QUAD_EPSABS = 1e-13
QUAD_EPSREL = 1e-8
QUAD_LIMIT = 200
# achieved quadrature error above this (relative to max(1, |value|)) is a failure
QUAD_FAIL_TOL = 1e-6


class NumericalError(ArithmeticError):
    """Base class for numerical failures (quadrature, divergence, undefined ratios)."""
    pass


class QuadratureError(NumericalError):
    """Exception raised when a quadrature does not reach its tolerance."""

    def __init__(self, message: str, achieved: float):
        super().__init__(f"{message} (achieved absolute error {achieved:.3e})")
        self.achieved = achieved


@dataclass(frozen=True, eq=False)
class EmpiricalSample:
    """A finite, immutable set of real observations."""
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float).ravel()
        if values.size == 0:
            raise ValueError("EmpiricalSample requires at least one observation")
        if not np.all(np.isfinite(values)):
            raise ValueError("EmpiricalSample values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return int(self.values.size)

    def __len__(self) -> int:
        return self.n

    def shift(self, c: float) -> "EmpiricalSample":
        return EmpiricalSample(self.values + c)


@dataclass(frozen=True)
class LogNormalParams:
    """Log-scale location ``mu`` and spread ``sigma`` of a log-normal law."""
    mu: float
    sigma: float

    def __post_init__(self):
        if not math.isfinite(self.mu):
            raise ValueError(f"mu must be finite, got {self.mu}")
        if not (self.sigma > 0.0 and math.isfinite(self.sigma)):
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    @property
    def median(self) -> float:
        return math.exp(self.mu)

    @property
    def mean(self) -> float:
        return math.exp(self.mu + 0.5 * self.sigma ** 2)


@dataclass(frozen=True)
class FunctionalRequest:
    """Which functional to compute; caps are ignored for quantile and expectile."""
    kind: str
    params: ScoreParams

    def __post_init__(self):
        if self.kind not in FUNCTIONAL_KINDS:
            raise ValueError(f"Unknown functional '{self.kind}'; expected one of {FUNCTIONAL_KINDS}")


def _bisect(predicate: Callable[[float], bool], lo: float, hi: float,
            tol: float = BISECTION_TOL, max_iter: int = BISECTION_MAX_ITER) -> float:
    """Locate where ``predicate`` switches from False (at lo) to True (at hi)."""
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        if predicate(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def _root_interval(g: Callable[[float], float], lo: float, hi: float) -> Tuple[float, float]:
    """Endpoints of the zero set of a nondecreasing ``g`` with g(lo) <= 0 <= g(hi)."""
    left = lo if g(lo) >= 0.0 else _bisect(lambda x: g(x) >= 0.0, lo, hi)
    right = hi if g(hi) <= 0.0 else _bisect(lambda x: g(x) > 0.0, lo, hi)
    return min(left, right), max(left, right)


def _check_level(tau: float) -> None:
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")


def empirical_cdf(s: EmpiricalSample, x: float) -> float:
    """Fraction of the sample at or below ``x``."""
    return float(np.count_nonzero(s.values <= x)) / s.n


def empirical_quantile(s: EmpiricalSample, tau: float) -> float:
    """
    Smallest sample value whose empirical CDF reaches ``tau``.

    Args:
        s: Sample
        tau: Level in (0, 1)

    Returns:
        An element of the sample (no interpolation)
    """
    _check_level(tau)
    ordered = np.sort(s.values)
    levels = np.arange(1, s.n + 1) / s.n
    return float(ordered[int(np.argmax(levels >= tau))])


def _huber_balance(values: np.ndarray, tau: float, a: float, b: float) -> Callable[[float], float]:
    # (1 - tau) * sum cap_pos(x - y, b) - tau * sum cap_pos(y - x, a); nondecreasing in x
    def g(x: float) -> float:
        over = np.minimum(np.maximum(x - values, 0.0), b)
        under = np.minimum(np.maximum(values - x, 0.0), a)
        return float((1.0 - tau) * np.sum(over) - tau * np.sum(under))
    return g


def huber_quantile_interval(s: EmpiricalSample, tau: float, a: float, b: float) -> Tuple[float, float]:
    """
    Both endpoints of the root set of the sample Huber quantile condition.

    Zero caps are accepted here: with ``a = b = 0`` every point of the sample
    range solves the condition.

    Args:
        s: Sample
        tau: Level in (0, 1)
        a: Cap on under-prediction distances (>= 0, may be inf)
        b: Cap on over-prediction distances (>= 0, may be inf)

    Returns:
        (lower, upper) endpoints within [min s, max s]
    """
    _check_level(tau)
    if a < 0.0 or b < 0.0:
        raise ValueError(f"caps must be nonnegative, got a={a}, b={b}")
    lo, hi = float(np.min(s.values)), float(np.max(s.values))
    if lo == hi:
        return lo, hi
    return _root_interval(_huber_balance(s.values, tau, a, b), lo, hi)


def empirical_huber_quantile(s: EmpiricalSample, p: ScoreParams) -> float:
    """Sample tau-Huber quantile; the midpoint of the root interval when set-valued."""
    lower, upper = huber_quantile_interval(s, p.tau, p.a, p.b)
    return 0.5 * (lower + upper)


def empirical_expectile(s: EmpiricalSample, tau: float) -> float:
    """Sample tau-expectile, the uncapped Huber quantile."""
    return empirical_huber_quantile(s, ScoreParams(tau))


def empirical_functional(s: EmpiricalSample, req: FunctionalRequest) -> float:
    """Dispatch a :class:`FunctionalRequest` to the matching sample estimator."""
    if req.kind == "quantile":
        return empirical_quantile(s, req.params.tau)
    if req.kind == "expectile":
        return empirical_expectile(s, req.params.tau)
    return empirical_huber_quantile(s, req.params)


def empirical_level(s: EmpiricalSample, x: float, a: float, b: float) -> float:
    """Level implied by a constant prediction ``x``: capped shortfall share of capped distances."""
    over = np.sum(np.minimum(np.maximum(x - s.values, 0.0), b))
    under = np.sum(np.minimum(np.maximum(s.values - x, 0.0), a))
    total = over + under
    if total == 0.0:
        raise ValueError("level undefined: every observation equals the prediction")
    return float(over / total)


def lognormal_fit_mle(s: EmpiricalSample) -> LogNormalParams:
    """
    Exact maximum likelihood fit of a log-normal law.

    Raises:
        ValueError: If any value is non-positive, or the log-spread is zero
    """
    if np.any(s.values <= 0.0):
        raise ValueError("log-normal fit requires strictly positive observations")
    if s.n < 2:
        raise ValueError("log-normal fit requires at least two observations")
    logs = np.log(s.values)
    mu = float(np.mean(logs))
    sigma = float(np.sqrt(np.mean((logs - mu) ** 2)))
    if sigma <= 0.0:
        raise ValueError("log-normal fit degenerate: all observations are equal")
    logger.debug(f"Fitted log-normal: mu={mu:.6f}, sigma={sigma:.6f} on n={s.n}")
    return LogNormalParams(mu=mu, sigma=sigma)


def lognormal_eval(d: LogNormalParams, x):
    """Density and CDF of the log-normal law at ``x > 0``."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0.0):
        raise ValueError("log-normal density and CDF are evaluated at positive x only")
    z = (np.log(x) - d.mu) / d.sigma
    density = np.exp(-0.5 * z * z) / (x * d.sigma * math.sqrt(2.0 * math.pi))
    cdf = norm.cdf(z)
    if density.ndim == 0:
        return float(density), float(cdf)
    return density, cdf


def lognormal_sample(d: LogNormalParams, n: int, seed: int) -> EmpiricalSample:
    """Seeded draws from a log-normal law."""
    rng = np.random.default_rng(seed)
    return EmpiricalSample(rng.lognormal(mean=d.mu, sigma=d.sigma, size=n))


def _lognormal_expectation(d: LogNormalParams, h: Callable[[float], float],
                           breakpoints: Iterable[float]) -> float:
    """E[h(Y)] for log-normal Y, integrated on the normal scale and split at kinks of h."""
    cuts = sorted({(math.log(t) - d.mu) / d.sigma for t in breakpoints if 0.0 < t < math.inf})
    edges = [-math.inf] + cuts + [math.inf]

    def integrand(z: float) -> float:
        return h(math.exp(d.mu + d.sigma * z)) * math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)

    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        if lo == hi:
            continue
        result = quad(integrand, lo, hi, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL,
                      limit=QUAD_LIMIT, full_output=1)
        value, abserr = result[0], result[1]
        if len(result) > 3 and abserr > QUAD_FAIL_TOL * max(1.0, abs(value)):
            raise QuadratureError(f"log-normal expectation did not converge on [{lo}, {hi}]", abserr)
        total += value
    return total


def _capped_expectations(d: LogNormalParams, x: float, a: float, b: float) -> Tuple[float, float]:
    # (E[cap_pos(x - Y, b)], E[cap_pos(Y - x, a)])
    over = _lognormal_expectation(d, lambda y: min(max(x - y, 0.0), b), (x, x - b))
    under = _lognormal_expectation(d, lambda y: min(max(y - x, 0.0), a), (x, x + a))
    return over, under


def distribution_level(d: LogNormalParams, x: float, a: float, b: float) -> float:
    """Level implied by the value ``x`` under the log-normal law (capped distance ratio)."""
    over, under = _capped_expectations(d, x, a, b)
    return over / (over + under)


def distribution_huber_quantile(d: LogNormalParams, req: FunctionalRequest) -> float:
    """
    Quantile, expectile or Huber quantile of a log-normal law.

    The quantile is closed form; the other two root-find the balance of
    capped expectations evaluated by quadrature.

    Args:
        d: Log-normal parameters
        req: Functional kind and parameters

    Returns:
        The functional value

    Raises:
        QuadratureError: If an expectation fails to converge
    """
    tau = req.params.tau
    if req.kind == "quantile":
        return math.exp(d.mu + d.sigma * float(norm.ppf(tau)))
    if req.kind == "expectile":
        a = b = math.inf
    else:
        a, b = req.params.a, req.params.b

    def g(x: float) -> float:
        over, under = _capped_expectations(d, x, a, b)
        return (1.0 - tau) * over - tau * under

    hi = math.exp(d.mu + 8.0 * d.sigma)
    while g(hi) <= 0.0:
        hi *= 2.0
    root = _bisect(lambda x: g(x) >= 0.0, 0.0, hi)
    logger.debug(f"{req.kind} of LogNormal({d.mu}, {d.sigma}) at tau={tau}: {root:.10f}")
    return root
