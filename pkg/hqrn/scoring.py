"""
Scoring functions of the Huber quantile family.

This module provides:
- The capping function and its one-sided variant
- Huber quantile, quantile, expectile and Huber loss scores
- The general convex-generator score and its quantile/expectile relatives
- Analytic subgradients used for network training
- Elementary (threshold-indexed) scores for mixture representations

All functions are pure and vectorized over numpy arrays; scalar inputs
produce scalar outputs.
"""

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

ArrayLike = Union[float, np.ndarray]

ELEMENTARY_KINDS = ("huber", "quantile", "expectile")


@dataclass(frozen=True)
class ScoreParams:
    """Level and caps of a Huber quantile scoring function.

    ``b`` caps over-prediction (x > y) and ``a`` caps under-prediction;
    either may be ``math.inf``.
    """
    tau: float
    a: float = math.inf
    b: float = math.inf

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau must lie in (0, 1), got {self.tau}")
        for name in ("a", "b"):
            value = getattr(self, name)
            if math.isnan(value) or value <= 0.0:
                raise ValueError(f"cap {name} must be positive or inf, got {value}")

    @property
    def uncapped(self) -> bool:
        return math.isinf(self.a) and math.isinf(self.b)

    def to_dict(self) -> dict:
        """Serialize with infinite caps written as the string ``"inf"``."""
        return {
            "tau": self.tau,
            "a": "inf" if math.isinf(self.a) else self.a,
            "b": "inf" if math.isinf(self.b) else self.b,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScoreParams":
        return cls(tau=float(data["tau"]), a=float(data["a"]), b=float(data["b"]))


@dataclass(frozen=True)
class ConvexSpec:
    """A convex generator ``phi`` with a subgradient ``phi_prime``."""
    phi: Callable[[ArrayLike], ArrayLike]
    phi_prime: Callable[[ArrayLike], ArrayLike]

    def check_midpoint_convexity(self, s: ArrayLike, t: ArrayLike, tol: float = 1e-12) -> bool:
        """Check phi((s+t)/2) <= (phi(s)+phi(t))/2 on the sampled pairs."""
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        lhs = np.asarray(self.phi((s + t) / 2.0), dtype=float)
        rhs = (np.asarray(self.phi(s), dtype=float) + np.asarray(self.phi(t), dtype=float)) / 2.0
        return bool(np.all(lhs <= rhs + tol * (1.0 + np.abs(rhs))))


SQUARE = ConvexSpec(phi=lambda t: np.square(t), phi_prime=lambda t: 2.0 * np.asarray(t))


def _finite(*arrays: ArrayLike) -> None:
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise ValueError("scores are defined for finite predictions and observations only")


def _check_tau(tau: float) -> None:
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")


def _result(value: np.ndarray) -> ArrayLike:
    return value.item() if np.ndim(value) == 0 else value


def _weight(x: np.ndarray, y: np.ndarray, tau: float) -> np.ndarray:
    # |1{x >= y} - tau|; ties count as x >= y
    return np.where(x >= y, 1.0 - tau, tau)


def cap(t: ArrayLike, a: float, b: float) -> ArrayLike:
    """Clamp ``t`` to ``[-a, b]``: max{min{t, b}, -a}."""
    return _result(np.maximum(np.minimum(np.asarray(t, dtype=float), b), -a))


def cap_pos(t: ArrayLike, c: float) -> ArrayLike:
    """Clamp ``t`` to ``[0, c]``; the positive part when ``c`` is infinite."""
    return _result(np.minimum(np.maximum(np.asarray(t, dtype=float), 0.0), c))


def huber_quantile_score(x: ArrayLike, y: ArrayLike, p: ScoreParams) -> ArrayLike:
    """
    Generalized Huber score S_{a,b}(x, y; tau).

    Evaluated as ``w * (2*k*u - k**2)`` with ``u = x - y`` and ``k`` the capped
    residual, which is algebraically the same as
    ``w * (y**2 - (k + y)**2 + 2*x*k)`` but free of cancellation.

    Args:
        x: Prediction(s)
        y: Observation(s)
        p: Level and caps

    Returns:
        Nonnegative score, zero iff x == y
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _finite(x, y)
    u = x - y
    k = np.maximum(np.minimum(u, p.b), -p.a)
    return _result(_weight(x, y, p.tau) * (2.0 * k * u - k * k))


def quantile_score(x: ArrayLike, y: ArrayLike, tau: float) -> ArrayLike:
    """Asymmetric piecewise linear score 2|1{x>=y} - tau| |x - y|."""
    _check_tau(tau)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _finite(x, y)
    return _result(2.0 * _weight(x, y, tau) * np.abs(x - y))


def expectile_score(x: ArrayLike, y: ArrayLike, tau: float) -> ArrayLike:
    """Asymmetric squared score |1{x>=y} - tau| (x - y)^2."""
    _check_tau(tau)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _finite(x, y)
    u = x - y
    return _result(_weight(x, y, tau) * (u * u))


def huber_loss(x: ArrayLike, y: ArrayLike, a: float) -> ArrayLike:
    """Classical Huber loss: quadratic within ``a`` of y, linear beyond."""
    if not a > 0.0:
        raise ValueError(f"Huber loss threshold must be positive, got {a}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _finite(x, y)
    r = np.abs(x - y)
    return _result(np.where(r <= a, 0.5 * r * r, a * r - 0.5 * a * a))


def generic_score(x: ArrayLike, y: ArrayLike, p: ScoreParams, c: ConvexSpec) -> ArrayLike:
    """
    Consistent score for the Huber quantile built from a convex generator.

    S_H = |1{x>=y} - tau| (phi(y) - phi(k + y) + k phi'(x)), k = cap(x - y).
    With ``phi(t) = t**2`` this is :func:`huber_quantile_score`.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _finite(x, y)
    k = np.maximum(np.minimum(x - y, p.b), -p.a)
    phi_y = np.asarray(c.phi(y), dtype=float)
    phi_ky = np.asarray(c.phi(k + y), dtype=float)
    slope = np.asarray(c.phi_prime(x), dtype=float)
    if not (np.all(np.isfinite(phi_y)) and np.all(np.isfinite(phi_ky)) and np.all(np.isfinite(slope))):
        raise ValueError("convex generator evaluated to a non-finite value")
    return _result(_weight(x, y, p.tau) * (phi_y - phi_ky + k * slope))


def expectile_score_general(x: ArrayLike, y: ArrayLike, tau: float, c: ConvexSpec) -> ArrayLike:
    """Bregman-type expectile score |1{x>=y} - tau| (phi(y) - phi(x) + phi'(x)(x - y))."""
    return generic_score(x, y, ScoreParams(tau), c)


def generic_quantile_score(
    x: ArrayLike, y: ArrayLike, tau: float, g: Callable[[ArrayLike], ArrayLike]
) -> ArrayLike:
    """Generalized piecewise linear score |1{x>=y} - tau| |g(x) - g(y)|.

    Raises:
        ValueError: If ``g`` decreases between x and y
    """
    _check_tau(tau)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _finite(x, y)
    gx = np.asarray(g(x), dtype=float) * np.ones_like(x)
    gy = np.asarray(g(y), dtype=float) * np.ones_like(y)
    g_low = np.where(x <= y, gx, gy)
    g_high = np.where(x <= y, gy, gx)
    if np.any(g_high < g_low):
        raise ValueError("g must be nondecreasing")
    return _result(_weight(x, y, tau) * np.abs(gx - gy))


def score_subgradient(x: ArrayLike, y: ArrayLike, p: ScoreParams) -> ArrayLike:
    """Derivative in x of :func:`huber_quantile_score`: 2 |1{x>=y} - tau| cap(x - y).

    At the kinks this returns an element of the subdifferential (0 at x == y).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    k = np.maximum(np.minimum(x - y, p.b), -p.a)
    return _result(2.0 * _weight(x, y, p.tau) * k)


def elementary_score(
    kind: str, x: ArrayLike, y: ArrayLike, theta: ArrayLike, p: ScoreParams
) -> ArrayLike:
    """
    Elementary score indexed by a threshold ``theta``.

    Nonzero only on the half-open intervals y <= theta < x and x <= theta < y.

    Args:
        kind: One of ``huber``, ``quantile``, ``expectile``
        x: Prediction(s)
        y: Observation(s)
        theta: Threshold(s); broadcast against x and y
        p: Level and caps (caps are ignored unless kind is ``huber``)

    Returns:
        Elementary score value(s)
    """
    if kind not in ELEMENTARY_KINDS:
        raise ValueError(f"Unknown elementary score kind '{kind}'; expected one of {ELEMENTARY_KINDS}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    theta = np.asarray(theta, dtype=float)
    over = (y <= theta) & (theta < x)
    under = (x <= theta) & (theta < y)
    if kind == "quantile":
        over_val = np.full(np.broadcast(x, y, theta).shape, 1.0 - p.tau)
        under_val = np.full(over_val.shape, p.tau)
    elif kind == "expectile":
        over_val = (1.0 - p.tau) * np.abs(theta - y)
        under_val = p.tau * np.abs(theta - y)
    else:
        over_val = (1.0 - p.tau) * np.minimum(theta - y, p.b)
        under_val = p.tau * np.minimum(y - theta, p.a)
    return _result(np.where(over, over_val, np.where(under, under_val, 0.0)))
