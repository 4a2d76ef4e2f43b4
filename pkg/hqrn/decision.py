"""
Invest-or-refrain decisions driven by point predictions.

An investor pays ``theta`` for an asset whose realised value is ``y`` and
invests iff the prediction ``x`` exceeds ``theta``. Gains are capped at ``a``
and taxed at ``r_g``; losses are capped at ``b`` and deductible at ``r_l``.
The optimal prediction is the Huber quantile at the level implied by the
two rates.
"""

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np
import pandas as pd

from .evaluation import PredictionSet
from .functionals import EmpiricalSample
from .scoring import ArrayLike, ScoreParams, cap_pos

logger = logging.getLogger(__name__)


def _check_rate(name: str, value: float) -> None:
    if not 0.0 <= value < 1.0:
        raise ValueError(f"{name} must lie in [0, 1), got {value}")


def tau_from_rates(r_l: float, r_g: float) -> float:
    """Level (1 - r_g) / (2 - r_l - r_g) implied by the deduction and tax rates."""
    _check_rate("r_l", r_l)
    _check_rate("r_g", r_g)
    return (1.0 - r_g) / (2.0 - r_l - r_g)


@dataclass(frozen=True)
class DecisionPolicy:
    """Investment amount, gain and loss caps, and the two rates."""
    theta: float
    a: float = math.inf
    b: float = math.inf
    r_l: float = 0.0
    r_g: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.theta):
            raise ValueError(f"theta must be finite, got {self.theta}")
        _check_rate("r_l", self.r_l)
        _check_rate("r_g", self.r_g)
        for name in ("a", "b"):
            value = getattr(self, name)
            if math.isnan(value) or value <= 0.0:
                raise ValueError(f"cap {name} must be positive or inf, got {value}")

    @property
    def tau(self) -> float:
        return tau_from_rates(self.r_l, self.r_g)

    def elementary_params(self) -> ScoreParams:
        """Score parameters whose elementary score at ``theta`` is proportional to the regret."""
        return ScoreParams(self.tau, self.a, self.b)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "theta": self.theta,
            "a": "inf" if math.isinf(self.a) else self.a,
            "b": "inf" if math.isinf(self.b) else self.b,
            "r_l": self.r_l,
            "r_g": self.r_g,
            "tau": self.tau,
        }


def _out(value: np.ndarray) -> ArrayLike:
    return value.item() if np.ndim(value) == 0 else value


def payoff(x: ArrayLike, y: ArrayLike, pol: DecisionPolicy) -> ArrayLike:
    """Net payoff of the rule 'invest iff x > theta'; zero when refraining."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    gain = (1.0 - pol.r_g) * cap_pos(y - pol.theta, pol.a)
    loss = -(1.0 - pol.r_l) * cap_pos(pol.theta - y, pol.b)
    return _out(np.where(x > pol.theta, np.where(y > pol.theta, gain, loss), 0.0))


def regret(x: ArrayLike, y: ArrayLike, pol: DecisionPolicy) -> ArrayLike:
    """Opportunity loss against perfect foresight; zero when the decision matches the outcome."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    invest = x > pol.theta
    up = y > pol.theta
    wrong_invest = (1.0 - pol.r_l) * cap_pos(pol.theta - y, pol.b)
    missed_gain = (1.0 - pol.r_g) * cap_pos(y - pol.theta, pol.a)
    return _out(np.where(invest & ~up, wrong_invest, np.where(~invest & up, missed_gain, 0.0)))


@dataclass
class PortfolioResult:
    """Totals of a simulated portfolio and its per-row breakdown."""
    total_payoff: float
    total_regret: float
    n_invest: int
    n_refrain: int
    rows: pd.DataFrame

    def totals(self) -> Dict[str, Any]:
        return {
            "total_payoff": self.total_payoff,
            "total_regret": self.total_regret,
            "n_invest": self.n_invest,
            "n_refrain": self.n_refrain,
        }


def simulate_portfolio(ps: PredictionSet, pol: DecisionPolicy) -> PortfolioResult:
    """Apply the rule to every (prediction, realised value) pair and total the outcomes."""
    x, y = ps.predictions, ps.observations
    invest = x > pol.theta
    pay = np.asarray(payoff(x, y, pol), dtype=float)
    reg = np.asarray(regret(x, y, pol), dtype=float)
    rows = pd.DataFrame({
        "row_id": ps.row_ids,
        "x": x,
        "y": y,
        "decision": np.where(invest, "invest", "refrain"),
        "payoff": pay,
        "regret": reg,
    })
    n_invest = int(np.count_nonzero(invest))
    result = PortfolioResult(
        total_payoff=float(np.sum(pay)),
        total_regret=float(np.sum(reg)),
        n_invest=n_invest,
        n_refrain=len(ps) - n_invest,
        rows=rows,
    )
    logger.info(
        f"Portfolio over {len(ps)} rows: invest={result.n_invest}, payoff={result.total_payoff:.6f}, "
        f"regret={result.total_regret:.6f}"
    )
    return result


def expected_regret(sample: EmpiricalSample, x: float, pol: DecisionPolicy) -> float:
    """Mean regret of the constant prediction ``x`` over a sample of realised values."""
    return float(np.mean(regret(x, sample.values, pol)))


def write_portfolio(result: PortfolioResult, directory: Union[str, Path]) -> Dict[str, Path]:
    """Write ``portfolio.csv`` (one row per asset) and ``portfolio_totals.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rows_path = directory / "portfolio.csv"
    totals_path = directory / "portfolio_totals.json"
    result.rows.to_csv(rows_path, index=False, float_format="%.17g")
    with open(totals_path, "w", encoding="utf-8") as f:
        json.dump(result.totals(), f, indent=2, sort_keys=True)
    logger.info(f"Portfolio written to {rows_path} and {totals_path}")
    return {"rows": rows_path, "totals": totals_path}
