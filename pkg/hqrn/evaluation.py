"""
Evaluation of point predictions against observations.

This module provides utilities to:
- Average Huber quantile scores and compare methods with skill scores
- Estimate the level realised by a set of predictions
- Trace Murphy curves from elementary scores
- Tabulate ratios of Huber quantiles to expectiles and quantiles
- Read and write prediction files
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.integrate import trapezoid

from .data import DataValidationError
from .functionals import (
    EmpiricalSample,
    NumericalError,
    empirical_expectile,
    empirical_huber_quantile,
    empirical_quantile,
)
from .scoring import ScoreParams, elementary_score, huber_quantile_score

logger = logging.getLogger(__name__)

PREDICTION_COLUMNS = ("row_id", "prediction", "observation")
DEFAULT_N_THETAS = 513
DEFAULT_THETA_PADDING = 0.05
LEVEL_ESTIMATOR = "pooled capped sums"


class UndefinedScoreError(NumericalError):
    """Exception raised when a ratio-type score has a zero denominator."""
    pass


@dataclass(frozen=True, eq=False)
class PredictionSet:
    """Paired predictions and observations of one method."""
    predictions: np.ndarray
    observations: np.ndarray
    label: str = ""
    row_ids: Optional[np.ndarray] = None

    def __post_init__(self):
        x = np.asarray(self.predictions, dtype=float).ravel()
        y = np.asarray(self.observations, dtype=float).ravel()
        if x.shape != y.shape:
            raise ValueError(f"{x.size} predictions but {y.size} observations")
        if x.size == 0:
            raise ValueError("PredictionSet must not be empty")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("predictions and observations must be finite")
        ids = np.arange(x.size) if self.row_ids is None else np.asarray(self.row_ids).ravel()
        if ids.shape != x.shape:
            raise ValueError("row_ids must align with predictions")
        object.__setattr__(self, "predictions", x)
        object.__setattr__(self, "observations", y)
        object.__setattr__(self, "row_ids", ids)

    def __len__(self) -> int:
        return int(self.predictions.size)


def mean_score(ps: PredictionSet, p: ScoreParams) -> float:
    """Average Huber quantile score (lower is better)."""
    return float(np.mean(huber_quantile_score(ps.predictions, ps.observations, p)))


def skill_score(method_mean: float, ref_mean: float) -> float:
    """
    Skill of a method relative to a reference: 1 - method_mean / ref_mean.

    Args:
        method_mean: Average score of the method of interest
        ref_mean: Average score of the reference method

    Returns:
        Skill, at most 1; positive when the method beats the reference

    Raises:
        UndefinedScoreError: If the reference is perfect but the method is not
    """
    if method_mean < 0.0 or ref_mean < 0.0:
        raise ValueError(f"average scores must be nonnegative, got {method_mean} and {ref_mean}")
    if ref_mean == 0.0:
        if method_mean == 0.0:
            return 0.0
        raise UndefinedScoreError("skill undefined: reference score is zero")
    return 1.0 - method_mean / ref_mean


def huber_level_estimate(ps: PredictionSet, a: float, b: float) -> float:
    """
    Level realised by the predictions: capped over-predictions over all capped deviations.

    Numerator and denominator are summed over rows before dividing.

    Raises:
        UndefinedScoreError: If every capped deviation is zero
    """
    if a < 0.0 or b < 0.0:
        raise ValueError(f"caps must be nonnegative, got a={a}, b={b}")
    u = ps.predictions - ps.observations
    over = float(np.sum(np.minimum(np.maximum(u, 0.0), b)))
    under = float(np.sum(np.minimum(np.maximum(-u, 0.0), a)))
    if over + under == 0.0:
        raise UndefinedScoreError("level estimate undefined: all capped deviations are zero")
    return over / (over + under)


def coverage_frequency(ps: PredictionSet) -> float:
    """Fraction of observations at or below their prediction."""
    return float(np.count_nonzero(ps.observations <= ps.predictions)) / len(ps)


def default_theta_grid(ps: PredictionSet, n: int = DEFAULT_N_THETAS,
                       padding: float = DEFAULT_THETA_PADDING) -> np.ndarray:
    """Equispaced thresholds spanning all predictions and observations, padded on both sides."""
    if n < 2:
        raise ValueError(f"theta grid needs at least two nodes, got {n}")
    lo = min(ps.predictions.min(), ps.observations.min())
    hi = max(ps.predictions.max(), ps.observations.max())
    span = hi - lo if hi > lo else 1.0
    return np.linspace(lo - padding * span, hi + padding * span, n)


def murphy_curve(ps: PredictionSet, p: ScoreParams, thetas: Optional[Sequence[float]] = None,
                 kind: str = "huber") -> pd.DataFrame:
    """
    Mean elementary score at each threshold.

    Args:
        ps: Predictions and observations
        p: Level and caps
        thetas: Threshold grid; :func:`default_theta_grid` when omitted
        kind: Elementary score family

    Returns:
        DataFrame with columns ``theta`` and ``mean_elementary_score`` in grid order
    """
    grid = default_theta_grid(ps) if thetas is None else np.asarray(thetas, dtype=float).ravel()
    if grid.size == 0:
        raise ValueError("theta grid must not be empty")
    values = np.empty(grid.size)
    x = ps.predictions[None, :]
    y = ps.observations[None, :]
    # chunked to bound memory on dense grids
    for start in range(0, grid.size, 256):
        chunk = grid[start:start + 256, None]
        values[start:start + 256] = np.mean(elementary_score(kind, x, y, chunk, p), axis=1)
    return pd.DataFrame({"theta": grid, "mean_elementary_score": values})


def murphy_integral(curve: pd.DataFrame) -> float:
    """Twice the trapezoid integral of a Murphy curve; recovers the mean score on a covering grid."""
    return 2.0 * float(trapezoid(curve["mean_elementary_score"].to_numpy(), curve["theta"].to_numpy()))


@dataclass
class RatioTable:
    """Mean ratio per (a, b) cell and the number of rows excluded for a zero denominator."""
    ratios: pd.DataFrame
    excluded: pd.DataFrame
    denominator: str = ""

    def to_long(self) -> pd.DataFrame:
        long = self.ratios.stack().rename("mean_ratio").reset_index()
        excl = self.excluded.stack().rename("excluded").reset_index()
        out = long.merge(excl, on=["a", "b"])
        out.insert(0, "denominator", self.denominator)
        return out


def functional_ratio_table(huber: Mapping[Tuple[float, float], Sequence[float]], denominator: Sequence[float],
                           a_grid: Sequence[float], b_grid: Sequence[float], label: str = "") -> RatioTable:
    """
    Average ratio of Huber quantile predictions to a denominator prediction per (a, b).

    Args:
        huber: Huber quantile predictions keyed by (a, b), aligned with ``denominator``
        denominator: Expectile or quantile predictions for the same rows
        a_grid: Under-prediction caps (table index)
        b_grid: Over-prediction caps (table columns)
        label: Name of the denominator functional

    Returns:
        RatioTable; rows whose denominator is zero are left out and counted
    """
    den = np.asarray(denominator, dtype=float).ravel()
    keep = den != 0.0
    if not np.any(keep):
        raise UndefinedScoreError("every denominator is zero")
    ratios = pd.DataFrame(index=pd.Index(list(a_grid), name="a"), columns=pd.Index(list(b_grid), name="b"),
                          dtype=float)
    excluded = pd.DataFrame(int(np.count_nonzero(~keep)), index=ratios.index, columns=ratios.columns)
    for a in a_grid:
        for b in b_grid:
            num = np.asarray(huber[(a, b)], dtype=float).ravel()
            if num.shape != den.shape:
                raise ValueError(f"Huber predictions at a={a}, b={b} do not align with the denominator")
            ratios.loc[a, b] = float(np.mean(num[keep] / den[keep]))
    if not np.all(keep):
        logger.warning(f"{int(np.count_nonzero(~keep))} rows with zero {label or 'denominator'} excluded")
    return RatioTable(ratios, excluded, label)


def empirical_ratio_grid(samples: Sequence[EmpiricalSample], a_grid: Sequence[float], b_grid: Sequence[float],
                         tau: float) -> Dict[str, RatioTable]:
    """
    Ratio tables built from per-group empirical functionals.

    Each sample plays the role of one conditional distribution; its Huber
    quantiles over the grid are divided by its expectile and its quantile.

    Returns:
        ``{"expectile": RatioTable, "quantile": RatioTable}``
    """
    if not samples:
        raise ValueError("at least one sample is required")
    expectiles = np.array([empirical_expectile(s, tau) for s in samples])
    quantiles = np.array([empirical_quantile(s, tau) for s in samples])
    huber = {
        (a, b): np.array([empirical_huber_quantile(s, ScoreParams(tau, a, b)) for s in samples])
        for a in a_grid for b in b_grid
    }
    logger.info(f"Ratio grid over {len(samples)} samples, {len(a_grid)}x{len(b_grid)} caps at tau={tau}")
    return {
        "expectile": functional_ratio_table(huber, expectiles, a_grid, b_grid, "expectile"),
        "quantile": functional_ratio_table(huber, quantiles, a_grid, b_grid, "quantile"),
    }


@dataclass
class EvaluationReport:
    """Scores, skills against a reference, level estimates and coverage for several methods."""
    params: ScoreParams
    reference: str
    mean_scores: Dict[str, float] = field(default_factory=dict)
    skills: Dict[str, float] = field(default_factory=dict)
    level_estimates: Dict[str, float] = field(default_factory=dict)
    coverage: Dict[str, float] = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        """One row per (metric, method)."""
        rows = []
        metrics = (
            ("mean_score", self.mean_scores, ""),
            ("skill", self.skills, self.reference),
            ("level_estimate", self.level_estimates, ""),
            ("coverage", self.coverage, ""),
        )
        for metric, values, reference in metrics:
            for method, value in values.items():
                rows.append({
                    "metric": metric,
                    "method": method,
                    "reference": reference,
                    "value": value,
                    "tau": self.params.tau,
                    "a": self.params.a,
                    "b": self.params.b,
                })
        return pd.DataFrame(rows, columns=["metric", "method", "reference", "value", "tau", "a", "b"])

    def to_dict(self) -> Dict[str, Any]:
        def clean(values: Dict[str, float]) -> Dict[str, Any]:
            return {k: (None if not math.isfinite(v) else v) for k, v in values.items()}

        return {
            "params": self.params.to_dict(),
            "reference": self.reference,
            "level_estimator": LEVEL_ESTIMATOR,
            "mean_score": clean(self.mean_scores),
            "skill": clean(self.skills),
            "level_estimate": clean(self.level_estimates),
            "coverage": clean(self.coverage),
        }


def evaluate_methods(sets: Mapping[str, PredictionSet], p: ScoreParams, reference: str) -> EvaluationReport:
    """
    Score every method and compare each with the reference method.

    A level estimate that is undefined for a method is reported as NaN;
    an undefined skill raises.
    """
    if reference not in sets:
        raise ValueError(f"reference method '{reference}' not among {sorted(sets)}")
    observations = sets[reference].observations
    for label, ps in sets.items():
        if len(ps) != len(observations) or not np.array_equal(ps.observations, observations):
            raise DataValidationError(f"observations of '{label}' differ from those of '{reference}'")

    report = EvaluationReport(params=p, reference=reference)
    for label, ps in sets.items():
        report.mean_scores[label] = mean_score(ps, p)
        report.coverage[label] = coverage_frequency(ps)
        try:
            report.level_estimates[label] = huber_level_estimate(ps, p.a, p.b)
        except UndefinedScoreError:
            logger.warning(f"Level estimate undefined for '{label}'")
            report.level_estimates[label] = float("nan")
    ref_mean = report.mean_scores[reference]
    for label in sets:
        report.skills[label] = skill_score(report.mean_scores[label], ref_mean)
    logger.info(f"Evaluated {len(sets)} methods against '{reference}' on {len(observations)} rows")
    return report


def write_predictions(ps: PredictionSet, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame({
        "row_id": ps.row_ids,
        "prediction": ps.predictions,
        "observation": ps.observations,
    })
    frame.to_csv(path, index=False, float_format="%.17g")
    logger.info(f"Predictions written to {path}")
    return path


def read_predictions(path: Union[str, Path], label: Optional[str] = None) -> PredictionSet:
    """
    Load a prediction CSV with columns row_id, prediction, observation.

    Raises:
        FileNotFoundError: If the file does not exist
        DataValidationError: If columns are missing or values are not numeric
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Prediction file does not exist: {path}")
    frame = pd.read_csv(path)
    missing = [c for c in PREDICTION_COLUMNS if c not in frame.columns]
    if missing:
        raise DataValidationError(f"Missing columns in {path}: {missing}")
    if frame.empty:
        raise DataValidationError(f"No predictions in {path}")
    values = frame[["prediction", "observation"]].apply(pd.to_numeric, errors="coerce")
    if values.isna().any().any():
        raise DataValidationError(f"Non-numeric predictions or observations in {path}")
    return PredictionSet(
        values["prediction"].to_numpy(),
        values["observation"].to_numpy(),
        label or path.stem,
        frame["row_id"].to_numpy(),
    )
