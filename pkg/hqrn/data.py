"""
Data loading, normalization and splitting for the hqrn package.

This module provides utilities to:
- Load a tabular CSV into a numeric Dataset, dropping incomplete rows
- Fit and apply z-score normalization without leaking held-out rows
- Split a dataset into train/validation/test partitions
- Generate synthetic conditional log-normal regression data
- Write split tables and a JSON manifest
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.stats import norm
from sklearn.preprocessing import StandardScaler

from .functionals import FunctionalRequest, LogNormalParams, distribution_huber_quantile

logger = logging.getLogger(__name__)

DEFAULT_FRACTIONS = (0.4, 0.3, 0.3)
SPLIT_LABELS = ("train", "val", "test")


class DataValidationError(Exception):
    """Exception raised when input data cannot be used."""
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    """Numeric features, targets (10^6 currency units), column names and row ids."""
    features: np.ndarray
    target: np.ndarray
    feature_names: Tuple[str, ...]
    row_ids: np.ndarray
    target_name: str = "price"
    dropped_rows: int = 0

    def __post_init__(self):
        features = np.asarray(self.features, dtype=float)
        if features.ndim == 1:
            features = features.reshape(-1, 1) if features.size else features.reshape(0, len(self.feature_names))
        target = np.asarray(self.target, dtype=float).ravel()
        row_ids = np.asarray(self.row_ids).ravel()
        if features.shape[0] != target.shape[0] or row_ids.shape[0] != target.shape[0]:
            raise DataValidationError(
                f"Dataset is not rectangular: {features.shape[0]} feature rows, "
                f"{target.shape[0]} targets, {row_ids.shape[0]} row ids"
            )
        if features.shape[1] != len(self.feature_names):
            raise DataValidationError(
                f"{features.shape[1]} feature columns but {len(self.feature_names)} names"
            )
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "row_ids", row_ids)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    def __len__(self) -> int:
        return int(self.target.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.features.shape[1])

    def subset(self, index: np.ndarray) -> "Dataset":
        """Rows at ``index``, in that order."""
        index = np.asarray(index, dtype=int)
        return Dataset(self.features[index], self.target[index], self.feature_names,
                       self.row_ids[index], self.target_name)

    def with_features(self, features: np.ndarray) -> "Dataset":
        return Dataset(features, self.target, self.feature_names, self.row_ids,
                       self.target_name, self.dropped_rows)

    @staticmethod
    def concat(parts: Sequence["Dataset"]) -> "Dataset":
        """Stack datasets sharing the same columns."""
        first = parts[0]
        for part in parts[1:]:
            if part.feature_names != first.feature_names:
                raise DataValidationError("cannot concatenate datasets with different columns")
        return Dataset(
            np.vstack([p.features for p in parts]),
            np.concatenate([p.target for p in parts]),
            first.feature_names,
            np.concatenate([p.row_ids for p in parts]),
            first.target_name,
        )

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.features, columns=list(self.feature_names))
        frame.insert(0, "row_id", self.row_ids)
        frame[self.target_name] = self.target
        return frame


@dataclass(frozen=True, eq=False)
class NormStats:
    """Per-feature mean and standard deviation fitted on one set."""
    mean: np.ndarray
    std: np.ndarray
    feature_names: Tuple[str, ...] = ()
    method: str = "zscore"

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).ravel()
        std = np.asarray(self.std, dtype=float).ravel()
        if mean.shape != std.shape:
            raise ValueError("NormStats mean and std must have the same length")
        if np.any(~(std > 0.0)):
            raise ValueError("NormStats standard deviations must be positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @classmethod
    def identity(cls, n_features: int) -> "NormStats":
        return cls(np.zeros(n_features), np.ones(n_features))

    def transform(self, features: np.ndarray) -> np.ndarray:
        return (np.asarray(features, dtype=float) - self.mean) / self.std

    def inverse(self, features: np.ndarray) -> np.ndarray:
        return np.asarray(features, dtype=float) * self.std + self.mean

    def to_dict(self) -> Dict[str, Any]:
        return {
            "method": self.method,
            "feature_names": list(self.feature_names),
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "NormStats":
        return cls(np.array(data["mean"], dtype=float), np.array(data["std"], dtype=float),
                   tuple(data.get("feature_names", ())), data.get("method", "zscore"))


def load_table(path: Union[str, Path], feature_columns: Sequence[str], target_column: str,
               target_scale: Optional[float] = None, id_column: Optional[str] = None) -> Dataset:
    """
    Load a CSV table into a Dataset.

    Rows with a missing or non-numeric value in any selected column are dropped
    and counted in ``Dataset.dropped_rows``.

    Args:
        path: CSV file with a header row (comma separated, UTF-8, '.' decimal)
        feature_columns: Predictor columns, in model input order
        target_column: Target column
        target_scale: Divide the target by this factor (e.g. 1e6 for prices in currency units)
        id_column: Column holding row identifiers (default: 0-based file row index)

    Returns:
        Loaded Dataset

    Raises:
        FileNotFoundError: If the file does not exist
        DataValidationError: If columns are missing or no complete row remains
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Data file does not exist: {path}")
    logger.info(f"Loading table from {path}")

    df = pd.read_csv(path, encoding="utf-8", low_memory=False)
    selected = list(feature_columns) + [target_column]
    missing = [col for col in selected + ([id_column] if id_column else []) if col not in df.columns]
    if missing:
        raise DataValidationError(f"Columns missing in {path.name}: {missing}")
    if not feature_columns:
        raise DataValidationError("At least one feature column is required")

    numeric = df[selected].apply(pd.to_numeric, errors="coerce")
    complete = numeric.notna().all(axis=1) & np.isfinite(numeric.to_numpy(dtype=float)).all(axis=1)
    dropped = int((~complete).sum())
    numeric = numeric.loc[complete]
    if numeric.empty:
        raise DataValidationError(f"No complete rows in {path.name} for columns {selected}")

    target = numeric[target_column].to_numpy(dtype=float)
    if target_scale:
        target = target / float(target_scale)
    row_ids = df.loc[complete, id_column].to_numpy() if id_column else numeric.index.to_numpy()

    logger.info(f"Loaded {len(numeric)} rows from {path.name}, dropped {dropped} incomplete rows")
    return Dataset(numeric[list(feature_columns)].to_numpy(dtype=float), target,
                   tuple(feature_columns), row_ids, target_column, dropped)


def zscore_fit(d: Dataset) -> NormStats:
    """
    Fit z-score statistics on the features of ``d``.

    Raises:
        DataValidationError: If the set is empty or a feature has zero variance
    """
    if len(d) == 0:
        raise DataValidationError("Cannot fit normalization on an empty dataset")
    scaler = StandardScaler().fit(d.features)
    std = np.sqrt(scaler.var_)
    constant = [name for name, s in zip(d.feature_names, std) if not s > 0.0]
    if constant:
        raise DataValidationError(f"Zero-variance feature(s) cannot be normalized: {constant}")
    logger.debug(f"Fitted z-score statistics on {len(d)} rows")
    return NormStats(scaler.mean_.copy(), std, d.feature_names)


def zscore_apply(d: Dataset, stats: NormStats) -> Dataset:
    """Normalize features with previously fitted statistics; targets untouched."""
    if d.n_features != stats.mean.shape[0]:
        raise DataValidationError(
            f"Normalization fitted on {stats.mean.shape[0]} features, dataset has {d.n_features}"
        )
    return d.with_features(stats.transform(d.features))


def zscore_invert(d: Dataset, stats: NormStats) -> Dataset:
    """Undo :func:`zscore_apply`."""
    return d.with_features(stats.inverse(d.features))


def split_sizes(n: int, fractions: Sequence[float] = DEFAULT_FRACTIONS) -> Tuple[int, int, int]:
    """Validation and test sizes are round-half-up(f * n); training takes the remainder."""
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f <= 0.0 for f in fractions) or not math.isclose(sum(fractions), 1.0):
        raise ValueError(f"Split fractions must be three positive numbers summing to 1, got {fractions}")
    if n < 3:
        raise DataValidationError(f"Need at least 3 rows to split, got {n}")
    n_val = max(1, int(math.floor(fractions[1] * n + 0.5)))
    n_test = max(1, int(math.floor(fractions[2] * n + 0.5)))
    n_train = n - n_val - n_test
    if n_train < 1:
        raise DataValidationError(f"Split of {n} rows leaves no training rows")
    return n_train, n_val, n_test


def split_dataset(d: Dataset, fractions: Sequence[float] = DEFAULT_FRACTIONS,
                  seed: int = 0) -> Tuple[Dataset, Dataset, Dataset]:
    """
    Seeded random partition into train, validation and test sets.

    Args:
        d: Dataset to split
        fractions: (train, val, test) fractions
        seed: Shuffle seed

    Returns:
        (train, val, test), disjoint and exhaustive
    """
    n_train, n_val, n_test = split_sizes(len(d), fractions)
    order = np.random.default_rng(seed).permutation(len(d))
    train = d.subset(order[:n_train])
    val = d.subset(order[n_train:n_train + n_val])
    test = d.subset(order[n_train + n_val:])
    logger.info(f"Split {len(d)} rows into {n_train}/{n_val}/{n_test} (seed={seed})")
    return train, val, test


def synth_lognormal_regression(n: int, d: int, coefficients: Sequence[float], sigma: float,
                               seed: int) -> Dataset:
    """
    Synthetic data with a log-normal conditional law.

    Features are uniform on [0, 1]^d and the target is
    ``exp(beta_0 + x . beta + sigma * z)`` with standard normal z.

    Args:
        n: Number of rows
        d: Number of features (0 gives an unconditional log-normal sample)
        coefficients: Intercept followed by d slopes
        sigma: Log-scale noise spread (> 0)
        seed: Generator seed
    """
    if not sigma > 0.0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    coefficients = np.asarray(coefficients, dtype=float).ravel()
    if coefficients.shape[0] != d + 1:
        raise ValueError(f"Expected {d + 1} coefficients (intercept + {d} slopes), got {coefficients.shape[0]}")
    rng = np.random.default_rng(seed)
    features = rng.uniform(0.0, 1.0, size=(n, d))
    z = rng.standard_normal(n)
    target = np.exp(coefficients[0] + features @ coefficients[1:] + sigma * z)
    names = tuple(f"x{i + 1}" for i in range(d))
    return Dataset(features, target, names, np.arange(n), "price")


def _conditional_mu(features: np.ndarray, coefficients: Sequence[float]) -> np.ndarray:
    coefficients = np.asarray(coefficients, dtype=float).ravel()
    features = np.asarray(features, dtype=float).reshape(-1, coefficients.shape[0] - 1)
    return coefficients[0] + features @ coefficients[1:]


def true_conditional_quantile(features: np.ndarray, coefficients: Sequence[float],
                              sigma: float, tau: float) -> np.ndarray:
    """Closed-form conditional tau-quantile of the synthetic generator."""
    return np.exp(_conditional_mu(features, coefficients) + sigma * norm.ppf(tau))


def true_conditional_functional(features: np.ndarray, coefficients: Sequence[float],
                                sigma: float, req: FunctionalRequest) -> np.ndarray:
    """Conditional quantile/expectile/Huber quantile of the synthetic generator, row by row."""
    return np.array([
        distribution_huber_quantile(LogNormalParams(float(mu), sigma), req)
        for mu in _conditional_mu(features, coefficients)
    ])


def write_splits(train: Dataset, val: Dataset, test: Dataset, path: Union[str, Path]) -> Path:
    """Write all rows with an added ``split`` label column."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frames = []
    for label, part in zip(SPLIT_LABELS, (train, val, test)):
        frame = part.to_frame()
        frame["split"] = label
        frames.append(frame)
    pd.concat(frames, ignore_index=True).to_csv(path, index=False, float_format="%.17g")
    logger.info(f"Split table written to {path}")
    return path


def read_split(path: Union[str, Path], label: str, feature_columns: Sequence[str],
               target_column: str) -> Dataset:
    """Read one partition back from a table written by :func:`write_splits`."""
    df = pd.read_csv(path)
    if "split" not in df.columns:
        raise DataValidationError(f"{path} has no 'split' column")
    part = df.loc[df["split"] == label]
    if part.empty:
        raise DataValidationError(f"{path} has no rows labelled '{label}'")
    return Dataset(part[list(feature_columns)].to_numpy(dtype=float),
                   part[target_column].to_numpy(dtype=float), tuple(feature_columns),
                   part["row_id"].to_numpy(), target_column)


@dataclass
class DataManifest:
    """Row counts and settings that produced a split."""
    source: str
    rows: int
    dropped_rows: int
    seed: int
    fractions: Tuple[float, float, float]
    split_rows: Dict[str, int] = field(default_factory=dict)
    feature_columns: List[str] = field(default_factory=list)
    target_column: str = "price"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "source": self.source,
            "rows": self.rows,
            "dropped_rows": self.dropped_rows,
            "seed": self.seed,
            "fractions": list(self.fractions),
            "split_rows": dict(self.split_rows),
            "feature_columns": list(self.feature_columns),
            "target_column": self.target_column,
            "normalization": "zscore",
        }


def write_manifest(manifest: DataManifest, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest.to_dict(), f, indent=2)
    return path


def load_column(path: Union[str, Path], column: str) -> np.ndarray:
    """
    Numeric values of one CSV column, dropping missing or non-numeric entries.

    Raises:
        FileNotFoundError: If the file does not exist
        DataValidationError: If the column is missing or holds no numeric value
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Data file does not exist: {path}")
    df = pd.read_csv(path, encoding="utf-8", low_memory=False)
    if column not in df.columns:
        raise DataValidationError(f"Column '{column}' missing in {path.name}")
    values = pd.to_numeric(df[column], errors="coerce").to_numpy(dtype=float)
    values = values[np.isfinite(values)]
    if values.size == 0:
        raise DataValidationError(f"No numeric values in column '{column}' of {path.name}")
    return values
