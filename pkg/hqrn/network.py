"""
Dense feed-forward regression networks trained against Huber quantile scores.

This module provides:
- Architecture specifications and the three preset architectures
- Seeded initialization, forward pass with inverted dropout
- Reverse-mode gradients seeded by the analytic score subgradient
- ADAM updates, early stopping and the fixed-epoch refit
- Batch prediction and JSON persistence of trained models
"""

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .data import Dataset, NormStats
from .functionals import NumericalError
from .scoring import ScoreParams, huber_quantile_score, score_subgradient

logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1


class TrainingDivergedError(NumericalError):
    """Exception raised when the training loss becomes non-finite."""

    def __init__(self, message: str, epoch: Optional[int] = None):
        if epoch is not None:
            message = f"{message} at epoch {epoch}"
        super().__init__(message)
        self.epoch = epoch


@dataclass(frozen=True)
class LayerSpec:
    """A hidden layer: ``dense`` with ``units`` ReLU units, or ``dropout`` with ``rate``."""
    kind: str
    units: int = 0
    rate: float = 0.0

    def __post_init__(self):
        if self.kind == "dense":
            if int(self.units) < 1:
                raise ValueError(f"dense layer needs at least one unit, got {self.units}")
        elif self.kind == "dropout":
            if not 0.0 < self.rate < 1.0:
                raise ValueError(f"dropout rate must lie in (0, 1), got {self.rate}")
        else:
            raise ValueError(f"Unknown layer kind '{self.kind}'")

    @classmethod
    def dense(cls, units: int) -> "LayerSpec":
        return cls("dense", units=int(units))

    @classmethod
    def dropout(cls, rate: float) -> "LayerSpec":
        return cls("dropout", rate=float(rate))


@dataclass(frozen=True)
class ArchitectureSpec:
    """Input width and hidden layers; the output is always one linear unit."""
    input_dim: int
    layers: Tuple[LayerSpec, ...]
    name: str = "custom"

    def __post_init__(self):
        if int(self.input_dim) < 1:
            raise ValueError(f"input_dim must be positive, got {self.input_dim}")
        object.__setattr__(self, "layers", tuple(self.layers))
        if not any(layer.kind == "dense" for layer in self.layers):
            raise ValueError("architecture needs at least one dense layer")

    @property
    def output_dim(self) -> int:
        return 1

    def shape_chain(self) -> List[int]:
        """Widths from input through every dense layer to the single output."""
        return [self.input_dim] + [l.units for l in self.layers if l.kind == "dense"] + [1]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "input_dim": self.input_dim,
            "layers": [
                {"kind": l.kind, "units": l.units} if l.kind == "dense" else {"kind": l.kind, "rate": l.rate}
                for l in self.layers
            ],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ArchitectureSpec":
        layers = tuple(
            LayerSpec.dense(l["units"]) if l["kind"] == "dense" else LayerSpec.dropout(l["rate"])
            for l in data["layers"]
        )
        return cls(int(data["input_dim"]), layers, data.get("name", "custom"))


PRESETS: Dict[str, Tuple[LayerSpec, ...]] = {
    "model1": (LayerSpec.dense(64), LayerSpec.dense(64), LayerSpec.dense(64), LayerSpec.dense(32)),
    "model2": (LayerSpec.dense(64), LayerSpec.dense(64), LayerSpec.dropout(0.5), LayerSpec.dense(32)),
    "model3": (LayerSpec.dense(64), LayerSpec.dense(64)),
}


def architecture_preset(name: str, input_dim: int) -> ArchitectureSpec:
    """One of ``model1``, ``model2``, ``model3`` for the given input width."""
    key = name.lower()
    if key not in PRESETS:
        raise ValueError(f"Unknown architecture '{name}'; expected one of {sorted(PRESETS)}")
    return ArchitectureSpec(input_dim, PRESETS[key], key)


@dataclass(frozen=True)
class TrainConfig:
    """ADAM and minibatch settings."""
    learning_rate: float = 0.005
    batch_size: int = 32
    max_epochs: int = 200
    patience: int = 10
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0.0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if int(self.batch_size) < 1:
            raise ValueError(f"batch_size must be positive, got {self.batch_size}")
        if int(self.max_epochs) < 1:
            raise ValueError(f"max_epochs must be positive, got {self.max_epochs}")
        if int(self.patience) < 0:
            raise ValueError(f"patience must be nonnegative, got {self.patience}")
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError(f"ADAM betas must lie in (0, 1), got {self.beta1}, {self.beta2}")
        if not self.epsilon > 0.0:
            raise ValueError(f"ADAM epsilon must be positive, got {self.epsilon}")


@dataclass(frozen=True, eq=False)
class NetworkModel:
    """Architecture, weights, normalization statistics and the loss it was trained with."""
    arch: ArchitectureSpec
    weights: Tuple[np.ndarray, ...]
    biases: Tuple[np.ndarray, ...]
    norm_stats: NormStats
    loss_params: ScoreParams
    seed: int = 0

    def __post_init__(self):
        chain = self.arch.shape_chain()
        if len(self.weights) != len(chain) - 1 or len(self.biases) != len(chain) - 1:
            raise ValueError(f"expected {len(chain) - 1} weight layers for shape chain {chain}")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (chain[i], chain[i + 1]) or b.shape != (chain[i + 1],):
                raise ValueError(
                    f"layer {i} has shapes {w.shape}/{b.shape}, expected "
                    f"{(chain[i], chain[i + 1])}/{(chain[i + 1],)}"
                )
        if self.norm_stats.mean.shape[0] != self.arch.input_dim:
            raise ValueError("norm_stats width does not match input_dim")

    def parameters(self) -> List[np.ndarray]:
        """Parameters in update order: W1, b1, W2, b2, ..."""
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend([w, b])
        return params

    def with_parameters(self, params: Sequence[np.ndarray]) -> "NetworkModel":
        return replace(self, weights=tuple(params[0::2]), biases=tuple(params[1::2]))


@dataclass
class AdamState:
    """First and second moment estimates, one array per parameter."""
    m: List[np.ndarray]
    v: List[np.ndarray]

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray]) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


@dataclass
class TrainReport:
    """Per-epoch mean scores and the early-stopping outcome."""
    train_scores: List[float] = field(default_factory=list)
    val_scores: List[float] = field(default_factory=list)
    best_epoch: int = 0
    stopped_at: int = 0

    def to_rows(self) -> List[Dict[str, Any]]:
        rows = []
        for i, train_score in enumerate(self.train_scores):
            rows.append({
                "epoch": i + 1,
                "train_score": train_score,
                "val_score": self.val_scores[i] if i < len(self.val_scores) else float("nan"),
                "best": (i + 1) == self.best_epoch,
            })
        return rows


class EarlyStopping:
    """
    Stops training when the validation score has not improved for ``patience`` epochs.
    """

    def __init__(self, patience: int = 10, delta: float = 0.0):
        """
        Args:
            patience: Non-improving epochs tolerated before stopping
            delta: Minimum decrease that counts as an improvement
        """
        self.patience = patience
        self.delta = delta
        self.counter = 0
        self.best_score: Optional[float] = None
        self.best_epoch = 0
        self.early_stop = False

    def __call__(self, val_score: float, epoch: int) -> bool:
        """Record the score of ``epoch`` (1-based); returns True if it is a new best."""
        if self.best_score is None or val_score < self.best_score - self.delta:
            self.best_score = val_score
            self.best_epoch = epoch
            self.counter = 0
            return True
        self.counter += 1
        if self.counter >= self.patience:
            self.early_stop = True
        return False


def _relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


def init_network(arch: ArchitectureSpec, seed: int, loss_params: Optional[ScoreParams] = None,
                 norm_stats: Optional[NormStats] = None) -> NetworkModel:
    """
    Fan-in scaled uniform initialization with zero biases.

    Hidden layers draw from U(-sqrt(6/fan_in), sqrt(6/fan_in)); the linear
    output layer from U(-sqrt(3/fan_in), sqrt(3/fan_in)).
    """
    rng = np.random.default_rng(seed)
    chain = arch.shape_chain()
    weights, biases = [], []
    for i, (fan_in, fan_out) in enumerate(zip(chain[:-1], chain[1:])):
        gain = 3.0 if i == len(chain) - 2 else 6.0
        limit = math.sqrt(gain / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return NetworkModel(
        arch=arch,
        weights=tuple(weights),
        biases=tuple(biases),
        norm_stats=norm_stats or NormStats.identity(arch.input_dim),
        loss_params=loss_params or ScoreParams(0.5),
        seed=seed,
    )


def _forward_cache(m: NetworkModel, features: np.ndarray, train: bool,
                   rng: Optional[np.random.Generator]):
    """Batch forward pass keeping what backpropagation needs."""
    h = features
    cache = []
    dense_index = 0
    for layer in m.arch.layers:
        if layer.kind == "dense":
            z = h @ m.weights[dense_index] + m.biases[dense_index]
            cache.append(("dense", dense_index, h, z))
            h = _relu(z)
            dense_index += 1
        elif train:
            if rng is None:
                raise ValueError("train mode with dropout needs a random generator")
            mask = (rng.random(h.shape) >= layer.rate) / (1.0 - layer.rate)
            cache.append(("dropout", mask))
            h = h * mask
    out = h @ m.weights[-1] + m.biases[-1]
    return out[:, 0], h, cache


def forward_batch(m: NetworkModel, features: np.ndarray, mode: str = "infer",
                  rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Predictions for model-space (already normalized) feature rows."""
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode}")
    features = np.asarray(features, dtype=float)
    if features.ndim != 2 or features.shape[1] != m.arch.input_dim:
        raise ValueError(f"expected feature rows of width {m.arch.input_dim}, got shape {features.shape}")
    return _forward_cache(m, features, mode == "train", rng)[0]


def forward(m: NetworkModel, features: Sequence[float], mode: str = "infer", mask_seed: int = 0) -> float:
    """Prediction for one model-space feature vector; dropout masks drawn from ``mask_seed``."""
    row = np.asarray(features, dtype=float)
    if row.ndim != 1 or row.shape[0] != m.arch.input_dim:
        raise ValueError(f"expected {m.arch.input_dim} features, got shape {row.shape}")
    rng = np.random.default_rng(mask_seed) if mode == "train" else None
    return float(forward_batch(m, row[None, :], mode, rng)[0])


def loss_and_gradients(m: NetworkModel, features: np.ndarray, targets: np.ndarray, p: ScoreParams,
                       mode: str = "train", rng: Optional[np.random.Generator] = None
                       ) -> Tuple[float, List[np.ndarray]]:
    """
    Mean Huber quantile score over a batch and its gradient for every parameter.

    Args:
        m: Network
        features: Model-space features, shape (n, input_dim)
        targets: Observations, shape (n,)
        p: Score parameters
        mode: ``train`` applies dropout, ``infer`` does not
        rng: Generator for dropout masks

    Returns:
        (mean loss, gradients in :meth:`NetworkModel.parameters` order)

    Raises:
        TrainingDivergedError: If predictions or the loss are non-finite
    """
    features = np.asarray(features, dtype=float)
    targets = np.asarray(targets, dtype=float).ravel()
    n = targets.shape[0]
    if n == 0:
        raise ValueError("loss_and_gradients needs a nonempty batch")
    if features.shape != (n, m.arch.input_dim):
        raise ValueError(f"expected features of shape {(n, m.arch.input_dim)}, got {features.shape}")
    pred, h_last, cache = _forward_cache(m, features, mode == "train", rng)
    if not np.all(np.isfinite(pred)):
        raise TrainingDivergedError("non-finite network output")
    loss = float(np.mean(huber_quantile_score(pred, targets, p)))
    if not math.isfinite(loss):
        raise TrainingDivergedError("non-finite training loss")

    n_dense = len(m.weights)
    grad_w: List[np.ndarray] = [np.empty(0)] * n_dense
    grad_b: List[np.ndarray] = [np.empty(0)] * n_dense

    delta = (np.asarray(score_subgradient(pred, targets, p)) / n)[:, None]
    grad_w[-1] = h_last.T @ delta
    grad_b[-1] = delta.sum(axis=0)
    upstream = delta @ m.weights[-1].T
    for entry in reversed(cache):
        if entry[0] == "dropout":
            upstream = upstream * entry[1]
            continue
        _, idx, h_in, z = entry
        dz = upstream * (z > 0.0)
        grad_w[idx] = h_in.T @ dz
        grad_b[idx] = dz.sum(axis=0)
        upstream = dz @ m.weights[idx].T

    grads = []
    for gw, gb in zip(grad_w, grad_b):
        grads.extend([gw, gb])
    return loss, grads


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState,
              cfg: TrainConfig, t: int) -> Tuple[List[np.ndarray], AdamState]:
    """
    One bias-corrected ADAM update; inputs are not modified.

    Args:
        params: Current parameters
        grads: Gradients, same shapes
        state: Moment estimates before the step
        cfg: Step size and moment constants
        t: 1-based step index

    Returns:
        (updated parameters, updated state)
    """
    if t < 1:
        raise ValueError(f"ADAM step index starts at 1, got {t}")
    new_params, new_m, new_v = [], [], []
    bc1 = 1.0 - cfg.beta1 ** t
    bc2 = 1.0 - cfg.beta2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        new_params.append(p - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon))
        new_m.append(m)
        new_v.append(v)
    return new_params, AdamState(new_m, new_v)


def _seeds(seed: int) -> Tuple[int, np.random.Generator]:
    # initialization seed and an independent stream for shuffling and dropout
    init_seq, run_seq = np.random.SeedSequence(seed).spawn(2)
    return int(init_seq.generate_state(1)[0]), np.random.default_rng(run_seq)


def initial_network(arch: ArchitectureSpec, p: ScoreParams, cfg: TrainConfig,
                    norm_stats: Optional[NormStats] = None) -> NetworkModel:
    """The untrained network both training phases start from under ``cfg.seed``."""
    init_seed, _ = _seeds(cfg.seed)
    return replace(init_network(arch, init_seed, p, norm_stats), seed=cfg.seed)


def _run_epoch(model: NetworkModel, state: AdamState, step: int, data: Dataset, p: ScoreParams,
               cfg: TrainConfig, rng: np.random.Generator, epoch: int):
    order = rng.permutation(len(data))
    total = 0.0
    for start in range(0, len(data), cfg.batch_size):
        idx = order[start:start + cfg.batch_size]
        try:
            loss, grads = loss_and_gradients(model, data.features[idx], data.target[idx], p, "train", rng)
        except TrainingDivergedError as exc:
            raise TrainingDivergedError(str(exc), epoch) from exc
        step += 1
        params, state = adam_step(model.parameters(), grads, state, cfg, step)
        model = model.with_parameters(params)
        total += loss * len(idx)
    return model, state, step, total / len(data)


def _check_dataset(data: Dataset, arch: ArchitectureSpec, label: str) -> None:
    if len(data) == 0:
        raise ValueError(f"{label} set is empty")
    if data.n_features != arch.input_dim:
        raise ValueError(f"{label} set has {data.n_features} features, architecture expects {arch.input_dim}")


def validation_score(m: NetworkModel, data: Dataset, p: ScoreParams) -> float:
    """Mean score of infer-mode predictions on model-space features."""
    pred = forward_batch(m, data.features)
    if not np.all(np.isfinite(pred)):
        raise TrainingDivergedError("non-finite validation prediction")
    return float(np.mean(huber_quantile_score(pred, data.target, p)))


def train_early_stopping(train: Dataset, val: Dataset, arch: ArchitectureSpec, p: ScoreParams,
                         cfg: TrainConfig, norm_stats: Optional[NormStats] = None
                         ) -> Tuple[NetworkModel, TrainReport]:
    """
    Train with minibatch ADAM and stop when validation stops improving.

    Features of both sets must already be normalized with ``norm_stats``
    (fitted on ``train``); targets stay in their original units.

    Returns:
        (network restored to the best epoch, training report)
    """
    _check_dataset(train, arch, "training")
    _check_dataset(val, arch, "validation")
    _, rng = _seeds(cfg.seed)
    model = initial_network(arch, p, cfg, norm_stats)
    state = AdamState.zeros_like(model.parameters())
    stopper = EarlyStopping(cfg.patience)
    report = TrainReport()
    best_model = model
    step = 0

    for epoch in range(1, cfg.max_epochs + 1):
        model, state, step, train_score = _run_epoch(model, state, step, train, p, cfg, rng, epoch)
        try:
            val_score = validation_score(model, val, p)
        except TrainingDivergedError as exc:
            raise TrainingDivergedError(str(exc), epoch) from exc
        report.train_scores.append(train_score)
        report.val_scores.append(val_score)
        report.stopped_at = epoch
        logger.debug(f"epoch {epoch}: train={train_score:.6f} val={val_score:.6f}")
        if stopper(val_score, epoch):
            best_model = model
        if stopper.early_stop:
            break

    report.best_epoch = stopper.best_epoch
    logger.info(
        f"Early stopping at epoch {report.stopped_at}; best epoch {report.best_epoch} "
        f"(val score {stopper.best_score:.6f})"
    )
    return best_model, report


def refit_fixed_epochs(train_plus_val: Dataset, arch: ArchitectureSpec, p: ScoreParams,
                       cfg: TrainConfig, epochs: int, norm_stats: Optional[NormStats] = None
                       ) -> NetworkModel:
    """Train a fresh network for exactly ``epochs`` epochs on the merged set."""
    if epochs < 0:
        raise ValueError(f"epochs must be nonnegative, got {epochs}")
    _check_dataset(train_plus_val, arch, "refit")
    _, rng = _seeds(cfg.seed)
    model = initial_network(arch, p, cfg, norm_stats)
    state = AdamState.zeros_like(model.parameters())
    step = 0
    for epoch in range(1, epochs + 1):
        model, state, step, train_score = _run_epoch(model, state, step, train_plus_val, p, cfg, rng, epoch)
        logger.debug(f"refit epoch {epoch}: train={train_score:.6f}")
    logger.info(f"Refit {epochs} epochs on {len(train_plus_val)} rows")
    return model


def predict_batch(m: NetworkModel, features: np.ndarray) -> np.ndarray:
    """Infer-mode predictions for raw feature rows, normalized with the model's statistics."""
    features = np.asarray(features, dtype=float)
    if features.size == 0:
        return np.zeros(0)
    if features.ndim != 2 or features.shape[1] != m.arch.input_dim:
        raise ValueError(f"expected feature rows of width {m.arch.input_dim}, got shape {features.shape}")
    return forward_batch(m, m.norm_stats.transform(features))


def model_to_dict(m: NetworkModel) -> Dict[str, Any]:
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "architecture": m.arch.to_dict(),
        "loss_params": m.loss_params.to_dict(),
        "norm_stats": m.norm_stats.to_dict(),
        "seed": m.seed,
        "weights": [w.tolist() for w in m.weights],
        "biases": [b.tolist() for b in m.biases],
    }


def model_from_dict(data: Dict[str, Any]) -> NetworkModel:
    arch = ArchitectureSpec.from_dict(data["architecture"])
    return NetworkModel(
        arch=arch,
        weights=tuple(np.array(w, dtype=float).reshape(-1, len(w[0]) if w else 0) for w in data["weights"]),
        biases=tuple(np.array(b, dtype=float) for b in data["biases"]),
        norm_stats=NormStats.from_dict(data["norm_stats"]),
        loss_params=ScoreParams.from_dict(data["loss_params"]),
        seed=int(data.get("seed", 0)),
    )


def save_model(m: NetworkModel, path: Union[str, Path]) -> Path:
    """Write the model as one JSON document; floats keep their exact binary value."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(model_to_dict(m), f, indent=1)
    logger.info(f"Model saved to {path}")
    return path


def load_model(path: Union[str, Path]) -> NetworkModel:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Model file does not exist: {path}")
    with open(path, "r", encoding="utf-8") as f:
        return model_from_dict(json.load(f))
