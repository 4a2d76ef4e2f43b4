"""
Workflow orchestration for the two-phase fitting protocol.

This module provides the fit orchestrator that runs, in dependency order:
split, normalization on the training set, early-stopped training,
normalization on train+validation, the fixed-epoch refit, and writing of
all artifacts.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Union

import pandas as pd

from .configuration import HQRConfig, get_config
from .data import (
    DataManifest,
    Dataset,
    split_dataset,
    write_manifest,
    write_splits,
    zscore_apply,
    zscore_fit,
)
from .evaluation import PredictionSet, write_predictions
from .network import (
    architecture_preset,
    predict_batch,
    refit_fixed_epochs,
    save_model,
    train_early_stopping,
)

logger = logging.getLogger(__name__)


@dataclass
class PipelineStep:
    """Represents a single step of the fitting protocol."""
    name: str
    action: Callable[[], None]
    description: str = ""
    dependencies: List[str] = field(default_factory=list)


@dataclass
class PipelineRun:
    """Represents one execution of the fitting protocol."""
    run_id: str
    status: str = "running"  # running, completed, failed
    steps_completed: List[str] = field(default_factory=list)
    steps_failed: List[str] = field(default_factory=list)
    error_messages: List[str] = field(default_factory=list)
    outputs_generated: Dict[str, str] = field(default_factory=dict)  # artifact -> path


def tau_suffix(tau: float) -> str:
    """File-name suffix for a level, e.g. ``_tau0.4``."""
    return f"_tau{tau:g}"


class FitPipeline:
    """Fit one network for one set of score parameters."""

    def __init__(self,
                 dataset: Dataset,
                 output_path: Union[str, Path] = "output",
                 config: Optional[HQRConfig] = None,
                 suffix: str = "",
                 source: str = ""):
        """
        Initialize the fit pipeline.

        Args:
            dataset: Full dataset (features in original units)
            output_path: Directory receiving all artifacts
            config: Resolved configuration
            suffix: Appended to per-model file names (``model{suffix}.json``)
            source: Description of where the dataset came from, for the manifest
        """
        self.dataset = dataset
        self.output_path = Path(output_path)
        self.config = config or get_config()
        self.suffix = suffix
        self.source = source
        self.params = self.config.score_params()
        self.train_cfg = self.config.train_config()
        self.arch = architecture_preset(self.config.get_setting("training.arch", "model3"), dataset.n_features)

        self.state: Dict[str, Any] = {}
        self.steps = self._define_pipeline_steps()
        self.current_run: Optional[PipelineRun] = None
        self._check_circular_dependencies()

    def _define_pipeline_steps(self) -> Dict[str, PipelineStep]:
        """Define all pipeline steps and their dependencies."""
        return {
            "split": PipelineStep(
                name="split",
                action=self._split,
                description="Seeded train/validation/test partition",
            ),
            "normalize_train": PipelineStep(
                name="normalize_train",
                action=self._normalize_train,
                description="Fit z-scores on train, apply to train and validation",
                dependencies=["split"],
            ),
            "early_stopping": PipelineStep(
                name="early_stopping",
                action=self._early_stopping,
                description="Train with early stopping to find the best epoch",
                dependencies=["normalize_train"],
            ),
            "normalize_merged": PipelineStep(
                name="normalize_merged",
                action=self._normalize_merged,
                description="Fit z-scores on train+validation",
                dependencies=["split"],
            ),
            "refit": PipelineStep(
                name="refit",
                action=self._refit,
                description="Refit from scratch on train+validation for the best epoch count",
                dependencies=["early_stopping", "normalize_merged"],
            ),
            "write_outputs": PipelineStep(
                name="write_outputs",
                action=self._write_outputs,
                description="Write model, training report and test predictions",
                dependencies=["refit"],
            ),
        }

    def _check_circular_dependencies(self):
        """Check for circular dependencies in the pipeline."""
        def has_cycle(step_name: str, visited: set, rec_stack: set) -> bool:
            visited.add(step_name)
            rec_stack.add(step_name)

            step = self.steps.get(step_name)
            if step:
                for dep in step.dependencies:
                    if dep not in visited:
                        if has_cycle(dep, visited, rec_stack):
                            return True
                    elif dep in rec_stack:
                        return True

            rec_stack.remove(step_name)
            return False

        visited = set()
        for step_name in self.steps:
            if step_name not in visited:
                if has_cycle(step_name, visited, set()):
                    raise ValueError(f"Circular dependency detected in pipeline starting from {step_name}")

    def get_execution_order(self) -> List[str]:
        """Get the correct execution order based on dependencies."""
        in_degree = {step_name: 0 for step_name in self.steps}

        for step in self.steps.values():
            for dep in step.dependencies:
                if dep in in_degree:
                    in_degree[step.name] += 1

        queue = [step_name for step_name, degree in in_degree.items() if degree == 0]
        execution_order = []

        while queue:
            current = queue.pop(0)
            execution_order.append(current)

            for step in self.steps.values():
                if current in step.dependencies:
                    in_degree[step.name] -= 1
                    if in_degree[step.name] == 0:
                        queue.append(step.name)

        if len(execution_order) != len(self.steps):
            raise ValueError("Cannot determine execution order - possible circular dependencies")

        return execution_order

    # steps

    def _split(self):
        fractions = tuple(self.config.get_setting("data.fractions", [0.4, 0.3, 0.3]))
        seed = int(self.config.get_setting("data.split_seed", 0))
        train, val, test = split_dataset(self.dataset, fractions, seed)
        self.state.update(train=train, val=val, test=test)

        splits_path = write_splits(train, val, test, self.output_path / "splits.csv")
        manifest = DataManifest(
            source=self.source,
            rows=len(self.dataset),
            dropped_rows=self.dataset.dropped_rows,
            seed=seed,
            fractions=fractions,
            split_rows={"train": len(train), "val": len(val), "test": len(test)},
            feature_columns=list(self.dataset.feature_names),
            target_column=self.dataset.target_name,
        )
        manifest_path = write_manifest(manifest, self.output_path / "manifest.json")
        self._record("splits", splits_path)
        self._record("manifest", manifest_path)

    def _normalize_train(self):
        stats = zscore_fit(self.state["train"])
        self.state["train_stats"] = stats
        self.state["train_n"] = zscore_apply(self.state["train"], stats)
        self.state["val_n"] = zscore_apply(self.state["val"], stats)

    def _early_stopping(self):
        model, report = train_early_stopping(
            self.state["train_n"], self.state["val_n"], self.arch, self.params,
            self.train_cfg, self.state["train_stats"],
        )
        self.state["selection_model"] = model
        self.state["report"] = report

    def _normalize_merged(self):
        merged = Dataset.concat([self.state["train"], self.state["val"]])
        stats = zscore_fit(merged)
        self.state["merged_stats"] = stats
        self.state["merged_n"] = zscore_apply(merged, stats)

    def _refit(self):
        epochs = self.state["report"].best_epoch
        self.state["model"] = refit_fixed_epochs(
            self.state["merged_n"], self.arch, self.params, self.train_cfg, epochs,
            self.state["merged_stats"],
        )

    def _write_outputs(self):
        model = self.state["model"]
        model_path = save_model(model, self.output_path / f"model{self.suffix}.json")
        self._record("model", model_path)

        report_path = self.output_path / f"train_report{self.suffix}.csv"
        pd.DataFrame(self.state["report"].to_rows(),
                     columns=["epoch", "train_score", "val_score", "best"]).to_csv(
            report_path, index=False, float_format="%.17g")
        logger.info(f"Training report written to {report_path}")
        self._record("train_report", report_path)

        test = self.state["test"]
        predictions = PredictionSet(predict_batch(model, test.features), test.target,
                                    f"test{self.suffix}", test.row_ids)
        self.state["test_predictions"] = predictions
        pred_path = write_predictions(predictions, self.output_path / f"test_predictions{self.suffix}.csv")
        self._record("test_predictions", pred_path)

    def _record(self, artifact: str, path: Path):
        if self.current_run:
            self.current_run.outputs_generated[artifact] = str(path)

    # execution

    def run_step(self, step_name: str):
        """
        Run a single pipeline step.

        Raises:
            ValueError: If the step is unknown or its dependencies have not run
        """
        if step_name not in self.steps:
            raise ValueError(f"Unknown step: {step_name}")

        step = self.steps[step_name]
        logger.info(f"Running step: {step.name} ({step.description})")

        if self.current_run:
            missing_deps = [dep for dep in step.dependencies
                            if dep not in self.current_run.steps_completed]
            if missing_deps:
                raise ValueError(f"Step {step_name} missing dependencies: {missing_deps}")

        try:
            step.action()
        except Exception as e:
            if self.current_run:
                self.current_run.steps_failed.append(step_name)
                self.current_run.error_messages.append(f"{step_name}: {e}")
            raise

        if self.current_run:
            self.current_run.steps_completed.append(step_name)

    def run(self) -> PipelineRun:
        """
        Run every step in dependency order.

        Returns:
            PipelineRun with the generated artifacts

        Raises:
            Whatever the failing step raised, after recording it in the run
        """
        self.output_path.mkdir(parents=True, exist_ok=True)
        run_id = f"run_{self.config.fingerprint()}{self.suffix}"
        self.current_run = PipelineRun(run_id=run_id)
        logger.info(f"Starting fit run {run_id}: arch={self.arch.name}, tau={self.params.tau}, "
                    f"a={self.params.a}, b={self.params.b}")

        try:
            for step_name in self.get_execution_order():
                self.run_step(step_name)
        except Exception:
            self.current_run.status = "failed"
            logger.error(f"Fit run {run_id} failed")
            raise

        self.current_run.status = "completed"
        logger.info(f"Fit run {run_id} completed: best epoch {self.state['report'].best_epoch}")
        return self.current_run
