"""
Configuration management system for the HQRN package.

This module provides utilities to:
- Load the packaged default settings
- Merge user settings files over the defaults
- Read and write settings with dot notation
- Build score and training parameters from the resolved settings
"""

import copy
import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from .network import TrainConfig
from .scoring import ScoreParams

logger = logging.getLogger(__name__)


def _deep_merge(base: Dict[str, Any], update: Dict[str, Any]) -> Dict[str, Any]:
    """Merge ``update`` into ``base`` recursively; ``base`` is modified and returned."""
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _deep_merge(base[key], value)
        else:
            base[key] = copy.deepcopy(value)
    return base


def _as_cap(value: Any) -> float:
    return float("inf") if value is None else float(value)


class HQRConfig:
    """Main configuration class for the HQRN package."""

    def __init__(self, config_path: Optional[Union[str, Path]] = None):
        """
        Initialize configuration.

        Args:
            config_path: Directory holding ``*settings*.json`` files
        """
        self.config_path = Path(config_path) if config_path else self._get_default_config_path()
        self.app_settings: Dict[str, Any] = {}
        self.sources: List[str] = []
        self._load_app_settings()

    def _get_default_config_path(self) -> Path:
        """Get default configuration path."""
        package_dir = Path(__file__).parent
        config_dir = package_dir / "config"

        if config_dir.exists():
            return config_dir

        return Path.cwd() / "config"

    def _load_app_settings(self):
        """Load application settings."""
        settings_files = sorted(self.config_path.glob("*settings*.json"))

        if not settings_files:
            logger.warning(f"No settings files found in {self.config_path}")

        for settings_file in settings_files:
            with open(settings_file, 'r', encoding='utf-8') as f:
                settings_data = json.load(f)
            _deep_merge(self.app_settings, settings_data)
            self.sources.append(str(settings_file))
            logger.debug(f"Loaded settings from {settings_file}")

    def merge_file(self, settings_file: Union[str, Path]) -> "HQRConfig":
        """
        Merge a user settings file over the current settings.

        Raises:
            FileNotFoundError: If the file does not exist
            ValueError: If the file is not a JSON object
        """
        settings_file = Path(settings_file)
        if not settings_file.exists():
            raise FileNotFoundError(f"Configuration file does not exist: {settings_file}")
        try:
            with open(settings_file, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise ValueError(f"Configuration file {settings_file} is not valid JSON: {e}") from e
        if not isinstance(data, dict):
            raise ValueError(f"Configuration file {settings_file} must hold a JSON object")
        _deep_merge(self.app_settings, data)
        self.sources.append(str(settings_file))
        logger.info(f"Merged settings from {settings_file}")
        return self

    def get_setting(self, key: str, default: Any = None) -> Any:
        """
        Get application setting.

        Args:
            key: Setting key (supports dot notation like 'training.learning_rate')
            default: Default value if key not found

        Returns:
            Setting value or default
        """
        keys = key.split('.')
        value = self.app_settings

        try:
            for k in keys:
                value = value[k]
            return value
        except (KeyError, TypeError):
            return default

    def set_setting(self, key: str, value: Any):
        """
        Set application setting.

        Args:
            key: Setting key (supports dot notation)
            value: Setting value
        """
        keys = key.split('.')
        current = self.app_settings

        for k in keys[:-1]:
            if k not in current:
                current[k] = {}
            current = current[k]

        current[keys[-1]] = value

    def apply_overrides(self, overrides: Dict[str, Any]):
        """Set every dotted key whose value is not None."""
        for key, value in overrides.items():
            if value is not None:
                self.set_setting(key, value)

    def score_params(self) -> ScoreParams:
        """Level and caps from the ``scoring`` section; null caps mean no cap."""
        return ScoreParams(
            tau=float(self.get_setting("scoring.tau")),
            a=_as_cap(self.get_setting("scoring.a")),
            b=_as_cap(self.get_setting("scoring.b")),
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=float(self.get_setting("training.learning_rate")),
            batch_size=int(self.get_setting("training.batch_size")),
            max_epochs=int(self.get_setting("training.max_epochs")),
            patience=int(self.get_setting("training.patience")),
            beta1=float(self.get_setting("training.beta1")),
            beta2=float(self.get_setting("training.beta2")),
            epsilon=float(self.get_setting("training.epsilon")),
            seed=int(self.get_setting("training.seed")),
        )

    def to_json(self) -> str:
        """Canonical JSON text of the resolved settings."""
        return json.dumps(self.app_settings, indent=2, sort_keys=True)

    def fingerprint(self) -> str:
        """Short content hash of the resolved settings."""
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()[:12]

    @classmethod
    def from_file(cls, config_file: Optional[Union[str, Path]] = None) -> "HQRConfig":
        """
        Packaged defaults with an optional user file merged on top.

        Args:
            config_file: Path to a user settings file

        Returns:
            HQRConfig instance
        """
        config = cls()
        if config_file is not None:
            config.merge_file(config_file)
        return config

    def save_settings(self, output_file: Optional[Union[str, Path]] = None) -> Path:
        """
        Save current settings to file.

        Args:
            output_file: Output file path (default: config/settings.json)
        """
        if output_file is None:
            output_file = self.config_path / "settings.json"
        else:
            output_file = Path(output_file)

        output_file.parent.mkdir(parents=True, exist_ok=True)

        with open(output_file, 'w', encoding='utf-8') as f:
            f.write(self.to_json())
            f.write("\n")

        logger.info(f"Settings saved to {output_file}")
        return output_file


# Default configuration instance
_default_config: Optional[HQRConfig] = None


def get_config() -> HQRConfig:
    """Get the default configuration instance."""
    global _default_config
    if _default_config is None:
        _default_config = HQRConfig()
    return _default_config


def set_config(config: HQRConfig):
    """Set the default configuration instance."""
    global _default_config
    _default_config = config
