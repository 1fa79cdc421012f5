"""
MitLindblad Settings Manager
Handles loading and saving run configuration
"""

import json
from pathlib import Path
from typing import Any, Dict, Optional

from .lindblad import IntegratorConfig
from .workers import env_thread_cap


class ConfigError(ValueError):
    """Malformed settings or scenario configuration"""


# Default settings
DEFAULT_SETTINGS: Dict[str, Any] = {
    "integrator": "rk4",  # "rk4" or "rk45"
    "dt": None,  # None: min(1e-3, 0.01 / (|H| + a))
    "rtol": 1e-8,
    "atol": 1e-10,
    "max_steps": 10_000_000,
    "threads": None,  # None: CPU count
    "float_digits": 12,
    "shot_batch_size": 200_000,
    "history_size": 50,
    "plot": False,
}


class Settings:
    """Manages run settings"""

    def __init__(self, config_path: Optional[str] = None):
        """
        Initialize settings manager.

        Args:
            config_path: Path to settings file (default: settings.json in the project dir)
        """
        if config_path:
            self.config_path = Path(config_path)
        else:
            app_dir = Path(__file__).parent.parent
            self.config_path = app_dir / "settings.json"

        self._settings: Dict[str, Any] = DEFAULT_SETTINGS.copy()
        self.load()

    def load(self) -> bool:
        """
        Load settings from the settings file.

        Returns:
            True if loaded successfully, False if using defaults
        """
        try:
            if self.config_path.exists():
                with open(self.config_path, 'r', encoding='utf-8') as f:
                    loaded = json.load(f)

                # Merge with defaults (unknown keys are ignored)
                for key, value in loaded.items():
                    if key in DEFAULT_SETTINGS:
                        self._settings[key] = value

                print(f"✓ Settings loaded from {self.config_path}")
                return True
        except (OSError, json.JSONDecodeError) as e:
            print(f"⚠ Failed to load settings: {e}")

        return False

    def save(self) -> bool:
        """
        Save current settings to the settings file.

        Returns:
            True if saved successfully
        """
        try:
            self.config_path.parent.mkdir(parents=True, exist_ok=True)

            with open(self.config_path, 'w', encoding='utf-8') as f:
                json.dump(self._settings, f, indent=4)

            print(f"✓ Settings saved to {self.config_path}")
            return True
        except OSError as e:
            print(f"✗ Failed to save settings: {e}")
            return False

    def get(self, key: str, default: Any = None) -> Any:
        return self._settings.get(key, default)

    def set(self, key: str, value: Any, save_now: bool = True) -> None:
        """
        Set a setting value.

        Args:
            key: Setting key
            value: Setting value
            save_now: If True, save to file immediately
        """
        if key not in DEFAULT_SETTINGS:
            raise ConfigError(f"Unknown setting: {key}")
        self._settings[key] = value
        if save_now:
            self.save()

    def reset(self, key: Optional[str] = None) -> None:
        """
        Reset setting(s) to default.

        Args:
            key: Specific key to reset, or None for all
        """
        if key:
            if key in DEFAULT_SETTINGS:
                self._settings[key] = DEFAULT_SETTINGS[key]
        else:
            self._settings = DEFAULT_SETTINGS.copy()
        self.save()

    def get_all(self) -> Dict[str, Any]:
        return self._settings.copy()

    def integrator_config(self) -> IntegratorConfig:
        """
        Integrator configuration from the current settings.

        Raises:
            ConfigError: invalid integrator settings
        """
        try:
            return IntegratorConfig(
                method=self.get("integrator", "rk4"),
                dt=self.get("dt"),
                rtol=float(self.get("rtol", 1e-8)),
                atol=float(self.get("atol", 1e-10)),
                max_steps=int(self.get("max_steps", 10_000_000)),
            )
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Invalid integrator settings: {e}") from e

    # Convenience properties
    @property
    def threads(self) -> Optional[int]:
        """Configured thread count; the environment cap wins when lower"""
        configured = self.get("threads")
        cap = env_thread_cap()
        if cap is None:
            return configured
        return cap if configured is None else min(configured, cap)

    @threads.setter
    def threads(self, value: Optional[int]) -> None:
        self.set("threads", value)

    @property
    def float_digits(self) -> int:
        return self.get("float_digits", 12)

    @property
    def shot_batch_size(self) -> int:
        return self.get("shot_batch_size", 200_000)

    @property
    def history_size(self) -> int:
        return self.get("history_size", 50)

    @property
    def plot(self) -> bool:
        return self.get("plot", False)

    @plot.setter
    def plot(self, value: bool) -> None:
        self.set("plot", value)


# Singleton instance
_settings_instance: Optional[Settings] = None


def get_settings(config_path: Optional[str] = None) -> Settings:
    """Get or create singleton settings instance"""
    global _settings_instance
    if _settings_instance is None:
        _settings_instance = Settings(config_path)
    return _settings_instance
