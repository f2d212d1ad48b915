"""
Config Manager Module for the DSE Toolkit

This module manages the flat ``key = value`` settings store used by the CLI
and the dashboard: defaults, typed access, validation, persistence, and
builders for the model, filter and experiment configurations.
"""

import json
import logging
import os
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

import mixnoise
from enkf import EnkfConfig
from genmodel import GeneratorParams, GenInput
from harness import ExperimentConfig
from mixnoise import NoiseSpec
from scenario import InputEvent, ScenarioConfig
from ukf import UkfConfig

logger = logging.getLogger(__name__)

OUTPUT_DIR_ENV = "DSE_OUTPUT_DIR"

DEFAULT_VALUES: Dict[str, str] = {
    # Machine constants (per-unit, seconds)
    "generator.f0": "60",
    "generator.inertia_j": "6.4",
    "generator.damping_d": "2.0",
    "generator.xd": "1.72",
    "generator.xq": "1.66",
    "generator.xd_p": "0.23",
    "generator.xq_p": "0.38",
    "generator.td0_p": "8.0",
    "generator.tq0_p": "0.4",

    # Operating point
    "inputs.tm": "0.7",
    "inputs.efd": "2.2",
    "inputs.vt": "1.0",

    # Truth run
    "scenario.duration": "10.0",
    "scenario.pmu_rate": "60",
    "scenario.substeps": "4",
    "scenario.allow_any_rate": "false",
    "scenario.events": "3.5:vt:1.05",
    "scenario.vt_noise": "false",

    # Measurement noise, "weight,mean,variance; ..."
    "noise.p": "0.9,0,1e-4; 0.1,0,1e-3",
    "noise.q": "0.9,0,1e-4; 0.1,0,1e-3",
    "noise.vt": "1,0,1e-6",

    "ukf.alpha": "1.0",
    "ukf.beta": "2.0",
    "ukf.kappa": "0.0",
    "ukf.q_diag": "1e-8,1e-8,1e-8,1e-8",
    "ukf.r_diag": "auto",

    "enkf.ensemble_size": "100",
    "enkf.q_diag": "1e-8,1e-8,1e-8,1e-8",
    "enkf.r_diag": "auto",
    "enkf.inflation": "1.0",

    "experiment.trials": "11",
    "experiment.seed": "20190101",
    "experiment.warmup": "1.0",
    "experiment.workers": "0",
    "experiment.prior_offset": "0.1,0.001,0.05,0.05",
    "experiment.prior_cov_diag": "1e-2,1e-4,1e-2,1e-2",
    "experiment.output_dir": "results",
}

_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


class ConfigError(ValueError):
    """Unknown key, malformed line or invalid value; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: Optional[int] = None, source: Optional[str] = None):
        where = ""
        if source is not None and line is not None:
            where = f"{source}:{line}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(f"{where}{message}")
        self.line = line


class ConfigManager:
    """
    Holds the current settings as strings keyed by dotted names.
    Values are parsed on access so a bad entry is reported with its key.
    """

    def __init__(self, values: Optional[Dict[str, Any]] = None):
        self._data: Dict[str, str] = DEFAULT_VALUES.copy()
        if values:
            for key, value in values.items():
                self.set_value(key, value)

    # ------------------------------------------------------------------
    # Access
    # ------------------------------------------------------------------

    def get_value(self, key: str) -> str:
        if key not in self._data:
            raise ConfigError(f"Unknown config key '{key}'")
        return self._data[key]

    def set_value(self, key: str, value: Any):
        """Set a value in the store; booleans and numbers are stored as text."""
        if key not in DEFAULT_VALUES:
            raise ConfigError(f"Unknown config key '{key}'")
        if isinstance(value, bool):
            value = "true" if value else "false"
        self._data[key] = str(value).strip()

    def get_float(self, key: str) -> float:
        raw = self.get_value(key)
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{key} must be a number, got '{raw}'") from None

    def get_int(self, key: str) -> int:
        raw = self.get_value(key)
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{key} must be an integer, got '{raw}'") from None

    def get_bool(self, key: str) -> bool:
        raw = self.get_value(key).lower()
        if raw in _TRUE:
            return True
        if raw in _FALSE:
            return False
        raise ConfigError(f"{key} must be true or false, got '{raw}'")

    def get_floats(self, key: str, length: Optional[int] = None) -> List[float]:
        raw = self.get_value(key)
        try:
            values = [float(s) for s in raw.split(",") if s.strip()]
        except ValueError:
            raise ConfigError(f"{key} must be a comma-separated list of numbers, got '{raw}'") from None
        if length is not None and len(values) != length:
            raise ConfigError(f"{key} needs {length} values, got {len(values)}")
        return values

    def get_all_values(self) -> Dict[str, str]:
        return self._data.copy()

    def reset_data(self):
        """Reset all settings to default values."""
        self._data = DEFAULT_VALUES.copy()

    # ------------------------------------------------------------------
    # Persistence
    # ------------------------------------------------------------------

    def save_to_file(self, filename: Optional[str] = None) -> Path:
        """
        Save current settings as ``key = value`` text, or JSON when the
        name ends in ``.json``.

        Args:
            filename: Target path. If None, uses a timestamped name.

        Returns:
            Path written.
        """
        if filename is None:
            timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
            filename = f"dse_config_{timestamp}.conf"
        path = Path(filename)
        if path.suffix == ".json":
            path.write_text(json.dumps(self._data, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
        else:
            lines = []
            section = None
            for key in DEFAULT_VALUES:
                prefix = key.split(".", 1)[0]
                if section is not None and prefix != section:
                    lines.append("")
                section = prefix
                lines.append(f"{key} = {self._data[key]}")
            path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        logger.info(f"Saved config to {path}")
        return path

    def load_from_file(self, filename: str):
        """
        Merge settings from a file into the store.

        Raises:
            FileNotFoundError: if the file is missing.
            ConfigError: on an unknown key or a malformed line.
        """
        path = Path(filename)
        if not path.exists():
            raise FileNotFoundError(f"Config file not found: {path}")
        text = path.read_text(encoding="utf-8")

        if path.suffix == ".json":
            try:
                loaded = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ConfigError(exc.msg, exc.lineno, str(path)) from exc
            if not isinstance(loaded, dict):
                raise ConfigError("JSON config must be an object", 1, str(path))
            entries = [(None, k, v) for k, v in loaded.items()]
        else:
            entries = self._parse_lines(text, str(path))

        for line, key, value in entries:
            if key not in DEFAULT_VALUES:
                raise ConfigError(f"Unknown config key '{key}'", line, str(path))
            self.set_value(key, value)
        logger.info(f"Loaded {len(entries)} settings from {path}")

    @staticmethod
    def _parse_lines(text: str, source: str) -> List[Tuple[int, str, str]]:
        entries = []
        for number, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"expected 'key = value', got '{raw.strip()}'", number, source)
            key, value = (s.strip() for s in line.split("=", 1))
            if not key:
                raise ConfigError("missing key before '='", number, source)
            entries.append((number, key, value))
        return entries

    # ------------------------------------------------------------------
    # Validation
    # ------------------------------------------------------------------

    def validate_data(self) -> Dict[str, str]:
        """
        Validate the current settings and return any issues found.

        Returns:
            Dictionary with keys as setting names and error messages as values.
        """
        errors = {}
        builders = {
            "generator": self.build_generator_params,
            "inputs": self.build_inputs,
            "scenario": self.build_scenario_config,
            "noise": self.build_noise_spec,
            "ukf": self.build_ukf_config,
            "enkf": self.build_enkf_config,
            "experiment": self.build_experiment_config,
        }
        for section, build in builders.items():
            try:
                build()
            except ConfigError as exc:
                errors[section] = str(exc)
            except ValueError as exc:
                errors[section] = f"{section}: {exc}"
        return errors

    def get_data_summary(self) -> Dict[str, Any]:
        """
        Get a summary of the current settings.

        Returns:
            Dictionary with summary information.
        """
        changed = [k for k, v in self._data.items() if v != DEFAULT_VALUES[k]]
        return {
            "total_fields": len(self._data),
            "changed_fields": changed,
            "sections": sorted({k.split(".", 1)[0] for k in self._data}),
            "generated": datetime.now().isoformat(),
        }

    # ------------------------------------------------------------------
    # Builders
    # ------------------------------------------------------------------

    def build_generator_params(self) -> GeneratorParams:
        return GeneratorParams(
            omega0=2.0 * np.pi * self.get_float("generator.f0"),
            inertia_j=self.get_float("generator.inertia_j"),
            damping_d=self.get_float("generator.damping_d"),
            xd=self.get_float("generator.xd"),
            xq=self.get_float("generator.xq"),
            xd_p=self.get_float("generator.xd_p"),
            xq_p=self.get_float("generator.xq_p"),
            td0_p=self.get_float("generator.td0_p"),
            tq0_p=self.get_float("generator.tq0_p"),
        )

    def build_inputs(self) -> GenInput:
        return GenInput(
            tm=self.get_float("inputs.tm"),
            efd=self.get_float("inputs.efd"),
            vt=self.get_float("inputs.vt"),
        )

    def build_events(self) -> Tuple[InputEvent, ...]:
        """Parse ``time:field:value`` items separated by ``;``."""
        raw = self.get_value("scenario.events")
        events = []
        for chunk in raw.split(";"):
            chunk = chunk.strip()
            if not chunk:
                continue
            parts = [s.strip() for s in chunk.split(":")]
            if len(parts) != 3:
                raise ConfigError(f"scenario.events item must be 'time:field:value', got '{chunk}'")
            try:
                events.append(InputEvent(float(parts[0]), parts[1], float(parts[2])))
            except ValueError as exc:
                raise ConfigError(f"scenario.events item '{chunk}': {exc}") from None
        return tuple(events)

    def build_noise_spec(self) -> NoiseSpec:
        mixtures = {}
        for channel in ("p", "q", "vt"):
            key = f"noise.{channel}"
            try:
                mixtures[channel] = mixnoise.parse_mixture(self.get_value(key))
            except ValueError as exc:
                raise ConfigError(f"{key}: {exc}") from None
        return NoiseSpec(**mixtures)

    def build_scenario_config(self, seed: Optional[int] = None) -> ScenarioConfig:
        return ScenarioConfig(
            params=self.build_generator_params(),
            initial_inputs=self.build_inputs(),
            events=self.build_events(),
            duration=self.get_float("scenario.duration"),
            pmu_rate=self.get_int("scenario.pmu_rate"),
            substeps=self.get_int("scenario.substeps"),
            noise=self.build_noise_spec(),
            seed=self.get_int("experiment.seed") if seed is None else int(seed),
            allow_any_rate=self.get_bool("scenario.allow_any_rate"),
            vt_noise=self.get_bool("scenario.vt_noise"),
        )

    def _meas_cov(self, key: str) -> np.ndarray:
        """Diagonal R; ``auto`` takes the mixture variance of each channel."""
        if self.get_value(key).lower() == "auto":
            noise = self.build_noise_spec()
            return np.diag([mixnoise.moments(noise.p)[1], mixnoise.moments(noise.q)[1]])
        return np.diag(self.get_floats(key, 2))

    def build_ukf_config(self) -> UkfConfig:
        return UkfConfig(
            alpha=self.get_float("ukf.alpha"),
            beta=self.get_float("ukf.beta"),
            kappa=self.get_float("ukf.kappa"),
            process_cov=np.diag(self.get_floats("ukf.q_diag", 4)),
            meas_cov=self._meas_cov("ukf.r_diag"),
        )

    def build_enkf_config(self) -> EnkfConfig:
        return EnkfConfig(
            ensemble_size=self.get_int("enkf.ensemble_size"),
            process_cov=np.diag(self.get_floats("enkf.q_diag", 4)),
            meas_cov=self._meas_cov("enkf.r_diag"),
            inflation=self.get_float("enkf.inflation"),
        )

    def output_dir(self) -> str:
        """``DSE_OUTPUT_DIR`` wins over the stored value."""
        return os.environ.get(OUTPUT_DIR_ENV) or self.get_value("experiment.output_dir")

    def build_experiment_config(self, seed: Optional[int] = None) -> ExperimentConfig:
        return ExperimentConfig(
            scenario=self.build_scenario_config(seed),
            ukf=self.build_ukf_config(),
            enkf=self.build_enkf_config(),
            trials=self.get_int("experiment.trials"),
            prior_mean_offset=np.array(self.get_floats("experiment.prior_offset", 4)),
            prior_cov=np.diag(self.get_floats("experiment.prior_cov_diag", 4)),
            warmup=self.get_float("experiment.warmup"),
            workers=self.get_int("experiment.workers"),
            output_dir=self.output_dir(),
        )


# Global instance of the config manager
config_manager = ConfigManager()


def get_config_manager() -> ConfigManager:
    """Get the global config manager instance."""
    return config_manager


def load_config(path: Optional[str] = None) -> ConfigManager:
    """Fresh manager with defaults, merged with ``path`` when given."""
    manager = ConfigManager()
    if path:
        manager.load_from_file(path)
    return manager


def get_val(key: str) -> str:
    """Convenience function to read a raw value from the global store."""
    return config_manager.get_value(key)


def set_val(key: str, value: Any):
    """Convenience function to set a value in the global store."""
    config_manager.set_value(key, value)


def reset_config():
    """Reset the global store to default values."""
    config_manager.reset_data()
