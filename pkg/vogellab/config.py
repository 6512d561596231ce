"""Configuration management for vogellab.

This module handles loading, parsing, merging, and resolving run settings
from TOML files, CLI arguments and the environment.
"""

import collections.abc
import copy
import math
import os
import re
import sys
from dataclasses import asdict, dataclass, fields
from enum import IntEnum
from pathlib import Path
from typing import TYPE_CHECKING, Any, Dict, List, Mapping, Optional, Union

try:
    import tomllib
except ImportError:
    # For python < 3.11
    import tomli as tomllib

if TYPE_CHECKING:
    from typing_extensions import TypeAlias

CONFIG_FILENAME = ".vogellab.toml"
THREADS_ENV = "VOGELLAB_THREADS"


class Verbosity(IntEnum):
    """Verbosity levels for CLI output."""

    QUIET = -1  # -q: errors only
    NORMAL = 0  # default: status messages
    VERBOSE = 1  # -v: detailed info
    VERY_VERBOSE = 2  # -vv: full debug output


# Sentinel object for "not configured" values
class _NotSetType:
    """Sentinel type for not configured values."""

    def __repr__(self) -> str:
        return "NOTSET"

    def __deepcopy__(self, memo):
        """Always return the same singleton instance."""
        return self


NOTSET = _NotSetType()

if TYPE_CHECKING:
    NotSetType: TypeAlias = _NotSetType
else:
    NotSetType = _NotSetType


def log(verbosity: "Verbosity", level: "Verbosity", message: str) -> None:
    """Print a status line to stderr when verbosity reaches level."""
    if verbosity >= level:
        print(f"[vogellab] {message}", file=sys.stderr)


@dataclass(kw_only=True)
class RunSettings:
    """Simulation and analysis settings with NOTSET sentinel support.

    All fields default to NOTSET so that partial sources (a config file's
    [defaults], a detector preset, CLI overrides) can be merged in priority
    order.
    """

    # Analysis
    nu_max: Union[float, NotSetType] = NOTSET
    nu_step: Union[float, NotSetType] = NOTSET
    k: Union[float, NotSetType] = NOTSET  # significance threshold for verdicts
    plan_k: Union[float, NotSetType] = NOTSET  # significance multiple for planning
    bins: Union[int, NotSetType] = NOTSET
    hist_range: Union[float, NotSetType] = NOTSET

    # Simulation
    n: Union[int, NotSetType] = NOTSET
    seed: Union[int, NotSetType] = NOTSET
    efficiency: Union[float, NotSetType] = NOTSET
    electronic_noise_sigma: Union[float, NotSetType] = NOTSET
    lo_mean_count: Union[float, NotSetType] = NOTSET

    # Execution
    threads: Union[int, NotSetType] = NOTSET
    out_template: Union[str, NotSetType] = NOTSET

    def to_dict(self, include_notset: bool = False) -> Dict[str, Any]:
        """Convert to dictionary."""
        result = asdict(self)
        if not include_notset:
            result = {k: v for k, v in result.items() if v is not NOTSET}
        return result

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunSettings":
        """Create RunSettings from dictionary, ignoring unknown keys.

        Values of None become NOTSET ("not set by this source").
        """
        known = {f.name for f in fields(cls)}
        return cls(**{k: (NOTSET if v is None else v) for k, v in data.items() if k in known})

    @classmethod
    def builtin_defaults(cls) -> "RunSettings":
        """Get built-in default settings."""
        return cls(
            nu_max=12.0,
            nu_step=0.05,
            k=3.0,
            plan_k=1.0,
            bins=81,
            hist_range=2.0,
            n=100_000,
            seed=0,
            efficiency=1.0,
            electronic_noise_sigma=0.0,
            lo_mean_count=1e6,
            threads=1,
            out_template="${state|slug}-s${seed}.qdat",
        )


@dataclass(kw_only=True)
class DetectorPreset:
    """Named detector settings from a [detectors.NAME] table."""

    efficiency: Union[float, NotSetType] = NOTSET
    electronic_noise_sigma: Union[float, NotSetType] = NOTSET
    lo_mean_count: Union[float, NotSetType] = NOTSET
    seed: Union[int, NotSetType] = NOTSET
    default: Union[bool, NotSetType] = NOTSET

    # File the preset was read from
    _config_file_path: Union[str, NotSetType] = NOTSET

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "DetectorPreset":
        known = {f.name for f in fields(cls) if not f.name.startswith("_")}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"Unknown detector keys: {unknown}")
        return cls(**data)

    def to_settings(self) -> RunSettings:
        return RunSettings(
            efficiency=self.efficiency,
            electronic_noise_sigma=self.electronic_noise_sigma,
            lo_mean_count=self.lo_mean_count,
            seed=self.seed,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            k: v for k, v in asdict(self).items() if v is not NOTSET and not k.startswith("_")
        }


def convert_notset_strings(config_dict: Dict[str, Any]) -> Dict[str, Any]:
    """Convert top-level "NOTSET" strings to the NOTSET sentinel.

    Lets a config file explicitly clear a value set by a lower-priority source.
    """
    return {k: (NOTSET if v == "NOTSET" else v) for k, v in config_dict.items()}


def _load_config_file(config_path: Path) -> Dict[str, Any]:
    """Load and parse TOML configuration file."""
    try:
        with open(config_path, "rb") as f:
            config_data = tomllib.load(f)
        return config_data
    except tomllib.TOMLDecodeError as e:
        raise ValueError(f"Invalid TOML in {config_path}: {e}") from e
    except (OSError, IOError) as e:
        raise ValueError(f"Error reading {config_path}: {e}") from e


def find_user_config() -> Optional[Path]:
    """Find user configuration path (~/.vogellab.toml)."""
    user_config_path = Path.home() / CONFIG_FILENAME

    if not user_config_path.exists() or not user_config_path.is_file():
        return None

    return user_config_path


def find_project_dir(start_dir: Path) -> Optional[Path]:
    """Find project root by searching upward for .vogellab.toml.

    The search stops before the user's home directory, whose
    ~/.vogellab.toml is the user-wide config rather than a project marker.
    """
    current = start_dir.resolve()
    home_dir = Path.home().resolve()

    while current != current.parent:
        if current == home_dir:
            break

        if (current / CONFIG_FILENAME).exists():
            return current
        current = current.parent
    return None


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)


def _is_integer(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def validate_settings(settings: RunSettings, source: str = "settings") -> None:
    """Validate every field that is set.

    Raises:
        ValueError: If a value has the wrong type or lies outside its range
    """
    checks = {
        "nu_max": (_is_number, lambda v: v >= 0, "a number >= 0"),
        "nu_step": (_is_number, lambda v: v > 0, "a number > 0"),
        "k": (_is_number, lambda v: v > 0, "a number > 0"),
        "plan_k": (_is_number, lambda v: v > 0, "a number > 0"),
        "bins": (_is_integer, lambda v: v >= 2, "an integer >= 2"),
        "hist_range": (_is_number, lambda v: v > 0, "a number > 0"),
        "n": (_is_integer, lambda v: v >= 1, "an integer >= 1"),
        "seed": (_is_integer, lambda v: 0 <= v < 2**64, "an integer in [0, 2^64)"),
        "efficiency": (_is_number, lambda v: 0 <= v <= 1, "a number in [0, 1]"),
        "electronic_noise_sigma": (_is_number, lambda v: v >= 0, "a number >= 0"),
        "lo_mean_count": (_is_number, lambda v: v > 0, "a number > 0"),
        "threads": (_is_integer, lambda v: v >= 1, "an integer >= 1"),
        "out_template": (lambda v: isinstance(v, str), lambda v: bool(v.strip()), "a string"),
    }
    for name, value in settings.to_dict().items():
        type_ok, range_ok, expected = checks[name]
        if not type_ok(value) or not range_ok(value):
            raise ValueError(f"In {source}: '{name}' must be {expected}, got {value!r}")


def merge_dict(config, overrides):
    # Handle NOTSET config by starting with empty dict
    if config is NOTSET:
        result = {}
    else:
        result = copy.deepcopy(config)

    for k, v in overrides.items():
        # Skip NOTSET values - they should not override existing config
        if v is NOTSET:
            continue
        elif isinstance(v, collections.abc.Mapping):
            base_value = result.get(k, {}) if result else {}
            result[k] = merge_dict(base_value, v)
        else:
            result[k] = copy.deepcopy(v)
    return result


def merge_settings(base: RunSettings, override: RunSettings) -> RunSettings:
    """Merge two RunSettings, with override taking precedence for set fields."""
    merged = merge_dict(base.to_dict(include_notset=True), override.to_dict(include_notset=True))
    return RunSettings(**merged)


@dataclass
class ConfigFile:
    """Represents a single configuration file with defaults and detector presets."""

    defaults: Optional[RunSettings]
    detectors: Dict[str, DetectorPreset]

    @classmethod
    def load(cls, config_path: Path) -> "ConfigFile":
        """Load configuration from a specific file."""
        if not config_path.exists():
            raise ValueError(f"Config file not found: {config_path}")

        config_data = _load_config_file(config_path)

        unknown_sections = sorted(set(config_data) - {"defaults", "detectors"})
        if unknown_sections:
            raise ValueError(f"In config file {config_path}: unknown sections {unknown_sections}")

        defaults = None
        raw_defaults = config_data.get("defaults")
        if raw_defaults:
            unknown = sorted(set(raw_defaults) - {f.name for f in fields(RunSettings)})
            if unknown:
                raise ValueError(f"In config file {config_path}: unknown settings {unknown}")
            defaults = RunSettings.from_dict(convert_notset_strings(raw_defaults))
            validate_settings(defaults, f"config file {config_path}")

        detectors = {}
        for name, raw in config_data.get("detectors", {}).items():
            try:
                preset = DetectorPreset.from_dict(convert_notset_strings(raw))
            except (TypeError, ValueError) as e:
                raise ValueError(f"In config file {config_path}, detector '{name}': {e}") from e
            validate_settings(preset.to_settings(), f"config file {config_path}, detector '{name}'")
            preset._config_file_path = str(config_path.resolve())
            detectors[name] = preset

        return cls(defaults=defaults, detectors=detectors)


@dataclass
class VogelConfig:
    """The computed configuration from all sources.

    Config sources are processed in priority order during load():
    - Explicit config files (if provided via --config)
    - Project config (.vogellab.toml found via upward search)
    - User config (~/.vogellab.toml)
    - Built-in defaults
    """

    defaults: RunSettings
    detectors: Dict[str, DetectorPreset]

    def find_default_detector(self) -> Optional[str]:
        """Find the detector preset marked as default.

        Raises:
            ValueError: If multiple presets are marked as default.
        """
        default_detectors = [
            name for name, preset in self.detectors.items() if preset.default is True
        ]

        if len(default_detectors) > 1:
            raise ValueError(
                f"Multiple detectors marked as default: {', '.join(sorted(default_detectors))}. "
                "Only one detector can have 'default = true'."
            )

        return default_detectors[0] if default_detectors else None

    def get_settings(
        self,
        detector: Optional[str] = None,
        overrides: Optional[RunSettings] = None,
    ) -> RunSettings:
        """Get merged settings.

        Priority order:
        1. Precomputed defaults
        2. Detector preset (explicit name, else the one marked default)
        3. Overrides (highest priority)

        Raises:
            ValueError: If the detector name is unknown or a value is invalid
        """
        result = self.defaults

        name = detector or self.find_default_detector()
        if name is not None:
            preset = self.detectors.get(name)
            if preset is None:
                available = sorted(self.detectors.keys())
                raise ValueError(f"Unknown detector '{name}'. Available: {available}")
            result = merge_settings(result, preset.to_settings())

        if overrides:
            validate_settings(overrides, "command line")
            result = merge_settings(result, overrides)

        return result

    @classmethod
    def load(
        cls,
        project_dir: Path,
        explicit_config_files: Optional[List[Path]] = None,
        verbosity: Verbosity = Verbosity.NORMAL,
    ) -> "VogelConfig":
        """Load and compute configuration from files in priority order."""
        config_files = []

        if explicit_config_files:
            for config_file in explicit_config_files:
                log(verbosity, Verbosity.VERBOSE, f"Loading explicit config: {config_file}")
                try:
                    config_files.append(ConfigFile.load(config_file))
                except Exception as e:
                    raise ValueError(f"Failed to load explicit config file {config_file}: {e}")
        else:
            project_config_path = project_dir / CONFIG_FILENAME
            if project_config_path.exists():
                log(verbosity, Verbosity.VERBOSE, f"Loading project config: {project_config_path}")
                config_files.append(ConfigFile.load(project_config_path))

        user_config_path = find_user_config()
        if user_config_path:
            log(verbosity, Verbosity.VERBOSE, f"Loading user config: {user_config_path}")
            config_files.append(ConfigFile.load(user_config_path))

        # Defaults: built-ins, then each [defaults] section from lowest to highest priority
        defaults = RunSettings.builtin_defaults()
        for config_file in reversed(config_files):
            if config_file.defaults:
                defaults = merge_settings(defaults, config_file.defaults)

        # Detector presets: higher priority completely replaces lower priority
        detectors = {}
        for config_file in reversed(config_files):
            for name, preset in config_file.detectors.items():
                detectors[name] = preset

        return cls(defaults=defaults, detectors=detectors)


def resolve_project_dir(cwd: Path) -> Path:
    """Directory holding the nearest .vogellab.toml, else cwd."""
    return (find_project_dir(cwd) or cwd).resolve()


def resolve_threads(
    settings: RunSettings, cli_threads: Optional[int], environ: Mapping[str, str]
) -> int:
    """Worker thread count: --threads, then VOGELLAB_THREADS, then config."""
    if cli_threads is not None:
        threads = cli_threads
    elif environ.get(THREADS_ENV):
        try:
            threads = int(environ[THREADS_ENV])
        except ValueError:
            raise ValueError(
                f"{THREADS_ENV} must be a positive integer, got {environ[THREADS_ENV]!r}"
            ) from None
    else:
        threads = settings.threads if settings.threads is not NOTSET else 1
    if threads < 1:
        raise ValueError(f"thread count must be at least 1, got {threads}")
    return threads


def _substitute_variables(text: str, variables: Dict[str, str], environ: Mapping[str, str]) -> str:
    """Substitute ${var} and ${var|filter} patterns in text."""
    pattern = r"\$\{([^}|]+)(?:\|([^}]+))?\}"

    def replace_match(match):
        var_name, filter_name = match.groups()

        if var_name.startswith("env."):
            value = environ.get(var_name[4:], "")
        else:
            value = variables.get(var_name, "")

        if filter_name == "slug":
            # Lowercase; colons, commas and slashes become hyphens
            value = value.lower()
            value = value.replace(":", "-").replace("/", "-").replace(",", "-")
        elif filter_name is not None:
            raise ValueError(f"Unknown filter: {filter_name}")

        return value

    return re.sub(pattern, replace_match, text)


def render_output_path(
    template: str, variables: Dict[str, str], environ: Optional[Mapping[str, str]] = None
) -> str:
    """Expand an out_template into a file name."""
    return _substitute_variables(template, variables, os.environ if environ is None else environ)

