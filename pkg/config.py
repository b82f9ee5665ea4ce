#!/usr/bin/env python3
"""
Configuration for the counterdiabatic annealing simulator.
Process-wide settings come from environment variables (optionally a .env file);
each run is described by a JSON RunConfig with nested tables.
"""

import copy
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv

from exceptions import ConfigError
from models import AnnealingScenario, BathSpec, pspin_scenario, qubit_scenario, temperature_from_millikelvin

# Load .env file
load_dotenv()

logger = logging.getLogger(__name__)

PRESETS_DIR = Path(__file__).resolve().parent / 'presets'
LOG_LEVELS = ('DEBUG', 'INFO', 'WARNING', 'ERROR')
DEFAULT_TEMPERATURE_MK = 17.0
PRESET_ALIASES = {
    'fig1': 'qubit_jordan_blocks',
    'fig2': 'qubit_coupling_compare',
    'fig3': 'pspin_weak_coupling',
    'fig4': 'pspin_strong_coupling',
    'fig5': 'pspin_ground_start',
}


def _env_int(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None:
        return default
    try:
        return int(raw)
    except ValueError:
        logger.warning(f"{name}={raw!r} is not an integer; using {default}")
        return default


@dataclass
class Settings:
    """Environment-backed defaults; CLI flags and run files take precedence."""
    output_dir: str = os.getenv('CDOPEN_OUTPUT_DIR', 'output')
    threads: int = _env_int('CDOPEN_THREADS', 4)
    log_level: str = os.getenv('CDOPEN_LOG_LEVEL', 'INFO').upper()
    seed: int = _env_int('CDOPEN_SEED', 1234)

    def __post_init__(self):
        if self.threads < 1:
            logger.warning(f"CDOPEN_THREADS={self.threads} is unusable; running single-threaded")
            self.threads = 1
        if self.log_level not in LOG_LEVELS:
            logger.warning(f"CDOPEN_LOG_LEVEL={self.log_level} is not one of {LOG_LEVELS}; using INFO")
            self.log_level = 'INFO'


# --- run configuration schema ----------------------------------------------------

def _reject_unknown(cls, data: Dict[str, Any], where: str) -> None:
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be a table, got {type(data).__name__}")
    allowed = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - allowed)
    if unknown:
        logger.error(f"Unknown keys in {where}: {unknown}")
        raise ConfigError(f"Unknown keys in {where}: {', '.join(unknown)}")


def _prune(data: Dict[str, Any]) -> Dict[str, Any]:
    return {k: v for k, v in data.items() if v is not None}


@dataclass
class ModelConfig:
    kind: str = 'qubit'
    omega_x: float = 1.0
    omega_z: float = 1.0
    n: int = 3
    p: int = 3
    gamma: float = 1.0
    j: float = 1.0

    def __post_init__(self):
        if self.kind not in ('qubit', 'pspin'):
            raise ConfigError(f"model.kind must be 'qubit' or 'pspin', got {self.kind!r}")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ModelConfig':
        _reject_unknown(cls, data, 'model')
        return cls(**data)


@dataclass
class BathConfig:
    eta_g2: float = 1e-4
    temperature: Optional[float] = None
    temperature_mk: Optional[float] = None
    omega_c: float = 8 * math.pi
    include_lamb_shift: bool = True

    def __post_init__(self):
        if self.temperature is not None and self.temperature_mk is not None:
            raise ConfigError("Give bath.temperature or bath.temperature_mk, not both")
        if self.temperature is None and self.temperature_mk is None:
            self.temperature_mk = DEFAULT_TEMPERATURE_MK
        if self.eta_g2 < 0:
            raise ConfigError(f"bath.eta_g2 must be nonnegative, got {self.eta_g2}")

    @property
    def beta(self) -> float:
        if self.temperature is not None:
            return 1.0 / self.temperature
        return 1.0 / temperature_from_millikelvin(self.temperature_mk)

    def spec(self) -> BathSpec:
        return BathSpec(self.eta_g2, self.beta, self.omega_c, self.include_lamb_shift)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'BathConfig':
        _reject_unknown(cls, data, 'bath')
        return cls(**data)


@dataclass
class CdModeConfig:
    """One CD setting of a run: 'none', 'exact' or a variational ansatz."""
    label: str
    mode: str = 'none'
    ansatz: List[Any] = field(default_factory=list)

    def __post_init__(self):
        if self.mode not in ('none', 'exact', 'variational'):
            raise ConfigError(f"cd mode must be none, exact or variational, got {self.mode!r}")
        if self.mode == 'variational' and not self.ansatz:
            raise ConfigError(f"Variational cd entry {self.label!r} has no ansatz")

    def case(self):
        """Argument for CdProvider.from_case."""
        if self.mode != 'variational':
            return self.mode
        return self.ansatz[0] if len(self.ansatz) == 1 and isinstance(self.ansatz[0], str) else self.ansatz

    @classmethod
    def from_dict(cls, data) -> 'CdModeConfig':
        if isinstance(data, str):
            if data in ('none', 'exact'):
                return cls(label=data, mode=data)
            return cls(label=data, mode='variational', ansatz=[data])
        _reject_unknown(cls, data, 'cd entry')
        return cls(**data)


@dataclass
class IntegratorSettings:
    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    max_step: float = 0.01
    samples: int = 201
    method: str = 'RK45'
    generator_source: str = 'auto'
    max_evaluations: int = 500_000

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'IntegratorSettings':
        _reject_unknown(cls, data, 'integrator')
        return cls(**data)


@dataclass
class RunConfig:
    name: str
    model: ModelConfig = field(default_factory=ModelConfig)
    bath: Optional[BathConfig] = None
    taus: List[float] = field(default_factory=lambda: [10.0])
    cd: List[CdModeConfig] = field(default_factory=lambda: [CdModeConfig('none')])
    initial_state: Optional[str] = None
    integrator: IntegratorSettings = field(default_factory=IntegratorSettings)
    cd_grid_points: int = 201
    kms_report: bool = False
    sweep: Dict[str, List[Any]] = field(default_factory=dict)
    output_dir: Optional[str] = None
    threads: Optional[int] = None
    seed: Optional[int] = None

    def __post_init__(self):
        if not self.taus or any(t <= 0 for t in self.taus):
            raise ConfigError(f"taus must be a nonempty list of positive times, got {self.taus}")
        labels = [c.label for c in self.cd]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"Duplicate cd labels: {labels}")
        if self.initial_state not in (None, 'ground', 'thermal'):
            raise ConfigError(f"initial_state must be 'ground' or 'thermal', got {self.initial_state!r}")
        for path, values in self.sweep.items():
            if not isinstance(values, list):
                raise ConfigError(f"sweep.{path} must be a list of values")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'RunConfig':
        _reject_unknown(cls, data, 'run config')
        if 'name' not in data:
            raise ConfigError("Run config needs a name")
        data = dict(data)
        if 'model' in data:
            data['model'] = ModelConfig.from_dict(data['model'])
        if data.get('bath') is not None:
            data['bath'] = BathConfig.from_dict(data['bath'])
        if 'cd' in data:
            data['cd'] = [CdModeConfig.from_dict(entry) for entry in data['cd']]
        if 'integrator' in data:
            data['integrator'] = IntegratorSettings.from_dict(data['integrator'])
        try:
            return cls(**data)
        except TypeError as e:
            raise ConfigError(f"Malformed run config: {e}")

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        if data['bath'] is not None:
            data['bath'] = _prune(data['bath'])
        return _prune(data)

    def with_value(self, path: str, value: Any) -> 'RunConfig':
        """Copy with the dotted path (e.g. 'bath.eta_g2') set to value."""
        data = copy.deepcopy(self.to_dict())
        data.pop('sweep', None)
        keys = path.split('.')
        node = data
        for key in keys[:-1]:
            if key not in node or not isinstance(node[key], dict):
                raise ConfigError(f"Sweep path {path!r} does not name a config table")
            node = node[key]
        node[keys[-1]] = value
        return RunConfig.from_dict(data)

    def scenario(self) -> AnnealingScenario:
        bath = self.bath.spec() if self.bath is not None else None
        m = self.model
        if m.kind == 'qubit':
            return qubit_scenario(m.omega_x, m.omega_z, bath, name=self.name,
                                  initial_state=self.initial_state or 'ground')
        return pspin_scenario(m.n, m.p, m.gamma, m.j, bath, name=self.name,
                              initial_state=self.initial_state or 'thermal')


def load_run_config(path) -> RunConfig:
    path = Path(path)
    try:
        with open(path) as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        logger.error(f"Cannot read run config {path}: {e}")
        raise ConfigError(f"Cannot read run config {path}: {e}")
    return RunConfig.from_dict(data)


def load_preset(name: str) -> RunConfig:
    """Preset by file stem under presets/, or by one of the fig1..fig5 aliases."""
    path = PRESETS_DIR / f'{PRESET_ALIASES.get(name, name)}.json'
    if not path.exists():
        available = sorted(p.stem for p in PRESETS_DIR.glob('*.json')) + sorted(PRESET_ALIASES)
        raise ConfigError(f"Unknown preset {name!r}; available: {', '.join(available)}")
    return load_run_config(path)


# Create a single instance of the settings to be imported by other modules
settings = Settings()
