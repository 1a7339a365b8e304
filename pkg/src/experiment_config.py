#!/usr/bin/env python3
"""
Experiment configuration
Versioned JSON documents validated into an ExperimentConfig, with
field-level error messages and command-line overrides
"""

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from potential import PotentialSpec
from disorder import DisorderSpec
from dynamics import InitialState, TimeGrid, TruncationPolicy

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

EXPERIMENTS = ('curve', 'disorder-average', 'variance-scan', 'covariance',
               'decay-classify', 'ratio', 'free-energy', 'verify')

TOP_LEVEL_KEYS = {'schema_version', 'experiment', 'potential', 'disorder', 'initial_state', 'B',
                  'time_grid', 'truncation', 'site', 'm', 'm_list', 't', 'samples', 'k_list',
                  'envelope', 'thermo', 'output', 'seed'}

# experiment -> keys it cannot run without
REQUIRED = {
    'curve': ('potential', 'time_grid'),
    'disorder-average': ('potential', 'disorder', 'time_grid'),
    'variance-scan': ('potential', 'disorder', 'm_list', 't'),
    'covariance': ('potential', 'disorder', 'k_list', 't'),
    'decay-classify': ('potential', 'time_grid'),
    'ratio': ('potential', 'time_grid'),
    'free-energy': ('potential', 'disorder', 'thermo'),
    'verify': (),
}


class ConfigError(ValueError):
    """Invalid configuration, tagged with the dotted path of the offending field"""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


@dataclass(frozen=True)
class EnvelopeSettings:
    window_width: float = 2.0
    floor: float = 1e-300
    t_min: float = 0.0
    fit_range: Optional[Tuple[float, float]] = None
    lower_ratio: float = 0.85
    upper_ratio: float = 1.15


@dataclass(frozen=True)
class ThermoSettings:
    n_list: Tuple[int, ...] = (1, 2, 3)
    beta: float = 1.0
    n_max: int = 10


@dataclass(frozen=True)
class ExperimentConfig:
    """One validated experiment; the raw document is kept for the manifest echo"""
    experiment: str
    potential: Optional[PotentialSpec] = None
    disorder: Optional[DisorderSpec] = None
    initial_state: InitialState = field(default_factory=lambda: InitialState.from_magnetization(0.5))
    B: float = 0.0
    time_grid: Optional[TimeGrid] = None
    truncation: TruncationPolicy = field(default_factory=TruncationPolicy)
    site: int = 0
    m: Optional[int] = None
    m_list: Tuple[int, ...] = ()
    t: Optional[float] = None
    samples: int = 100
    k_list: Tuple[int, ...] = ()
    envelope: EnvelopeSettings = field(default_factory=EnvelopeSettings)
    thermo: ThermoSettings = field(default_factory=ThermoSettings)
    output: str = 'results'
    seed: int = 0
    raw: Dict[str, Any] = field(default_factory=dict, compare=False)

    @property
    def master_seed(self) -> int:
        return self.disorder.master_seed if self.disorder is not None else self.seed

    def with_overrides(self, seed: Optional[int] = None, output: Optional[str] = None) -> 'ExperimentConfig':
        """Apply --seed / --out; the seed reaches the disorder spec as well"""
        updated = self
        if seed is not None:
            if seed < 0:
                raise ConfigError('seed', f"must be >= 0, got {seed}")
            disorder = replace(self.disorder, master_seed=seed) if self.disorder is not None else None
            updated = replace(updated, seed=seed, disorder=disorder)
        if output is not None:
            updated = replace(updated, output=output)
        return updated

    def echo(self) -> Dict[str, Any]:
        """Normalised config for the manifest"""
        record = {
            'schema_version': SCHEMA_VERSION,
            'experiment': self.experiment,
            'potential': self.potential.to_config() if self.potential else None,
            'disorder': self.disorder.to_config() if self.disorder else None,
            'initial_state': self.initial_state.to_config(),
            'B': self.B,
            'time_grid': self.raw.get('time_grid'),
            'truncation': self.truncation.to_config(),
            'site': self.site,
            'm': self.m,
            'm_list': list(self.m_list),
            't': self.t,
            'samples': self.samples,
            'k_list': list(self.k_list),
            'envelope': {'window_width': self.envelope.window_width, 'floor': self.envelope.floor,
                         't_min': self.envelope.t_min,
                         'fit_range': list(self.envelope.fit_range) if self.envelope.fit_range else None,
                         'lower_ratio': self.envelope.lower_ratio, 'upper_ratio': self.envelope.upper_ratio},
            'thermo': {'n_list': list(self.thermo.n_list), 'beta': self.thermo.beta, 'n_max': self.thermo.n_max},
            'output': self.output,
            'seed': self.master_seed,
        }
        return record


# Field readers

def _number(record: Dict[str, Any], key: str, path: str, default=None, positive=False, minimum=None):
    if key not in record:
        return default
    value = record[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}{key}", f"expected a number, got {value!r}")
    if positive and not value > 0:
        raise ConfigError(f"{path}{key}", f"must be > 0, got {value}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{path}{key}", f"must be >= {minimum}, got {value}")
    return value


def _integer(record: Dict[str, Any], key: str, path: str, default=None, minimum=None):
    value = _number(record, key, path, default, minimum=minimum)
    if key in record and int(value) != value:
        raise ConfigError(f"{path}{key}", f"expected an integer, got {value!r}")
    return int(value) if value is not None else None


def _integer_list(record: Dict[str, Any], key: str, path: str, minimum: int) -> Tuple[int, ...]:
    if key not in record:
        return ()
    values = record[key]
    if not isinstance(values, list) or not values:
        raise ConfigError(f"{path}{key}", "expected a non-empty list of integers")
    out = []
    for idx, v in enumerate(values):
        if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
            raise ConfigError(f"{path}{key}[{idx}]", f"expected an integer >= {minimum}, got {v!r}")
        out.append(v)
    return tuple(out)


def _section(record: Dict[str, Any], key: str, allowed: set) -> Dict[str, Any]:
    section = record.get(key)
    if section is None:
        return {}
    if not isinstance(section, dict):
        raise ConfigError(key, "expected an object")
    extra = sorted(set(section) - allowed)
    if extra:
        raise ConfigError(f"{key}.{extra[0]}", "unknown key")
    return section


def _wrap(path: str, build):
    try:
        return build()
    except ConfigError:
        raise
    except (ValueError, TypeError) as e:
        raise ConfigError(path, str(e))


def _time_grid(record: Dict[str, Any]) -> Optional[TimeGrid]:
    if record.get('time_grid') is None:
        return None
    section = _section(record, 'time_grid', {'start', 'stop', 'count', 'spacing'})
    for key in ('start', 'stop', 'count'):
        if key not in section:
            raise ConfigError(f"time_grid.{key}", "missing")
    start = _number(section, 'start', 'time_grid.', minimum=0.0)
    stop = _number(section, 'stop', 'time_grid.', minimum=0.0)
    count = _integer(section, 'count', 'time_grid.', minimum=1)
    spacing = section.get('spacing', 'linear')
    if spacing not in ('linear', 'log'):
        raise ConfigError('time_grid.spacing', f"expected 'linear' or 'log', got {spacing!r}")
    if spacing == 'log':
        return _wrap('time_grid', lambda: TimeGrid.logarithmic(start, stop, count))
    return _wrap('time_grid', lambda: TimeGrid.linear(start, stop, count))


def _initial_state(record: Dict[str, Any]) -> InitialState:
    section = _section(record, 'initial_state', {'gamma', 'delta'})
    if not section:
        return InitialState.from_magnetization(0.5)
    if len(section) != 1:
        raise ConfigError('initial_state', "give exactly one of 'gamma' or 'delta'")
    if 'gamma' in section:
        gamma = _number(section, 'gamma', 'initial_state.')
        return _wrap('initial_state.gamma', lambda: InitialState(float(gamma)))
    delta = _number(section, 'delta', 'initial_state.')
    return _wrap('initial_state.delta', lambda: InitialState.from_magnetization(float(delta)))


def from_dict(record: Dict[str, Any], experiment: Optional[str] = None) -> ExperimentConfig:
    """
    Validate a config document. ``experiment`` is the CLI subcommand; it must
    agree with the document's own 'experiment' key when both are present.
    """
    if not isinstance(record, dict):
        raise ConfigError('', "config must be a JSON object")
    extra = sorted(set(record) - TOP_LEVEL_KEYS)
    if extra:
        raise ConfigError(extra[0], "unknown key")

    version = record.get('schema_version', SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError('schema_version', f"unsupported version {version!r} (expected {SCHEMA_VERSION})")

    declared = record.get('experiment')
    if declared is not None and experiment is not None and declared != experiment:
        raise ConfigError('experiment', f"config declares '{declared}' but the command is '{experiment}'")
    kind = experiment or declared
    if kind not in EXPERIMENTS:
        raise ConfigError('experiment', f"expected one of {list(EXPERIMENTS)}, got {kind!r}")

    for key in REQUIRED[kind]:
        if record.get(key) is None:
            raise ConfigError(key, f"required for the '{kind}' experiment")

    potential = None
    if record.get('potential') is not None:
        potential = _wrap('potential', lambda: PotentialSpec.from_config(record['potential']))
    disorder = None
    if record.get('disorder') is not None:
        disorder = _wrap('disorder', lambda: DisorderSpec.from_config(record['disorder']))

    trunc = _section(record, 'truncation', {'tolerance', 'max_terms', 'tail_series'})
    tail_series = trunc.get('tail_series', True)
    if not isinstance(tail_series, bool):
        raise ConfigError('truncation.tail_series', f"expected true or false, got {tail_series!r}")
    truncation = _wrap('truncation', lambda: TruncationPolicy(
        float(_number(trunc, 'tolerance', 'truncation.', 1e-10, positive=True)),
        _integer(trunc, 'max_terms', 'truncation.', 10_000_000, minimum=1),
        tail_series))

    env = _section(record, 'envelope', {'window_width', 'floor', 't_min', 'fit_range', 'lower_ratio', 'upper_ratio'})
    fit_range = env.get('fit_range')
    if fit_range is not None:
        if (not isinstance(fit_range, list) or len(fit_range) != 2
                or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in fit_range)
                or not fit_range[0] < fit_range[1]):
            raise ConfigError('envelope.fit_range', f"expected [t_lo, t_hi] with t_lo < t_hi, got {fit_range!r}")
        fit_range = (float(fit_range[0]), float(fit_range[1]))
    envelope = EnvelopeSettings(
        float(_number(env, 'window_width', 'envelope.', 2.0, positive=True)),
        float(_number(env, 'floor', 'envelope.', 1e-300, minimum=0.0)),
        float(_number(env, 't_min', 'envelope.', 0.0, minimum=0.0)),
        fit_range,
        float(_number(env, 'lower_ratio', 'envelope.', 0.85, positive=True)),
        float(_number(env, 'upper_ratio', 'envelope.', 1.15, positive=True)))
    if not envelope.lower_ratio <= 1.0 <= envelope.upper_ratio:
        raise ConfigError('envelope', "lower_ratio <= 1 <= upper_ratio must hold")

    th = _section(record, 'thermo', {'n_list', 'beta', 'n_max'})
    n_max = _integer(th, 'n_max', 'thermo.', 10, minimum=0)
    n_list = _integer_list(th, 'n_list', 'thermo.', 0) or (1, 2, 3)
    for idx, n in enumerate(n_list):
        if n > n_max:
            raise ConfigError(f"thermo.n_list[{idx}]", f"volume n={n} exceeds thermo.n_max={n_max}")
    thermo = ThermoSettings(n_list, float(_number(th, 'beta', 'thermo.', 1.0, positive=True)), n_max)

    samples = _integer(record, 'samples', '', 100, minimum=2)
    if kind == 'free-energy' and samples < 10:
        raise ConfigError('samples', f"free-energy needs at least 10 samples, got {samples}")

    output = record.get('output', 'results')
    if not isinstance(output, str) or not output:
        raise ConfigError('output', f"expected a directory path, got {output!r}")

    config = ExperimentConfig(
        experiment=kind,
        potential=potential,
        disorder=disorder,
        initial_state=_initial_state(record),
        B=float(_number(record, 'B', '', 0.0)),
        time_grid=_time_grid(record),
        truncation=truncation,
        site=_integer(record, 'site', '', 0),
        m=_integer(record, 'm', '', None, minimum=1),
        m_list=_integer_list(record, 'm_list', '', 1),
        t=_number(record, 't', '', None, minimum=0.0),
        samples=samples,
        k_list=_integer_list(record, 'k_list', '', 1),
        envelope=envelope,
        thermo=thermo,
        output=output,
        seed=_integer(record, 'seed', '', 0, minimum=0),
        raw=dict(record),
    )
    logger.debug(f"Loaded {kind} config")
    return config


def load_config(path: str, experiment: Optional[str] = None) -> ExperimentConfig:
    config_path = Path(path)
    if not config_path.exists():
        raise ConfigError('', f"config file not found: {path}")
    try:
        with open(config_path, 'r', encoding='utf-8') as f:
            record = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError('', f"{path} is not valid JSON: {e}")
    return from_dict(record, experiment)
