# Config
# Experiment configuration. Values are layered, lowest precedence first:
#   built-in defaults < STTSIM_* environment (a .env file is honoured) < --config file < CLI flags
#
# Config files use dotenv KEY=VALUE lines, grouped by prefix:
#   TRACE_*, SIM_*, CACHE_*, PREFETCH_*, TUNING_*, OUTPUT_*

import logging
import os

from dataclasses import dataclass, field

from dotenv import dotenv_values, load_dotenv

from sttsim.cache import CacheGeometry, MEMORY_LATENCY_CYCLES, MSHR_ENTRIES
from sttsim.errors import ConfigurationError
from sttsim.metrics import CLOCK_HZ, STTRAM_LABELS, canonical_label
from sttsim.prefetch import PREFETCH_DISTANCES
from sttsim.simulator import SimulationSettings
from sttsim.trace import TraceFormat, TraceSource, load_trace, load_workload
from sttsim.tuning import PartThresholds, Policy, RunConfig

logger = logging.getLogger("sttsim.config")

ENV_PREFIX = "STTSIM_"

DEFAULT_POLICIES = ("LARS", "PART+RPC")


def _text(value : str) -> str:
    return value.strip()


def _optional_text(value : str):
    value = value.strip()
    return value or None


def _bool(value : str) -> bool:
    lowered = value.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"'{value}' is not a boolean")


def _int(value : str) -> int:
    return int(value.strip().replace("_", ""), 0)


def _items(value : str) -> tuple:
    return tuple(item.strip() for item in value.split(",") if item.strip())


def _labels(value : str) -> tuple:
    return tuple(canonical_label(item) for item in _items(value))


def _ints(value : str) -> tuple:
    return tuple(_int(item) for item in _items(value))


def _policies(value : str) -> tuple:
    return tuple(Policy.parse(item).name for item in _items(value))


def _baseline(value : str):
    value = value.strip()
    return Policy.parse(value).name if value else None


# KEY: (ExperimentSpec field, parser)
SPEC_KEYS = {
    "TRACE_PATH": ("trace_path", _optional_text),
    "TRACE_FORMAT": ("trace_format", lambda v: TraceFormat(v.strip().lower())),
    "TRACE_WORKLOAD": ("workload", _optional_text),
    "SIM_POLICIES": ("policies", _policies),
    "SIM_BASELINE": ("baseline", _baseline),
    "SIM_SEED": ("seed", _int),
    "SIM_MEMORY_LATENCY": ("memory_latency", _int),
    "SIM_CLOCK_HZ": ("clock_hz", _int),
    "SIM_WORKERS": ("workers", _int),
    "CACHE_CAPACITY": ("capacity", _int),
    "CACHE_BLOCK_SIZE": ("block_size", _int),
    "CACHE_ASSOCIATIVITY": ("associativity", _int),
    "CACHE_MSHR_ENTRIES": ("mshr_capacity", _int),
    "CACHE_RETENTIONS": ("retentions", _labels),
    "PREFETCH_DISTANCE": ("distance", _int),
    "PREFETCH_DISTANCES": ("distances", _ints),
    "PREFETCH_TRIGGER_ON_EXPIRATION_MISS": ("trigger_on_expiration_miss", _bool),
    "TUNING_MIN_ALLPF": ("min_all_pf", float),
    "TUNING_MIN_EXPIREDPF": ("min_expired_pf_for_base", float),
    "TUNING_GROWTH_FACTOR": ("growth_factor", float),
    "TUNING_WINDOW": ("sampling_window", _int),
    "TUNING_MISS_DELTA": ("miss_delta", float),
    "TUNING_MISS_FALLBACK": ("miss_fallback", _bool),
    "OUTPUT_DIR": ("output_dir", _text),
    "OUTPUT_TUNING_LOG": ("tuning_log", _bool),
    "OUTPUT_HISTORY_DB": ("history_db", _optional_text),
}

FIELD_TO_KEY = {spec_field: key for key, (spec_field, _) in SPEC_KEYS.items()}


@dataclass(frozen=True)
class ExperimentSpec:
    trace_path : str = None
    trace_format : TraceFormat = TraceFormat.TEXT
    workload : str = None
    policies : tuple = DEFAULT_POLICIES
    baseline : str = None
    seed : int = 0
    memory_latency : int = MEMORY_LATENCY_CYCLES
    clock_hz : int = CLOCK_HZ
    workers : int = 1
    geometry : CacheGeometry = field(default_factory=CacheGeometry)
    mshr_capacity : int = MSHR_ENTRIES
    retentions : tuple = STTRAM_LABELS
    distance : int = 4
    distances : tuple = PREFETCH_DISTANCES
    trigger_on_expiration_miss : bool = True
    thresholds : PartThresholds = field(default_factory=PartThresholds)
    output_dir : str = "results"
    tuning_log : bool = False
    history_db : str = None

    def __post_init__(self):
        if not self.policies:
            raise ConfigurationError("SIM_POLICIES", "at least one policy is required")
        if self.baseline is not None and self.baseline not in self.policies:
            raise ConfigurationError("SIM_BASELINE", f"baseline '{self.baseline}' is not among the policies")
        if self.distance not in PREFETCH_DISTANCES:
            raise ConfigurationError("PREFETCH_DISTANCE", f"{self.distance} is not one of {PREFETCH_DISTANCES}")
        for distance in self.distances:
            if distance not in PREFETCH_DISTANCES:
                raise ConfigurationError("PREFETCH_DISTANCES", f"{distance} is not one of {PREFETCH_DISTANCES}")
        if self.workers < 1:
            raise ConfigurationError("SIM_WORKERS", "must be at least 1")
        if self.clock_hz <= 0:
            raise ConfigurationError("SIM_CLOCK_HZ", "must be positive")

    @property
    def baseline_policy(self) -> str:
        return self.baseline or self.policies[0]

    @property
    def workload_name(self) -> str:
        if self.workload:
            return self.workload
        if self.trace_path:
            return os.path.splitext(os.path.basename(self.trace_path))[0]
        return "unnamed"

    def settings(self) -> SimulationSettings:
        return SimulationSettings(self.geometry, self.memory_latency, self.mshr_capacity, self.clock_hz)

    def run_config(self) -> RunConfig:
        return RunConfig(self.settings(), self.retentions, self.thresholds, self.trigger_on_expiration_miss)

    def load_source(self) -> TraceSource:
        if self.trace_path:
            return load_trace(self.trace_path, self.trace_format)
        if self.workload:
            return load_workload(self.workload, self.seed)
        raise ConfigurationError("TRACE_PATH", "a trace file or a catalog workload is required")


def environment_values() -> dict:
    load_dotenv()
    return {
        key[len(ENV_PREFIX):]: value
        for key, value in os.environ.items()
        if key.startswith(ENV_PREFIX)
    }


def load_config_file(path) -> dict:
    if not os.path.exists(path):
        raise ConfigurationError("config", f"{path} does not exist")
    return {key: value for key, value in dotenv_values(path).items() if value is not None}


def _parse_layer(values : dict, source : str) -> dict:
    parsed = {}
    for key, raw in (values or {}).items():
        key = key.strip().upper()
        if key not in SPEC_KEYS:
            raise ConfigurationError(key, f"unknown configuration key in {source}")
        spec_field, parser = SPEC_KEYS[key]
        try:
            parsed[spec_field] = parser(str(raw))
        except ConfigurationError as e:
            raise ConfigurationError(key, e.reason)
        except ValueError as e:
            raise ConfigurationError(key, f"invalid value '{raw}' in {source}: {e}")
    return parsed


def build_spec(file_values : dict = None, env_values : dict = None, overrides : dict = None) -> ExperimentSpec:
    merged = {}
    merged.update(_parse_layer(env_values, "environment"))
    merged.update(_parse_layer(file_values, "config file"))
    merged.update(_parse_layer(overrides, "command line"))

    geometry_fields = {name: merged.pop(name) for name in ("capacity", "block_size", "associativity") if name in merged}
    threshold_fields = {
        name: merged.pop(name)
        for name in ("min_all_pf", "min_expired_pf_for_base", "growth_factor", "sampling_window", "miss_delta", "miss_fallback")
        if name in merged
    }

    try:
        if geometry_fields:
            merged["geometry"] = CacheGeometry(**geometry_fields)
        if threshold_fields:
            merged["thresholds"] = PartThresholds(**threshold_fields)
    except ConfigurationError as e:
        raise ConfigurationError(FIELD_TO_KEY.get(e.field, e.field), e.reason)

    spec = ExperimentSpec(**merged)
    logger.debug(f"Experiment spec: {spec}")
    return spec
