# Tuning
# Prefetch-aware retention tuning (PART), the expiredPF -> distance mapping (RPC),
# the miss-based fallback, and the policies compared against each other.

import itertools
import logging

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator

from sttsim.errors import ConfigurationError, InsufficientSampleError
from sttsim.metrics import (
    CounterSet, EnergyReport, HardwareOverhead, RetentionConfig, STTRAM_LABELS,
    canonical_label, hardware_overhead, ratios, retention_config,
)
from sttsim.prefetch import PREFETCH_DISTANCES, DistancePolicy, PrefetchConfig
from sttsim.simulator import SimulationSettings, Simulator
from sttsim.trace import TraceEvent

logger = logging.getLogger("sttsim.tuning")

SAMPLING_WINDOW = 100_000
MISS_DELTA = 0.05
EXECUTION_DEGREE = 4
UNIFORM_DEGREE = 2


class TuningMode(Enum):
    EXPIRED_PF = 'expiredPF'
    MISS_BASED = 'miss-based'
    FIXED = 'fixed'


@dataclass(frozen=True)
class PartThresholds:
    min_all_pf : float = 0.001
    min_expired_pf_for_base : float = 0.0002
    growth_factor : float = 2.0
    sampling_window : int = SAMPLING_WINDOW
    # with the fallback disabled, tuning is always expiredPF-based
    miss_fallback : bool = True
    miss_delta : float = MISS_DELTA

    def __post_init__(self):
        for name in ("min_all_pf", "min_expired_pf_for_base", "growth_factor", "sampling_window"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(name, "must be strictly positive")
        if self.growth_factor <= 1:
            raise ConfigurationError("growth_factor", "must be greater than 1")
        if self.miss_delta < 0:
            raise ConfigurationError("miss_delta", "must not be negative")


def default_retention_set(clock_hz : int = None) -> tuple:
    """STTRAM units ordered from the longest retention to the shortest."""
    if clock_hz is None:
        return tuple(retention_config(label) for label in STTRAM_LABELS)
    return tuple(retention_config(label, clock_hz) for label in STTRAM_LABELS)


def order_retention_set(configs : Iterable[RetentionConfig]) -> tuple:
    configs = tuple(configs)
    if not configs:
        raise ConfigurationError("retentions", "retention set is empty")
    if any(c.retention_cycles is None for c in configs):
        raise ConfigurationError("retentions", "the tuned set only holds STTRAM units")
    return tuple(sorted(configs, key=lambda c: c.retention_cycles, reverse=True))


@dataclass(frozen=True)
class WindowSample:
    retention : str
    all_pf : float
    expired_pf : float
    miss_rate : float
    counters : CounterSet = None

    def log_line(self, decision_so_far : str) -> str:
        return f"{self.retention} {self.all_pf:.6f} {self.expired_pf:.6f} {self.miss_rate:.6f} {decision_so_far}"


@dataclass(frozen=True)
class PartOutcome:
    retention : str
    mode : TuningMode
    samples : tuple
    trail : tuple
    base_expired_pf : float = None


def part_select(samples : Iterable[WindowSample], thresholds : PartThresholds = None, initial : str = "STT-1ms") -> PartOutcome:
    """
    Retention selection over per-window samples, taken longest retention first.

    Samples are consumed lazily: the iterable is not advanced past the window at
    which the selection stops.
    """
    thresholds = thresholds or PartThresholds()
    output = initial
    base_expired_pf = None
    seen = []
    trail = []

    for sample in samples:
        seen.append(sample)

        if thresholds.miss_fallback and not sample.all_pf > thresholds.min_all_pf:
            output = sample.retention
            trail.append(sample.log_line(output))
            return PartOutcome(output, TuningMode.MISS_BASED, tuple(seen), tuple(trail), base_expired_pf)

        if base_expired_pf is None:
            output = sample.retention
            if sample.expired_pf > thresholds.min_expired_pf_for_base:
                base_expired_pf = sample.expired_pf
        elif sample.expired_pf < thresholds.growth_factor * base_expired_pf:
            output = sample.retention
        else:
            trail.append(sample.log_line(output))
            return PartOutcome(output, TuningMode.EXPIRED_PF, tuple(seen), tuple(trail), base_expired_pf)

        trail.append(sample.log_line(output))

    return PartOutcome(output, TuningMode.EXPIRED_PF, tuple(seen), tuple(trail), base_expired_pf)


def rpc_distance(expired_pf : float) -> int:
    """Prefetch distance for the expiredPF sampled at prefetch degree 1."""
    if not 0.0 <= expired_pf <= 1.0:
        raise ConfigurationError("expired_pf", f"{expired_pf} is outside [0, 1]")
    if expired_pf > 0.05:
        return 1
    if expired_pf > 0.01:
        return 4
    if expired_pf > 0.005:
        return 8
    if expired_pf >= 0.0005:
        return 16
    return 32


def miss_based_select(rates : list, delta : float = MISS_DELTA) -> str:
    """
    rates is [(label, miss rate)] longest retention first. Returns the shortest
    retention whose miss rate stays within (1 + delta) of the longest one's.
    """
    if not rates:
        raise ConfigurationError("retentions", "no miss rates to select from")
    limit = (1.0 + delta) * rates[0][1]
    chosen = rates[0][0]
    for label, rate in rates:
        if rate <= limit:
            chosen = label
    return chosen


@dataclass(frozen=True)
class TuningDecision:
    retention : str
    distance : int
    mode : TuningMode
    samples : tuple = ()
    miss_samples : tuple = ()
    migrations : int = 0
    log : tuple = ()


def _take_window(events : Iterator[TraceEvent], window : int, label : str) -> list:
    taken = list(itertools.islice(events, window))
    if len(taken) < window:
        raise InsufficientSampleError(
            f"workload ended after {len(taken)} of {window} events while sampling {label}"
        )
    return taken


def _settle(simulator : Simulator, retention_set : tuple, label : str):
    if simulator.retention.label != label:
        target = next(c for c in retention_set if c.label == label)
        simulator.switch_retention(target)


def _sample_windows(simulator : Simulator, events : Iterator[TraceEvent], retention_set : tuple, window : int, prefetch : PrefetchConfig):
    for retention in retention_set:
        if simulator.retention != retention:
            simulator.switch_retention(retention)
        simulator.set_prefetch(prefetch)

        segment = simulator.run_segment(_take_window(events, window, retention.label))
        all_pf, expired_pf = ratios(segment.counters)
        sample = WindowSample(retention.label, all_pf, expired_pf, segment.counters.miss_rate(), segment.counters)
        logger.debug(f"Sampled {retention.label}: allPF={all_pf:.6f} expiredPF={expired_pf:.6f} miss_rate={sample.miss_rate:.6f}")
        yield sample


def _new_simulator(retention_set : tuple, settings : SimulationSettings) -> Simulator:
    return Simulator(retention_set[0], None, settings)


def miss_based_tune(workload : Iterable[TraceEvent], retention_set : Iterable[RetentionConfig] = None, thresholds : PartThresholds = None, settings : SimulationSettings = None, simulator : Simulator = None, samples_out : list = None) -> str:
    """Samples one window per retention with prefetching disabled and applies the miss-rate rule."""
    thresholds = thresholds or PartThresholds()
    settings = settings or (simulator.settings if simulator else SimulationSettings())
    retention_set = order_retention_set(retention_set or default_retention_set(settings.clock_hz))
    simulator = simulator or _new_simulator(retention_set, settings)
    events = iter(workload)

    samples = list(_sample_windows(simulator, events, retention_set, thresholds.sampling_window, None))
    label = miss_based_select([(s.retention, s.miss_rate) for s in samples], thresholds.miss_delta)
    if samples_out is not None:
        samples_out.extend(samples)

    _settle(simulator, retention_set, label)
    logger.info(f"Miss-based tuning selected {label}")
    return label


def _miss_trail(samples : list, delta : float) -> list:
    lines = []
    for count in range(1, len(samples) + 1):
        so_far = miss_based_select([(s.retention, s.miss_rate) for s in samples[:count]], delta)
        lines.append(samples[count - 1].log_line(so_far))
    return lines


def part_tune(workload : Iterable[TraceEvent], retention_set : Iterable[RetentionConfig] = None, thresholds : PartThresholds = None, settings : SimulationSettings = None, simulator : Simulator = None, trigger_on_expiration_miss : bool = True) -> TuningDecision:
    thresholds = thresholds or PartThresholds()
    settings = settings or (simulator.settings if simulator else SimulationSettings())
    retention_set = order_retention_set(retention_set or default_retention_set(settings.clock_hz))
    simulator = simulator or _new_simulator(retention_set, settings)
    events = iter(workload)

    # sampling runs at degree 1 and distance 1
    sampling = PrefetchConfig(degree=1, distance=1, trigger_on_expiration_miss=trigger_on_expiration_miss)
    outcome = part_select(
        _sample_windows(simulator, events, retention_set, thresholds.sampling_window, sampling),
        thresholds,
        initial=retention_set[0].label,
    )

    log = list(outcome.trail)
    miss_samples = []
    if outcome.mode is TuningMode.MISS_BASED:
        label = miss_based_tune(events, retention_set, thresholds, settings, simulator, samples_out=miss_samples)
        log.extend(_miss_trail(miss_samples, thresholds.miss_delta))
    else:
        label = outcome.retention
        _settle(simulator, retention_set, label)

    at_decision = [s for s in outcome.samples if s.retention == label]
    rpc_sample = at_decision[0] if at_decision else outcome.samples[-1]
    distance = rpc_distance(rpc_sample.expired_pf)

    logger.info(f"PART selected {label} ({outcome.mode.value}), RPC distance {distance}")
    return TuningDecision(
        retention=label,
        distance=distance,
        mode=outcome.mode,
        samples=outcome.samples,
        miss_samples=tuple(miss_samples),
        migrations=len(simulator.migrations),
        log=tuple(log),
    )


# Policies

class Tuner(Enum):
    NONE = 'none'
    LARS = 'LARS'
    PART = 'PART'


@dataclass(frozen=True)
class Policy:
    name : str
    tuner : Tuner
    distance_policy : DistancePolicy = None
    distance : int = 1
    degree : int = EXECUTION_DEGREE
    fixed_retention : str = None

    @property
    def prefetches(self) -> bool:
        return self.distance_policy is not None

    @property
    def overhead(self) -> HardwareOverhead:
        return hardware_overhead(self.name)

    def prefetch_config(self, distance : int = None, trigger_on_expiration_miss : bool = True) -> PrefetchConfig:
        if not self.prefetches:
            return None
        return PrefetchConfig(
            degree=self.degree,
            distance=distance if distance is not None else self.distance,
            policy=self.distance_policy,
            trigger_on_expiration_miss=trigger_on_expiration_miss,
        )

    @staticmethod
    def _parse_uniform(token : str, text : str) -> int:
        try:
            distance = int(token[len("PFD_"):])
        except ValueError:
            raise ConfigurationError("policy", f"bad uniform distance in '{text}'")
        if distance not in PREFETCH_DISTANCES:
            raise ConfigurationError("policy", f"distance {distance} in '{text}' is not one of {PREFETCH_DISTANCES}")
        return distance

    @classmethod
    def parse(cls, text : str) -> "Policy":
        stripped = text.strip()
        upper = stripped.upper()

        if upper.startswith("FIXED:"):
            label_part, _, tail = stripped[len("FIXED:"):].partition('+')
            label = canonical_label(label_part)
            name = f"FIXED:{label}"
            tail = tail.strip().upper()
            if not tail:
                return cls(name, Tuner.NONE, fixed_retention=label)
            if tail == "NST":
                return cls(f"{name}+NST", Tuner.NONE, DistancePolicy.NST, fixed_retention=label)
            if tail.startswith("PFD_"):
                distance = cls._parse_uniform(tail, text)
                return cls(f"{name}+PFD_{distance}", Tuner.NONE, DistancePolicy.STATIC, distance, fixed_retention=label)
            raise ConfigurationError("policy", f"unknown policy '{text}'")

        parts = [p.strip() for p in upper.split('+')]
        if len(parts) > 2:
            raise ConfigurationError("policy", f"unknown policy '{text}'")
        head, tail = parts[0], (parts[1] if len(parts) == 2 else None)

        if head == "LARS":
            if tail is None:
                return cls("LARS", Tuner.LARS)
            if tail == "NST":
                return cls("LARS+NST", Tuner.LARS, DistancePolicy.NST)
            if tail.startswith("PFD_"):
                distance = cls._parse_uniform(tail, text)
                return cls(f"LARS+PFD_{distance}", Tuner.LARS, DistancePolicy.STATIC, distance, degree=UNIFORM_DEGREE)

        if head == "PART":
            if tail == "RPC":
                return cls("PART+RPC", Tuner.PART, DistancePolicy.RPC)
            if tail == "NST":
                return cls("PART+NST", Tuner.PART, DistancePolicy.NST)
            if tail is not None and tail.startswith("PFD_"):
                distance = cls._parse_uniform(tail, text)
                return cls(f"PART+PFD_{distance}", Tuner.PART, DistancePolicy.STATIC, distance)

        if head == "SRAM":
            if tail == "NST":
                return cls("SRAM+NST", Tuner.NONE, DistancePolicy.NST, fixed_retention="SRAM")
            if tail is None:
                return cls("SRAM", Tuner.NONE, fixed_retention="SRAM")
            if tail.startswith("PFD_"):
                distance = cls._parse_uniform(tail, text)
                return cls(f"SRAM+PFD_{distance}", Tuner.NONE, DistancePolicy.STATIC, distance, fixed_retention="SRAM")

        raise ConfigurationError("policy", f"unknown policy '{text}'")


@dataclass(frozen=True)
class RunConfig:
    settings : SimulationSettings = field(default_factory=SimulationSettings)
    retentions : tuple = STTRAM_LABELS
    thresholds : PartThresholds = field(default_factory=PartThresholds)
    trigger_on_expiration_miss : bool = True

    def retention_set(self) -> tuple:
        return order_retention_set(retention_config(label, self.settings.clock_hz) for label in self.retentions)


@dataclass(frozen=True)
class PolicyResult:
    policy : str
    decision : TuningDecision
    counters : CounterSet
    report : EnergyReport
    distance : int
    events : int
    overhead : HardwareOverhead = HardwareOverhead()

    @property
    def tuning_log(self) -> tuple:
        return self.decision.log


def run_policy(workload : Iterable[TraceEvent], policy, config : RunConfig = None) -> PolicyResult:
    """Runs the sampling phase (when the policy tunes) and then the rest of the workload."""
    config = config or RunConfig()
    policy = Policy.parse(policy) if isinstance(policy, str) else policy
    settings = config.settings

    counted = _Counted(iter(workload))

    if policy.tuner is Tuner.NONE:
        retention = retention_config(policy.fixed_retention, settings.clock_hz)
        simulator = Simulator(retention, None, settings)
        decision = TuningDecision(retention.label, policy.distance if policy.prefetches else 0, TuningMode.FIXED)
    else:
        retention_set = config.retention_set()
        simulator = _new_simulator(retention_set, settings)
        if policy.tuner is Tuner.PART:
            decision = part_tune(counted, retention_set, config.thresholds, settings, simulator, config.trigger_on_expiration_miss)
        else:
            samples = []
            label = miss_based_tune(counted, retention_set, config.thresholds, settings, simulator, samples_out=samples)
            decision = TuningDecision(
                retention=label,
                distance=policy.distance if policy.prefetches else 0,
                mode=TuningMode.MISS_BASED,
                miss_samples=tuple(samples),
                migrations=len(simulator.migrations),
                log=tuple(_miss_trail(samples, config.thresholds.miss_delta)),
            )

    distance = decision.distance if policy.distance_policy is DistancePolicy.RPC else policy.distance
    simulator.set_prefetch(policy.prefetch_config(distance, config.trigger_on_expiration_miss))
    simulator.run(counted)
    simulator.finish()

    if not policy.prefetches:
        distance = 0
    elif policy.distance_policy is DistancePolicy.NST:
        distance = simulator.prefetcher.nst.current_distance

    logger.info(f"{policy.name}: {counted.count} events at {simulator.retention.label}, distance {distance}")
    return PolicyResult(
        policy=policy.name,
        decision=decision,
        counters=simulator.counters.copy(),
        report=simulator.report(),
        distance=distance,
        events=counted.count,
        overhead=policy.overhead,
    )


class _Counted:
    """Iterator wrapper counting consumed events."""

    def __init__(self, events : Iterator[TraceEvent]):
        self._events = events
        self.count = 0

    def __iter__(self):
        return self

    def __next__(self) -> TraceEvent:
        event = next(self._events)
        self.count += 1
        return event
