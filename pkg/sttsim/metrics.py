# Metrics and energy
# Exact event counters, the per-device constants table and the energy/latency ledger.
#
# Energies are kept as integers in units of 1e-6 nJ. Leakage is accumulated as
# microwatt-cycles and converted once when a report is read, so reports add exactly.

import logging

from dataclasses import dataclass, fields, replace
from decimal import Decimal, ROUND_HALF_EVEN
from enum import Enum

from sttsim.errors import ConfigurationError, ReportError

logger = logging.getLogger("sttsim.metrics")

CLOCK_HZ = 2_000_000_000

ENERGY_UNITS_PER_NJ = 10 ** 6

# migration between retention units
MIGRATION_CYCLES = 2560
MIGRATION_ENERGY_NJ = Decimal("8.192")


def nj_to_units(nj) -> int:
    return int(Decimal(nj) * ENERGY_UNITS_PER_NJ)


def units_to_nj(units : int) -> Decimal:
    return Decimal(units) / ENERGY_UNITS_PER_NJ


def round_nj(value : Decimal, places : int = 3) -> Decimal:
    return value.quantize(Decimal(1).scaleb(-places), rounding=ROUND_HALF_EVEN)


class EventClass(Enum):
    READ_HIT = 'read_hit'
    WRITE_HIT = 'write_hit'
    FILL = 'fill'
    WRITEBACK = 'writeback'


@dataclass(frozen=True)
class RetentionConfig:
    """One operating point of the cache device."""
    label : str
    retention_cycles : int
    write_energy_nj : Decimal
    hit_energy_nj : Decimal
    leakage_mw : Decimal
    hit_latency_cycles : int
    write_latency_cycles : int

    def __post_init__(self):
        for name in ("write_energy_nj", "hit_energy_nj", "leakage_mw", "hit_latency_cycles", "write_latency_cycles"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(name, f"must be strictly positive for {self.label}")
        if self.retention_cycles is not None and self.retention_cycles <= 0:
            raise ConfigurationError("retention_cycles", f"must be strictly positive for {self.label}")

    @property
    def never_expires(self) -> bool:
        return self.retention_cycles is None

    @property
    def write_energy_units(self) -> int:
        return nj_to_units(self.write_energy_nj)

    @property
    def hit_energy_units(self) -> int:
        return nj_to_units(self.hit_energy_nj)

    @property
    def leakage_uw(self) -> int:
        return int(self.leakage_mw * 1000)

    def expiry_after(self, fill_cycle : int):
        if self.retention_cycles is None:
            return float('inf')
        return fill_cycle + self.retention_cycles

    def with_retention(self, retention_cycles, label : str = None) -> "RetentionConfig":
        return replace(self, retention_cycles=retention_cycles, label=label or self.label)


# label: (retention seconds, write nJ, hit nJ, leakage mW, hit latency, write latency)
DEVICE_TABLE = {
    "SRAM":      (None,              "0.002", "0.008", "75.968", 2, 2),
    "STT-25us":  (Decimal("25e-6"),  "0.006", "0.005", "11.778", 1, 2),
    "STT-50us":  (Decimal("50e-6"),  "0.007", "0.005", "11.778", 1, 3),
    "STT-75us":  (Decimal("75e-6"),  "0.007", "0.005", "11.778", 1, 3),
    "STT-100us": (Decimal("100e-6"), "0.008", "0.005", "11.778", 1, 3),
    "STT-1ms":   (Decimal("1e-3"),   "0.011", "0.005", "11.365", 1, 4),
}

STTRAM_LABELS = ("STT-1ms", "STT-100us", "STT-75us", "STT-50us", "STT-25us")


def canonical_label(text : str) -> str:
    """Accepts 'STT-25us', 'STT-25µs', '25us', '1ms', 'sram' and similar spellings."""
    normalised = text.strip().replace("µ", "u").replace("μ", "u")
    upper = normalised.upper()
    if upper == "SRAM":
        return "SRAM"
    if upper.startswith("STT-"):
        normalised = normalised[4:]
    candidate = "STT-" + normalised.lower()
    if candidate not in DEVICE_TABLE:
        raise ConfigurationError("retention", f"unknown retention '{text}'")
    return candidate


def retention_config(label : str, clock_hz : int = CLOCK_HZ) -> RetentionConfig:
    label = canonical_label(label)
    seconds, write_nj, hit_nj, leakage_mw, hit_latency, write_latency = DEVICE_TABLE[label]
    retention_cycles = None if seconds is None else int(seconds * clock_hz)
    return RetentionConfig(
        label=label,
        retention_cycles=retention_cycles,
        write_energy_nj=Decimal(write_nj),
        hit_energy_nj=Decimal(hit_nj),
        leakage_mw=Decimal(leakage_mw),
        hit_latency_cycles=hit_latency,
        write_latency_cycles=write_latency,
    )


@dataclass
class CounterSet:
    total_prefetches : int = 0
    total_mshr_requests : int = 0
    expired_unused_prefetches : int = 0
    demand_accesses : int = 0
    demand_hits : int = 0
    demand_misses : int = 0
    expiration_misses : int = 0
    late_prefetches : int = 0
    writebacks : int = 0
    prefetchable_expired_reloads : int = 0
    # bookkeeping used by the conservation checks
    fills : int = 0
    prefetch_fills : int = 0
    evictions : int = 0
    expired_blocks : int = 0
    mshr_merges : int = 0
    mshr_stalls : int = 0
    prefetches_dropped : int = 0
    timely_prefetches : int = 0
    evicted_unused_prefetches : int = 0

    def copy(self) -> "CounterSet":
        return replace(self)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def __add__(self, other : "CounterSet") -> "CounterSet":
        return CounterSet(**{f.name: getattr(self, f.name) + getattr(other, f.name) for f in fields(self)})

    def __sub__(self, other : "CounterSet") -> "CounterSet":
        return CounterSet(**{f.name: getattr(self, f.name) - getattr(other, f.name) for f in fields(self)})

    def miss_rate(self) -> float:
        if self.demand_accesses == 0:
            return 0.0
        return self.demand_misses / self.demand_accesses

    def violations(self) -> list:
        problems = []
        if self.expired_unused_prefetches > self.total_prefetches:
            problems.append("expired_unused_prefetches exceeds total_prefetches")
        if self.expiration_misses > self.demand_misses:
            problems.append("expiration_misses exceeds demand_misses")
        if self.demand_hits + self.demand_misses != self.demand_accesses:
            problems.append("demand_hits + demand_misses differs from demand_accesses")
        if self.late_prefetches > self.total_prefetches:
            problems.append("late_prefetches exceeds total_prefetches")
        return problems


def ratios(counters : CounterSet):
    """Returns (allPF, expiredPF); a zero denominator yields 0."""
    all_pf = counters.total_prefetches / counters.total_mshr_requests if counters.total_mshr_requests else 0.0
    expired_pf = counters.expired_unused_prefetches / counters.total_prefetches if counters.total_prefetches else 0.0
    return all_pf, expired_pf


@dataclass(frozen=True)
class EnergyReport:
    dynamic_units : int = 0
    leakage_uw_cycles : int = 0
    migration_units : int = 0
    total_latency_cycles : int = 0
    clock_hz : int = CLOCK_HZ

    def _check_clock(self, other):
        if self.clock_hz != other.clock_hz:
            raise ReportError("cannot combine energy reports with different clock rates")

    def __add__(self, other : "EnergyReport") -> "EnergyReport":
        self._check_clock(other)
        return EnergyReport(
            self.dynamic_units + other.dynamic_units,
            self.leakage_uw_cycles + other.leakage_uw_cycles,
            self.migration_units + other.migration_units,
            self.total_latency_cycles + other.total_latency_cycles,
            self.clock_hz,
        )

    def __sub__(self, other : "EnergyReport") -> "EnergyReport":
        self._check_clock(other)
        return EnergyReport(
            self.dynamic_units - other.dynamic_units,
            self.leakage_uw_cycles - other.leakage_uw_cycles,
            self.migration_units - other.migration_units,
            self.total_latency_cycles - other.total_latency_cycles,
            self.clock_hz,
        )

    @property
    def leakage_units(self) -> int:
        # uW * s = 1e3 nJ, so uW * cycles / clock_hz * 1e9 is in 1e-6 nJ
        numerator = self.leakage_uw_cycles * 10 ** 9
        exact = Decimal(numerator) / Decimal(self.clock_hz)
        return int(exact.to_integral_value(rounding=ROUND_HALF_EVEN))

    @property
    def total_units(self) -> int:
        return self.dynamic_units + self.leakage_units + self.migration_units

    @property
    def dynamic_nj(self) -> Decimal:
        return units_to_nj(self.dynamic_units)

    @property
    def leakage_nj(self) -> Decimal:
        return units_to_nj(self.leakage_units)

    @property
    def migration_nj(self) -> Decimal:
        return units_to_nj(self.migration_units)

    @property
    def total_nj(self) -> Decimal:
        return units_to_nj(self.total_units)

    def summary(self) -> dict:
        return {
            "dynamic_nj": round_nj(self.dynamic_nj),
            "leakage_nj": round_nj(self.leakage_nj),
            "migration_nj": round_nj(self.migration_nj),
            "energy_nj": round_nj(self.total_nj),
            "latency_cycles": self.total_latency_cycles,
        }


class EnergyLedger:
    """Accumulates dynamic, leakage and migration energy plus demand-visible latency."""

    def __init__(self, clock_hz : int = CLOCK_HZ):
        self.clock_hz = clock_hz
        self.dynamic_units = 0
        self.leakage_uw_cycles = 0
        self.migration_units = 0
        self.latency_cycles = 0
        self.migrations = 0
        self.last_cycle = 0

    def record(self, event_class : EventClass, config : RetentionConfig, count : int = 1):
        if event_class is EventClass.READ_HIT:
            self.dynamic_units += config.hit_energy_units * count
        else:
            # write hits, fills and writebacks are all writes into the array
            self.dynamic_units += config.write_energy_units * count

    def advance(self, now : int, config : RetentionConfig):
        if now > self.last_cycle:
            self.leakage_uw_cycles += config.leakage_uw * (now - self.last_cycle)
            self.last_cycle = now

    def record_latency(self, cycles : int):
        self.latency_cycles += cycles

    def record_migration(self, cycles : int = MIGRATION_CYCLES, energy_nj : Decimal = MIGRATION_ENERGY_NJ):
        self.migrations += 1
        self.migration_units += nj_to_units(energy_nj)
        self.latency_cycles += cycles

    def snapshot(self) -> EnergyReport:
        return EnergyReport(
            dynamic_units=self.dynamic_units,
            leakage_uw_cycles=self.leakage_uw_cycles,
            migration_units=self.migration_units,
            total_latency_cycles=self.latency_cycles,
            clock_hz=self.clock_hz,
        )


@dataclass(frozen=True)
class ComparisonRow:
    label : str
    energy_nj : Decimal
    latency_cycles : int
    energy_ratio : float
    latency_ratio : float

    @property
    def energy_reduction_pct(self) -> float:
        return (1.0 - self.energy_ratio) * 100.0

    @property
    def latency_reduction_pct(self) -> float:
        return (1.0 - self.latency_ratio) * 100.0


def compare(reports : list, baseline : str = None) -> list:
    """
    Normalises every report against the baseline.

    reports is a list of (label, EnergyReport); the baseline defaults to the first
    entry. One row is returned per non-baseline report.
    """
    if len(reports) < 2:
        raise ReportError("comparison needs at least two reports")

    labels = [label for label, _ in reports]
    baseline = baseline if baseline is not None else labels[0]
    if baseline not in labels:
        raise ReportError(f"baseline '{baseline}' is not among the reports")

    base_report : EnergyReport = dict(reports)[baseline]
    if base_report.total_units == 0:
        raise ReportError(f"baseline '{baseline}' has zero total energy")
    if base_report.total_latency_cycles == 0:
        raise ReportError(f"baseline '{baseline}' has zero total latency")

    rows = []
    for label, report in reports:
        if label == baseline:
            continue
        rows.append(ComparisonRow(
            label=label,
            energy_nj=report.total_nj,
            latency_cycles=report.total_latency_cycles,
            energy_ratio=report.total_units / base_report.total_units,
            latency_ratio=report.total_latency_cycles / base_report.total_latency_cycles,
        ))
    return rows


# Hardware overhead of the tuning/throttling logic, in 32-bit registers,
# dividers and comparators.

@dataclass(frozen=True)
class HardwareOverhead:
    registers : int = 0
    dividers : int = 0
    comparators : int = 0

    def __add__(self, other : "HardwareOverhead") -> "HardwareOverhead":
        return HardwareOverhead(
            self.registers + other.registers,
            self.dividers + other.dividers,
            self.comparators + other.comparators,
        )


COMPONENT_OVERHEAD = {
    "LARS": HardwareOverhead(registers=4, dividers=1),
    "PART": HardwareOverhead(registers=5, dividers=1),
    "RPC": HardwareOverhead(comparators=1),
    "NST": HardwareOverhead(registers=7),
}


def hardware_overhead(policy_name : str) -> HardwareOverhead:
    total = HardwareOverhead()
    for component in policy_name.upper().split('+'):
        total = total + COMPONENT_OVERHEAD.get(component.strip(), HardwareOverhead())
    return total


def overhead_reduction(baseline : HardwareOverhead, candidate : HardwareOverhead) -> float:
    """Percent fewer registers used by candidate than baseline."""
    if baseline.registers == 0:
        return 0.0
    return (baseline.registers - candidate.registers) / baseline.registers * 100.0
