# Trace
# Memory-reference traces: the text and binary file formats, and the synthetic
# generators used for desk-scale workloads.
#
# Text format, one event per line:
#   <cycle> <pc-hex> <address-hex> <R|W>
# Binary format: packed little-endian (u64 cycle, u64 pc, u64 address, u8 kind), no header.

import itertools
import json
import logging
import os

from dataclasses import dataclass, fields
from enum import Enum
from typing import Iterable, Iterator

import numpy as np

from sttsim.errors import ConfigurationError, TraceError, TraceParseError, TraceValidationError

logger = logging.getLogger("sttsim.trace")

U64_MAX = (1 << 64) - 1

BINARY_RECORD = np.dtype([
    ("cycle", "<u8"),
    ("pc", "<u8"),
    ("address", "<u8"),
    ("kind", "u1"),
])

WORKLOAD_CATALOG_PATH = os.path.join(os.path.dirname(os.path.abspath(__file__)), '..', 'assets', 'workloads.json')


class AccessKind(Enum):
    READ = 'R'
    WRITE = 'W'


class TraceFormat(Enum):
    TEXT = 'text'
    BINARY = 'binary'


class StreamPattern(Enum):
    STRIDED = 'strided'
    RANDOM = 'random'


@dataclass(frozen=True)
class TraceEvent:
    cycle : int
    pc : int
    address : int
    kind : AccessKind = AccessKind.READ

    def __post_init__(self):
        for name in ("cycle", "pc", "address"):
            value = getattr(self, name)
            if not 0 <= value <= U64_MAX:
                raise TraceValidationError(0, f"{name} {value} does not fit in 64 bits")

    @property
    def is_write(self) -> bool:
        return self.kind is AccessKind.WRITE

    def to_line(self) -> str:
        return f"{self.cycle} {self.pc:#x} {self.address:#x} {self.kind.value}"


def _check_order(events : Iterable[TraceEvent]) -> Iterator[TraceEvent]:
    previous = None
    for record, event in enumerate(events, start=1):
        if previous is not None and event.cycle < previous:
            raise TraceValidationError(record, f"cycle regression ({event.cycle} after {previous})")
        previous = event.cycle
        yield event


class TraceSource:
    """
    An ordered sequence of TraceEvent.

    A source built from a sequence is materialised and can be iterated any number
    of times. A lazy source wraps a one-shot iterable and may only be consumed once;
    its cycle order is validated while it is consumed.
    """

    def __init__(self, events : Iterable[TraceEvent], count : int = None, lazy : bool = False):
        self._lazy = lazy
        self._consumed = False
        if lazy:
            self._events = events
            self._count = count
        else:
            self._events = tuple(_check_order(events))
            self._count = len(self._events)

    @classmethod
    def lazy(cls, events : Iterable[TraceEvent], count : int = None) -> "TraceSource":
        return cls(events, count=count, lazy=True)

    @property
    def declared_count(self):
        return self._count

    @property
    def is_materialised(self) -> bool:
        return not self._lazy

    def __len__(self):
        if self._count is None:
            raise TypeError("trace length is unknown for an undeclared lazy source")
        return self._count

    def __iter__(self) -> Iterator[TraceEvent]:
        if not self._lazy:
            return iter(self._events)
        if self._consumed:
            raise TraceError("lazy trace source already consumed")
        self._consumed = True
        return _check_order(self._events)

    def materialise(self) -> "TraceSource":
        if not self._lazy:
            return self
        return TraceSource(iter(self))

    def events(self) -> tuple:
        return self.materialise()._events

    def take(self, n : int) -> Iterator[TraceEvent]:
        """At most n events; on a lazy source this consumes it."""
        return itertools.islice(iter(self), n)


def parse_kind(token : str) -> AccessKind:
    try:
        return AccessKind(token.upper())
    except ValueError:
        raise ValueError(f"unknown access kind '{token}'")


def _parse_text_line(line : str):
    tokens = line.split(" ")
    if len(tokens) != 4:
        raise ValueError(f"expected 4 fields, found {len(tokens)}")
    cycle = int(tokens[0], 10)
    pc = int(tokens[1], 16)
    address = int(tokens[2], 16)
    return cycle, pc, address, parse_kind(tokens[3])


def _load_text(path) -> TraceSource:
    events = []
    previous = None
    with open(path, 'r') as trace_file:
        for line_number, raw in enumerate(trace_file, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith('#'):
                continue

            record = len(events) + 1
            try:
                cycle, pc, address, kind = _parse_text_line(line)
                event = TraceEvent(cycle, pc, address, kind)
            except (ValueError, TraceValidationError) as e:
                raise TraceParseError(path, record, str(e), line=line_number)

            if previous is not None and cycle < previous:
                raise TraceValidationError(record, f"cycle regression ({cycle} after {previous}) at line {line_number}")
            previous = cycle
            events.append(event)

    return TraceSource(events)


def _load_binary(path) -> TraceSource:
    with open(path, 'rb') as trace_file:
        raw = trace_file.read()

    whole, partial = divmod(len(raw), BINARY_RECORD.itemsize)
    if partial:
        raise TraceParseError(path, whole + 1, f"truncated record ({partial} of {BINARY_RECORD.itemsize} bytes)")

    records = np.frombuffer(raw, dtype=BINARY_RECORD, count=whole)
    bad_kind = np.nonzero(records["kind"] > 1)[0]
    if bad_kind.size:
        record = int(bad_kind[0]) + 1
        raise TraceParseError(path, record, f"kind byte {int(records['kind'][bad_kind[0]])} is not 0 or 1")

    cycles = records["cycle"]
    regressions = np.nonzero(cycles[1:] < cycles[:-1])[0]
    if regressions.size:
        record = int(regressions[0]) + 2
        raise TraceValidationError(record, "cycle regression")

    kinds = (AccessKind.READ, AccessKind.WRITE)
    events = [
        TraceEvent(int(cycle), int(pc), int(address), kinds[int(kind)])
        for cycle, pc, address, kind in records.tolist()
    ]
    return TraceSource(events)


def load_trace(path, format : TraceFormat = TraceFormat.TEXT) -> TraceSource:
    format = TraceFormat(format)
    if not os.path.exists(path):
        raise TraceError(f"{path}: trace file does not exist")

    source = _load_text(path) if format is TraceFormat.TEXT else _load_binary(path)
    logger.info(f"Loaded {len(source)} events from {path}")
    return source


def write_trace(source : Iterable[TraceEvent], path, format : TraceFormat = TraceFormat.TEXT) -> int:
    format = TraceFormat(format)
    events = list(source)

    if format is TraceFormat.TEXT:
        with open(path, 'w') as trace_file:
            for event in events:
                trace_file.write(event.to_line() + "\n")
    else:
        records = np.array(
            [(e.cycle, e.pc, e.address, 0 if e.kind is AccessKind.READ else 1) for e in events],
            dtype=BINARY_RECORD,
        )
        with open(path, 'wb') as trace_file:
            trace_file.write(records.tobytes())

    logger.info(f"Wrote {len(events)} events to {path}")
    return len(events)


# Generators

def gen_strided(pc : int, base : int, stride : int, count : int, start_cycle : int = 0, inter_arrival : int = 1, kind : AccessKind = AccessKind.READ) -> TraceSource:
    if stride == 0:
        raise ConfigurationError("stride", "must be non-zero")
    if count < 1:
        raise ConfigurationError("count", "must be at least 1")
    if inter_arrival < 0:
        raise ConfigurationError("inter_arrival", "must not be negative")

    last = base + (count - 1) * stride
    if not (0 <= base <= U64_MAX and 0 <= last <= U64_MAX):
        raise ConfigurationError("base", "stream leaves the 64-bit address space")

    events = (
        TraceEvent(start_cycle + i * inter_arrival, pc, base + i * stride, AccessKind(kind))
        for i in range(count)
    )
    return TraceSource(events)


@dataclass(frozen=True)
class StreamSpec:
    """One interleaved stream of a gen_mixed workload."""
    pattern : StreamPattern = StreamPattern.STRIDED
    pc : int = 0x400
    base : int = 0
    stride : int = 64
    count : int = 1
    start_cycle : int = 0
    inter_arrival : int = 1
    kind : AccessKind = AccessKind.READ
    write_ratio : float = 0.0
    low : int = 0
    high : int = 0
    passes : int = 1
    pass_gap : int = 0

    @classmethod
    def from_dict(cls, values : dict) -> "StreamSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigurationError(sorted(unknown)[0], "unknown stream field")

        values = dict(values)
        if "pattern" in values:
            values["pattern"] = StreamPattern(values["pattern"])
        if "kind" in values:
            values["kind"] = parse_kind(values["kind"]) if isinstance(values["kind"], str) else AccessKind(values["kind"])
        for name in ("pc", "base", "low", "high"):
            if isinstance(values.get(name), str):
                values[name] = int(values[name], 0)
        return cls(**values)

    def validate(self, index : int):
        where = f"streams[{index}]"
        if self.count < 1:
            raise ConfigurationError(f"{where}.count", "must be at least 1")
        if self.passes < 1:
            raise ConfigurationError(f"{where}.passes", "must be at least 1")
        if self.inter_arrival < 0 or self.pass_gap < 0:
            raise ConfigurationError(f"{where}.inter_arrival", "timing values must not be negative")
        if not 0.0 <= self.write_ratio <= 1.0:
            raise ConfigurationError(f"{where}.write_ratio", "must lie in [0, 1]")
        if self.pattern is StreamPattern.STRIDED:
            if self.stride == 0:
                raise ConfigurationError(f"{where}.stride", "must be non-zero")
            last = self.base + (self.count - 1) * self.stride
            if not (0 <= self.base <= U64_MAX and 0 <= last <= U64_MAX):
                raise ConfigurationError(f"{where}.base", "stream leaves the 64-bit address space")
        elif not 0 <= self.low < self.high <= U64_MAX + 1:
            raise ConfigurationError(f"{where}.low", "random range must satisfy 0 <= low < high")

    def pass_length(self) -> int:
        return self.count * self.inter_arrival + self.pass_gap


def _stream_events(index : int, stream : StreamSpec, rng : np.random.Generator):
    for pass_number in range(stream.passes):
        start = stream.start_cycle + pass_number * stream.pass_length()

        if stream.pattern is StreamPattern.STRIDED:
            addresses = [stream.base + i * stream.stride for i in range(stream.count)]
        else:
            addresses = rng.integers(stream.low, stream.high, size=stream.count, dtype=np.uint64, endpoint=False).tolist()

        if stream.write_ratio > 0.0:
            writes = (rng.random(stream.count) < stream.write_ratio).tolist()
            kinds = [AccessKind.WRITE if w else AccessKind.READ for w in writes]
        else:
            kinds = itertools.repeat(stream.kind)

        for i, (address, kind) in enumerate(zip(addresses, kinds)):
            yield (start + i * stream.inter_arrival, index, int(address), stream.pc, kind)


def gen_mixed(streams : list, seed : int = 0) -> TraceSource:
    if not streams:
        raise ConfigurationError("streams", "at least one stream descriptor is required")

    streams = [s if isinstance(s, StreamSpec) else StreamSpec.from_dict(s) for s in streams]
    for index, stream in enumerate(streams):
        stream.validate(index)

    rng = np.random.default_rng(seed)
    merged = []
    for index, stream in enumerate(streams):
        merged.extend(_stream_events(index, stream, rng))

    # ties break by stream index, then address
    merged.sort(key=lambda item: (item[0], item[1], item[2]))

    return TraceSource(TraceEvent(cycle, pc, address, kind) for cycle, _, address, pc, kind in merged)


def load_workload_catalog(path = WORKLOAD_CATALOG_PATH) -> dict:
    with open(path, 'r') as catalog_file:
        return json.load(catalog_file)


def load_workload(name : str, seed : int = 0, catalog : dict = None) -> TraceSource:
    catalog = catalog if catalog is not None else load_workload_catalog()
    if name not in catalog:
        raise ConfigurationError("workload", f"unknown workload '{name}'")
    return gen_mixed(catalog[name]["streams"], seed)
