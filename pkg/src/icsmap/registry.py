"""ICS/SCADA protocol registry: default ports per protocol and engine coverage."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from types import MappingProxyType
from typing import Mapping

from .errors import NotFoundError, ParseError, ValidationError

TRANSPORTS = ("TCP", "UDP", "either")
ENGINES = ("shodan", "censys")
HEADER = ["name", "ports", "transport", *ENGINES]


@dataclass(frozen=True)
class ProtocolEntry:
    name: str
    ports: frozenset[tuple[int, str]]  # (port, transport)
    engine_coverage: Mapping[str, bool] = field(default_factory=dict)

    def __post_init__(self):
        if not self.ports:
            raise ValidationError(f"protocol {self.name!r} has no ports")
        for port, transport in self.ports:
            _check_port(port)
            if transport not in TRANSPORTS:
                raise ValidationError(f"protocol {self.name!r}: bad transport {transport!r}")

    @property
    def port_numbers(self) -> frozenset[int]:
        return frozenset(p for p, _ in self.ports)


@dataclass(frozen=True)
class Registry:
    entries: tuple[ProtocolEntry, ...] = ()
    port_index: Mapping[int, frozenset[str]] = field(init=False, repr=False, compare=False)
    _by_name: Mapping[str, ProtocolEntry] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        by_name: dict[str, ProtocolEntry] = {}
        index: dict[int, set[str]] = {}
        for entry in self.entries:
            if entry.name in by_name:
                raise ValidationError(f"duplicate protocol name {entry.name!r}")
            by_name[entry.name] = entry
            for port in entry.port_numbers:
                index.setdefault(port, set()).add(entry.name)
        object.__setattr__(self, "_by_name", MappingProxyType(by_name))
        object.__setattr__(
            self,
            "port_index",
            MappingProxyType({p: frozenset(names) for p, names in sorted(index.items())}),
        )

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def entry(self, name: str) -> ProtocolEntry:
        try:
            return self._by_name[name.strip()]
        except KeyError:
            raise NotFoundError(f"unknown protocol {name!r}") from None


def _check_port(port) -> None:
    if isinstance(port, bool) or not isinstance(port, int) or not 1 <= port <= 65535:
        raise ValueError(f"port out of range: {port!r}")


def _parse_bool(value: str, source: str, line: int) -> bool:
    v = value.strip().lower()
    if v == "yes":
        return True
    if v == "no":
        return False
    raise ParseError(f"expected yes/no, got {value!r}", source, line)


def parse_registry(text: str, source: str = "<registry>") -> Registry:
    """Parse registry CSV text. An empty document yields an empty registry."""
    if not text.strip():
        return Registry()
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if [h.strip() for h in header] != HEADER:
        raise ParseError(f"expected header {','.join(HEADER)}", source, 1)
    entries = []
    for row in reader:
        line = reader.line_num
        if not row or not any(c.strip() for c in row):
            continue
        if len(row) != len(HEADER):
            raise ParseError(f"expected {len(HEADER)} columns, got {len(row)}", source, line)
        name, ports_s, transport_s, *coverage = (c.strip() for c in row)
        if not name:
            raise ParseError("empty protocol name", source, line)
        try:
            ports = [int(p) for p in ports_s.split(";")]
        except ValueError:
            raise ParseError(f"bad port list {ports_s!r}", source, line) from None
        # one transport for all ports, or one per port
        transports = [t.strip() for t in transport_s.split(";")]
        if len(transports) == 1:
            transports = transports * len(ports)
        if len(transports) != len(ports):
            raise ParseError("transport list does not match port list", source, line)
        try:
            pairs = frozenset(zip(ports, transports))
            entry = ProtocolEntry(
                name,
                pairs,
                MappingProxyType(
                    {e: _parse_bool(v, source, line) for e, v in zip(ENGINES, coverage)}
                ),
            )
        except ParseError:
            raise
        except ValueError as exc:
            raise ParseError(str(exc), source, line) from None
        entries.append(entry)
    return Registry(tuple(entries))


def load_registry(source: str | Path | None = None) -> Registry:
    """Load a registry file; ``None`` loads the bundled 39-protocol table."""
    if source is None:
        text = resources.files("icsmap.data").joinpath("protocols.csv").read_text("utf-8")
        return parse_registry(text, "protocols.csv")
    path = Path(source)
    return parse_registry(path.read_text("utf-8"), str(path))


def dump_registry(registry: Registry) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    for e in registry.entries:
        pairs = sorted(e.ports)
        transports = {t for _, t in pairs}
        w.writerow(
            [
                e.name,
                ";".join(str(p) for p, _ in pairs),
                transports.pop() if len(transports) == 1 else ";".join(t for _, t in pairs),
                *("yes" if e.engine_coverage.get(k) else "no" for k in ENGINES),
            ]
        )
    return buf.getvalue()


def protocols_for_port(registry: Registry, port: int, transport: str | None = None) -> frozenset[str]:
    """Protocols whose default ports include ``port``.

    ``transport`` narrows the match; entries recorded as ``either`` match any
    transport, and omitting it matches everything.
    """
    _check_port(port)
    names = registry.port_index.get(port, frozenset())
    if transport is None:
        return names
    transport = transport.upper()
    return frozenset(
        n
        for n in names
        if any(p == port and t in ("either", transport) for p, t in registry.entry(n).ports)
    )


def ports_for_protocol(registry: Registry, name: str) -> frozenset[int]:
    return registry.entry(name).port_numbers


def is_ics_port(registry: Registry, port: int, transport: str | None = None) -> bool:
    return bool(protocols_for_port(registry, port, transport))


def engine_coverage(registry: Registry, name: str) -> dict[str, bool]:
    return dict(registry.entry(name).engine_coverage)


def shared_ports(registry: Registry) -> dict[int, frozenset[str]]:
    """Ports that are the default for two or more protocols."""
    return {p: names for p, names in registry.port_index.items() if len(names) > 1}


def multi_port_protocols(registry: Registry) -> dict[str, frozenset[int]]:
    return {e.name: e.port_numbers for e in registry.entries if len(e.port_numbers) > 1}


def ics_ports(registry: Registry) -> frozenset[int]:
    return frozenset(registry.port_index)
