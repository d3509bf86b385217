"""IP -> Autonomous System attribution against an offline prefix table."""

from __future__ import annotations

import csv
import io
import ipaddress
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .analysis import AnalyzedDevice
from .errors import ParseError, ValidationError
from .util import percent
from .vulns import Status

UNMAPPED = "unmapped"
UNDEFINED = "undefined"


@dataclass(frozen=True)
class AsEntry:
    prefix: ipaddress.IPv4Network
    asn: int
    name: str = UNDEFINED


class AsTable:
    """Longest-prefix-match index: one dict per mask length."""

    def __init__(self, entries: Iterable[AsEntry] = ()):
        self.entries = tuple(entries)
        self._by_len: dict[int, dict[int, AsEntry]] = {}
        for e in self.entries:
            # later entries for the same prefix replace earlier ones
            self._by_len.setdefault(e.prefix.prefixlen, {})[int(e.prefix.network_address)] = e
        self._lengths = sorted(self._by_len, reverse=True)

    def __len__(self) -> int:
        return len(self.entries)

    def lookup(self, ip) -> AsEntry | None:
        addr = int(ipaddress.IPv4Address(ip))
        for length in self._lengths:
            mask = (0xFFFFFFFF << (32 - length)) & 0xFFFFFFFF
            hit = self._by_len[length].get(addr & mask)
            if hit is not None:
                return hit
        return None


def asn_lookup(ip, table) -> AsEntry | None:
    """Most specific entry covering ``ip``, or ``None``.

    ``table`` may be an :class:`AsTable` or any iterable of :class:`AsEntry`.
    """
    if not isinstance(table, AsTable):
        table = AsTable(table)
    return table.lookup(ip)


def _parse_asn(value: str) -> int:
    v = value.strip()
    if v[:2].upper() == "AS":
        v = v[2:]
    n = int(v)
    if n < 0:
        raise ValueError
    return n


def parse_as_table(text: str, source: str = "<astable>") -> AsTable:
    reader = csv.reader(io.StringIO(text))
    entries = []
    seen: dict[ipaddress.IPv4Network, int] = {}
    for row in reader:
        line = reader.line_num
        if not row or not any(c.strip() for c in row):
            continue
        if line == 1 and [c.strip() for c in row] == ["prefix", "asn", "name"]:
            continue
        if len(row) != 3:
            raise ParseError(f"expected 3 columns, got {len(row)}", source, line)
        try:
            prefix = ipaddress.IPv4Network(row[0].strip(), strict=True)
        except ValueError as exc:
            raise ParseError(f"bad prefix {row[0]!r}: {exc}", source, line) from None
        try:
            asn = _parse_asn(row[1])
        except ValueError:
            raise ParseError(f"bad ASN {row[1]!r}", source, line) from None
        if prefix in seen and seen[prefix] != asn:
            raise ValidationError(f"{source}:{line}: prefix {prefix} already mapped to AS{seen[prefix]}")
        seen[prefix] = asn
        entries.append(AsEntry(prefix, asn, row[2].strip() or UNDEFINED))
    return AsTable(entries)


def load_as_table(source) -> AsTable:
    path = Path(source)
    return parse_as_table(path.read_text("utf-8"), str(path))


@dataclass(frozen=True)
class AsAggregate:
    asn: int | None  # None for the unmapped bucket
    name: str
    device_count: int
    vulnerable_device_count: int
    percentage: float | None  # over AS-attributed ICS devices; None for unmapped

    @property
    def label(self) -> str:
        return UNMAPPED if self.asn is None else f"AS{self.asn}"


def device_as(dev: AnalyzedDevice, table: AsTable | None, table_only: bool = False) -> tuple[int, str] | None:
    """Inline export enrichment first (unless ``table_only``), then the prefix table."""
    if not table_only:
        for s in dev.device.services:
            if s.asn is not None:
                return s.asn, s.as_name or UNDEFINED
    if table is not None:
        hit = table.lookup(dev.ip)
        if hit is not None:
            return hit.asn, hit.name
    return None


def aggregate_by_as(
    devices: Iterable[AnalyzedDevice], table=None, table_only: bool = False, digits: int = 2
) -> list[AsAggregate]:
    """ICS devices per AS, ranked by count (ties: ascending ASN); unmapped last."""
    if table is not None and not isinstance(table, AsTable):
        table = AsTable(table)
    counts: Counter[int] = Counter()
    vulnerable: Counter[int] = Counter()
    names: dict[int, str] = {}
    unmapped = unmapped_vuln = 0
    for dev in devices:
        if not dev.is_ics:
            continue
        is_vuln = dev.vuln_report is not None and dev.vuln_report.status is Status.VULNERABLE
        hit = device_as(dev, table, table_only)
        if hit is None:
            unmapped += 1
            unmapped_vuln += is_vuln
            continue
        asn, name = hit
        counts[asn] += 1
        vulnerable[asn] += is_vuln
        # deterministic name choice when devices disagree
        names[asn] = min(names.get(asn, name), name)
    mapped = sum(counts.values())
    out = [
        AsAggregate(asn, names[asn], n, vulnerable[asn], percent(n, mapped, digits))
        for asn, n in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    ]
    if unmapped:
        out.append(AsAggregate(None, UNMAPPED, unmapped, unmapped_vuln, None))
    return out
