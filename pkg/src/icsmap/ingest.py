"""Scan-export ingest: NDJSON parsing, dedup, country filter, device grouping.

Also holds a small client that pulls NDJSON pages from a scan-data HTTP API.
"""

from __future__ import annotations

import ipaddress
import json
import logging
import os
import re
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable, Iterable, Iterator, NamedTuple

import requests

from .errors import AuthError, FetchError
from .registry import Registry, is_ics_port

log = logging.getLogger(__name__)

COUNTRY_RE = re.compile(r"^[A-Z]{2}$")
_FRACTION = re.compile(r"^(.{19})\.(\d+)(.*)$")
REQUIRED_KEYS = ("ip", "port", "transport", "ts", "banner", "country")
SOURCE_URL_ENV = "ICSMAP_SOURCE_URL"
SOURCE_KEY_ENV = "ICSMAP_SOURCE_KEY"


@dataclass(frozen=True)
class ScanRecord:
    ip: str
    port: int
    transport: str  # "TCP" | "UDP"
    timestamp: datetime
    banner: str
    country: str
    asn: int | None = None
    as_name: str | None = None

    @property
    def key(self) -> tuple[str, int, str]:
        return (self.ip, self.port, self.transport)

    @property
    def sort_key(self) -> tuple[int, int, str]:
        return (int(ipaddress.IPv4Address(self.ip)), self.port, self.transport)

    def to_json(self) -> dict:
        d = {
            "ip": self.ip,
            "port": self.port,
            "transport": self.transport.lower(),
            "ts": format_ts(self.timestamp),
            "banner": self.banner,
            "country": self.country,
        }
        if self.asn is not None:
            d["asn"] = self.asn
        if self.as_name is not None:
            d["as_name"] = self.as_name
        return d


@dataclass(frozen=True)
class Device:
    ip: str
    services: tuple[ScanRecord, ...]
    has_ics_port: bool = False

    def __post_init__(self):
        if not self.services:
            raise ValueError(f"device {self.ip} has no services")
        keys = set()
        for s in self.services:
            if s.ip != self.ip:
                raise ValueError(f"service {s.key} does not belong to device {self.ip}")
            if (s.port, s.transport) in keys:
                raise ValueError(f"device {self.ip}: duplicate service {s.port}/{s.transport}")
            keys.add((s.port, s.transport))


class Reject(NamedTuple):
    line: int
    reason: str
    raw: str


class ParseResult(NamedTuple):
    records: list[ScanRecord]
    rejects: list[Reject]


class RecordError(ValueError):
    """One NDJSON line failed validation; the message is a stable reason code."""


def format_ts(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


def parse_ts(value) -> datetime:
    if not isinstance(value, str):
        raise RecordError("invalid timestamp")
    s = value.strip()
    if s[-1:] in ("Z", "z"):
        s = s[:-1] + "+00:00"
    # RFC 3339 allows a space or lowercase t between date and time
    s = s[:10] + "T" + s[11:] if len(s) > 10 and s[10] in " t" else s
    # fromisoformat on 3.10 only takes 3 or 6 fraction digits
    m = _FRACTION.match(s)
    if m:
        s = m.group(1) + "." + m.group(2)[:6].ljust(6, "0") + m.group(3)
    try:
        ts = datetime.fromisoformat(s)
    except ValueError:
        raise RecordError("invalid timestamp") from None
    if ts.tzinfo is None:
        raise RecordError("timestamp lacks offset")
    return ts.astimezone(timezone.utc)


def record_from_json(obj) -> ScanRecord:
    if not isinstance(obj, dict):
        raise RecordError("not an object")
    for k in REQUIRED_KEYS:
        if k not in obj:
            raise RecordError(f"missing field: {k}")
    ip = obj["ip"]
    if not isinstance(ip, str):
        raise RecordError("invalid ip")
    try:
        addr = ipaddress.ip_address(ip)
    except ValueError:
        raise RecordError("invalid ip") from None
    if addr.version == 6:
        raise RecordError("ipv6 not supported")
    port = obj["port"]
    if isinstance(port, bool) or not isinstance(port, int):
        raise RecordError("invalid port")
    if not 1 <= port <= 65535:
        raise RecordError("port out of range")
    transport = obj["transport"]
    if not isinstance(transport, str) or transport.lower() not in ("tcp", "udp"):
        raise RecordError("invalid transport")
    banner = obj["banner"]
    if not isinstance(banner, str):
        raise RecordError("invalid banner")
    country = obj["country"]
    if not isinstance(country, str) or not COUNTRY_RE.match(country):
        raise RecordError("invalid country")
    asn = obj.get("asn")
    if asn is not None and (isinstance(asn, bool) or not isinstance(asn, int) or asn < 0):
        raise RecordError("invalid asn")
    as_name = obj.get("as_name")
    if as_name is not None and not isinstance(as_name, str):
        raise RecordError("invalid as_name")
    return ScanRecord(
        ip=str(addr),
        port=port,
        transport=transport.upper(),
        timestamp=parse_ts(obj["ts"]),
        banner=banner,
        country=country,
        asn=asn,
        as_name=as_name,
    )


def parse_records(stream: Iterable) -> ParseResult:
    """Parse an NDJSON stream of bytes or str lines.

    Bad lines never abort the stream; they are returned as rejects together
    with their 1-based line number. Blank lines are skipped.
    """
    records: list[ScanRecord] = []
    rejects: list[Reject] = []
    for lineno, line in enumerate(stream, 1):
        if isinstance(line, bytes):
            try:
                line = line.decode("utf-8")
            except UnicodeDecodeError:
                rejects.append(Reject(lineno, "invalid utf-8", line.decode("utf-8", "replace")))
                continue
        text = line.rstrip("\r\n")
        if not text.strip():
            continue
        try:
            obj = json.loads(text)
        except json.JSONDecodeError:
            rejects.append(Reject(lineno, "invalid json", text))
            continue
        try:
            records.append(record_from_json(obj))
        except RecordError as exc:
            rejects.append(Reject(lineno, str(exc), text))
    return ParseResult(records, rejects)


def dedup(records: Iterable[ScanRecord]) -> list[ScanRecord]:
    """Keep the newest record per (ip, port, transport), sorted by (ip, port).

    At equal timestamps the record that came later in the input wins.
    """
    latest: dict[tuple[str, int, str], ScanRecord] = {}
    for r in records:
        cur = latest.get(r.key)
        if cur is None or r.timestamp >= cur.timestamp:
            latest[r.key] = r
    return sorted(latest.values(), key=lambda r: r.sort_key)


def check_country(code: str) -> str:
    if not isinstance(code, str) or not COUNTRY_RE.match(code):
        raise ValueError(f"country code must be two uppercase letters, got {code!r}")
    return code


def filter_country(records: Iterable[ScanRecord], code: str) -> list[ScanRecord]:
    check_country(code)
    return [r for r in records if r.country == code]


def group_devices(records: Iterable[ScanRecord], registry: Registry) -> list[Device]:
    """One Device per IP, ordered by address. Records must already be deduplicated."""
    by_ip: dict[str, list[ScanRecord]] = {}
    for r in records:
        by_ip.setdefault(r.ip, []).append(r)
    devices = []
    for ip in sorted(by_ip, key=lambda a: int(ipaddress.IPv4Address(a))):
        services = tuple(sorted(by_ip[ip], key=lambda r: r.sort_key))
        ics = any(is_ics_port(registry, s.port) for s in services)
        devices.append(Device(ip, services, ics))
    return devices


@dataclass
class ClientConfig:
    base_url: str
    api_key: str = ""
    page_size: int = 100
    rate_limit: float = 1.0  # requests per second
    max_retries: int = 3
    backoff: float = 0.5  # first retry delay, doubled each attempt
    max_backoff: float = 30.0
    timeout: float = 30.0
    params: dict = field(default_factory=dict)

    @classmethod
    def from_env(cls, **overrides) -> "ClientConfig":
        url = os.environ.get(SOURCE_URL_ENV)
        if not url:
            raise ValueError(f"{SOURCE_URL_ENV} is not set")
        return cls(base_url=url, api_key=os.environ.get(SOURCE_KEY_ENV, ""), **overrides)


def fetch_pages(
    config: ClientConfig,
    session: requests.Session | None = None,
    sleep: Callable[[float], None] = time.sleep,
    clock: Callable[[], float] = time.monotonic,
) -> Iterator[str]:
    """Yield raw NDJSON lines page by page until the source returns an empty page.

    Requests are ``GET base_url?page=N&size=M`` with a bearer token, issued
    sequentially at no more than ``rate_limit`` per second. 401/403 fail
    immediately; other failures are retried with exponential backoff.
    """
    if config.page_size < 1:
        raise ValueError("page_size must be >= 1")
    if config.rate_limit <= 0:
        raise ValueError("rate_limit must be positive")
    session = session or requests.Session()
    headers = {"Accept": "application/x-ndjson"}
    if config.api_key:
        headers["Authorization"] = f"Bearer {config.api_key}"
    interval = 1.0 / config.rate_limit
    last: float | None = None
    page = 1
    while True:
        params = {**config.params, "page": page, "size": config.page_size}
        attempt = 0
        while True:
            if last is not None:
                wait = interval - (clock() - last)
                if wait > 0:
                    sleep(wait)
            last = clock()
            try:
                resp = session.get(config.base_url, params=params, headers=headers, timeout=config.timeout)
            except requests.RequestException as exc:
                error = f"request failed: {exc}"
            else:
                if resp.status_code in (401, 403):
                    raise AuthError(f"source rejected credentials (HTTP {resp.status_code})")
                if resp.ok:
                    break
                error = f"HTTP {resp.status_code}"
            if attempt >= config.max_retries:
                raise FetchError(f"page {page}: {error} after {attempt + 1} attempts")
            delay = min(config.backoff * 2**attempt, config.max_backoff)
            log.warning("page %d: %s, retrying in %.2fs", page, error, delay)
            sleep(delay)
            attempt += 1
        # split on LF only: raw U+2028 is legal inside JSON strings
        lines = [ln.rstrip("\r") for ln in resp.text.split("\n") if ln.strip()]
        if not lines:
            return
        yield from lines
        page += 1
