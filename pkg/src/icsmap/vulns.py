"""Offline vulnerability matching, CVSS severity buckets and per-device exposure."""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

from .errors import ValidationError
from .fingerprint import Fingerprint
from .ingest import ScanRecord

CVE_RE = re.compile(r"^CVE-(\d{4})-(\d{4,})$")
PREDICATE_KINDS = ("any", "exact", "before", "set")


class Severity(str, Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"

    @property
    def rank(self) -> int:
        return _SEVERITY_ORDER.index(self)


_SEVERITY_ORDER = (Severity.LOW, Severity.MEDIUM, Severity.HIGH)


class Vector(str, Enum):
    REMOTE = "Remote"
    LOCAL = "Local"


class Status(str, Enum):
    VULNERABLE = "Vulnerable"
    NOT_VULNERABLE = "NotVulnerable"
    UNKNOWN = "Unknown"


class Exposure(str, Enum):
    REMOTE = "Remote"
    LOCAL_ONLY = "LocalOnly"
    NONE = "None"


def severity_bucket(score: float) -> Severity:
    """NIST bands: low [0, 4), medium [4, 7), high [7, 10]."""
    if isinstance(score, bool) or not isinstance(score, (int, float)) or not 0.0 <= score <= 10.0:
        raise ValueError(f"CVSS score out of range: {score!r}")
    if score < 4.0:
        return Severity.LOW
    if score < 7.0:
        return Severity.MEDIUM
    return Severity.HIGH


def _version_key(v: str) -> tuple:
    # natural ordering: "FRN 9" < "FRN 21", "3.8.38" < "3.10"
    return tuple((0, int(t)) if t.isdigit() else (1, t.lower()) for t in re.findall(r"\d+|[^\d\W]+", v))


@dataclass(frozen=True)
class VersionPredicate:
    kind: str = "any"
    values: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in PREDICATE_KINDS:
            raise ValueError(f"unknown version predicate {self.kind!r}")
        if self.kind == "any" and self.values:
            raise ValueError("'any' takes no value")
        if self.kind in ("exact", "before") and len(self.values) != 1:
            raise ValueError(f"'{self.kind}' takes exactly one value")
        if self.kind == "set" and not self.values:
            raise ValueError("'set' needs at least one value")

    def accepts(self, version: str | None) -> bool:
        if self.kind == "any":
            return True
        if version is None:
            return False
        if self.kind == "exact":
            return version == self.values[0]
        if self.kind == "set":
            return version in self.values
        return _version_key(version) < _version_key(self.values[0])

    def to_json(self) -> dict:
        if self.kind == "any":
            return {"kind": "any"}
        if self.kind == "set":
            return {"kind": "set", "value": list(self.values)}
        return {"kind": self.kind, "value": self.values[0]}

    @classmethod
    def from_json(cls, obj) -> "VersionPredicate":
        if not isinstance(obj, dict) or "kind" not in obj:
            raise ValueError("version_predicate must be an object with 'kind'")
        kind = obj["kind"]
        value = obj.get("value")
        if kind == "any":
            if value is not None:
                raise ValueError("'any' takes no value")
            return cls()
        if kind == "set":
            if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
                raise ValueError("'set' value must be a list of strings")
            return cls("set", tuple(value))
        if not isinstance(value, str):
            raise ValueError(f"'{kind}' value must be a string")
        return cls(kind, (value,))


@dataclass(frozen=True)
class VulnRecord:
    cve_id: str
    manufacturer: str
    product_match: str
    cvss_score: float
    vector: Vector
    version_predicate: VersionPredicate = field(default_factory=VersionPredicate)

    def __post_init__(self):
        if not CVE_RE.match(self.cve_id):
            raise ValueError(f"bad CVE identifier {self.cve_id!r}")
        s = self.cvss_score
        if isinstance(s, bool) or not isinstance(s, (int, float)) or not 0.0 <= s <= 10.0:
            raise ValueError(f"{self.cve_id}: cvss {s!r} outside [0.0, 10.0]")
        if round(s, 1) != s:
            raise ValueError(f"{self.cve_id}: cvss {s!r} has more than one decimal")
        if not self.product_match:
            raise ValueError(f"{self.cve_id}: empty product_match")

    @property
    def severity(self) -> Severity:
        return severity_bucket(self.cvss_score)

    @property
    def year(self) -> int:
        return int(CVE_RE.match(self.cve_id).group(1))

    def matches(self, fp: Fingerprint) -> bool:
        if fp.manufacturer is None or fp.product is None:
            return False
        return (
            fp.manufacturer.casefold() == self.manufacturer.casefold()
            and self.product_match in fp.product
            and self.version_predicate.accepts(fp.version)
        )

    def to_json(self) -> dict:
        return {
            "cve": self.cve_id,
            "manufacturer": self.manufacturer,
            "product_match": self.product_match,
            "version_predicate": self.version_predicate.to_json(),
            "cvss": self.cvss_score,
            "vector": self.vector.value,
        }


def parse_vuln_db(data, source: str = "<vulndb>") -> list[VulnRecord]:
    if not isinstance(data, list):
        raise ValidationError(f"{source}: top level must be a JSON array")
    records = []
    seen: set[str] = set()
    for i, obj in enumerate(data):
        name = obj.get("cve", f"#{i}") if isinstance(obj, dict) else f"#{i}"
        try:
            if not isinstance(obj, dict):
                raise ValueError("record must be an object")
            for k in ("cve", "manufacturer", "product_match", "cvss", "vector"):
                if k not in obj:
                    raise ValueError(f"missing field {k!r}")
            try:
                vector = Vector(obj["vector"])
            except ValueError:
                raise ValueError(f"vector must be Remote or Local, got {obj['vector']!r}") from None
            rec = VulnRecord(
                cve_id=obj["cve"],
                manufacturer=obj["manufacturer"],
                product_match=obj["product_match"],
                cvss_score=obj["cvss"],
                vector=vector,
                version_predicate=VersionPredicate.from_json(obj.get("version_predicate", {"kind": "any"})),
            )
        except (ValueError, TypeError) as exc:
            raise ValidationError(f"{source}: record {name}: {exc}") from None
        if rec.cve_id in seen:
            raise ValidationError(f"{source}: duplicate record {rec.cve_id}")
        seen.add(rec.cve_id)
        records.append(rec)
    return records


def load_vuln_db(source=None) -> list[VulnRecord]:
    """Load a vulnerability DB; ``None`` loads the bundled 37-CVE reference set."""
    if source is None:
        text = resources.files("icsmap.data").joinpath("table41.json").read_text("utf-8")
        name = "table41.json"
    else:
        text = Path(source).read_text("utf-8")
        name = str(source)
    try:
        data = json.loads(text) if text.strip() else []
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{name}: invalid JSON: {exc}") from None
    return parse_vuln_db(data, name)


def dump_vuln_db(db: Iterable[VulnRecord]) -> str:
    return json.dumps([r.to_json() for r in db], indent=2) + "\n"


@dataclass(frozen=True)
class VulnFinding:
    cve_id: str
    ip: str
    port: int
    transport: str
    severity: Severity
    vector: Vector
    manufacturer: str = ""
    cvss_score: float = 0.0

    @property
    def service(self) -> tuple[str, int, str]:
        return (self.ip, self.port, self.transport)

    @classmethod
    def of(cls, record: VulnRecord, service: ScanRecord) -> "VulnFinding":
        return cls(
            record.cve_id,
            service.ip,
            service.port,
            service.transport,
            record.severity,
            record.vector,
            record.manufacturer,
            record.cvss_score,
        )


def exposure_of(findings: Sequence[VulnFinding]) -> Exposure:
    if not findings:
        return Exposure.NONE
    if any(f.vector is Vector.REMOTE for f in findings):
        return Exposure.REMOTE
    return Exposure.LOCAL_ONLY


@dataclass(frozen=True)
class DeviceVulnReport:
    ip: str
    findings: tuple[VulnFinding, ...]
    status: Status
    exposure: Exposure

    def __post_init__(self):
        if (self.status is Status.VULNERABLE) != bool(self.findings):
            raise ValueError(f"{self.ip}: status {self.status} disagrees with findings")
        if self.exposure is not exposure_of(self.findings):
            raise ValueError(f"{self.ip}: exposure {self.exposure} disagrees with findings")

    @classmethod
    def build(cls, ip: str, findings: Iterable[VulnFinding], all_blank: bool = False) -> "DeviceVulnReport":
        findings = tuple(findings)
        if findings:
            status = Status.VULNERABLE
        elif all_blank:
            status = Status.UNKNOWN
        else:
            status = Status.NOT_VULNERABLE
        return cls(ip, findings, status, exposure_of(findings))

    @property
    def distinct_cves(self) -> frozenset[str]:
        return frozenset(f.cve_id for f in self.findings)


def match_device(
    fingerprints: Sequence[tuple[ScanRecord, Fingerprint]], db: Sequence[VulnRecord]
) -> DeviceVulnReport:
    """Correlate one device's per-service fingerprints with the DB.

    A device whose fingerprints are all blank is ``Unknown``: there was
    nothing to compare.
    """
    if not fingerprints:
        raise ValueError("match_device needs at least one (service, fingerprint) pair")
    ip = fingerprints[0][0].ip
    findings = []
    for service, fp in fingerprints:
        if service.ip != ip:
            raise ValueError("fingerprints span more than one device")
        findings.extend(VulnFinding.of(rec, service) for rec in db if rec.matches(fp))
    return DeviceVulnReport.build(ip, findings, all(fp.blank for _, fp in fingerprints))


class CveStat(NamedTuple):
    occurrences: int
    unique_devices: int


def cve_stats(reports: Iterable[DeviceVulnReport]) -> dict[str, CveStat]:
    occurrences: Counter[str] = Counter()
    devices: dict[str, set[str]] = {}
    for rep in reports:
        for f in rep.findings:
            occurrences[f.cve_id] += 1
            devices.setdefault(f.cve_id, set()).add(rep.ip)
    return {cve: CveStat(n, len(devices[cve])) for cve, n in occurrences.items()}


def vuln_count_histogram(reports: Iterable[DeviceVulnReport]) -> dict[int, int]:
    """Distinct CVEs per vulnerable device -> number of devices."""
    hist = Counter(len(r.distinct_cves) for r in reports if r.status is Status.VULNERABLE)
    return dict(sorted(hist.items()))
