"""Summary tables and distributions, rendered as JSON, CSV or Markdown."""

from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .analysis import AnalyzedDevice
from .asn import AsAggregate, aggregate_by_as
from .classifier import FunnelReport, funnel_stats
from .signatures import UNKNOWN_MANUFACTURER
from .util import percent
from .vulns import (
    DeviceVulnReport,
    Exposure,
    Severity,
    Status,
    VulnRecord,
    cve_stats,
    severity_bucket,
    vuln_count_histogram,
)

SCHEMA_VERSION = 1
FORMATS = ("json", "csv", "markdown")
TOP_N = 10
UNKNOWN_PRODUCT = "unknown"
NA = "n/a"


@dataclass(frozen=True)
class SeverityDistribution:
    counts: Mapping[str, int]
    percentages: Mapping[str, float]

    @property
    def total(self) -> int:
        return sum(self.counts.values())


def severity_distribution(reports: Iterable[DeviceVulnReport]) -> SeverityDistribution:
    """Share of finding occurrences per severity (not unique devices)."""
    counts = Counter({s.value: 0 for s in Severity})
    for rep in reports:
        for f in rep.findings:
            counts[f.severity.value] += 1
    total = sum(counts.values())
    pct = {k: percent(n, total, 1) if total else 0.0 for k, n in counts.items()}
    return SeverityDistribution(dict(counts), pct)


@dataclass(frozen=True)
class ExposureSplit:
    devices: int
    vulnerable: int
    not_vulnerable: int
    unknown: int
    remote: int
    local_only: int

    # percentages; remote/local_only are over vulnerable devices and None when there are none
    @property
    def vulnerable_pct(self) -> float | None:
        return percent(self.vulnerable, self.devices)

    @property
    def not_vulnerable_pct(self) -> float | None:
        return percent(self.not_vulnerable, self.devices)

    @property
    def unknown_pct(self) -> float | None:
        return percent(self.unknown, self.devices)

    @property
    def remote_pct(self) -> float | None:
        return percent(self.remote, self.vulnerable)

    @property
    def local_only_pct(self) -> float | None:
        return percent(self.local_only, self.vulnerable)

    def rows(self) -> list[tuple[str, int, float | None]]:
        return [
            ("vulnerable", self.vulnerable, self.vulnerable_pct),
            ("not_vulnerable", self.not_vulnerable, self.not_vulnerable_pct),
            ("unknown", self.unknown, self.unknown_pct),
            ("remote", self.remote, self.remote_pct),
            ("local_only", self.local_only, self.local_only_pct),
        ]


def exposure_split(reports: Iterable[DeviceVulnReport]) -> ExposureSplit:
    status = Counter()
    exposure = Counter()
    n = 0
    for rep in reports:
        n += 1
        status[rep.status] += 1
        exposure[rep.exposure] += 1
    return ExposureSplit(
        n,
        status[Status.VULNERABLE],
        status[Status.NOT_VULNERABLE],
        status[Status.UNKNOWN],
        exposure[Exposure.REMOTE],
        exposure[Exposure.LOCAL_ONLY],
    )


@dataclass(frozen=True)
class TopN:
    rows: tuple[tuple[str, int], ...]
    others: int
    total: int

    def percent(self, count: int, digits: int = 2) -> float | None:
        return percent(count, self.total, digits)


def top_n(counts: Mapping[str, int], n: int) -> TopN:
    """Top ``n`` by count (ties: name ascending) plus the residual as ``others``."""
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    head = tuple(ranked[:n])
    return TopN(head, sum(c for _, c in ranked[n:]), sum(counts.values()))


def manufacturer_counts(devices: Iterable[AnalyzedDevice]) -> Counter[str]:
    """ICS devices per manufacturer; a device naming two manufacturers counts for both."""
    counts: Counter[str] = Counter()
    for d in devices:
        if not d.is_ics:
            continue
        names = {fp.manufacturer for fp in d.fingerprints if fp.manufacturer}
        counts.update(names or {UNKNOWN_MANUFACTURER})
    return counts


def product_counts(devices: Iterable[AnalyzedDevice]) -> Counter[str]:
    counts: Counter[str] = Counter()
    for d in devices:
        if not d.is_ics:
            continue
        names = {fp.product for fp in d.fingerprints if fp.product}
        counts.update(names or {UNKNOWN_PRODUCT})
    return counts


@dataclass(frozen=True)
class CveRow:
    cve_id: str
    manufacturer: str
    vector: str
    score: float
    severity: str
    occurrences: int
    unique_devices: int

    @property
    def year(self) -> int:
        return int(self.cve_id.split("-")[1])


def cve_table(reports: Sequence[DeviceVulnReport], db: Sequence[VulnRecord] = ()) -> list[CveRow]:
    """Per-CVE rows ordered by occurrences, ties kept in DB order (then by id)."""
    stats = cve_stats(reports)
    order = {r.cve_id: i for i, r in enumerate(db)}
    meta = {r.cve_id: (r.manufacturer, r.vector.value, r.cvss_score) for r in db}
    for rep in reports:
        for f in rep.findings:
            meta.setdefault(f.cve_id, (f.manufacturer, f.vector.value, f.cvss_score))
    rows = []
    for cve, st in stats.items():
        man, vec, score = meta[cve]
        rows.append(CveRow(cve, man, vec, score, severity_bucket(score).value, st.occurrences, st.unique_devices))
    rows.sort(key=lambda r: (-r.occurrences, order.get(r.cve_id, len(order)), r.cve_id))
    return rows


@dataclass(frozen=True)
class AnalysisBundle:
    funnel: FunnelReport = field(default_factory=FunnelReport)
    devices: tuple[AnalyzedDevice, ...] = ()
    vuln_reports: tuple[DeviceVulnReport, ...] = ()
    as_aggregates: tuple[AsAggregate, ...] = ()
    vuln_db: tuple[VulnRecord, ...] = ()

    def __post_init__(self):
        split = exposure_split(self.vuln_reports)
        if split.vulnerable + split.not_vulnerable + split.unknown != self.funnel.ics_devices:
            raise ValueError("vulnerability reports do not cover exactly the ICS devices")


def build_bundle(
    devices: Sequence[AnalyzedDevice], db: Sequence[VulnRecord] = (), as_table=None, table_only: bool = False
) -> AnalysisBundle:
    devices = tuple(devices)
    return AnalysisBundle(
        funnel=funnel_stats(d.classified for d in devices),
        devices=devices,
        vuln_reports=tuple(d.vuln_report for d in devices if d.is_ics and d.vuln_report is not None),
        as_aggregates=tuple(aggregate_by_as(devices, as_table, table_only)),
        vuln_db=tuple(db),
    )


def _top_rows(top: TopN) -> list[dict]:
    rows = [{"name": n, "count": c, "percent": top.percent(c)} for n, c in top.rows]
    rows.append({"name": "others", "count": top.others, "percent": top.percent(top.others)})
    return rows


def _device_row(d: AnalyzedDevice) -> dict:
    rep = d.vuln_report
    return {
        "ip": d.ip,
        "status": rep.status.value if rep else None,
        "exposure": rep.exposure.value if rep else None,
        "cves": sorted(rep.distinct_cves) if rep else [],
        "services": [
            {
                "port": s.port,
                "transport": s.transport,
                "label": c.label.value,
                "manufacturer": fp.manufacturer,
                "product": fp.product,
                "version": fp.version,
            }
            for s, c, fp in zip(d.device.services, d.classified.service_classes, d.fingerprints)
        ],
    }


def report_document(bundle: AnalysisBundle, n: int = TOP_N) -> dict:
    """The canonical JSON-able report; every other format is derived from it."""
    f = bundle.funnel
    sev = severity_distribution(bundle.vuln_reports)
    split = exposure_split(bundle.vuln_reports)
    return {
        "schema_version": SCHEMA_VERSION,
        "funnel": {
            "total_devices": f.total_devices,
            "total_services": f.total_services,
            "devices_with_ics_ports": f.devices_with_ics_ports,
            "services_on_ics_port_devices": f.services_on_ics_port_devices,
            "ics_devices": f.ics_devices,
            "ics_services": f.ics_services,
            "average_ics_services": f.average_ics_services,
        },
        "exposure": {
            "devices": split.devices,
            **{name: {"count": c, "percent": p} for name, c, p in split.rows()},
        },
        "severity": {
            s.value: {"count": sev.counts[s.value], "percent": sev.percentages[s.value]} for s in Severity
        },
        "vulnerabilities": [
            {
                "cve": r.cve_id,
                "manufacturer": r.manufacturer,
                "type": r.vector,
                "score": r.score,
                "severity": r.severity,
                "occurrences": r.occurrences,
                "unique_devices": r.unique_devices,
                "year": r.year,
            }
            for r in cve_table(bundle.vuln_reports, bundle.vuln_db)
        ],
        "vuln_histogram": [
            {"vulnerabilities": k, "devices": v} for k, v in vuln_count_histogram(bundle.vuln_reports).items()
        ],
        "manufacturers": _top_rows(top_n(manufacturer_counts(bundle.devices), n)),
        "products": _top_rows(top_n(product_counts(bundle.devices), n)),
        "ases": [
            {
                "asn": a.label,
                "name": a.name,
                "devices": a.device_count,
                "vulnerable_devices": a.vulnerable_device_count,
                "percent": a.percentage,
            }
            for a in bundle.as_aggregates
        ],
        "devices": [_device_row(d) for d in bundle.devices if d.is_ics],
    }


def dumps_json(doc) -> bytes:
    return (json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n").encode("utf-8")


def _fmt(value) -> str:
    if value is None:
        return NA
    if isinstance(value, float):
        return f"{value:g}" if value != int(value) else f"{value:.1f}"
    return str(value)


def _pct(value: float | None, digits: int) -> str:
    return NA if value is None else f"{value:.{digits}f}%"


def _tables(doc: dict) -> dict[str, tuple[list[str], list[list]]]:
    """Table name -> (header, rows), shared by the CSV and Markdown renderers."""
    fun = doc["funnel"]
    t: dict[str, tuple[list[str], list[list]]] = {}
    t["funnel"] = (["metric", "value"], [[k, fun[k]] for k in fun])
    t["exposure"] = (
        ["category", "devices", "percent"],
        [[k, v["count"], _pct(v["percent"], 1)] for k, v in doc["exposure"].items() if k != "devices"],
    )
    t["severity"] = (
        ["severity", "occurrences", "percent"],
        [[k, doc["severity"][k]["count"], _pct(doc["severity"][k]["percent"], 1)] for k in ("high", "medium", "low")],
    )
    t["vulnerabilities"] = (
        ["Vulnerability", "Manufacturer", "Type", "Score", "Severity", "Occurrences", "Unique Devices"],
        [
            [r["cve"], r["manufacturer"], r["type"], f"{r['score']:.1f}", r["severity"], r["occurrences"], r["unique_devices"]]
            for r in doc["vulnerabilities"]
        ],
    )
    t["vuln_histogram"] = (
        ["vulnerabilities", "devices"],
        [[r["vulnerabilities"], r["devices"]] for r in doc["vuln_histogram"]],
    )
    for key, label in (("manufacturers", "Manufacturer"), ("products", "Product")):
        t[key] = (
            [label, "# Devices", "Percentage"],
            [[r["name"], r["count"], _pct(r["percent"], 2)] for r in doc[key]],
        )
    t["ases"] = (
        ["AS name", "AS number", "count", "vulnerable", "percent"],
        [[a["name"], a["asn"], a["devices"], a["vulnerable_devices"], _pct(a["percent"], 2)] for a in doc["ases"]],
    )
    return t


def _render_csv(doc: dict) -> dict[str, bytes]:
    out = {}
    for name, (header, rows) in _tables(doc).items():
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows([[_fmt(c) if not isinstance(c, str) else c for c in r] for r in rows])
        out[f"tables/{name}.csv"] = buf.getvalue().encode("utf-8")
    return out


def _md_table(header: list[str], rows: list[list]) -> str:
    def cell(c) -> str:
        return (_fmt(c) if not isinstance(c, str) else c).replace("|", "\\|")

    lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    lines += ["| " + " | ".join(cell(c) for c in r) + " |" for r in rows]
    return "\n".join(lines)


_MD_SECTIONS = (
    ("funnel", "Discovery funnel"),
    ("exposure", "Vulnerability status and exposure"),
    ("severity", "Severity distribution"),
    ("vulnerabilities", "Vulnerabilities found"),
    ("vuln_histogram", "Vulnerabilities per device"),
    ("manufacturers", "Top manufacturers"),
    ("products", "Top products"),
    ("ases", "Autonomous Systems"),
)


def _render_markdown(doc: dict) -> bytes:
    tables = _tables(doc)
    parts = ["# ICS/SCADA exposure report", ""]
    for key, title in _MD_SECTIONS:
        parts += [f"## {title}", "", _md_table(*tables[key]), ""]
    return "\n".join(parts).encode("utf-8")


def render(bundle: AnalysisBundle, fmt: str) -> dict[str, bytes]:
    """Render to ``{relative path: bytes}``; output is deterministic per bundle."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}; expected one of {', '.join(FORMATS)}")
    doc = report_document(bundle)
    if fmt == "json":
        return {"report.json": dumps_json(doc)}
    if fmt == "csv":
        return _render_csv(doc)
    return {"report.md": _render_markdown(doc)}
