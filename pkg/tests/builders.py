"""Fixture builders shared by the unit, property and acceptance tests."""

from __future__ import annotations

import csv
import ipaddress
from datetime import datetime, timezone
from pathlib import Path

from icsmap.classifier import FunnelReport
from icsmap.ingest import ScanRecord
from icsmap.report import AnalysisBundle
from icsmap.vulns import DeviceVulnReport, VulnFinding, VulnRecord, load_vuln_db

DATA_DIR = Path(__file__).parent / "data"
T0 = datetime(2018, 6, 1, tzinfo=timezone.utc)


def rec(ip="192.0.2.1", port=502, banner="", *, transport="TCP", ts=T0, country="NL", asn=None, as_name=None):
    return ScanRecord(ip, port, transport, ts, banner, country, asn, as_name)


def nth_ip(n: int, base: str = "10.0.0.0") -> str:
    return str(ipaddress.IPv4Address(base) + n)


def read_csv(name: str) -> list[dict]:
    with (DATA_DIR / name).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def cve_rows() -> list[dict]:
    return read_csv("cve_reference.csv")


def finding(record: VulnRecord, ip: str, port: int = 502) -> VulnFinding:
    return VulnFinding.of(record, rec(ip, port))


def cve_reports(db: list[VulnRecord] | None = None) -> list[DeviceVulnReport]:
    """Reports whose per-CVE (occurrences, unique devices) match the reference CSV.

    Each CVE gets its own devices; ``occurrences - unique`` of them expose the
    CVE on a second service.
    """
    db = db or load_vuln_db()
    by_id = {r.cve_id: r for r in db}
    reports = []
    n = 0
    for row in cve_rows():
        record = by_id[row["cve"]]
        occ, uniq = int(row["occurrences"]), int(row["unique_devices"])
        for i in range(uniq):
            ip = nth_ip(n)
            n += 1
            ports = [502, 503] if i < occ - uniq else [502]
            reports.append(DeviceVulnReport.build(ip, [finding(record, ip, p) for p in ports]))
    return reports


def reports_bundle(reports, db=()) -> AnalysisBundle:
    n = len(reports)
    funnel = FunnelReport(n, n, n, n, n, n)
    return AnalysisBundle(funnel=funnel, vuln_reports=tuple(reports), vuln_db=tuple(db))
