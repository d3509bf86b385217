from __future__ import annotations

import csv
import io
import json

import pytest

from builders import finding, nth_ip, reports_bundle, cve_reports, cve_rows
from icsmap.report import (
    AnalysisBundle,
    exposure_split,
    render,
    severity_distribution,
    top_n,
)
from icsmap.classifier import FunnelReport
from icsmap.vulns import DeviceVulnReport, load_vuln_db

DB = load_vuln_db()
BY_ID = {r.cve_id: r for r in DB}


def test_severity_distribution_reference_counts():
    d = severity_distribution(cve_reports())
    assert dict(d.counts) == {"low": 25, "medium": 28, "high": 262}
    assert dict(d.percentages) == {"low": 7.9, "medium": 8.9, "high": 83.2}


def test_severity_distribution_trivial():
    z = severity_distribution([])
    assert dict(z.counts) == {"low": 0, "medium": 0, "high": 0}
    assert set(z.percentages.values()) == {0.0}
    one = severity_distribution([DeviceVulnReport.build("10.0.0.1", [finding(DB[0], "10.0.0.1")])])
    assert dict(one.percentages) == {"low": 0.0, "medium": 0.0, "high": 100.0}


def test_exposure_split_trivial():
    clean = exposure_split([DeviceVulnReport.build(nth_ip(i), []) for i in range(3)])
    assert clean.remote_pct is None and clean.local_only_pct is None
    assert clean.not_vulnerable_pct == 100.0
    one = exposure_split([DeviceVulnReport.build("10.0.0.1", [finding(DB[0], "10.0.0.1")])])
    assert one.remote_pct == 100.0


def test_exposure_na_rendered():
    b = reports_bundle([DeviceVulnReport.build(nth_ip(i), []) for i in range(3)])
    md = render(b, "markdown")["report.md"].decode()
    assert "| remote | 0 | n/a |" in md
    assert json.loads(render(b, "json")["report.json"])["exposure"]["remote"]["percent"] is None


def test_top_n():
    t = top_n({"A": 3, "B": 3}, 1)
    assert t.rows == (("A", 3),) and t.others == 3
    t = top_n({"A": 1, "B": 2}, 10)
    assert t.rows == (("B", 2), ("A", 1)) and t.others == 0
    for bad in (0, -1, 1.5, True):
        with pytest.raises(ValueError):
            top_n({"A": 1}, bad)


def test_bundle_cross_check():
    with pytest.raises(ValueError):
        AnalysisBundle(funnel=FunnelReport(ics_devices=2), vuln_reports=(DeviceVulnReport.build("10.0.0.1", []),))


def test_empty_bundle_renders():
    b = AnalysisBundle()
    doc = json.loads(render(b, "json")["report.json"])
    assert doc["schema_version"] == 1
    assert doc["funnel"]["ics_devices"] == 0 and doc["vulnerabilities"] == []
    assert render(b, "markdown") and render(b, "csv")


def test_unknown_format():
    with pytest.raises(ValueError):
        render(AnalysisBundle(), "xml")


def test_markdown_cve_rows_equal_table():
    md = render(reports_bundle(cve_reports(), DB), "markdown")["report.md"].decode()
    section = md.split("## Vulnerabilities found")[1].split("##")[0].strip().splitlines()
    assert section[0] == "| Vulnerability | Manufacturer | Type | Score | Severity | Occurrences | Unique Devices |"
    got = [[c.strip() for c in line.strip("|").split("|")] for line in section[2:]]
    want = [[r["cve"], r["manufacturer"], r["type"], r["score"], r["severity"], r["occurrences"], r["unique_devices"]]
            for r in cve_rows()]
    assert got == want


def test_csv_tables():
    files = render(reports_bundle(cve_reports(), DB), "csv")
    assert set(files) >= {"tables/vulnerabilities.csv", "tables/severity.csv", "tables/funnel.csv"}
    rows = list(csv.DictReader(io.StringIO(files["tables/vulnerabilities.csv"].decode())))
    assert len(rows) == 37 and rows[0]["Vulnerability"] == "CVE-2015-0987"


def test_json_cve_year_column_and_round_trip():
    out = render(reports_bundle(cve_reports(), DB), "json")["report.json"]
    doc = json.loads(out)
    assert {v["cve"]: v["year"] for v in doc["vulnerabilities"]}["CVE-2012-4701"] == 2012
    from icsmap.report import dumps_json

    assert dumps_json(doc) == out
