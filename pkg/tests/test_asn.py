from __future__ import annotations

import ipaddress

import pytest

from builders import nth_ip, read_csv, rec
from icsmap.analysis import AnalyzedDevice
from icsmap.asn import AsEntry, AsTable, aggregate_by_as, asn_lookup, load_as_table, parse_as_table
from icsmap.classifier import ClassifiedDevice, Label
from icsmap.errors import ParseError, ValidationError
from icsmap.ingest import Device
from icsmap.vulns import DeviceVulnReport, load_vuln_db
from builders import finding


def net(s):
    return ipaddress.IPv4Network(s)


def test_lookup_examples():
    table = [AsEntry(net("130.89.0.0/16"), 1133, "UTWENTE")]
    hit = asn_lookup("130.89.14.205", table)
    assert (hit.asn, hit.name) == (1133, "UTWENTE")
    both = [AsEntry(net("10.0.0.0/8"), 1), AsEntry(net("10.1.0.0/16"), 2)]
    assert asn_lookup("10.1.2.3", both).asn == 2
    assert asn_lookup("10.2.2.3", both).asn == 1
    assert asn_lookup("192.0.2.1", both) is None


def test_zero_and_host_prefixes():
    t = AsTable([AsEntry(net("0.0.0.0/0"), 1), AsEntry(net("8.8.8.8/32"), 2)])
    assert t.lookup("8.8.8.8").asn == 2 and t.lookup("8.8.8.9").asn == 1


def test_parse_table():
    t = parse_as_table("prefix,asn,name\n130.89.0.0/16,AS1133,UTWENTE\n10.0.0.0/8,9143,\n")
    assert len(t) == 2 and t.lookup("10.9.9.9").name == "undefined"
    with pytest.raises(ParseError):
        parse_as_table("10.0.0.1/8,1,x\n")
    with pytest.raises(ParseError):
        parse_as_table("10.0.0.0/8,ASx,x\n")
    with pytest.raises(ValidationError):
        parse_as_table("10.0.0.0/8,1,x\n10.0.0.0/8,2,y\n")


def test_load_missing(tmp_path):
    with pytest.raises(OSError):
        load_as_table(tmp_path / "none.csv")


def _dev(ip, asn=None, vulnerable=False, label=Label.ICS):
    d = Device(ip, (rec(ip, 502, "PLC", asn=asn),), True)
    rep = None
    if label is Label.ICS:
        fs = [finding(load_vuln_db()[0], ip)] if vulnerable else []
        rep = DeviceVulnReport.build(ip, fs)
    return AnalyzedDevice(ClassifiedDevice(d, label), (), rep)


def test_aggregate_ranking_and_ties():
    devs = [_dev(nth_ip(0), 20), _dev(nth_ip(1), 10), _dev(nth_ip(2), 30), _dev(nth_ip(3), 30, True)]
    aggs = aggregate_by_as(devs)
    assert [(a.asn, a.device_count, a.vulnerable_device_count) for a in aggs] == [(30, 2, 1), (10, 1, 0), (20, 1, 0)]
    assert [a.percentage for a in aggs] == [50.0, 25.0, 25.0]
    assert aggregate_by_as([]) == []


def test_unmapped_bucket_and_non_ics_ignored():
    devs = [_dev(nth_ip(0), 1), _dev(nth_ip(1)), _dev(nth_ip(2), 1, label=Label.NON_ICS)]
    aggs = aggregate_by_as(devs)
    assert [(a.label, a.device_count, a.percentage) for a in aggs] == [("AS1", 1, 100.0), ("unmapped", 1, None)]


def test_inline_precedence_and_table_only():
    table = AsTable([AsEntry(net("10.0.0.0/8"), 99, "TABLE")])
    devs = [_dev(nth_ip(0), 1)]
    assert aggregate_by_as(devs, table)[0].asn == 1
    assert aggregate_by_as(devs, table, table_only=True)[0].asn == 99


def test_as_reference_shape():
    rows = read_csv("as_counts.csv")
    devs = []
    table = []
    for i, row in enumerate(rows):
        asn = int(row["asn"].removeprefix("AS"))
        table.append(AsEntry(net(f"{i + 1}.0.0.0/8"), asn, row["as_name"]))
        devs += [_dev(f"{i + 1}.0.{k // 250}.{k % 250 + 1}") for k in range(int(row["count"]))]
    aggs = aggregate_by_as(devs, table)
    top = aggs[0]
    assert (top.label, top.name, top.device_count, top.percentage) == ("AS1136", "KPN", 160, 16.18)
    assert aggs[1].name == "undefined"
    assert sum(a.device_count for a in aggs) == 989
    assert abs(sum(a.percentage for a in aggs) - 100) <= 0.5
