"""NDJSON encoding of the stage intermediates so stages compose through files.

``devices.ndjson`` holds grouped devices, ``classified.ndjson`` adds labels
and evidence, ``correlated.ndjson`` adds fingerprints and vuln reports.
Every line is one device, keys sorted, so output is byte-stable.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Iterator

from .analysis import AnalyzedDevice
from .classifier import ClassifiedDevice, Label, ServiceClass
from .errors import ValidationError
from .fingerprint import Fingerprint
from .ingest import Device, RecordError, record_from_json
from .signatures import MatchResult
from .vulns import DeviceVulnReport, Exposure, Severity, Status, Vector, VulnFinding

DEVICES_FILE = "devices.ndjson"
CLASSIFIED_FILE = "classified.ndjson"
CORRELATED_FILE = "correlated.ndjson"


def _line(obj) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":")) + "\n"


def device_to_json(d: Device) -> dict:
    return {"ip": d.ip, "has_ics_port": d.has_ics_port, "services": [s.to_json() for s in d.services]}


def device_from_json(obj) -> Device:
    services = []
    for s in obj["services"]:
        try:
            services.append(record_from_json(s))
        except RecordError as exc:
            raise ValueError(f"service: {exc}") from None
    return Device(obj["ip"], tuple(services), bool(obj["has_ics_port"]))


def classified_to_json(cd: ClassifiedDevice) -> dict:
    d = device_to_json(cd.device)
    d["label"] = cd.label.value
    d["inspected"] = bool(cd.service_classes)
    for svc, sc in zip(d["services"], cd.service_classes):
        svc["class"] = {
            "label": sc.label.value,
            "positive_hits": list(sc.evidence.positive_hits),
            "negative_hits": list(sc.evidence.negative_hits),
        }
    return d


def classified_from_json(obj) -> ClassifiedDevice:
    classes = []
    plain = []
    for svc in obj["services"]:
        svc = dict(svc)
        c = svc.pop("class", None)
        svc.pop("fingerprint", None)
        plain.append(svc)
        if c is not None:
            ev = MatchResult(tuple(c["positive_hits"]), tuple(c["negative_hits"]))
            classes.append(ServiceClass(Label(c["label"]), ev))
    device = device_from_json({**obj, "services": plain})
    if obj["inspected"] and len(classes) != len(device.services):
        raise ValueError("inspected device is missing service classes")
    return ClassifiedDevice(device, Label(obj["label"]), tuple(classes))


def _finding_to_json(f: VulnFinding) -> dict:
    return {
        "cve": f.cve_id,
        "port": f.port,
        "transport": f.transport.lower(),
        "severity": f.severity.value,
        "vector": f.vector.value,
        "manufacturer": f.manufacturer,
        "cvss": f.cvss_score,
    }


def _finding_from_json(ip: str, obj) -> VulnFinding:
    return VulnFinding(
        obj["cve"],
        ip,
        obj["port"],
        obj["transport"].upper(),
        Severity(obj["severity"]),
        Vector(obj["vector"]),
        obj["manufacturer"],
        obj["cvss"],
    )


def analyzed_to_json(ad: AnalyzedDevice) -> dict:
    d = classified_to_json(ad.classified)
    for svc, fp in zip(d["services"], ad.fingerprints):
        svc["fingerprint"] = fp.to_json()
    rep = ad.vuln_report
    if rep is not None:
        d["vuln"] = {
            "status": rep.status.value,
            "exposure": rep.exposure.value,
            "findings": [_finding_to_json(f) for f in rep.findings],
        }
    return d


def analyzed_from_json(obj) -> AnalyzedDevice:
    cd = classified_from_json(obj)
    fps = tuple(
        Fingerprint(s["fingerprint"]["manufacturer"], s["fingerprint"]["product"], s["fingerprint"]["version"])
        for s in obj["services"]
        if "fingerprint" in s
    )
    rep = None
    v = obj.get("vuln")
    if v is not None:
        findings = tuple(_finding_from_json(cd.ip, f) for f in v["findings"])
        rep = DeviceVulnReport(cd.ip, findings, Status(v["status"]), Exposure(v["exposure"]))
    return AnalyzedDevice(cd, fps, rep)


def dumps(items: Iterable, encode) -> bytes:
    return "".join(_line(encode(x)) for x in items).encode("utf-8")


def _iter_lines(path: Path, decode) -> Iterator:
    with path.open("r", encoding="utf-8", newline="\n") as fh:
        for lineno, raw in enumerate(fh, 1):
            if not raw.strip():
                continue
            try:
                yield decode(json.loads(raw))
            except (ValueError, KeyError, TypeError) as exc:
                msg = f"missing key {exc}" if isinstance(exc, KeyError) else str(exc)
                raise ValidationError(f"{path}:{lineno}: {msg}") from None


def read_devices(path) -> list[Device]:
    return list(_iter_lines(Path(path), device_from_json))


def read_classified(path) -> list[ClassifiedDevice]:
    return list(_iter_lines(Path(path), classified_from_json))


def read_analyzed(path) -> list[AnalyzedDevice]:
    return list(_iter_lines(Path(path), analyzed_from_json))
