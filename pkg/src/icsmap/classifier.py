"""Three-way banner classification of services and devices, plus the discovery funnel."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable

from .ingest import Device, ScanRecord
from .signatures import MatchResult, SignatureSet, match_features
from .util import round_half_up

FUNNEL_FIELDS = (
    "total_devices",
    "total_services",
    "devices_with_ics_ports",
    "services_on_ics_port_devices",
    "ics_devices",
    "ics_services",
)


class Label(str, Enum):
    ICS = "ICS"
    NON_ICS = "NonICS"
    NOT_CLASSIFIED = "NotClassified"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class ServiceClass:
    label: Label
    evidence: MatchResult

    def __post_init__(self):
        ev = self.evidence
        ok = {
            Label.ICS: bool(ev.positive_hits),
            Label.NON_ICS: not ev.positive_hits and bool(ev.negative_hits),
            Label.NOT_CLASSIFIED: not ev.positive_hits and not ev.negative_hits,
        }[self.label]
        if not ok:
            raise ValueError(f"label {self.label} inconsistent with evidence {ev}")


@dataclass(frozen=True)
class ClassifiedDevice:
    device: Device
    label: Label
    # empty when the device failed the ICS-port prefilter and was never inspected
    service_classes: tuple[ServiceClass, ...] = ()

    @property
    def ip(self) -> str:
        return self.device.ip


@dataclass(frozen=True)
class FunnelReport:
    total_devices: int = 0
    total_services: int = 0
    devices_with_ics_ports: int = 0
    services_on_ics_port_devices: int = 0
    ics_devices: int = 0
    ics_services: int = 0

    def __add__(self, other: "FunnelReport") -> "FunnelReport":
        return FunnelReport(*(getattr(self, f) + getattr(other, f) for f in FUNNEL_FIELDS))

    @property
    def average_ics_services(self) -> float | None:
        if not self.ics_devices:
            return None
        return round_half_up(self.ics_services / self.ics_devices, 1)


# Published whole-country figures, kept for documentation and report captions.
REFERENCE_FUNNEL = FunnelReport(
    total_devices=3_090_000,
    total_services=5_980_000,
    devices_with_ics_ports=68_166,
    services_on_ics_port_devices=71_816,
    ics_devices=989,
    ics_services=1_215,
)


def label_from_evidence(evidence: MatchResult) -> Label:
    # positives win over negatives
    if evidence.positive_hits:
        return Label.ICS
    if evidence.negative_hits:
        return Label.NON_ICS
    return Label.NOT_CLASSIFIED


def classify_service(record: ScanRecord, signatures: SignatureSet) -> ServiceClass:
    evidence = match_features(record.banner, signatures, record.port)
    return ServiceClass(label_from_evidence(evidence), evidence)


def combine_labels(labels: Iterable[Label]) -> Label:
    """Device label from its service labels: any ICS, else any NonICS, else NotClassified."""
    seen = set(labels)
    if Label.ICS in seen:
        return Label.ICS
    if Label.NON_ICS in seen:
        return Label.NON_ICS
    return Label.NOT_CLASSIFIED


def classify_device(device: Device, signatures: SignatureSet) -> Label:
    return combine_labels(classify_service(s, signatures).label for s in device.services)


def classify_devices(devices: Iterable[Device], signatures: SignatureSet) -> list[ClassifiedDevice]:
    """Classify a corpus. Devices without a default ICS port are not inspected."""
    out = []
    for d in devices:
        if not d.has_ics_port:
            out.append(ClassifiedDevice(d, Label.NOT_CLASSIFIED))
            continue
        classes = tuple(classify_service(s, signatures) for s in d.services)
        out.append(ClassifiedDevice(d, combine_labels(c.label for c in classes), classes))
    return out


def funnel_stats(devices: Iterable[ClassifiedDevice]) -> FunnelReport:
    totals = [0] * 6
    for cd in devices:
        n = len(cd.device.services)
        totals[0] += 1
        totals[1] += n
        if cd.device.has_ics_port:
            totals[2] += 1
            totals[3] += n
            if cd.label is Label.ICS:
                totals[4] += 1
                totals[5] += sum(1 for c in cd.service_classes if c.label is Label.ICS)
    return FunnelReport(*totals)
