"""Per-device results that flow from classification through correlation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .classifier import ClassifiedDevice, Label
from .fingerprint import ExtractionRule, Fingerprint, fingerprint_device
from .ingest import Device
from .signatures import ProductCatalog
from .vulns import DeviceVulnReport, VulnRecord, match_device


@dataclass(frozen=True)
class AnalyzedDevice:
    classified: ClassifiedDevice
    # one per service, only for ICS devices
    fingerprints: tuple[Fingerprint, ...] = ()
    vuln_report: DeviceVulnReport | None = None

    @property
    def device(self) -> Device:
        return self.classified.device

    @property
    def ip(self) -> str:
        return self.classified.device.ip

    @property
    def label(self) -> Label:
        return self.classified.label

    @property
    def is_ics(self) -> bool:
        return self.classified.label is Label.ICS


def correlate(
    classified: Iterable[ClassifiedDevice],
    rules: Sequence[ExtractionRule],
    catalog: ProductCatalog,
    db: Sequence[VulnRecord],
) -> list[AnalyzedDevice]:
    """Fingerprint and vuln-match every ICS device; other devices pass through."""
    out = []
    for cd in classified:
        if cd.label is not Label.ICS:
            out.append(AnalyzedDevice(cd))
            continue
        pairs = fingerprint_device(cd.device, rules, catalog)
        out.append(AnalyzedDevice(cd, tuple(fp for _, fp in pairs), match_device(pairs, db)))
    return out
