"""Manufacturer / product / version extraction from banner text.

Extraction is driven by an ordered rules file. Each rule names a literal
product pattern, the manufacturer, the product to report (blank for
manufacturer-only rules) and a version hint:

``none``
    no version is extracted
``after:<token>``
    the whitespace-delimited run that follows ``<token>``
``from:<token>``
    ``<token>`` itself plus that following run, e.g. ``from:FRN`` -> ``FRN 21``

The token is searched from the start of the product match onwards.
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ParseError
from .ingest import Device, ScanRecord
from .signatures import ProductCatalog, manufacturer_for_product

HEADER = ["product_pattern", "manufacturer", "product", "version_hint"]
HINT_KINDS = ("none", "after", "from")
_RUN = re.compile(r"\s*(\S+)")


@dataclass(frozen=True)
class Fingerprint:
    manufacturer: str | None = None
    product: str | None = None
    version: str | None = None

    @property
    def blank(self) -> bool:
        return self.manufacturer is None and self.product is None and self.version is None

    def to_json(self) -> dict:
        return {"manufacturer": self.manufacturer, "product": self.product, "version": self.version}


BLANK = Fingerprint()


@dataclass(frozen=True)
class ExtractionRule:
    product_pattern: str
    manufacturer: str
    product: str | None = None
    version_kind: str = "none"
    version_token: str = ""

    def __post_init__(self):
        if not self.product_pattern:
            raise ValueError("product_pattern must be non-empty")
        if self.version_kind not in HINT_KINDS:
            raise ValueError(f"unknown version hint {self.version_kind!r}")
        if self.version_kind != "none" and not self.version_token:
            raise ValueError(f"version hint {self.version_kind}: needs a token")

    @property
    def version_hint(self) -> str:
        return "none" if self.version_kind == "none" else f"{self.version_kind}:{self.version_token}"

    def extract_version(self, banner: str, start: int) -> str | None:
        if self.version_kind == "none":
            return None
        at = banner.find(self.version_token, start)
        if at < 0:
            return None
        end = at + len(self.version_token)
        m = _RUN.match(banner, end)
        if not m:
            return None
        if self.version_kind == "after":
            return m.group(1)
        return f"{self.version_token} {m.group(1)}" if m.start(1) > end else banner[at : m.end(1)]


def parse_hint(hint: str) -> tuple[str, str]:
    hint = hint.strip()
    if hint in ("", "none"):
        return "none", ""
    kind, sep, token = hint.partition(":")
    if not sep or kind not in HINT_KINDS[1:] or not token:
        raise ValueError(f"bad version hint {hint!r}")
    return kind, token


def sort_rules(rules: Iterable[ExtractionRule]) -> list[ExtractionRule]:
    """Product rules before manufacturer-only rules, each group longest pattern first."""
    return sorted(rules, key=lambda r: (r.product is None, -len(r.product_pattern), r.product_pattern))


def parse_rules(text: str, source: str = "<rules>", sort: bool = True) -> list[ExtractionRule]:
    reader = csv.reader(io.StringIO(text))
    rules = []
    for row in reader:
        line = reader.line_num
        if not row or not any(c.strip() for c in row):
            continue
        if line == 1 and [c.strip() for c in row] == HEADER:
            continue
        if len(row) != len(HEADER):
            raise ParseError(f"expected {len(HEADER)} columns, got {len(row)}", source, line)
        pattern, manufacturer, product, hint = row
        try:
            kind, token = parse_hint(hint)
            rules.append(ExtractionRule(pattern, manufacturer.strip(), product.strip() or None, kind, token))
        except ValueError as exc:
            raise ParseError(str(exc), source, line) from None
    return sort_rules(rules) if sort else rules


def load_rules(source=None, sort: bool = True) -> list[ExtractionRule]:
    if source is None:
        text = resources.files("icsmap.data").joinpath("rules.csv").read_text("utf-8")
        return parse_rules(text, "rules.csv", sort)
    path = Path(source)
    return parse_rules(path.read_text("utf-8"), str(path), sort)


def dump_rules(rules: Iterable[ExtractionRule]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    for r in rules:
        w.writerow([r.product_pattern, r.manufacturer, r.product or "", r.version_hint])
    return buf.getvalue()


def extract_fingerprint(
    banner: str, rules: Sequence[ExtractionRule], catalog: ProductCatalog
) -> Fingerprint:
    """Apply the first rule whose pattern occurs in ``banner``.

    No match, or an empty banner, gives the blank fingerprint.
    """
    if not banner:
        return BLANK
    for rule in rules:
        at = banner.find(rule.product_pattern)
        if at < 0:
            continue
        manufacturer = manufacturer_for_product(catalog, rule.product) or rule.manufacturer or None
        return Fingerprint(manufacturer, rule.product, rule.extract_version(banner, at))
    return BLANK


def fingerprint_device(
    device: Device, rules: Sequence[ExtractionRule], catalog: ProductCatalog
) -> list[tuple[ScanRecord, Fingerprint]]:
    return [(s, extract_fingerprint(s.banner, rules, catalog)) for s in device.services]
