"""Banner feature lists and the product -> manufacturer catalog.

Signature files hold one literal feature per line. Only the line terminator
is stripped, so surrounding spaces inside a feature are significant. Lines
starting with ``#`` in column 0 are comments. An optional tab-separated
second column restricts a feature to a ``;``-joined list of ports.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping

from .errors import ParseError, ValidationError

UNKNOWN_MANUFACTURER = "Unknown"


@dataclass(frozen=True)
class SignatureSet:
    positives: tuple[str, ...]
    negatives: tuple[str, ...] = ()
    # feature -> ports it is restricted to; absent means global
    port_restrictions: Mapping[str, frozenset[int]] = field(default_factory=dict)

    def __post_init__(self):
        for kind, feats in (("positive", self.positives), ("negative", self.negatives)):
            if len(set(feats)) != len(feats):
                raise ValidationError(f"duplicate {kind} features")
            for f in feats:
                if not f.strip():
                    raise ValidationError(f"empty {kind} feature")


@dataclass(frozen=True)
class MatchResult:
    positive_hits: tuple[str, ...] = ()
    negative_hits: tuple[str, ...] = ()

    def __bool__(self) -> bool:
        return bool(self.positive_hits or self.negative_hits)


@dataclass(frozen=True)
class ProductCatalog:
    entries: Mapping[str, str]

    def manufacturers(self) -> list[str]:
        return sorted(set(self.entries.values()))


def _read_text(source, default_name: str) -> tuple[str, str]:
    if source is None:
        ref = resources.files("icsmap.data").joinpath(default_name)
        return ref.read_text("utf-8"), default_name
    path = Path(source)
    return path.read_text("utf-8"), str(path)


def parse_feature_lines(text: str, source: str = "<features>") -> tuple[list[str], dict[str, frozenset[int]]]:
    """Return features in file order (first occurrence kept) and their port restrictions."""
    features: list[str] = []
    seen: set[str] = set()
    restrictions: dict[str, frozenset[int]] = {}
    for lineno, raw in enumerate(text.split("\n"), 1):
        raw = raw.removesuffix("\r")
        if raw.startswith("#") or not raw.strip():
            continue
        feature, sep, ports_s = raw.partition("\t")
        if not feature.strip():
            raise ParseError("empty feature", source, lineno)
        ports: frozenset[int] = frozenset()
        if sep and ports_s.strip():
            try:
                ports = frozenset(int(p) for p in ports_s.split(";"))
            except ValueError:
                raise ParseError(f"bad port restriction {ports_s!r}", source, lineno) from None
            if any(not 1 <= p <= 65535 for p in ports):
                raise ParseError("port restriction out of range", source, lineno)
        if feature in seen:
            if ports:
                restrictions[feature] = restrictions.get(feature, frozenset()) | ports
            continue
        seen.add(feature)
        features.append(feature)
        if ports:
            restrictions[feature] = ports
    return features, restrictions


def load_signatures(positive_source=None, negative_source=None) -> SignatureSet:
    """Load positive and negative feature files (bundled lists when ``None``).

    Raises ``OSError`` when a file cannot be read and ``ValidationError`` when
    the positive list is empty.
    """
    pos_text, pos_name = _read_text(positive_source, "positive.txt")
    neg_text, neg_name = _read_text(negative_source, "negative.txt")
    positives, pos_r = parse_feature_lines(pos_text, pos_name)
    negatives, neg_r = parse_feature_lines(neg_text, neg_name)
    if not positives:
        raise ValidationError(f"{pos_name}: positive feature list is empty")
    return SignatureSet(tuple(positives), tuple(negatives), MappingProxyType({**neg_r, **pos_r}))


def dump_features(features: Iterable[str], restrictions: Mapping[str, frozenset[int]] | None = None) -> str:
    restrictions = restrictions or {}
    out = []
    for f in features:
        ports = restrictions.get(f)
        out.append(f + ("\t" + ";".join(map(str, sorted(ports))) if ports else "") + "\n")
    return "".join(out)


def dump_signatures(signatures: SignatureSet) -> tuple[str, str]:
    """Serialize to ``(positive_text, negative_text)`` in the loader's format."""
    r = signatures.port_restrictions
    return dump_features(signatures.positives, r), dump_features(signatures.negatives, r)


def _hits(banner: str, features: tuple[str, ...], restrictions, port) -> tuple[str, ...]:
    out = []
    for f in features:
        if f in banner:
            allowed = restrictions.get(f)
            if allowed and port is not None and port not in allowed:
                continue
            out.append(f)
    return tuple(out)


def match_features(banner: str, signatures: SignatureSet, port: int | None = None) -> MatchResult:
    """Case-sensitive substring match of every feature against ``banner``.

    Port-restricted features only count when ``port`` is one of their ports;
    when ``port`` is ``None`` restrictions are ignored.
    """
    if not banner:
        return MatchResult()
    r = signatures.port_restrictions
    return MatchResult(
        _hits(banner, signatures.positives, r, port),
        _hits(banner, signatures.negatives, r, port),
    )


def parse_catalog(text: str, source: str = "<catalog>") -> ProductCatalog:
    reader = csv.reader(io.StringIO(text))
    entries: dict[str, str] = {}
    for row in reader:
        line = reader.line_num
        if not row or not any(c.strip() for c in row):
            continue
        if line == 1 and [c.strip() for c in row] == ["product", "manufacturer"]:
            continue
        if len(row) != 2:
            raise ParseError(f"expected 2 columns, got {len(row)}", source, line)
        product, manufacturer = (c.strip() for c in row)
        if not product or not manufacturer:
            raise ParseError("empty product or manufacturer", source, line)
        if product in entries:
            raise ValidationError(f"{source}:{line}: duplicate product {product!r}")
        entries[product] = manufacturer
    return ProductCatalog(MappingProxyType(entries))


def load_catalog(source=None) -> ProductCatalog:
    text, name = _read_text(source, "catalog.csv")
    return parse_catalog(text, name)


def manufacturer_for_product(catalog: ProductCatalog, product: str | None) -> str | None:
    """Catalog manufacturer for ``product``; the ``Unknown`` sentinel is never returned."""
    if not product:
        return None
    m = catalog.entries.get(product)
    if m is None or m == UNKNOWN_MANUFACTURER:
        return None
    return m
