"""Command-line entry point.

Stages read and write files in ``--out`` so each step can be inspected:
``ingest`` -> devices.ndjson, ``classify`` -> classified.ndjson,
``correlate`` -> correlated.ndjson, ``report`` -> report.json / tables/*.csv /
report.md. ``pipeline`` runs all four through the same files.

Exit codes: 0 success, 1 invalid input, 2 I/O failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from . import codec
from .analysis import correlate
from .asn import load_as_table
from .classifier import classify_devices
from .errors import FetchError, IcsmapError
from .fingerprint import load_rules
from .ingest import (
    SOURCE_KEY_ENV,
    ClientConfig,
    check_country,
    dedup,
    fetch_pages,
    filter_country,
    group_devices,
    parse_records,
)
from .registry import load_registry
from .report import FORMATS, build_bundle, render
from .signatures import load_catalog, load_signatures
from .util import atomic_write
from .vulns import load_vuln_db

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2
MAX_REJECTS_SHOWN = 20


class InputError(IcsmapError):
    """Bad arguments or input data (exit 1)."""


@dataclass(frozen=True)
class PipelineConfig:
    scan: Path
    out: Path
    country: str = "NL"
    registry: Path | None = None
    signatures_pos: Path | None = None
    signatures_neg: Path | None = None
    rules: Path | None = None
    catalog: Path | None = None
    vulndb: Path | None = None
    astable: Path | None = None
    formats: tuple[str, ...] = ("json",)
    table_only: bool = False

    @classmethod
    def from_args(cls, args) -> "PipelineConfig":
        return cls(
            scan=args.scan,
            out=args.out,
            country=args.country,
            registry=args.registry,
            signatures_pos=args.signatures_pos,
            signatures_neg=args.signatures_neg,
            rules=args.rules,
            catalog=args.catalog,
            vulndb=args.vulndb,
            astable=args.astable,
            formats=_formats(args.format),
            table_only=args.table_only,
        )

    def check(self) -> None:
        check_country(self.country)
        for p in (self.scan, self.registry, self.signatures_pos, self.signatures_neg,
                  self.rules, self.catalog, self.vulndb, self.astable):
            if p is not None and not p.is_file():
                raise FileNotFoundError(2, "no such file", str(p))


def _formats(value: str) -> tuple[str, ...]:
    return FORMATS if value == "all" else (value,)


def _country(value: str) -> str:
    try:
        return check_country(value)
    except ValueError as exc:
        raise InputError(str(exc)) from None


# stage functions; each reads its input file and writes its output file


def stage_ingest(scan: Path, out: Path, country: str = "NL", registry: Path | None = None) -> Path:
    _country(country)
    reg = load_registry(registry)
    with Path(scan).open("rb") as fh:
        result = parse_records(fh)
    for rej in result.rejects[:MAX_REJECTS_SHOWN]:
        print(f"{scan}:{rej.line}: skipped: {rej.reason}", file=sys.stderr)
    if len(result.rejects) > MAX_REJECTS_SHOWN:
        print(f"{scan}: {len(result.rejects) - MAX_REJECTS_SHOWN} more lines skipped", file=sys.stderr)
    devices = group_devices(filter_country(dedup(result.records), country), reg)
    target = Path(out) / codec.DEVICES_FILE
    atomic_write(target, codec.dumps(devices, codec.device_to_json))
    return target


def stage_classify(src: Path, out: Path, signatures_pos=None, signatures_neg=None) -> Path:
    sigs = load_signatures(signatures_pos, signatures_neg)
    classified = classify_devices(codec.read_devices(src), sigs)
    target = Path(out) / codec.CLASSIFIED_FILE
    atomic_write(target, codec.dumps(classified, codec.classified_to_json))
    return target


def stage_correlate(src: Path, out: Path, rules=None, catalog=None, vulndb=None) -> Path:
    analyzed = correlate(codec.read_classified(src), load_rules(rules), load_catalog(catalog), load_vuln_db(vulndb))
    target = Path(out) / codec.CORRELATED_FILE
    atomic_write(target, codec.dumps(analyzed, codec.analyzed_to_json))
    return target


def stage_report(src: Path, out: Path, formats=("json",), vulndb=None, astable=None, table_only=False) -> list[Path]:
    table = load_as_table(astable) if astable is not None else None
    bundle = build_bundle(codec.read_analyzed(src), load_vuln_db(vulndb), table, table_only)
    # render everything first so a failure leaves no partial report behind
    files: dict[str, bytes] = {}
    for fmt in formats:
        files.update(render(bundle, fmt))
    written = []
    for rel, data in sorted(files.items()):
        atomic_write(Path(out) / rel, data)
        written.append(Path(out) / rel)
    return written


def run_pipeline(cfg: PipelineConfig) -> list[Path]:
    cfg.check()
    devices = stage_ingest(cfg.scan, cfg.out, cfg.country, cfg.registry)
    classified = stage_classify(devices, cfg.out, cfg.signatures_pos, cfg.signatures_neg)
    correlated = stage_correlate(classified, cfg.out, cfg.rules, cfg.catalog, cfg.vulndb)
    return stage_report(correlated, cfg.out, cfg.formats, cfg.vulndb, cfg.astable, cfg.table_only)


def _cmd_fetch(args) -> None:
    overrides = dict(page_size=args.page_size, rate_limit=args.rate_limit, max_retries=args.max_retries)
    if args.url:
        cfg = ClientConfig(base_url=args.url, api_key=os.environ.get(SOURCE_KEY_ENV, ""), **overrides)
    else:
        cfg = ClientConfig.from_env(**overrides)
    lines = list(fetch_pages(cfg))
    data = "".join(line + "\n" for line in lines).encode("utf-8")
    atomic_write(args.output, data)
    print(f"fetched {len(lines)} records into {args.output}", file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="icsmap", description="Find and assess exposed ICS/SCADA devices in scan exports.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def opt(sp, *names, **kw):
        sp.add_argument(*names, type=Path, default=None, **kw)

    def out(sp):
        sp.add_argument("--out", type=Path, default=Path("."), help="output directory (default: .)")

    def inp(sp, default_name):
        opt(sp, "--in", dest="src", metavar="PATH", help=f"input file (default: OUT/{default_name})")

    def fmt(sp):
        sp.add_argument("--format", choices=(*FORMATS, "all"), default="json")

    def report_opts(sp):
        opt(sp, "--astable", help="CSV prefix,asn,name table for AS attribution")
        sp.add_argument("--table-only", action="store_true", help="ignore ASN fields carried by the scan export")

    s = sub.add_parser("ingest", help="parse, dedup, country-filter and group a scan export")
    opt(s, "--scan", required=True, help="NDJSON scan export")
    s.add_argument("--country", default="NL", help="ISO 3166-1 alpha-2 code (default: NL)")
    opt(s, "--registry", help="protocol registry CSV")
    out(s)

    s = sub.add_parser("classify", help="label devices ICS / NonICS / NotClassified")
    inp(s, codec.DEVICES_FILE)
    opt(s, "--signatures-pos", help="positive feature list")
    opt(s, "--signatures-neg", help="negative feature list")
    out(s)

    s = sub.add_parser("correlate", help="fingerprint ICS devices and match known vulnerabilities")
    inp(s, codec.CLASSIFIED_FILE)
    opt(s, "--rules", help="fingerprint rules CSV")
    opt(s, "--catalog", help="product -> manufacturer CSV")
    opt(s, "--vulndb", help="vulnerability DB JSON")
    out(s)

    s = sub.add_parser("report", help="render aggregate tables")
    inp(s, codec.CORRELATED_FILE)
    opt(s, "--vulndb", help="vulnerability DB JSON (orders the CVE table)")
    report_opts(s)
    fmt(s)
    out(s)

    s = sub.add_parser("pipeline", help="run ingest, classify, correlate and report")
    opt(s, "--scan", required=True, help="NDJSON scan export")
    s.add_argument("--country", default="NL", help="ISO 3166-1 alpha-2 code (default: NL)")
    for name in ("--registry", "--signatures-pos", "--signatures-neg", "--rules", "--catalog", "--vulndb"):
        opt(s, name)
    report_opts(s)
    fmt(s)
    out(s)

    s = sub.add_parser("fetch", help="download a scan export page by page")
    s.add_argument("--url", default=None, help="source URL (default: $ICSMAP_SOURCE_URL)")
    s.add_argument("-o", "--output", type=Path, required=True, help="NDJSON file to write")
    s.add_argument("--page-size", type=int, default=100)
    s.add_argument("--rate-limit", type=float, default=1.0, help="requests per second")
    s.add_argument("--max-retries", type=int, default=3)
    return p


def _dispatch(args) -> None:
    cmd = args.command
    if cmd == "ingest":
        stage_ingest(args.scan, args.out, args.country, args.registry)
    elif cmd == "classify":
        stage_classify(args.src or args.out / codec.DEVICES_FILE, args.out, args.signatures_pos, args.signatures_neg)
    elif cmd == "correlate":
        stage_correlate(args.src or args.out / codec.CLASSIFIED_FILE, args.out, args.rules, args.catalog, args.vulndb)
    elif cmd == "report":
        src = args.src or args.out / codec.CORRELATED_FILE
        stage_report(src, args.out, _formats(args.format), args.vulndb, args.astable, args.table_only)
    elif cmd == "pipeline":
        run_pipeline(PipelineConfig.from_args(args))
    elif cmd == "fetch":
        _cmd_fetch(args)


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; usage errors are invalid input here
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        _dispatch(args)
    except OSError as exc:
        where = exc.filename if exc.filename is not None else ""
        reason = exc.strerror or str(exc)
        print(f"icsmap: error: {where}: {reason}" if where else f"icsmap: error: {reason}", file=sys.stderr)
        return EXIT_IO
    except FetchError as exc:
        print(f"icsmap: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (IcsmapError, ValueError) as exc:
        print(f"icsmap: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


def main() -> None:
    sys.exit(run())
