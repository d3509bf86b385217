"""Deterministic generator for the 500-record golden corpus.

Regenerate the frozen copy with ``python3 tests/golden.py``. Labels are
assigned by the brute-force oracle, never by the package under test.
"""

from __future__ import annotations

import json
import random
import sys
from pathlib import Path

HERE = Path(__file__).parent
sys.path.insert(0, str(HERE))

from oracles import BruteClassifier, read_ics_ports  # noqa: E402

CORPUS = HERE / "data" / "golden.ndjson"
LABELS = HERE / "data" / "golden_labels.json"
SIZE = 500
SEED = 20180528

FILLER = ["Server", "ready", "v2.1", "login:", "OK", "device", "200", "Welcome", "uptime", "Build", "-", "/", ":"]
NOISE = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789 .:/-_#@!"
FIXED = [
    "Tridium Niagara httpd v3",
    "Tridium Niagara httpd",
    "HTTP/1.1 200 OK Server: Niagara Web Server",
    "Siemens, SIMATIC, S7-200",
    "Siemens S7-300 PLC",
    "220 ProFTPD Server ready",
    "Conpot test banner",
    "qz9##@!",
    "",
    "MicroLogix 1400 FRN 21 1766-L32BWA B",
    "plc simatic siemens",
    "fox a 0 -1 fox hello brandId:s=Tridium vmName NiagaraAX Station",
]


def _banner(rng: random.Random, pos: list[str], neg: list[str]) -> str:
    kind = rng.choice(["pos", "neg", "both", "noise", "case", "empty", "filler"])
    words = [rng.choice(FILLER) for _ in range(rng.randint(0, 4))]
    if kind == "pos":
        words.insert(rng.randint(0, len(words)), rng.choice(pos))
    elif kind == "neg":
        words.insert(rng.randint(0, len(words)), rng.choice(neg))
    elif kind == "both":
        words += [rng.choice(pos), rng.choice(neg)]
        rng.shuffle(words)
    elif kind == "noise":
        return "".join(rng.choice(NOISE) for _ in range(rng.randint(1, 40)))
    elif kind == "case":
        f = rng.choice(pos)
        words.append(f.swapcase() if rng.random() < 0.5 else f.lower())
    elif kind == "empty":
        return ""
    return " ".join(words)


def generate(seed: int = SEED, size: int = SIZE) -> list[dict]:
    rng = random.Random(seed)
    clf = BruteClassifier.bundled()
    ics = sorted(read_ics_ports())
    plain = [21, 22, 23, 25, 80, 443, 8080, 8443]
    hosts = [f"192.0.2.{i}" for i in range(1, 255)] + [f"198.51.100.{i}" for i in range(1, 120)]
    records: list[dict] = []
    while len(records) < size:
        ip = rng.choice(hosts)
        port = rng.choice(ics) if rng.random() < 0.6 else rng.choice(plain)
        banner = FIXED[len(records)] if len(records) < len(FIXED) else _banner(rng, clf.positives, clf.negatives)
        rec = {
            "ip": ip,
            "port": port,
            "transport": rng.choice(["tcp", "tcp", "tcp", "udp"]),
            "ts": f"2018-{rng.choice(['05', '06'])}-{rng.randint(1, 28):02d}T{rng.randint(0, 23):02d}:00:00Z",
            "banner": banner,
            "country": "NL" if rng.random() < 0.9 else "DE",
        }
        if rng.random() < 0.3:
            rec["asn"] = rng.choice([1136, 9143, 8737, 15480])
        records.append(rec)
        if rng.random() < 0.05 and len(records) < size:
            # same service seen again later
            dup = dict(rec, ts="2018-06-19T12:00:00Z", banner=_banner(rng, clf.positives, clf.negatives))
            records.append(dup)
    return records[:size]


def oracle_labels(records: list[dict]) -> list[str]:
    clf = BruteClassifier.bundled()
    return [clf.label(r["banner"]) for r in records]


def dumps(records: list[dict]) -> str:
    return "".join(json.dumps(r, sort_keys=True, ensure_ascii=False) + "\n" for r in records)


if __name__ == "__main__":
    recs = generate()
    CORPUS.write_text(dumps(recs), "utf-8")
    LABELS.write_text(json.dumps(oracle_labels(recs), indent=0) + "\n", "utf-8")
    print(f"wrote {len(recs)} records to {CORPUS}")
