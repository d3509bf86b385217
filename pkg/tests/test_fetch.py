from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

import pytest

from icsmap import cli
from icsmap.errors import AuthError, FetchError
from icsmap.ingest import ClientConfig, fetch_pages, parse_records

PAGES = [
    [{"ip": f"10.0.0.{p * 2 + i}", "port": 502, "transport": "tcp", "ts": "2018-06-01T00:00:00Z",
      "banner": "PLC", "country": "NL"} for i in range(2)]
    for p in range(3)
]


class Mock(BaseHTTPRequestHandler):
    mode = "ok"
    calls: list = []
    fail_once: set = set()

    def log_message(self, *a):
        pass

    def do_GET(self):
        q = parse_qs(urlparse(self.path).query)
        page, size = int(q["page"][0]), int(q["size"][0])
        type(self).calls.append((page, size, self.headers.get("Authorization")))
        if self.mode == "401":
            return self._send(401, b"")
        if self.mode == "500" or (self.mode == "flaky" and page not in self.fail_once):
            self.fail_once.add(page)
            return self._send(500, b"boom")
        body = PAGES[page - 1] if page <= len(PAGES) else []
        self._send(200, "".join(json.dumps(r) + "\n" for r in body).encode())

    def _send(self, code, body):
        self.send_response(code)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


@pytest.fixture
def server():
    Mock.calls = []
    Mock.fail_once = set()
    Mock.mode = "ok"
    srv = ThreadingHTTPServer(("127.0.0.1", 0), Mock)
    t = threading.Thread(target=srv.serve_forever, daemon=True)
    t.start()
    yield f"http://127.0.0.1:{srv.server_port}/export"
    srv.shutdown()
    srv.server_close()


def _cfg(url, **kw):
    return ClientConfig(base_url=url, api_key="k3y", page_size=2, rate_limit=1000, backoff=0.001, **kw)


def test_three_pages_of_two(server):
    lines = list(fetch_pages(_cfg(server)))
    assert len(lines) == 6
    assert [json.loads(ln)["ip"] for ln in lines] == [f"10.0.0.{i}" for i in range(6)]
    assert [c[0] for c in Mock.calls] == [1, 2, 3, 4]
    assert all(c[1] == 2 and c[2] == "Bearer k3y" for c in Mock.calls)
    assert len(parse_records(lines).records) == 6


def test_401_is_immediate_auth_error(server):
    Mock.mode = "401"
    out = []
    with pytest.raises(AuthError):
        for ln in fetch_pages(_cfg(server)):
            out.append(ln)
    assert out == [] and len(Mock.calls) == 1


def test_500_once_then_success(server):
    Mock.mode = "flaky"
    sleeps = []
    lines = list(fetch_pages(_cfg(server), sleep=sleeps.append))
    assert len(lines) == 6
    assert [c[0] for c in Mock.calls] == [1, 1, 2, 2, 3, 3, 4, 4]


def test_persistent_failure_surfaces(server):
    Mock.mode = "500"
    with pytest.raises(FetchError, match="after 3 attempts"):
        list(fetch_pages(_cfg(server, max_retries=2), sleep=lambda s: None))
    assert len(Mock.calls) == 3


def test_backoff_is_exponential_and_bounded(server):
    Mock.mode = "500"
    sleeps = []
    cfg = ClientConfig(base_url=server, rate_limit=1e9, max_retries=4, backoff=1.0, max_backoff=3.0)
    with pytest.raises(FetchError):
        list(fetch_pages(cfg, sleep=sleeps.append))
    assert [s for s in sleeps if s >= 0.5] == [1.0, 2.0, 3.0, 3.0]


def test_rate_limit_spaces_requests(server):
    now = [0.0]
    waits = []

    def sleep(s):
        waits.append(s)
        now[0] += s

    cfg = ClientConfig(base_url=server, page_size=2, rate_limit=2.0)
    list(fetch_pages(cfg, sleep=sleep, clock=lambda: now[0]))
    assert waits == [0.5, 0.5, 0.5]


def test_connection_error_retried_then_fetch_error():
    cfg = ClientConfig(base_url="http://127.0.0.1:9/", max_retries=1, backoff=0.0, timeout=1)
    with pytest.raises(FetchError):
        list(fetch_pages(cfg, sleep=lambda s: None))


def test_from_env(monkeypatch):
    monkeypatch.delenv("ICSMAP_SOURCE_URL", raising=False)
    with pytest.raises(ValueError):
        ClientConfig.from_env()
    monkeypatch.setenv("ICSMAP_SOURCE_URL", "http://x")
    monkeypatch.setenv("ICSMAP_SOURCE_KEY", "abc")
    cfg = ClientConfig.from_env(page_size=5)
    assert (cfg.base_url, cfg.api_key, cfg.page_size) == ("http://x", "abc", 5)


def test_cli_fetch(server, tmp_path, monkeypatch):
    monkeypatch.setenv("ICSMAP_SOURCE_URL", server)
    out = tmp_path / "scan.ndjson"
    assert cli.run(["fetch", "-o", str(out), "--page-size", "2", "--rate-limit", "1000"]) == 0
    assert len(out.read_text().splitlines()) == 6


def test_cli_fetch_auth_failure(server, tmp_path, capsys):
    Mock.mode = "401"
    out = tmp_path / "scan.ndjson"
    assert cli.run(["fetch", "--url", server, "-o", str(out)]) == 2
    assert not out.exists()
    assert "401" in capsys.readouterr().err
