"""Shared test infrastructure: an independent similarity reference and a
scriptable HTTP completion stub.

The similarity reference is a from-scratch dynamic-programming
implementation of the recursive longest-matching-block ratio, kept free
of difflib so the production function is checked against genuinely
independent arithmetic.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np


def _normalize_ws(text: str) -> str:
    return " ".join(text.split())


def _longest_block(
    a_codes: np.ndarray, b_codes: np.ndarray, alo: int, ahi: int, blo: int, bhi: int
) -> tuple[int, int, int]:
    """Longest common block within the window as (size, a_start, b_start).

    Ties resolve to the smallest a_start, then the smallest b_start.
    Row i of the DP holds run lengths of common substrings ending at
    a[i]; scanning rows in order makes the earliest-start winner the
    first one found at any given size.
    """
    m = bhi - blo
    best_size, best_i, best_j = 0, alo, blo
    if m <= 0:
        return best_size, best_i, best_j
    window_b = b_codes[blo:bhi]
    prev = np.zeros(m, dtype=np.int64)
    for i in range(alo, ahi):
        eq = window_b == a_codes[i]
        cur = np.zeros(m, dtype=np.int64)
        cur[0] = 1 if eq[0] else 0
        if m > 1:
            cur[1:] = np.where(eq[1:], prev[:-1] + 1, 0)
        size = int(cur.max(initial=0))
        if size > best_size:
            j_end = int(np.argmax(cur == size))
            best_size = size
            best_i = i - size + 1
            best_j = blo + j_end - size + 1
        prev = cur
    return best_size, best_i, best_j


def _total_matched(
    a_codes: np.ndarray, b_codes: np.ndarray, alo: int, ahi: int, blo: int, bhi: int
) -> int:
    size, i, j = _longest_block(a_codes, b_codes, alo, ahi, blo, bhi)
    if size == 0:
        return 0
    left = _total_matched(a_codes, b_codes, alo, i, blo, j)
    right = _total_matched(a_codes, b_codes, i + size, ahi, j + size, bhi)
    return size + left + right


def reference_ratio(a: str, b: str) -> float:
    """Independent Ratcliff/Obershelp ratio over normalized characters."""
    a_norm = _normalize_ws(a)
    b_norm = _normalize_ws(b)
    if not a_norm and not b_norm:
        return 1.0
    a_codes = np.array([ord(c) for c in a_norm], dtype=np.int64)
    b_codes = np.array([ord(c) for c in b_norm], dtype=np.int64)
    matched = _total_matched(a_codes, b_codes, 0, len(a_codes), 0, len(b_codes))
    return 2.0 * matched / (len(a_codes) + len(b_codes))


class _StubHandler(BaseHTTPRequestHandler):
    def do_POST(self):  # noqa: N802 (http.server API name)
        length = int(self.headers.get("Content-Length", "0"))
        raw = self.rfile.read(length)
        try:
            body = json.loads(raw)
        except json.JSONDecodeError:
            body = raw.decode("utf-8", "replace")
        with self.server.lock:
            index = len(self.server.seen)
            self.server.seen.append(
                {"path": self.path, "body": body, "headers": dict(self.headers)}
            )
        script = self.server.script
        status, payload = script[min(index, len(script) - 1)]
        data = payload if isinstance(payload, bytes) else json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):  # keep test output clean
        pass


class StubCompletionServer:
    """Local HTTP server that replays a scripted list of (status, payload).

    The last script entry repeats for any further requests. `seen` holds
    one entry per request: path, parsed body, and headers.
    """

    def __init__(self, script: list[tuple[int, object]]):
        self._server = ThreadingHTTPServer(("127.0.0.1", 0), _StubHandler)
        self._server.script = script
        self._server.seen = []
        self._server.lock = threading.Lock()
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    def __enter__(self) -> "StubCompletionServer":
        self._thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self._server.shutdown()
        self._server.server_close()
        self._thread.join(timeout=5)

    @property
    def url(self) -> str:
        host, port = self._server.server_address
        return f"http://{host}:{port}/v1/completions"

    @property
    def seen(self) -> list[dict]:
        return self._server.seen
