"""Scripted HTTP servers for backend tests.

CompletionServer answers the completions wire shape.  Its behaviour per
request is scripted: a list of (status, delay_s) steps consumed in
arrival order, after which every request succeeds.  It tracks the peak
number of concurrently handled requests.

EmbeddingServer answers the {"texts": ...} -> {"vectors": ...} shape
with deterministic vectors.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer


class _QuietServer(ThreadingHTTPServer):
    """Clients hanging up mid-response (timeout tests) are expected."""

    def handle_error(self, request, client_address):
        pass


class _ScriptedState:
    def __init__(self, script):
        self.script = list(script)
        self.lock = threading.Lock()
        self.in_flight = 0
        self.peak_in_flight = 0
        self.request_count = 0
        self.request_times: list[float] = []

    def next_step(self, now: float):
        with self.lock:
            self.request_count += 1
            self.request_times.append(now)
            if self.script:
                return self.script.pop(0)
            return (200, 0.0)

    def enter(self):
        with self.lock:
            self.in_flight += 1
            self.peak_in_flight = max(self.peak_in_flight, self.in_flight)

    def leave(self):
        with self.lock:
            self.in_flight -= 1


class CompletionServer:
    """Runs a scripted completions endpoint on an ephemeral port."""

    def __init__(self, script=(), reply=None):
        self.state = _ScriptedState(script)
        reply_fn = reply or (lambda prompt: f"echo:{prompt}")
        state = self.state

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                import time

                state.enter()
                try:
                    status, delay = state.next_step(time.monotonic())
                    length = int(self.headers.get("Content-Length", 0))
                    body = json.loads(self.rfile.read(length) or b"{}")
                    if delay:
                        time.sleep(delay)
                    if status != 200:
                        self.send_response(status)
                        self.end_headers()
                        self.wfile.write(b"scripted failure")
                        return
                    payload = {"choices": [{"text": reply_fn(body.get("prompt", ""))}]}
                    data = json.dumps(payload).encode("utf-8")
                    self.send_response(200)
                    self.send_header("Content-Type", "application/json")
                    self.send_header("Content-Length", str(len(data)))
                    self.end_headers()
                    self.wfile.write(data)
                finally:
                    state.leave()

            def log_message(self, *args):
                pass

        self.httpd = _QuietServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        return f"http://127.0.0.1:{self.httpd.server_address[1]}/v1/completions"

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.httpd.shutdown()
        self.httpd.server_close()


class EmbeddingServer:
    """Deterministic embedding endpoint: vector = [len, vowels, 1]."""

    @staticmethod
    def embed(text: str) -> list[float]:
        return [float(len(text)), float(sum(text.lower().count(v) for v in "aeiou")), 1.0]

    def __init__(self):
        embed = self.embed

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length) or b"{}")
                vectors = [embed(t) for t in body.get("texts", [])]
                data = json.dumps({"vectors": vectors}).encode("utf-8")
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self.httpd = _QuietServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        return f"http://127.0.0.1:{self.httpd.server_address[1]}/embed"

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.httpd.shutdown()
        self.httpd.server_close()
