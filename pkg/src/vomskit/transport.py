"""Request/response transport.

Services are plain callables ``app(method, path, query, body) -> (status, body)``
so they can be driven in-process (:class:`LocalTransport`) or served over HTTP
(:func:`serve`).  Clients only need ``transport.request(endpoint, method, path,
body)`` returning the response body.
"""

import http.client
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlsplit

from .errors import EndpointUnreachable

log = logging.getLogger(__name__)


def split_endpoint(endpoint):
    host, sep, port = endpoint.rpartition(":")
    if not sep or not host or not port.isdigit():
        raise ValueError(f"endpoint must be host:port, got {endpoint!r}")
    return host, int(port)


class HttpTransport:
    def __init__(self, timeout=10.0):
        self.timeout = timeout

    def request(self, endpoint, method, path, body=b""):
        host, port = split_endpoint(endpoint)
        conn = http.client.HTTPConnection(host, port, timeout=self.timeout)
        try:
            conn.request(method, path, body=body,
                         headers={"Content-Type": "application/octet-stream"})
            return conn.getresponse().read()
        except (OSError, http.client.HTTPException) as exc:
            raise EndpointUnreachable(endpoint, str(exc)) from None
        finally:
            conn.close()

    def post(self, endpoint, path, body):
        return self.request(endpoint, "POST", path, body)


class LocalTransport:
    """Routes requests to in-process apps keyed by endpoint string."""

    def __init__(self, apps=None):
        self.apps = dict(apps or {})

    def request(self, endpoint, method, path, body=b""):
        app = self.apps.get(endpoint)
        if app is None:
            raise EndpointUnreachable(endpoint, "no route to host")
        url = urlsplit(path)
        _, resp = app(method, url.path, _query(url.query), bytes(body))
        return resp

    def post(self, endpoint, path, body):
        return self.request(endpoint, "POST", path, body)


def _query(qs):
    return {k: v[-1] for k, v in parse_qs(qs).items()}


def _handler_for(app):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def _dispatch(self):
            length = int(self.headers.get("Content-Length") or 0)
            body = self.rfile.read(length) if length else b""
            url = urlsplit(self.path)
            try:
                status, resp = app(self.command, url.path, _query(url.query), body)
            except Exception:
                log.exception("unhandled error serving %s", self.path)
                status, resp = 500, b'{"code":"INTERNAL","detail":"internal error"}'
            self.send_response(status)
            self.send_header("Content-Type", "application/octet-stream")
            self.send_header("Content-Length", str(len(resp)))
            self.end_headers()
            self.wfile.write(resp)

        do_GET = do_POST = _dispatch

        def log_message(self, fmt, *args):
            log.debug("%s " + fmt, self.address_string(), *args)

    return Handler


def serve(app, host="127.0.0.1", port=0):
    """Create an HTTP server for ``app``; the caller runs ``serve_forever``."""
    server = ThreadingHTTPServer((host, port), _handler_for(app))
    server.daemon_threads = True
    return server


def serve_in_background(app, host="127.0.0.1", port=0):
    """Start serving on a daemon thread; returns ``(server, "host:port")``."""
    server = serve(app, host, port)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, f"{host}:{server.server_address[1]}"
