"""HTTP/JSON graph environment exposing the four interaction functions.

The graph and index are loaded once and never mutated, so request handlers
run concurrently without locking.
"""
from __future__ import annotations

import json
import logging
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any
from urllib.parse import unquote, urlsplit

from .graph import Graph, UnknownEdgeTypeError, UnknownFeatureError, UnknownNodeError
from .retrieval import RetrievalError

logger = logging.getLogger(__name__)

MAX_BODY = 1 << 20


class _HttpError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status, self.code, self.message = status, code, message


class EnvHandler(BaseHTTPRequestHandler):
    server_version = "graphcot-env"
    protocol_version = "HTTP/1.1"

    # set on the subclass built by make_server
    graph: Graph
    index: Any

    def log_message(self, fmt: str, *args: Any) -> None:
        logger.debug("%s %s", self.address_string(), fmt % args)

    def _send(self, status: int, body: dict) -> None:
        data = json.dumps(body, ensure_ascii=False, sort_keys=True).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _error(self, err: _HttpError) -> None:
        self._send(err.status, {"error": {"code": err.code, "message": err.message}})

    def _segments(self) -> list[str]:
        path = urlsplit(self.path).path
        return [unquote(s) for s in path.strip("/").split("/")] if path.strip("/") else []

    def do_GET(self) -> None:
        try:
            self._send(HTTPStatus.OK, self._get(self._segments()))
        except _HttpError as err:
            self._error(err)
        except UnknownNodeError as exc:
            self._error(_HttpError(HTTPStatus.NOT_FOUND, "unknown_node", str(exc)))
        except UnknownFeatureError as exc:
            self._error(_HttpError(HTTPStatus.NOT_FOUND, "unknown_feature", str(exc)))
        except UnknownEdgeTypeError as exc:
            self._error(_HttpError(HTTPStatus.NOT_FOUND, "unknown_edge_type", str(exc)))

    def _get(self, seg: list[str]) -> dict:
        g = self.graph
        if seg == ["healthz"]:
            return {"nodes": len(g)}
        if len(seg) == 4 and seg[0] == "node":
            _, node, what, arg = seg
            if what == "feature":
                return {"value": g.node_feature(node, arg)}
            if what == "neighbors":
                return {"neighbors": g.neighbor_check(node, arg)}
            if what == "degree":
                return {"degree": g.node_degree(node, arg)}
        raise _HttpError(HTTPStatus.NOT_FOUND, "not_found", f"no route for GET {self.path}")

    def do_POST(self) -> None:
        try:
            if self._segments() != ["retrieve"]:
                raise _HttpError(HTTPStatus.NOT_FOUND, "not_found", f"no route for POST {self.path}")
            query, k = self._retrieve_args()
            try:
                hits = self.index.retrieve(query, k)
            except RetrievalError as exc:
                raise _HttpError(HTTPStatus.SERVICE_UNAVAILABLE, "retrieval_failed", str(exc)) from None
            self._send(
                HTTPStatus.OK,
                {"hits": [{"node": h.node, "score": h.score, "rank": h.rank} for h in hits]},
            )
        except _HttpError as err:
            self._error(err)

    def _retrieve_args(self) -> tuple[str, int]:
        try:
            length = int(self.headers.get("Content-Length", "0"))
        except ValueError:
            raise _HttpError(HTTPStatus.BAD_REQUEST, "bad_request", "invalid Content-Length") from None
        if length <= 0 or length > MAX_BODY:
            raise _HttpError(HTTPStatus.BAD_REQUEST, "bad_request", "request body required (max 1 MiB)")
        raw = self.rfile.read(length)
        try:
            body = json.loads(raw)
        except (json.JSONDecodeError, UnicodeDecodeError):
            raise _HttpError(HTTPStatus.BAD_REQUEST, "bad_request", "body is not valid JSON") from None
        if not isinstance(body, dict) or not isinstance(body.get("query"), str):
            raise _HttpError(HTTPStatus.BAD_REQUEST, "bad_request", 'body must be {"query": str, "k": int}')
        k = body.get("k", 1)
        if isinstance(k, bool) or not isinstance(k, int) or k < 1:
            raise _HttpError(HTTPStatus.BAD_REQUEST, "bad_request", "k must be a positive integer")
        return body["query"], k


def make_server(g: Graph, index: Any, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    """Bound (not yet serving) server; port 0 picks a free port."""
    handler = type("BoundEnvHandler", (EnvHandler,), {"graph": g, "index": index})
    server = ThreadingHTTPServer((host, port), handler)
    server.daemon_threads = True
    return server


def parse_bind(bind: str) -> tuple[str, int]:
    host, sep, port = bind.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"bind address must be HOST:PORT, got {bind!r}")
    return host or "127.0.0.1", int(port)


def serve_env(g: Graph, index: Any, bind: str = "127.0.0.1:8080") -> None:
    host, port = parse_bind(bind)
    server = make_server(g, index, host, port)
    logger.info("serving %d nodes on http://%s:%d", len(g), *server.server_address[:2])
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
