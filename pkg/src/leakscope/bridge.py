"""Line-delimited JSON bridge to an external in-context classifier.

Wire protocol (one JSON object per line, one request in flight)::

    {"op":"fit","features":[[...]],"labels":[...],"classes":[...]}
        -> {"session":"<id>"}
    {"op":"predict","session":"<id>","features":[[...]]}
        -> {"probabilities":[[...]]}

Probability columns follow ``classes`` (the fitted label order).  A reply
carrying ``{"error": ...}`` or any other shape is a protocol error; the
server's text is surfaced unchanged.

Endpoints are ``host:port``, ``tcp://host:port`` or ``unix:/path``.
:class:`BridgeServer` is a small reference server backed by a built-in
classifier, useful for wiring tests and demos.
"""

from __future__ import annotations

import json
import socket
import socketserver
import threading
import uuid
from typing import Any

import numpy as np

from .errors import AdapterTimeout, BridgeProtocolError, BridgeUnavailable

DEFAULT_TIMEOUT = 30.0


def _address(endpoint: str):
    if endpoint.startswith("unix:"):
        return socket.AF_UNIX, endpoint[len("unix:") :]
    if endpoint.startswith("tcp://"):
        endpoint = endpoint[len("tcp://") :]
    host, sep, port = endpoint.rpartition(":")
    if not sep or not port.isdigit():
        raise BridgeUnavailable(f"bad bridge endpoint {endpoint!r}")
    return socket.AF_INET, (host or "127.0.0.1", int(port))


class BridgeClient:
    """One connection, one in-flight request at a time."""

    def __init__(self, endpoint: str, timeout: float = DEFAULT_TIMEOUT):
        self.endpoint = endpoint
        self.timeout = timeout
        self._lock = threading.Lock()
        family, addr = _address(endpoint)
        try:
            self._sock = socket.socket(family, socket.SOCK_STREAM)
            self._sock.settimeout(timeout)
            self._sock.connect(addr)
        except OSError as exc:
            raise BridgeUnavailable(f"cannot reach bridge at {endpoint}: {exc}") from exc
        self._reader = self._sock.makefile("r", encoding="utf-8")

    def close(self) -> None:
        try:
            self._reader.close()
            self._sock.close()
        except OSError:
            pass

    def request(self, payload: dict) -> dict:
        with self._lock:
            try:
                self._sock.sendall((json.dumps(payload, allow_nan=False) + "\n").encode())
                line = self._reader.readline()
            except socket.timeout as exc:
                raise AdapterTimeout(f"bridge at {self.endpoint} timed out after {self.timeout}s") from exc
            except OSError as exc:
                raise BridgeUnavailable(f"bridge connection failed: {exc}") from exc
        if not line:
            raise BridgeUnavailable("bridge closed the connection")
        try:
            reply = json.loads(line)
        except json.JSONDecodeError as exc:
            raise BridgeProtocolError(f"non-JSON bridge reply: {line.strip()!r}") from exc
        if not isinstance(reply, dict):
            raise BridgeProtocolError(f"unexpected bridge reply: {line.strip()!r}")
        if "error" in reply:
            raise BridgeProtocolError(str(reply["error"]))
        return reply

    def fit(self, features: np.ndarray, labels: list, classes: list) -> str:
        reply = self.request(
            {"op": "fit", "features": np.asarray(features).tolist(), "labels": list(labels), "classes": list(classes)}
        )
        session = reply.get("session")
        if not isinstance(session, str) or set(reply) != {"session"}:
            raise BridgeProtocolError(f"unexpected fit reply: {reply!r}")
        return session

    def predict(self, session: str, features: np.ndarray, n_classes: int) -> np.ndarray:
        reply = self.request({"op": "predict", "session": session, "features": np.asarray(features).tolist()})
        if set(reply) != {"probabilities"}:
            raise BridgeProtocolError(f"unexpected predict reply: {reply!r}")
        try:
            probs = np.asarray(reply["probabilities"], dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise BridgeProtocolError("probabilities are not a numeric matrix") from exc
        if probs.shape != (len(features), n_classes):
            raise BridgeProtocolError(f"probabilities shape {probs.shape} != {(len(features), n_classes)}")
        if not np.isfinite(probs).all() or (probs < 0).any() or (probs.sum(axis=1) <= 0).any():
            raise BridgeProtocolError("probabilities must be finite, non-negative, with positive row sums")
        return probs / probs.sum(axis=1, keepdims=True)


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        for line in self.rfile:
            try:
                reply = self.server.dispatch(json.loads(line))
            except Exception as exc:  # reported to the client verbatim
                reply = {"error": f"{type(exc).__name__}: {exc}"}
            self.wfile.write((json.dumps(reply) + "\n").encode())


class BridgeServer(socketserver.ThreadingTCPServer):
    """Reference bridge server delegating to a built-in backend.

    ``max_classes`` mimics foundation models with a class limit: larger
    contexts are answered with an error reply.
    """

    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, kind: str = "nearest_centroid", parameters: dict | None = None, max_classes: int | None = None, host: str = "127.0.0.1", port: int = 0):
        super().__init__((host, port), _Handler)
        self.kind = kind
        self.parameters = parameters or {}
        self.max_classes = max_classes
        self.sessions: dict[str, Any] = {}
        self._thread: threading.Thread | None = None

    @property
    def endpoint(self) -> str:
        host, port = self.server_address[:2]
        return f"{host}:{port}"

    def dispatch(self, req: dict) -> dict:
        from .classify import ClassifierBackendSpec, fit_context, predict_proba
        from .rocket import FeatureMatrix

        op = req.get("op")
        if op == "fit":
            classes = req.get("classes") or list(dict.fromkeys(req["labels"]))
            if self.max_classes is not None and len(classes) > self.max_classes:
                raise ValueError(f"{len(classes)} classes exceeds the supported maximum of {self.max_classes}")
            rows = np.asarray(req["features"], dtype=np.float64)
            fm = FeatureMatrix(rows, req["labels"], rows.shape[1])
            clf = fit_context(ClassifierBackendSpec(self.kind, self.parameters), fm, label_set=classes)
            session = uuid.uuid4().hex
            self.sessions[session] = clf
            return {"session": session}
        if op == "predict":
            clf = self.sessions[req["session"]]
            rows = np.asarray(req["features"], dtype=np.float64).reshape(-1, clf.feature_dim)
            return {"probabilities": predict_proba(clf, rows).tolist()}
        raise ValueError(f"unknown op {op!r}")

    def start(self) -> "BridgeServer":
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self.shutdown()
        self.server_close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()
