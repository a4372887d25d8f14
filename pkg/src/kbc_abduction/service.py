"""Line-oriented JSON scoring server and client.

Wire format, one UTF-8 JSON object per line::

    request   {"id": int, "pairs": [[str, str], ...], "theta": float?}
    success   {"id": int, "axioms": [{"s": str, "r": str, "o": str, "score": float}, ...]}
    failure   {"id": int, "error": str}

The server scores both orientations of each pair under every relation and
answers with the provenance triplets of the axioms clearing ``theta``.
Scores are rounded to 9 decimal places on the wire.
"""

from __future__ import annotations

import itertools
import json
import logging
import signal
import socket
import socketserver
import threading
import time
from dataclasses import dataclass, field

from .abduction import (DEFAULT_THETA, CandidatePair, Scorer, ScoredTriplet, ScorerError,
                        generate_axioms, score_pairs)

logger = logging.getLogger(__name__)

MAX_PAIRS = 1_000_000
SCORE_DIGITS = 9


class ProtocolError(ValueError):
    def __init__(self, msg, id=-1):
        super().__init__(msg)
        self.id = id


class RemoteScorerError(ScorerError):
    pass


@dataclass
class ScoreRequest:
    id: int
    pairs: list
    theta: float | None = None


@dataclass
class ScoreResponse:
    id: int
    axioms: list = field(default_factory=list)
    error: str | None = None


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False)


def encode_request(req: ScoreRequest) -> str:
    obj = {"id": req.id, "pairs": [list(p) for p in req.pairs]}
    if req.theta is not None:
        obj["theta"] = req.theta
    return _dumps(obj)


def decode_request(line) -> ScoreRequest:
    """Validate one request line; raises ProtocolError carrying the id if known."""
    try:
        obj = json.loads(line)
    except (ValueError, UnicodeDecodeError) as exc:
        raise ProtocolError(f"malformed JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise ProtocolError("request must be a JSON object")
    rid = obj.get("id")
    if not isinstance(rid, int) or isinstance(rid, bool):
        raise ProtocolError("request id must be an integer")
    pairs = obj.get("pairs")
    if not isinstance(pairs, list):
        raise ProtocolError("'pairs' must be a list", rid)
    if not pairs:
        raise ProtocolError("'pairs' is empty", rid)
    if len(pairs) > MAX_PAIRS:
        raise ProtocolError(f"too many pairs ({len(pairs)} > {MAX_PAIRS})", rid)
    for p in pairs:
        if not (isinstance(p, list) and len(p) == 2
                and all(isinstance(x, str) and x for x in p)):
            raise ProtocolError("each pair must be [lemma, lemma]", rid)
    theta = obj.get("theta")
    if theta is not None:
        if isinstance(theta, bool) or not isinstance(theta, (int, float)) \
                or not 0.0 <= theta <= 1.0:
            raise ProtocolError("'theta' must be a number in [0, 1]", rid)
        theta = float(theta)
    return ScoreRequest(rid, [tuple(p) for p in pairs], theta)


def encode_response(resp: ScoreResponse) -> str:
    if resp.error is not None:
        return _dumps({"id": resp.id, "error": resp.error})
    return _dumps({"id": resp.id, "axioms": [
        {"s": t.s, "r": t.r, "o": t.o, "score": round(t.score, SCORE_DIGITS)}
        for t in resp.axioms]})


def decode_response(line) -> ScoreResponse:
    try:
        obj = json.loads(line)
        if "error" in obj:
            return ScoreResponse(obj["id"], error=str(obj["error"]))
        return ScoreResponse(obj["id"], [
            ScoredTriplet(a["s"], a["r"], a["o"], float(a["score"])) for a in obj["axioms"]])
    except (ValueError, KeyError, TypeError) as exc:
        raise ProtocolError(f"malformed response: {exc}") from None


def handle_request_line(line, scorer: Scorer, theta_default: float = DEFAULT_THETA) -> str:
    """Compute the response line for one request line (no trailing newline)."""
    try:
        req = decode_request(line)
    except ProtocolError as exc:
        return encode_response(ScoreResponse(exc.id, error=str(exc)))
    theta = theta_default if req.theta is None else req.theta
    try:
        pairs = [CandidatePair(a, b) for a, b in req.pairs]
        axioms = generate_axioms(score_pairs(scorer, pairs), theta)
    except Exception as exc:  # never let one request take the connection down
        logger.exception("request %s failed", req.id)
        return encode_response(ScoreResponse(req.id, error=f"internal error: {exc}"))
    return encode_response(ScoreResponse(req.id, [ax.provenance for ax in axioms]))


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        conn = self.request
        conn.settimeout(0.25)
        buf = b""
        while True:
            nl = buf.find(b"\n")
            if nl >= 0:
                line, buf = buf[:nl], buf[nl + 1:]
                if not line.strip():
                    continue
                t0 = time.perf_counter()
                out = handle_request_line(line, self.server.scorer, self.server.theta)
                conn.sendall(out.encode("utf-8") + b"\n")
                logger.debug("request handled in %.3f ms", (time.perf_counter() - t0) * 1e3)
                continue
            if self.server.stopping.is_set():
                return
            try:
                chunk = conn.recv(65536)
            except socket.timeout:
                continue
            except OSError:
                return
            if not chunk:
                return
            buf += chunk


class ScoringServer(socketserver.ThreadingTCPServer):
    """One thread per connection over a shared, read-only scorer."""

    allow_reuse_address = True
    daemon_threads = False
    block_on_close = True

    def __init__(self, address, scorer: Scorer, theta: float = DEFAULT_THETA):
        self.scorer = scorer
        self.theta = theta
        self.stopping = threading.Event()
        super().__init__(address, _Handler)

    @property
    def endpoint(self) -> str:
        host, port = self.server_address[:2]
        return f"{host}:{port}"

    def stop(self):
        """Stop accepting, let handlers finish the request in hand, close."""
        self.stopping.set()
        self.shutdown()
        self.server_close()


def start_server(scorer: Scorer, host="127.0.0.1", port=0,
                 theta: float = DEFAULT_THETA) -> ScoringServer:
    """Run a server on a background thread and return it (``port=0`` picks one)."""
    server = ScoringServer((host, port), scorer, theta)
    threading.Thread(target=server.serve_forever, name="scoring-server",
                     daemon=True).start()
    return server


def serve(scorer: Scorer, host="127.0.0.1", port=7711, theta: float = DEFAULT_THETA):
    """Serve in the foreground until SIGINT/SIGTERM."""
    server = ScoringServer((host, port), scorer, theta)

    def on_signal(signum, frame):
        logger.info("signal %d received, draining", signum)
        server.stopping.set()
        threading.Thread(target=server.shutdown, daemon=True).start()

    if threading.current_thread() is threading.main_thread():
        for sig in (signal.SIGINT, signal.SIGTERM):
            signal.signal(sig, on_signal)
    logger.info("scoring server listening on %s", server.endpoint)
    try:
        server.serve_forever()
    finally:
        server.server_close()


def parse_endpoint(endpoint: str):
    host, sep, port = endpoint.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"endpoint must be host:port, got {endpoint!r}")
    return host or "127.0.0.1", int(port)


class RemoteScorer(Scorer):
    """Client of a :class:`ScoringServer`; one persistent connection."""

    def __init__(self, endpoint: str, timeout: float = 10.0):
        self.endpoint = endpoint
        self.address = parse_endpoint(endpoint)
        self.timeout = timeout
        self._sock = None
        self._buf = b""
        self._ids = itertools.count(1)
        self._lock = threading.Lock()

    def _connect(self):
        try:
            self._sock = socket.create_connection(self.address, timeout=self.timeout)
        except OSError as exc:
            raise RemoteScorerError(f"cannot reach {self.endpoint}: {exc}") from None
        self._buf = b""

    def close(self):
        if self._sock is not None:
            self._sock.close()
            self._sock = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _roundtrip(self, req: ScoreRequest) -> ScoreResponse:
        with self._lock:
            if self._sock is None:
                self._connect()
            try:
                self._sock.sendall(encode_request(req).encode("utf-8") + b"\n")
                while b"\n" not in self._buf:
                    chunk = self._sock.recv(65536)
                    if not chunk:
                        raise RemoteScorerError(f"{self.endpoint} closed the connection")
                    self._buf += chunk
            except OSError as exc:
                self.close()
                raise RemoteScorerError(f"{self.endpoint}: {exc}") from None
            line, _, self._buf = self._buf.partition(b"\n")
        resp = decode_response(line)
        if resp.error is not None:
            raise RemoteScorerError(f"server error: {resp.error}")
        if resp.id != req.id:
            raise RemoteScorerError(f"response id {resp.id} does not match request {req.id}")
        return resp

    def candidates(self, pairs, theta):
        if not pairs:
            return []
        req = ScoreRequest(next(self._ids), [tuple(p) for p in pairs], theta)
        return self._roundtrip(req).axioms

    def score_triplet(self, s, r, o):
        # the wire only carries thresholded, axiom-deduplicated candidates
        raise NotImplementedError("RemoteScorer answers candidates() queries only")


def remote_score(endpoint: str, pairs, theta: float = DEFAULT_THETA) -> list:
    with RemoteScorer(endpoint) as client:
        return client.candidates(pairs, theta)
