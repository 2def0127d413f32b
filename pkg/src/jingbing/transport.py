"""Authenticated TCP transport.

A FramedChannel moves whole frames over a connected socket.  serve() is
the long-lived service loop: it accepts one connection at a time, runs
the mutual handshake, executes exactly one protocol session, writes the
dually signed transcript, and goes back to accepting.  A failing session
is logged and never takes the loop down.  run_client() is the matching
single-session client.

Two rules shape the error handling:

* Before both auth proofs have verified, a failing peer learns nothing:
  the connection just closes.  Sending anything (even an Error frame)
  would put a non-handshake frame on the wire ahead of authentication.
* After authentication, failures are answered with an Error frame
  carrying a coarse reason code from a fixed registry, never free text.

Transcript signatures ride inside the last two frames.  The chain covers
the four handshake frames and the protocol messages through the result;
the result frame enters the chain without its trailing signature (a
signature cannot cover itself), so both sides sign the same chain head.
The client's counter-signature travels in the Close frame, which is the
attestation of the chain rather than part of it.
"""

from __future__ import annotations

import logging
import random
import socket
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import paillier, pki, protocol, wire
from .errors import (
    HandshakeFailed,
    JingBingError,
    ProtocolViolation,
    RemoteProtocolError,
)

log = logging.getLogger("jingbing.transport")

DEFAULT_PORT = 7155

# generous per-connection socket timeout so a hung peer cannot wedge the
# service loop forever
SESSION_TIMEOUT = 60.0


class FramedChannel:
    """Blocking frame I/O over a connected socket.

    send_frame returns the raw bytes written and recv_frame returns them
    alongside the decoded type and payload, so callers can feed the
    exact wire bytes into a transcript.
    """

    def __init__(self, sock: socket.socket):
        self.sock = sock
        self._rfile = sock.makefile("rb")

    def send_frame(self, msg_type: int, payload: bytes) -> bytes:
        raw = wire.frame_encode(msg_type, payload)
        self.sock.sendall(raw)
        return raw

    def recv_frame(self) -> tuple[int, bytes, bytes]:
        return wire.frame_decode_raw(self._rfile)

    def close(self) -> None:
        for closer in (self._rfile.close, self.sock.close):
            try:
                closer()
            except OSError:
                pass


def _transcript_path(directory, start_time: int, subject: str) -> Path:
    base = Path(directory)
    base.mkdir(parents=True, exist_ok=True)
    path = base / f"{start_time}-{subject}.transcript"
    # same peer twice within a second: keep both attestations
    k = 1
    while path.exists():
        k += 1
        path = base / f"{start_time}-{subject}-{k}.transcript"
    return path


# --- server ------------------------------------------------------------------


@dataclass
class ServerConfig:
    cert: pki.Certificate
    secret: pki.Ed25519PrivateKey
    root: pki.Certificate
    dataset: protocol.Dataset
    limits: protocol.Limits = protocol.DEFAULT_LIMITS
    transcript_dir: str | None = "."
    max_sessions: int | None = None
    rng: random.Random | None = None
    # ready is set once the socket is listening; shutdown is polled
    # between connections
    ready: threading.Event = field(default_factory=threading.Event)
    shutdown: threading.Event = field(default_factory=threading.Event)
    bound_port: int | None = None


def serve(listen_addr: tuple[str, int], config: ServerConfig) -> int:
    """Accept loop; one session at a time.  Returns connections handled.

    Runs until config.shutdown is set or max_sessions connections have
    been accepted.  Binding to port 0 picks a free port, published via
    config.bound_port before config.ready is set.
    """
    served = 0
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as srv:
        srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        srv.bind(listen_addr)
        srv.listen(1)
        srv.settimeout(0.25)
        config.bound_port = srv.getsockname()[1]
        config.ready.set()
        log.info("listening on %s:%d", listen_addr[0], config.bound_port)
        while not config.shutdown.is_set():
            if config.max_sessions is not None and served >= config.max_sessions:
                break
            try:
                conn, peer = srv.accept()
            except TimeoutError:
                continue
            served += 1
            try:
                _serve_connection(conn, peer, config)
            except Exception:
                log.exception("connection %d aborted unexpectedly", served)
    log.info("service loop done after %d connections", served)
    return served


def _serve_connection(conn: socket.socket, peer, config: ServerConfig) -> None:
    start_time = int(time.time())
    conn.settimeout(SESSION_TIMEOUT)
    channel = FramedChannel(conn)
    try:
        try:
            hs = pki.mutual_handshake(
                "server", config.cert, config.secret, config.root,
                channel, rng=config.rng,
            )
        except (HandshakeFailed, OSError) as exc:
            # unauthenticated peer: close without revealing anything
            log.warning("handshake with %s failed: %s", peer, exc)
            return
        log.info("session start: %s at %s", hs.peer_subject, peer)
        try:
            _run_session(channel, hs, start_time, config)
        except OSError as exc:
            log.warning("session with %s lost: %s", hs.peer_subject, exc)
        except JingBingError as exc:
            log.warning("session with %s failed: %s", hs.peer_subject, exc)
            try:
                channel.send_frame(
                    wire.MSG_ERROR,
                    wire.encode_error(wire.reason_for_exception(exc)),
                )
            except OSError:
                pass
    finally:
        channel.close()


def _run_session(
    channel: FramedChannel,
    hs: pki.HandshakeResult,
    start_time: int,
    config: ServerConfig,
) -> None:
    t = hs.transcript

    ftype, payload, raw = channel.recv_frame()
    if ftype != wire.MSG_START_REQUEST:
        raise ProtocolViolation(f"expected start request, got type {ftype:#x}")
    pki.transcript_append(t, "c2s", raw)
    req = wire.decode_start_request(payload)
    state, shuffled = protocol.server_on_start(
        config.dataset, req, rng=config.rng, limits=config.limits
    )

    raw = channel.send_frame(wire.MSG_SERVER_SET, wire.encode_server_set(shuffled))
    pki.transcript_append(t, "s2c", raw)

    ftype, payload, raw = channel.recv_frame()
    if ftype != wire.MSG_CLIENT_ROUND_ONE:
        raise ProtocolViolation(f"expected round one, got type {ftype:#x}")
    pki.transcript_append(t, "c2s", raw)
    ctx = wire.CipherContext.from_start_request(req)
    round_one = wire.decode_client_round_one(payload, ctx)

    result = protocol.server_round_two(state, round_one, rng=config.rng)
    core = wire.encode_server_result_core(result)
    # chain the result without its own signature, then sign the head
    pki.transcript_append(t, "s2c", wire.frame_encode(wire.MSG_SERVER_RESULT, core))
    server_sig = pki.transcript_finalize(config.secret, t)
    channel.send_frame(wire.MSG_SERVER_RESULT, core + server_sig)

    ftype, payload, _ = channel.recv_frame()
    if ftype != wire.MSG_CLOSE:
        raise ProtocolViolation(f"expected close, got type {ftype:#x}")
    client_sig = wire.decode_close(payload)
    pki.transcript_verify(hs.peer_cert, t, client_sig)

    if config.transcript_dir is not None:
        path = _transcript_path(config.transcript_dir, start_time, hs.peer_subject)
        path.write_bytes(pki.transcript_serialize(t, client_sig, server_sig))
        log.info("transcript written: %s", path)
    log.info(
        "session done: %s, cardinality %d, %d aggregates",
        hs.peer_subject, result.cardinality, len(result.aggregates),
    )


# --- client ------------------------------------------------------------------


@dataclass
class ClientConfig:
    cert: pki.Certificate
    secret: pki.Ed25519PrivateKey
    root: pki.Certificate
    dataset: protocol.Dataset
    spec: protocol.AggregationSpec
    limits: protocol.Limits = protocol.DEFAULT_LIMITS
    paillier_bits: int = paillier.DEFAULT_KEY_BITS
    transcript_dir: str | None = None
    rng: random.Random | None = None


def _recv_expected(channel: FramedChannel, expected: int) -> tuple[bytes, bytes]:
    ftype, payload, raw = channel.recv_frame()
    if ftype == wire.MSG_ERROR:
        code = wire.decode_error(payload)
        raise RemoteProtocolError(code, wire.describe_reason(code))
    if ftype != expected:
        raise ProtocolViolation(
            f"expected frame type {expected:#x}, got {ftype:#x}"
        )
    return payload, raw


def run_client(
    addr: tuple[str, int], config: ClientConfig
) -> protocol.ProtocolOutput:
    """One full protocol run against a listening server."""
    # validation and key generation precede any network activity, so a
    # bad dataset is rejected before a single byte leaves the machine
    state, req = protocol.client_start(
        config.spec,
        config.dataset,
        rng=config.rng,
        limits=config.limits,
        paillier_bits=config.paillier_bits,
    )

    start_time = int(time.time())
    sock = socket.create_connection(addr)
    sock.settimeout(SESSION_TIMEOUT)
    channel = FramedChannel(sock)
    try:
        hs = pki.mutual_handshake(
            "client", config.cert, config.secret, config.root,
            channel, rng=config.rng,
        )
        t = hs.transcript

        raw = channel.send_frame(
            wire.MSG_START_REQUEST, wire.encode_start_request(req)
        )
        pki.transcript_append(t, "c2s", raw)

        payload, raw = _recv_expected(channel, wire.MSG_SERVER_SET)
        pki.transcript_append(t, "s2c", raw)
        shuffled = wire.decode_server_set(payload)

        round_one = protocol.client_round_one(state, shuffled, rng=config.rng)
        raw = channel.send_frame(
            wire.MSG_CLIENT_ROUND_ONE, wire.encode_client_round_one(round_one)
        )
        pki.transcript_append(t, "c2s", raw)

        payload, _ = _recv_expected(channel, wire.MSG_SERVER_RESULT)
        ctx = wire.CipherContext.from_start_request(req)
        result, server_sig, core = wire.decode_server_result(payload, ctx)
        pki.transcript_append(
            t, "s2c", wire.frame_encode(wire.MSG_SERVER_RESULT, core)
        )
        # authenticate the result before acting on it
        pki.transcript_verify(hs.peer_cert, t, server_sig)

        output = protocol.client_finalize(state, result)

        client_sig = pki.transcript_finalize(config.secret, t)
        channel.send_frame(wire.MSG_CLOSE, wire.encode_close(client_sig))

        if config.transcript_dir is not None:
            path = _transcript_path(
                config.transcript_dir, start_time, hs.peer_subject
            )
            path.write_bytes(pki.transcript_serialize(t, client_sig, server_sig))
            log.info("transcript written: %s", path)
        return output
    finally:
        channel.close()
