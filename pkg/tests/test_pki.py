import hashlib
import random
import socket
import struct
import threading
import time

import pytest

from jingbing import pki, transport
from jingbing.errors import (
    BadCertificate,
    BadSignature,
    Expired,
    HandshakeFailed,
    InvalidSubject,
    InvalidValidity,
    NotYetValid,
)

from conftest import RecordingChannel

NOW = int(time.time())


# --- certificates ------------------------------------------------------------


def test_root_is_self_signed(ca):
    assert ca.root.subject == "ROOT"
    assert pki.verify_cert(ca.root, ca.root, NOW) == "ROOT"


def test_two_roots_differ():
    _, r1 = pki.ca_init(random.Random(1))
    _, r2 = pki.ca_init(random.Random(2))
    assert r1.public_key != r2.public_key
    with pytest.raises(BadSignature):
        pki.verify_cert(r1, r2, NOW)


def test_issue_and_verify_state_code(ca):
    key, pub = pki.gen_keypair(random.Random(5))
    cert = pki.issue_cert(ca.key, "CA", pub, NOW - 10, NOW + 100)
    assert pki.verify_cert(ca.root, cert, NOW) == "CA"


@pytest.mark.parametrize("subject", ["", "a", "X", "AB1", "A" * 33, "ab"])
def test_bad_subjects_rejected(ca, subject):
    _, pub = pki.gen_keypair(random.Random(6))
    with pytest.raises(InvalidSubject):
        pki.issue_cert(ca.key, subject, pub, NOW, NOW + 100)


def test_inverted_window_rejected(ca):
    _, pub = pki.gen_keypair(random.Random(7))
    with pytest.raises(InvalidValidity):
        pki.issue_cert(ca.key, "TX", pub, NOW + 100, NOW)


def test_validity_window_enforced(ca):
    _, pub = pki.gen_keypair(random.Random(8))
    cert = pki.issue_cert(ca.key, "NV", pub, NOW + 50, NOW + 100)
    with pytest.raises(NotYetValid):
        pki.verify_cert(ca.root, cert, NOW)
    with pytest.raises(Expired):
        pki.verify_cert(ca.root, cert, NOW + 200)
    assert pki.verify_cert(ca.root, cert, NOW + 75) == "NV"


def test_signature_checked_before_window(ca, foreign_ca):
    # a foreign, expired certificate must fail on the signature, not the clock
    _, pub = pki.gen_keypair(random.Random(9))
    cert = pki.issue_cert(foreign_ca.key, "WY", pub, NOW - 200, NOW - 100)
    with pytest.raises(BadSignature):
        pki.verify_cert(ca.root, cert, NOW)


def test_tampered_field_breaks_signature(ca):
    cert = ca.alpha.cert
    forged = pki.Certificate(
        cert.version, cert.subject, cert.public_key, cert.serial,
        cert.not_before, cert.not_after + 3600, cert.signature,
    )
    with pytest.raises(BadSignature):
        pki.verify_cert(ca.root, forged, NOW)


def test_certificate_serialization_roundtrip(ca):
    raw = ca.alpha.cert.to_bytes()
    back = pki.Certificate.from_bytes(raw)
    assert back == ca.alpha.cert
    assert back.fingerprint() == ca.alpha.cert.fingerprint()
    with pytest.raises(BadCertificate):
        pki.Certificate.from_bytes(raw + b"\x00")
    with pytest.raises(BadCertificate):
        pki.Certificate.from_bytes(raw[:-1])
    with pytest.raises(BadCertificate):
        pki.Certificate.from_bytes(b"")


def test_armor_file_roundtrip(ca, tmp_path):
    cert_path = tmp_path / "alpha.cert"
    key_path = tmp_path / "alpha.key"
    pki.save_cert(cert_path, ca.alpha.cert)
    pki.save_secret(key_path, ca.alpha.secret)
    assert pki.load_cert(cert_path) == ca.alpha.cert
    loaded = pki.load_secret(key_path)
    assert loaded.private_bytes_raw() == ca.alpha.secret.private_bytes_raw()
    assert (key_path.stat().st_mode & 0o777) == 0o600
    text = cert_path.read_text()
    assert text.startswith("-----BEGIN JINGBING CERT-----")
    with pytest.raises(BadCertificate):
        pki.dearmor("JINGBING SECRET KEY", text)


# --- transcripts -------------------------------------------------------------


def frame(t, payload):
    return struct.pack(">I", 1 + len(payload)) + bytes([t]) + payload


def test_transcript_deterministic_and_avalanche():
    sid = hashlib.sha256(b"session").digest()
    t1 = pki.SignedTranscript(sid)
    t2 = pki.SignedTranscript(sid)
    assert t1.running == t2.running  # init depends only on the session id
    assert pki.SignedTranscript(b"\x00" * 32).running != t1.running
    for t in (t1, t2):
        pki.transcript_append(t, "c2s", frame(0x01, b"hello"))
        pki.transcript_append(t, "s2c", frame(0x01, b"again"))
    assert t1.running == t2.running
    t3 = pki.SignedTranscript(sid)
    pki.transcript_append(t3, "c2s", frame(0x01, b"hellp"))
    pki.transcript_append(t3, "s2c", frame(0x01, b"again"))
    assert t3.running != t1.running


def test_transcript_direction_matters():
    sid = b"\x11" * 32
    t1 = pki.SignedTranscript(sid)
    t2 = pki.SignedTranscript(sid)
    pki.transcript_append(t1, "c2s", frame(0x10, b"x"))
    pki.transcript_append(t2, "s2c", frame(0x10, b"x"))
    assert t1.running != t2.running


def test_transcript_sign_verify_and_tamper(ca):
    t = pki.SignedTranscript(b"\x22" * 32)
    for i in range(4):
        pki.transcript_append(t, "c2s" if i % 2 == 0 else "s2c", frame(0x10 + i, bytes([i])))
    sig = pki.transcript_finalize(ca.alpha.secret, t)
    assert pki.transcript_verify(ca.alpha.cert, t, sig)
    with pytest.raises(BadSignature):
        pki.transcript_verify(ca.bravo.cert, t, sig)
    # dropping an entry changes the head
    shorter = pki.SignedTranscript(t.session_id)
    for d, mt, h in t.entries[:-1]:
        shorter.entries.append((d, mt, h))
        shorter.running = hashlib.sha256(shorter.running + bytes([d, mt]) + h).digest()
    with pytest.raises(BadSignature):
        pki.transcript_verify(ca.alpha.cert, shorter, sig)


def test_transcript_serialization_roundtrip(ca):
    t = pki.SignedTranscript(b"\x33" * 32)
    pki.transcript_append(t, "c2s", frame(0x10, b"req"))
    pki.transcript_append(t, "s2c", frame(0x11, b"resp"))
    csig = pki.transcript_finalize(ca.alpha.secret, t)
    ssig = pki.transcript_finalize(ca.bravo.secret, t)
    blob = pki.transcript_serialize(t, csig, ssig)
    t2, csig2, ssig2 = pki.transcript_deserialize(blob)
    assert (t2.session_id, t2.entries, t2.running) == (
        t.session_id, t.entries, t.running
    )
    assert (csig2, ssig2) == (csig, ssig)
    assert pki.transcript_verify(ca.alpha.cert, t2, csig2)
    with pytest.raises(BadCertificate):
        pki.transcript_deserialize(blob + b"\x00")
    with pytest.raises(BadCertificate):
        pki.transcript_deserialize(blob[:-1])


# --- handshake ---------------------------------------------------------------


def run_handshake(server_id, client_id, root, client_root=None, record=False):
    s_sock, c_sock = socket.socketpair()
    channel_cls = RecordingChannel if record else transport.FramedChannel
    server_ch = channel_cls(s_sock)
    client_ch = channel_cls(c_sock)
    results = {}

    def server_side():
        try:
            results["server"] = pki.mutual_handshake(
                "server", server_id.cert, server_id.secret, root, server_ch
            )
        except Exception as exc:
            results["server_exc"] = exc
        finally:
            server_ch.close()

    th = threading.Thread(target=server_side)
    th.start()
    try:
        results["client"] = pki.mutual_handshake(
            "client", client_id.cert, client_id.secret,
            client_root or root, client_ch,
        )
    except Exception as exc:
        results["client_exc"] = exc
    finally:
        client_ch.close()  # unblocks a server still mid-read
        th.join(10)
    results["client_channel"] = client_ch
    return results


def test_handshake_success(ca):
    r = run_handshake(ca.bravo, ca.alpha, ca.root)
    assert r["client"].peer_subject == "BRAVO"
    assert r["server"].peer_subject == "ALPHA"
    assert r["client"].session_id == r["server"].session_id
    assert r["client"].transcript.running == r["server"].transcript.running
    assert len(r["client"].transcript.entries) == 4


def test_handshake_rejects_foreign_client(ca, foreign_ca):
    r = run_handshake(ca.bravo, foreign_ca.alpha, ca.root,
                      client_root=ca.root, record=True)
    assert isinstance(r["server_exc"], HandshakeFailed)
    # the peer just sees the connection drop: clean EOF or a reset,
    # depending on timing
    assert isinstance(r["client_exc"], (HandshakeFailed, OSError))
    assert all(t < 0x10 for t in r["client_channel"].types)


def test_handshake_rejects_expired_client(ca):
    stale = ca.issue("OLDGUY", NOW - 7200, NOW - 3600)
    r = run_handshake(ca.bravo, stale, ca.root, record=True)
    assert isinstance(r["server_exc"], HandshakeFailed)
    assert all(t < 0x10 for t in r["client_channel"].types)


def test_client_rejects_foreign_server(ca, foreign_ca):
    r = run_handshake(foreign_ca.bravo, ca.alpha, ca.root)
    assert isinstance(r["client_exc"], HandshakeFailed)


def test_root_cert_cannot_act_as_peer(ca):
    class RootId:
        cert = ca.root
        secret = ca.key

    r = run_handshake(RootId, ca.alpha, ca.root)
    assert isinstance(r["client_exc"], HandshakeFailed)
    assert "root" in str(r["client_exc"])


def test_replayed_authproof_rejected(ca):
    # capture a genuine proof from one session
    first = run_handshake(ca.bravo, ca.alpha, ca.root, record=True)
    assert "client" in first
    proofs = [raw for d, t, raw in first["client_channel"].frames
              if d == "sent" and t == pki.AUTHPROOF_TYPE]
    replayed_proof = proofs[0][5:]

    # fresh session: honest hellos, then the stale proof
    s_sock, c_sock = socket.socketpair()
    server_ch = transport.FramedChannel(s_sock)
    client_ch = transport.FramedChannel(c_sock)
    results = {}

    def server_side():
        try:
            results["server"] = pki.mutual_handshake(
                "server", ca.bravo.cert, ca.bravo.secret, ca.root, server_ch
            )
        except Exception as exc:
            results["server_exc"] = exc
        finally:
            server_ch.close()

    th = threading.Thread(target=server_side)
    th.start()
    try:
        cert_raw = ca.alpha.cert.to_bytes()
        nonce = random.Random(123).getrandbits(256).to_bytes(32, "big")
        hello = struct.pack(">I", len(cert_raw)) + cert_raw + nonce
        client_ch.send_frame(pki.HELLO_TYPE, hello)
        client_ch.recv_frame()  # server hello
        client_ch.send_frame(pki.AUTHPROOF_TYPE, replayed_proof)
    finally:
        client_ch.close()
        th.join(10)
    assert isinstance(results.get("server_exc"), HandshakeFailed)


def test_handshake_role_validated(ca):
    with pytest.raises(ValueError):
        pki.mutual_handshake("observer", ca.alpha.cert, ca.alpha.secret,
                             ca.root, None)
