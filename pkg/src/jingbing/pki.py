"""Mini certificate authority, mutual authentication, signed transcripts.

Certificates are a compact TLV structure (seven fields, fixed order,
ed25519 signatures) rather than X.509: the trust model is a single
self-signed root issuing leaf certificates directly, so a full ASN.1
parser would be surface area without benefit.

The handshake runs before any protocol frame: each side sends
Hello{certificate, nonce}, verifies the peer's certificate against the
shared root, then proves possession of the certified key by signing
(role-label, own nonce, peer nonce, hash of peer certificate).  Binding
both nonces kills replay; binding the peer certificate hash kills
certificate substitution.  On any failure the connection is closed
without sending further frames, so an unauthenticated peer never sees a
protocol-type frame.

Every frame after the handshake feeds a hash chain (the transcript).
Both parties sign the chain head at the end of the session; each party
keeps the other's signature, so neither can later deny what was sent.
"""

from __future__ import annotations

import hashlib
import random
import re
import struct
import time
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from .errors import (
    BadCertificate,
    BadSignature,
    Expired,
    HandshakeFailed,
    InvalidSubject,
    InvalidValidity,
    NotYetValid,
    RngError,
    WireError,
)

CERT_VERSION = 1
ROOT_SUBJECT = "ROOT"
NONCE_BYTES = 32
SIG_BYTES = 64

# handshake frame types (protocol frames start at 0x10)
HELLO_TYPE = 0x01
AUTHPROOF_TYPE = 0x02

_SUBJECT_RE = re.compile(r"^[A-Z]{2,32}$")
_AUTH_DOMAIN = b"jingbing/authproof/v1"
_SESSION_DOMAIN = b"jingbing/session/v1"
_TRANSCRIPT_DOMAIN = b"jingbing/transcript/v1"

_sysrand = random.SystemRandom()

# TLV tags, in mandatory order
_TAG_VERSION = 0x01
_TAG_SUBJECT = 0x02
_TAG_PUBKEY = 0x03
_TAG_SERIAL = 0x04
_TAG_NOT_BEFORE = 0x05
_TAG_NOT_AFTER = 0x06
_TAG_SIGNATURE = 0x07


def _tlv(tag: int, value: bytes) -> bytes:
    if len(value) > 255:
        raise ValueError("TLV value too long")
    return bytes([tag, len(value)]) + value


class _TlvReader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, tag: int) -> bytes:
        if self.pos + 2 > len(self.data):
            raise BadCertificate("truncated TLV")
        t, ln = self.data[self.pos], self.data[self.pos + 1]
        if t != tag:
            raise BadCertificate(f"expected tag {tag:#x}, found {t:#x}")
        start = self.pos + 2
        if start + ln > len(self.data):
            raise BadCertificate("TLV length overruns buffer")
        self.pos = start + ln
        return self.data[start : start + ln]

    def done(self) -> bool:
        return self.pos == len(self.data)


@dataclass(frozen=True)
class Certificate:
    version: int
    subject: str
    public_key: bytes  # raw ed25519, 32 bytes
    serial: bytes  # 8 bytes
    not_before: int
    not_after: int
    signature: bytes  # ed25519 over all preceding TLV bytes

    def signed_span(self) -> bytes:
        return (
            _tlv(_TAG_VERSION, bytes([self.version]))
            + _tlv(_TAG_SUBJECT, self.subject.encode("ascii"))
            + _tlv(_TAG_PUBKEY, self.public_key)
            + _tlv(_TAG_SERIAL, self.serial)
            + _tlv(_TAG_NOT_BEFORE, struct.pack(">Q", self.not_before))
            + _tlv(_TAG_NOT_AFTER, struct.pack(">Q", self.not_after))
        )

    def to_bytes(self) -> bytes:
        return self.signed_span() + _tlv(_TAG_SIGNATURE, self.signature)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Certificate":
        r = _TlvReader(data)
        version = r.take(_TAG_VERSION)
        subject = r.take(_TAG_SUBJECT)
        pubkey = r.take(_TAG_PUBKEY)
        serial = r.take(_TAG_SERIAL)
        not_before = r.take(_TAG_NOT_BEFORE)
        not_after = r.take(_TAG_NOT_AFTER)
        signature = r.take(_TAG_SIGNATURE)
        if not r.done():
            raise BadCertificate("trailing bytes after certificate")
        if len(version) != 1 or version[0] != CERT_VERSION:
            raise BadCertificate("unsupported certificate version")
        if len(pubkey) != 32 or len(serial) != 8 or len(signature) != SIG_BYTES:
            raise BadCertificate("malformed field length")
        if len(not_before) != 8 or len(not_after) != 8:
            raise BadCertificate("malformed timestamp")
        try:
            subj = subject.decode("ascii")
        except UnicodeDecodeError as exc:
            raise BadCertificate("subject is not ASCII") from exc
        if not subj or not (_SUBJECT_RE.match(subj) or subj == ROOT_SUBJECT):
            raise BadCertificate(f"bad subject {subj!r}")
        return cls(
            version=version[0],
            subject=subj,
            public_key=pubkey,
            serial=serial,
            not_before=struct.unpack(">Q", not_before)[0],
            not_after=struct.unpack(">Q", not_after)[0],
            signature=signature,
        )

    def fingerprint(self) -> bytes:
        return hashlib.sha256(self.to_bytes()).digest()


def _keybytes(rng: random.Random) -> bytes:
    try:
        return rng.getrandbits(256).to_bytes(32, "big")
    except (OSError, NotImplementedError) as exc:
        raise RngError(f"randomness source failed: {exc}") from exc


def gen_keypair(
    rng: random.Random | None = None,
) -> tuple[Ed25519PrivateKey, bytes]:
    """Fresh signing keypair: (secret key, 32 raw public-key bytes)."""
    key = Ed25519PrivateKey.from_private_bytes(_keybytes(rng or _sysrand))
    return key, key.public_key().public_bytes_raw()


def _sign_cert_fields(
    issuer_key: Ed25519PrivateKey,
    subject: str,
    subject_pubkey: bytes,
    serial: bytes,
    not_before: int,
    not_after: int,
) -> Certificate:
    unsigned = Certificate(
        CERT_VERSION, subject, subject_pubkey, serial, not_before, not_after, b"\0" * 64
    )
    sig = issuer_key.sign(unsigned.signed_span())
    return Certificate(
        CERT_VERSION, subject, subject_pubkey, serial, not_before, not_after, sig
    )


def ca_init(
    rng: random.Random | None = None, validity_days: int = 3650
) -> tuple[Ed25519PrivateKey, Certificate]:
    """Fresh CA: signing key plus self-signed root certificate."""
    rng = rng or _sysrand
    key = Ed25519PrivateKey.from_private_bytes(_keybytes(rng))
    now = int(time.time())
    root = _sign_cert_fields(
        key,
        ROOT_SUBJECT,
        key.public_key().public_bytes_raw(),
        b"\0" * 8,
        now - 300,
        now + validity_days * 86400,
    )
    return key, root


def issue_cert(
    ca_key: Ed25519PrivateKey,
    subject: str,
    subject_pubkey: bytes,
    not_before: int,
    not_after: int,
    rng: random.Random | None = None,
) -> Certificate:
    """Leaf certificate for `subject`, signed by the CA key."""
    if not _SUBJECT_RE.match(subject or ""):
        raise InvalidSubject(f"subject must match [A-Z]{{2,32}}, got {subject!r}")
    if len(subject_pubkey) != 32:
        raise InvalidSubject("subject public key must be 32 raw bytes")
    if not_after <= not_before:
        raise InvalidValidity(
            f"empty validity window: [{not_before}, {not_after}]"
        )
    rng = rng or _sysrand
    serial = rng.getrandbits(64).to_bytes(8, "big")
    return _sign_cert_fields(
        ca_key, subject, subject_pubkey, serial, not_before, not_after
    )


def verify_cert(root: Certificate, cert: Certificate, now: int) -> str:
    """Subject of `cert` if it chains to `root` and is valid at `now`."""
    issuer = Ed25519PublicKey.from_public_bytes(root.public_key)
    try:
        issuer.verify(cert.signature, cert.signed_span())
    except InvalidSignature as exc:
        raise BadSignature("certificate signature does not verify") from exc
    if now < cert.not_before:
        raise NotYetValid(f"certificate not valid before {cert.not_before}")
    if now > cert.not_after:
        raise Expired(f"certificate expired at {cert.not_after}")
    return cert.subject


# --- armored file format ---------------------------------------------------

CERT_LABEL = "JINGBING CERT"
SECRET_LABEL = "JINGBING SECRET KEY"


def armor(label: str, data: bytes) -> str:
    import base64

    b64 = base64.b64encode(data).decode("ascii")
    lines = [b64[i : i + 64] for i in range(0, len(b64), 64)]
    return (
        f"-----BEGIN {label}-----\n"
        + "\n".join(lines)
        + f"\n-----END {label}-----\n"
    )


def dearmor(label: str, text: str) -> bytes:
    import base64

    begin = f"-----BEGIN {label}-----"
    end = f"-----END {label}-----"
    lines = [ln.strip() for ln in text.strip().splitlines()]
    if len(lines) < 2 or lines[0] != begin or lines[-1] != end:
        raise BadCertificate(f"missing {label} armor")
    try:
        return base64.b64decode("".join(lines[1:-1]), validate=True)
    except Exception as exc:
        raise BadCertificate("bad base64 body") from exc


def save_cert(path, cert: Certificate) -> None:
    with open(path, "w", encoding="ascii") as f:
        f.write(armor(CERT_LABEL, cert.to_bytes()))


def load_cert(path) -> Certificate:
    with open(path, encoding="ascii") as f:
        return Certificate.from_bytes(dearmor(CERT_LABEL, f.read()))


def save_secret(path, key: Ed25519PrivateKey) -> None:
    import os

    fd = os.open(path, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
    with os.fdopen(fd, "w", encoding="ascii") as f:
        f.write(armor(SECRET_LABEL, key.private_bytes_raw()))


def load_secret(path) -> Ed25519PrivateKey:
    with open(path, encoding="ascii") as f:
        raw = dearmor(SECRET_LABEL, f.read())
    if len(raw) != 32:
        raise BadCertificate("secret key must be 32 raw bytes")
    return Ed25519PrivateKey.from_private_bytes(raw)


# --- transcript ------------------------------------------------------------

# directions are absolute (who sent the frame), so both parties build the
# identical chain and can sign the same head
DIR_C2S = 0
DIR_S2C = 1
_DIRS = {"c2s": DIR_C2S, "s2c": DIR_S2C}


class SignedTranscript:
    """Append-only hash chain over the session's framed messages."""

    def __init__(self, session_id: bytes):
        self.session_id = session_id
        self.entries: list[tuple[int, int, bytes]] = []
        self.running = hashlib.sha256(_TRANSCRIPT_DOMAIN + session_id).digest()

    def copy(self) -> "SignedTranscript":
        t = SignedTranscript(self.session_id)
        t.entries = list(self.entries)
        t.running = self.running
        return t


def transcript_append(
    t: SignedTranscript, direction: str, frame_bytes: bytes
) -> SignedTranscript:
    """Record one framed message; direction is "c2s" or "s2c"."""
    d = _DIRS[direction]
    # frame layout: 4-byte length, 1-byte type, payload
    msg_type = frame_bytes[4]
    digest = hashlib.sha256(frame_bytes).digest()
    t.entries.append((d, msg_type, digest))
    t.running = hashlib.sha256(
        t.running + bytes([d, msg_type]) + digest
    ).digest()
    return t


def transcript_finalize(secret: Ed25519PrivateKey, t: SignedTranscript) -> bytes:
    """Signature over the chain head; 64 bytes."""
    return secret.sign(t.running)


def transcript_verify(
    peer_cert: Certificate, t: SignedTranscript, signature: bytes
) -> bool:
    key = Ed25519PublicKey.from_public_bytes(peer_cert.public_key)
    try:
        key.verify(signature, t.running)
    except InvalidSignature as exc:
        raise BadSignature("transcript signature does not verify") from exc
    return True


# transcript file: TLV of session id, entries, both signatures
_TTAG_SESSION = 0x01
_TTAG_ENTRY = 0x02
_TTAG_CLIENT_SIG = 0x03
_TTAG_SERVER_SIG = 0x04


def transcript_serialize(
    t: SignedTranscript, client_sig: bytes, server_sig: bytes
) -> bytes:
    out = [_tlv(_TTAG_SESSION, t.session_id)]
    for d, mt, digest in t.entries:
        out.append(_tlv(_TTAG_ENTRY, bytes([d, mt]) + digest))
    out.append(_tlv(_TTAG_CLIENT_SIG, client_sig))
    out.append(_tlv(_TTAG_SERVER_SIG, server_sig))
    return b"".join(out)


def transcript_deserialize(data: bytes) -> tuple[SignedTranscript, bytes, bytes]:
    """Rebuild the chain from a transcript file; returns (t, client_sig, server_sig)."""
    r = _TlvReader(data)
    session_id = r.take(_TTAG_SESSION)
    if len(session_id) != 32:
        raise BadCertificate("bad session id length")
    t = SignedTranscript(session_id)
    while not r.done() and r.data[r.pos] == _TTAG_ENTRY:
        entry = r.take(_TTAG_ENTRY)
        if len(entry) != 34:
            raise BadCertificate("bad transcript entry length")
        d, mt, digest = entry[0], entry[1], entry[2:]
        t.entries.append((d, mt, digest))
        t.running = hashlib.sha256(t.running + bytes([d, mt]) + digest).digest()
    client_sig = r.take(_TTAG_CLIENT_SIG)
    server_sig = r.take(_TTAG_SERVER_SIG)
    if not r.done():
        raise BadCertificate("trailing bytes after transcript")
    if len(client_sig) != SIG_BYTES or len(server_sig) != SIG_BYTES:
        raise BadCertificate("bad signature length")
    return t, client_sig, server_sig


# --- mutual authentication handshake ---------------------------------------


@dataclass
class HandshakeResult:
    peer_subject: str
    peer_cert: Certificate
    session_id: bytes
    transcript: SignedTranscript


def _hello_payload(cert: Certificate, nonce: bytes) -> bytes:
    raw = cert.to_bytes()
    return struct.pack(">I", len(raw)) + raw + nonce


def _parse_hello(payload: bytes) -> tuple[Certificate, bytes]:
    if len(payload) < 4:
        raise HandshakeFailed("hello too short")
    (cert_len,) = struct.unpack(">I", payload[:4])
    if len(payload) != 4 + cert_len + NONCE_BYTES:
        raise HandshakeFailed("hello length mismatch")
    try:
        cert = Certificate.from_bytes(payload[4 : 4 + cert_len])
    except BadCertificate as exc:
        raise HandshakeFailed(f"peer sent malformed certificate: {exc}") from exc
    return cert, payload[4 + cert_len :]


def _auth_message(
    role_label: bytes, own_nonce: bytes, peer_nonce: bytes, peer_cert: Certificate
) -> bytes:
    return (
        _AUTH_DOMAIN
        + role_label
        + own_nonce
        + peer_nonce
        + peer_cert.fingerprint()
    )


def mutual_handshake(
    role: str,
    own_cert: Certificate,
    own_secret: Ed25519PrivateKey,
    root: Certificate,
    channel,
    rng: random.Random | None = None,
    now: int | None = None,
) -> HandshakeResult:
    """Hello/Hello/AuthProof/AuthProof exchange; client speaks first.

    `channel` must provide send_frame(type, payload) -> raw bytes and
    recv_frame() -> (type, payload, raw bytes).  Raises HandshakeFailed on
    any verification problem; the caller must then close the channel
    without emitting further frames.
    """
    if role not in ("client", "server"):
        raise ValueError("role must be 'client' or 'server'")
    rng = rng or _sysrand
    now = int(time.time()) if now is None else now
    nonce = _keybytes(rng)
    frames: dict[str, bytes] = {}

    def send_hello():
        frames["hello_sent"] = channel.send_frame(
            HELLO_TYPE, _hello_payload(own_cert, nonce)
        )

    def recv_hello():
        try:
            ftype, payload, raw = channel.recv_frame()
        except WireError as exc:
            raise HandshakeFailed(f"connection lost in handshake: {exc}") from exc
        if ftype != HELLO_TYPE:
            raise HandshakeFailed(f"expected hello, got frame type {ftype:#x}")
        frames["hello_recv"] = raw
        return _parse_hello(payload)

    if role == "client":
        send_hello()
        peer_cert, peer_nonce = recv_hello()
    else:
        peer_cert, peer_nonce = recv_hello()
        send_hello()

    try:
        peer_subject = verify_cert(root, peer_cert, now)
    except (BadSignature, Expired, NotYetValid) as exc:
        raise HandshakeFailed(f"peer certificate rejected: {exc}") from exc
    if peer_cert.subject == ROOT_SUBJECT:
        raise HandshakeFailed("peer presented the root certificate")

    own_label = role.encode("ascii")
    peer_label = (b"server" if role == "client" else b"client")
    own_proof = own_secret.sign(
        _auth_message(own_label, nonce, peer_nonce, peer_cert)
    )

    def send_proof():
        frames["proof_sent"] = channel.send_frame(AUTHPROOF_TYPE, own_proof)

    def recv_and_check_proof():
        try:
            ftype, payload, raw = channel.recv_frame()
        except WireError as exc:
            raise HandshakeFailed(f"connection lost in handshake: {exc}") from exc
        if ftype != AUTHPROOF_TYPE:
            raise HandshakeFailed(f"expected auth proof, got type {ftype:#x}")
        if len(payload) != SIG_BYTES:
            raise HandshakeFailed("auth proof must be a 64-byte signature")
        expected = _auth_message(peer_label, peer_nonce, nonce, own_cert)
        key = Ed25519PublicKey.from_public_bytes(peer_cert.public_key)
        try:
            key.verify(payload, expected)
        except InvalidSignature as exc:
            raise HandshakeFailed("peer auth proof does not verify") from exc
        frames["proof_recv"] = raw

    if role == "client":
        send_proof()
        recv_and_check_proof()
    else:
        # verify the client's proof before revealing our own
        recv_and_check_proof()
        send_proof()

    client_nonce = nonce if role == "client" else peer_nonce
    server_nonce = peer_nonce if role == "client" else nonce
    session_id = hashlib.sha256(
        _SESSION_DOMAIN + client_nonce + server_nonce
    ).digest()

    # seed the transcript with the four handshake frames in wire order;
    # both sides record identical (direction, frame) pairs
    t = SignedTranscript(session_id)
    if role == "client":
        order = [
            ("c2s", frames["hello_sent"]),
            ("s2c", frames["hello_recv"]),
            ("c2s", frames["proof_sent"]),
            ("s2c", frames["proof_recv"]),
        ]
    else:
        order = [
            ("c2s", frames["hello_recv"]),
            ("s2c", frames["hello_sent"]),
            ("c2s", frames["proof_recv"]),
            ("s2c", frames["proof_sent"]),
        ]
    for direction, raw in order:
        transcript_append(t, direction, raw)
    return HandshakeResult(peer_subject, peer_cert, session_id, t)
