"""Framing and canonical payload encodings.

Frame layout: 4-byte big-endian length (counting the type byte plus
payload), 1 type byte, payload.  Length 1..64 MiB; anything else is a
wire error, never a crash.

Payload encodings are canonical: fixed field order, fixed-width
big-endian integers, 4-byte big-endian counts on lists and byte strings,
explicit 1-byte presence flags, and no tolerance for trailing bytes or
non-minimal integer encodings.  Two encoders can therefore never disagree
about the bytes of a message, which the transcript signatures rely on.

Ciphertext fields decode against a CipherContext carrying the session's
public keys: a decoded ciphertext is bound to the key the session
advertised, and a params-hash mismatch surfaces as MalformedMessage
before any arithmetic happens.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from . import bfv, paillier, pki
from .commutative import ELEMENT_BYTES, GroupElement
from .errors import (
    FrameTooLarge,
    InvalidGroupElement,
    JingBingError,
    MalformedMessage,
    ParamMismatch,
    PkiError,
    UnexpectedEof,
    UnknownMessageType,
    ValidationError,
    WireError,
)
from .protocol import (
    ClientRoundOne,
    ClientRow,
    Operator,
    ServerResult,
    ServerShuffledSet,
    StartRequest,
)

MSG_HELLO = pki.HELLO_TYPE
MSG_AUTHPROOF = pki.AUTHPROOF_TYPE
MSG_START_REQUEST = 0x10
MSG_SERVER_SET = 0x11
MSG_CLIENT_ROUND_ONE = 0x12
MSG_SERVER_RESULT = 0x13
MSG_CLOSE = 0x14
MSG_ERROR = 0x7F

KNOWN_TYPES = frozenset(
    {
        MSG_HELLO,
        MSG_AUTHPROOF,
        MSG_START_REQUEST,
        MSG_SERVER_SET,
        MSG_CLIENT_ROUND_ONE,
        MSG_SERVER_RESULT,
        MSG_CLOSE,
        MSG_ERROR,
    }
)

MAX_FRAME_LEN = 64 * 2**20  # length field cap: type byte + payload

_SCHEME_PAILLIER = 1
_SCHEME_BFV = 2

# Error-frame reason codes; deliberately coarse so failures leak nothing
# about server internals
REASON_VALIDATION = 0x0001
REASON_PROTOCOL = 0x0002
REASON_MALFORMED = 0x0003
REASON_INTERNAL = 0x0004

_REASON_TEXT = {
    REASON_VALIDATION: "request rejected by validation",
    REASON_PROTOCOL: "protocol violation",
    REASON_MALFORMED: "malformed message",
    REASON_INTERNAL: "internal server error",
}


def reason_for_exception(exc: Exception) -> int:
    if isinstance(exc, ValidationError):
        return REASON_VALIDATION
    if isinstance(exc, (WireError, PkiError)):
        return REASON_MALFORMED
    if isinstance(exc, JingBingError):
        return REASON_PROTOCOL
    return REASON_INTERNAL


def describe_reason(code: int) -> str:
    return _REASON_TEXT.get(code, f"unknown reason {code:#06x}")


# --- framing -----------------------------------------------------------------


def frame_encode(msg_type: int, payload: bytes) -> bytes:
    if msg_type not in KNOWN_TYPES:
        raise UnknownMessageType(f"refusing to encode type {msg_type:#x}")
    length = 1 + len(payload)
    if length > MAX_FRAME_LEN:
        raise FrameTooLarge(f"frame of {length} bytes exceeds {MAX_FRAME_LEN}")
    return struct.pack(">I", length) + bytes([msg_type]) + payload


def _read_exact(stream, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining:
        chunk = stream.read(remaining)
        if not chunk:
            raise UnexpectedEof(f"stream ended {remaining} bytes early")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def frame_decode_raw(stream) -> tuple[int, bytes, bytes]:
    """One frame from a binary stream: (type, payload, raw frame bytes)."""
    header = _read_exact(stream, 4)
    (length,) = struct.unpack(">I", header)
    if length == 0:
        raise MalformedMessage("frame declares zero length")
    if length > MAX_FRAME_LEN:
        raise FrameTooLarge(f"declared length {length} exceeds {MAX_FRAME_LEN}")
    body = _read_exact(stream, length)
    msg_type = body[0]
    if msg_type not in KNOWN_TYPES:
        raise UnknownMessageType(f"unknown frame type {msg_type:#x}")
    return msg_type, body[1:], header + body


def frame_decode(stream) -> tuple[int, bytes]:
    """One frame from a binary stream; consumes exactly that frame."""
    msg_type, payload, _ = frame_decode_raw(stream)
    return msg_type, payload


# --- payload primitives --------------------------------------------------------


class _Reader:
    __slots__ = ("data", "pos")

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise MalformedMessage("payload shorter than declared")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack(">H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack(">I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self.take(8))[0]

    def lp_bytes(self) -> bytes:
        return self.take(self.u32())

    def flag(self) -> bool:
        b = self.u8()
        if b not in (0, 1):
            raise MalformedMessage(f"presence flag must be 0 or 1, got {b}")
        return bool(b)

    def finish(self) -> None:
        if self.pos != len(self.data):
            raise MalformedMessage(
                f"{len(self.data) - self.pos} trailing bytes after message"
            )


def _u8(x: int) -> bytes:
    return bytes([x])


def _u16(x: int) -> bytes:
    return struct.pack(">H", x)


def _u32(x: int) -> bytes:
    return struct.pack(">I", x)


def _u64(x: int) -> bytes:
    return struct.pack(">Q", x)


def _lp(b: bytes) -> bytes:
    return _u32(len(b)) + b


def _minimal(x: int) -> bytes:
    return x.to_bytes((x.bit_length() + 7) // 8 or 1, "big")


def _int_from_minimal(b: bytes) -> int:
    if not b or (len(b) > 1 and b[0] == 0):
        raise MalformedMessage("integer encoding is not minimal")
    return int.from_bytes(b, "big")


def _coeff_width(params: bfv.BfvParams) -> int:
    return (params.q.bit_length() + 7) // 8


def _encode_poly(p, cw: int) -> bytes:
    return b"".join(c.to_bytes(cw, "big") for c in p.coeffs)


def _read_poly(r: _Reader, params: bfv.BfvParams):
    from .ring import RingPoly

    cw = _coeff_width(params)
    raw = r.take(params.n * cw)
    coeffs = []
    q = params.q
    for i in range(params.n):
        c = int.from_bytes(raw[i * cw : (i + 1) * cw], "big")
        if c >= q:
            raise MalformedMessage("polynomial coefficient not reduced mod q")
        coeffs.append(c)
    return RingPoly(coeffs, q)


def _decode_group_element(raw: bytes) -> GroupElement:
    try:
        return GroupElement.decode(raw)
    except InvalidGroupElement as exc:
        raise MalformedMessage(f"bad group element: {exc}") from exc


# --- ciphertext fields ---------------------------------------------------------


@dataclass
class CipherContext:
    """Session key material needed to decode ciphertext fields."""

    entries: tuple[tuple[int, Operator], ...]
    paillier_pk: paillier.PaillierPublicKey | None
    bfv_params: bfv.BfvParams | None
    bfv_key_id: bytes | None

    @classmethod
    def from_start_request(cls, req: StartRequest) -> "CipherContext":
        return cls(
            entries=req.entries,
            paillier_pk=req.paillier_pk,
            bfv_params=req.bfv_params,
            bfv_key_id=req.bfv_pk.key_id if req.bfv_pk else None,
        )


def _encode_ciphertext(ct) -> bytes:
    if isinstance(ct, paillier.PaillierCiphertext):
        return _u8(_SCHEME_PAILLIER) + _lp(_minimal(ct.c))
    if isinstance(ct, bfv.BfvCiphertext):
        cw = _coeff_width(ct.params)
        return (
            _u8(_SCHEME_BFV)
            + ct.params.params_hash
            + _encode_poly(ct.c0, cw)
            + _encode_poly(ct.c1, cw)
        )
    raise MalformedMessage(f"cannot encode value field of type {type(ct)!r}")


def _decode_ciphertext(r: _Reader, op: Operator, ctx: CipherContext):
    tag = r.u8()
    if op is Operator.SUM:
        if tag != _SCHEME_PAILLIER:
            raise MalformedMessage("SUM field must use the additive scheme")
        if ctx.paillier_pk is None:
            raise MalformedMessage("no additive key in this session")
        c = _int_from_minimal(r.lp_bytes())
        if not 1 <= c < ctx.paillier_pk.n_sq:
            raise MalformedMessage("additive ciphertext out of range")
        return paillier.PaillierCiphertext(c, ctx.paillier_pk.key_id)
    if tag != _SCHEME_BFV:
        raise MalformedMessage("SUM_OF_SQUARES field must use the RLWE scheme")
    if ctx.bfv_params is None or ctx.bfv_key_id is None:
        raise MalformedMessage("no RLWE key in this session")
    params_hash = r.take(8)
    if params_hash != ctx.bfv_params.params_hash:
        raise MalformedMessage("RLWE ciphertext under foreign parameters")
    c0 = _read_poly(r, ctx.bfv_params)
    c1 = _read_poly(r, ctx.bfv_params)
    return bfv.BfvCiphertext(c0, c1, ctx.bfv_params, ctx.bfv_key_id)


# --- StartRequest ---------------------------------------------------------------


def encode_start_request(req: StartRequest) -> bytes:
    out = [
        _u16(req.version),
        _u8(req.column_count),
        _u8(len(req.entries)),
    ]
    for col, op in req.entries:
        out.append(_u8(col))
        out.append(_u8(op.value))
    if req.paillier_pk is not None:
        out.append(_u8(1))
        out.append(_lp(_minimal(req.paillier_pk.n)))
    else:
        out.append(_u8(0))
    if req.bfv_pk is not None:
        params = req.bfv_params
        cw = _coeff_width(params)
        out.append(_u8(1))
        out.append(_u32(params.n))
        out.append(_u8(len(params.q_factors)))
        for f in params.q_factors:
            out.append(_u64(f))
        out.append(_u64(params.t))
        out.append(_u64(params.relin_base))
        out.append(_encode_poly(req.bfv_pk.b, cw))
        out.append(_encode_poly(req.bfv_pk.a, cw))
        out.append(_u8(len(req.bfv_relin.rows)))
        for b_i, a_i in req.bfv_relin.rows:
            out.append(_encode_poly(b_i, cw))
            out.append(_encode_poly(a_i, cw))
    else:
        out.append(_u8(0))
    return b"".join(out)


def decode_start_request(data: bytes) -> StartRequest:
    r = _Reader(data)
    version = r.u16()
    column_count = r.u8()
    n_entries = r.u8()
    if not 1 <= n_entries <= 8:
        raise MalformedMessage(f"entry count {n_entries} outside [1, 8]")
    entries = []
    for _ in range(n_entries):
        col = r.u8()
        op_byte = r.u8()
        try:
            op = Operator(op_byte)
        except ValueError as exc:
            raise MalformedMessage(f"unknown operator byte {op_byte}") from exc
        entries.append((col, op))
    p_pk = None
    if r.flag():
        n = _int_from_minimal(r.lp_bytes())
        if n.bit_length() not in paillier.KEY_SIZES or n % 2 == 0:
            raise MalformedMessage("additive key modulus has unsupported shape")
        p_pk = paillier.PaillierPublicKey(n)
    b_params = b_pk = b_relin = None
    if r.flag():
        ring_n = r.u32()
        if ring_n < 2 or ring_n > 1 << 16 or ring_n & (ring_n - 1):
            raise MalformedMessage(f"ring degree {ring_n} unsupported")
        n_factors = r.u8()
        if not 1 <= n_factors <= 4:
            raise MalformedMessage("factor count outside [1, 4]")
        factors = tuple(r.u64() for _ in range(n_factors))
        t = r.u64()
        relin_base = r.u64()
        try:
            b_params = bfv.BfvParams(ring_n, factors, t, relin_base).validate()
        except (ParamMismatch, ValueError) as exc:
            raise MalformedMessage(f"invalid RLWE parameters: {exc}") from exc
        b = _read_poly(r, b_params)
        a = _read_poly(r, b_params)
        width = r.u8()
        if width != b_params.relin_width:
            raise MalformedMessage("relinearization width does not match params")
        rows = []
        for _ in range(width):
            b_i = _read_poly(r, b_params)
            a_i = _read_poly(r, b_params)
            rows.append((b_i, a_i))
        key_id = bfv.derive_key_id(b_params, b, a)
        b_pk = bfv.BfvPublicKey(b_params, b, a, key_id)
        b_relin = bfv.BfvRelinKey(b_params, tuple(rows), key_id)
    r.finish()
    return StartRequest(
        version=version,
        column_count=column_count,
        entries=tuple(entries),
        paillier_pk=p_pk,
        bfv_params=b_params,
        bfv_pk=b_pk,
        bfv_relin=b_relin,
    )


# --- ServerShuffledSet ----------------------------------------------------------


def encode_server_set(msg: ServerShuffledSet) -> bytes:
    out = [_u32(len(msg.elements))]
    out.extend(e.encode() for e in msg.elements)
    return b"".join(out)


def decode_server_set(data: bytes) -> ServerShuffledSet:
    r = _Reader(data)
    count = r.u32()
    elements = tuple(
        _decode_group_element(r.take(ELEMENT_BYTES)) for _ in range(count)
    )
    r.finish()
    return ServerShuffledSet(elements)


# --- ClientRoundOne -------------------------------------------------------------


def encode_client_round_one(msg: ClientRoundOne) -> bytes:
    out = [_u32(len(msg.reencrypted_server))]
    out.extend(e.encode() for e in msg.reencrypted_server)
    out.append(_u32(len(msg.rows)))
    for row in msg.rows:
        out.append(row.element.encode())
        for ct in row.ciphertexts:
            out.append(_encode_ciphertext(ct))
    return b"".join(out)


def decode_client_round_one(data: bytes, ctx: CipherContext) -> ClientRoundOne:
    r = _Reader(data)
    count = r.u32()
    reenc = tuple(
        _decode_group_element(r.take(ELEMENT_BYTES)) for _ in range(count)
    )
    row_count = r.u32()
    rows = []
    for _ in range(row_count):
        element = _decode_group_element(r.take(ELEMENT_BYTES))
        cts = tuple(
            _decode_ciphertext(r, op, ctx) for _, op in ctx.entries
        )
        rows.append(ClientRow(element, cts))
    r.finish()
    return ClientRoundOne(reenc, tuple(rows))


# --- ServerResult ---------------------------------------------------------------


def encode_server_result_core(msg: ServerResult) -> bytes:
    out = [_u32(msg.cardinality), _u8(len(msg.aggregates))]
    for ct in msg.aggregates:
        out.append(_encode_ciphertext(ct))
    return b"".join(out)


def encode_server_result(msg: ServerResult, transcript_sig: bytes) -> bytes:
    if len(transcript_sig) != pki.SIG_BYTES:
        raise MalformedMessage("transcript signature must be 64 bytes")
    return encode_server_result_core(msg) + transcript_sig


def decode_server_result(
    data: bytes, ctx: CipherContext
) -> tuple[ServerResult, bytes, bytes]:
    """Returns (result, transcript signature, core bytes without signature)."""
    if len(data) < pki.SIG_BYTES:
        raise MalformedMessage("result payload shorter than its signature")
    core, sig = data[: -pki.SIG_BYTES], data[-pki.SIG_BYTES :]
    r = _Reader(core)
    cardinality = r.u32()
    n_aggs = r.u8()
    if n_aggs != len(ctx.entries):
        raise MalformedMessage("aggregate count does not match the spec")
    aggregates = tuple(
        _decode_ciphertext(r, op, ctx) for _, op in ctx.entries
    )
    r.finish()
    return ServerResult(cardinality, aggregates), sig, core


# --- Close / Error --------------------------------------------------------------


def encode_close(transcript_sig: bytes) -> bytes:
    if len(transcript_sig) != pki.SIG_BYTES:
        raise MalformedMessage("transcript signature must be 64 bytes")
    return transcript_sig


def decode_close(data: bytes) -> bytes:
    if len(data) != pki.SIG_BYTES:
        raise MalformedMessage("close payload must be a 64-byte signature")
    return data


def encode_error(code: int) -> bytes:
    return _u16(code)


def decode_error(data: bytes) -> int:
    r = _Reader(data)
    code = r.u16()
    r.finish()
    return code


# --- generic dispatch -----------------------------------------------------------


def encode_payload(msg, transcript_sig: bytes | None = None) -> tuple[int, bytes]:
    """(frame type, payload bytes) for a protocol message object."""
    if isinstance(msg, StartRequest):
        return MSG_START_REQUEST, encode_start_request(msg)
    if isinstance(msg, ServerShuffledSet):
        return MSG_SERVER_SET, encode_server_set(msg)
    if isinstance(msg, ClientRoundOne):
        return MSG_CLIENT_ROUND_ONE, encode_client_round_one(msg)
    if isinstance(msg, ServerResult):
        if transcript_sig is None:
            raise MalformedMessage("server result needs a transcript signature")
        return MSG_SERVER_RESULT, encode_server_result(msg, transcript_sig)
    raise MalformedMessage(f"cannot encode message of type {type(msg)!r}")


def decode_payload(msg_type: int, payload: bytes, ctx: CipherContext | None = None):
    """Decode a payload; ciphertext-bearing types require a context."""
    if msg_type == MSG_START_REQUEST:
        return decode_start_request(payload)
    if msg_type == MSG_SERVER_SET:
        return decode_server_set(payload)
    if msg_type == MSG_CLIENT_ROUND_ONE:
        if ctx is None:
            raise MalformedMessage("round one needs a cipher context")
        return decode_client_round_one(payload, ctx)
    if msg_type == MSG_SERVER_RESULT:
        if ctx is None:
            raise MalformedMessage("server result needs a cipher context")
        return decode_server_result(payload, ctx)
    if msg_type == MSG_CLOSE:
        return decode_close(payload)
    if msg_type == MSG_ERROR:
        return decode_error(payload)
    raise UnknownMessageType(f"no payload codec for type {msg_type:#x}")
