import io
import random
import struct

import pytest

from jingbing import commutative, paillier, protocol, wire
from jingbing.errors import (
    FrameTooLarge,
    MalformedMessage,
    UnexpectedEof,
    UnknownMessageType,
    WireError,
)
from jingbing.protocol import AggregationSpec, Operator, PAPER_LIMITS

from conftest import load_vectors, make_dataset

SUM = Operator.SUM
SUMSQ = Operator.SUM_OF_SQUARES


@pytest.fixture(scope="module")
def session_both():
    """A full client opening with both schemes present."""
    spec = AggregationSpec(((0, SUM), (0, SUMSQ)))
    ds = make_dataset([("alice", (3,)), ("bob", (5,)), ("carol", (7,))], 1)
    state, req = protocol.client_start(
        spec, ds, random.Random(31337), PAPER_LIMITS, paillier_bits=512
    )
    return state, req


@pytest.fixture(scope="module")
def session_sum_only():
    spec = AggregationSpec(((0, SUM),))
    ds = make_dataset([("alice", (3,)), ("bob", (5,))], 1)
    _, req = protocol.client_start(
        spec, ds, random.Random(31338), PAPER_LIMITS, paillier_bits=512
    )
    return req


@pytest.fixture(scope="module")
def session_sumsq_only():
    spec = AggregationSpec(((0, SUMSQ),))
    ds = make_dataset([("alice", (3,)), ("bob", (5,))], 1)
    _, req = protocol.client_start(
        spec, ds, random.Random(31339), PAPER_LIMITS, paillier_bits=512
    )
    return req


# --- framing -----------------------------------------------------------------


def test_frame_golden_vectors():
    for vec in load_vectors("frames"):
        payload = bytes.fromhex(vec["payload_hex"])
        raw = wire.frame_encode(vec["type"], payload)
        assert raw.hex() == vec["frame_hex"]
        t, p, raw2 = wire.frame_decode_raw(io.BytesIO(raw))
        assert (t, p, raw2) == (vec["type"], payload, raw)


def test_frame_encode_rejects_unknown_type():
    with pytest.raises(UnknownMessageType):
        wire.frame_encode(0x55, b"")


def test_frame_encode_rejects_oversize():
    with pytest.raises(FrameTooLarge):
        wire.frame_encode(wire.MSG_CLOSE, b"\x00" * wire.MAX_FRAME_LEN)
    # exactly at the cap is fine
    raw = wire.frame_encode(wire.MSG_CLOSE, b"\x00" * (wire.MAX_FRAME_LEN - 1))
    assert len(raw) == 4 + wire.MAX_FRAME_LEN


def test_frame_decode_zero_length():
    with pytest.raises(MalformedMessage):
        wire.frame_decode(io.BytesIO(b"\x00\x00\x00\x00\x01"))


def test_frame_decode_oversize_declared():
    header = struct.pack(">I", wire.MAX_FRAME_LEN + 1)
    with pytest.raises(FrameTooLarge):
        wire.frame_decode(io.BytesIO(header))


def test_frame_decode_unknown_type():
    with pytest.raises(UnknownMessageType):
        wire.frame_decode(io.BytesIO(b"\x00\x00\x00\x01\x55"))


def test_frame_decode_truncations():
    whole = wire.frame_encode(0x10, b"abcdef")
    for cut in range(len(whole)):
        with pytest.raises(UnexpectedEof):
            wire.frame_decode(io.BytesIO(whole[:cut]))


def test_frame_stream_consumed_exactly():
    f1 = wire.frame_encode(0x10, b"one")
    f2 = wire.frame_encode(0x11, b"two")
    stream = io.BytesIO(f1 + f2)
    assert wire.frame_decode(stream) == (0x10, b"one")
    assert wire.frame_decode(stream) == (0x11, b"two")
    assert stream.read() == b""


def test_frame_fuzz_never_crashes():
    r = random.Random(0xF422)
    valid = wire.frame_encode(0x12, bytes(range(32)))
    for i in range(2000):
        if i % 3 == 0:
            data = r.randbytes(r.randrange(0, 64))
        else:
            data = bytearray(valid)
            for _ in range(r.randrange(1, 4)):
                data[r.randrange(len(data))] = r.randrange(256)
            data = bytes(data[: r.randrange(1, len(data) + 1)])
        try:
            wire.frame_decode(io.BytesIO(data))
        except WireError:
            pass


def test_reason_codes():
    from jingbing import errors

    assert wire.reason_for_exception(errors.TooManyRecords("x")) == wire.REASON_VALIDATION
    assert wire.reason_for_exception(errors.MalformedMessage("x")) == wire.REASON_MALFORMED
    assert wire.reason_for_exception(errors.BadSignature("x")) == wire.REASON_MALFORMED
    assert wire.reason_for_exception(errors.PhaseViolation("x")) == wire.REASON_PROTOCOL
    assert wire.reason_for_exception(RuntimeError("x")) == wire.REASON_INTERNAL
    assert "malformed" in wire.describe_reason(wire.REASON_MALFORMED)
    assert "unknown" in wire.describe_reason(0x9999)


def test_error_and_close_payloads():
    assert wire.decode_error(wire.encode_error(0x0003)) == 0x0003
    with pytest.raises(MalformedMessage):
        wire.decode_error(b"\x00\x01\x00")
    sig = bytes(range(64))
    assert wire.decode_close(wire.encode_close(sig)) == sig
    with pytest.raises(MalformedMessage):
        wire.decode_close(sig + b"\x00")
    with pytest.raises(MalformedMessage):
        wire.encode_close(b"short")


# --- message roundtrips --------------------------------------------------------


def assert_start_roundtrip(req):
    blob = wire.encode_start_request(req)
    back = wire.decode_start_request(blob)
    assert back.version == req.version
    assert back.column_count == req.column_count
    assert back.entries == req.entries
    if req.paillier_pk is None:
        assert back.paillier_pk is None
    else:
        assert back.paillier_pk.n == req.paillier_pk.n
    if req.bfv_pk is None:
        assert back.bfv_pk is None
    else:
        assert back.bfv_params == req.bfv_params
        assert back.bfv_pk.key_id == req.bfv_pk.key_id
        assert back.bfv_relin.rows == req.bfv_relin.rows
    assert wire.encode_start_request(back) == blob


def test_start_request_roundtrip_both(session_both):
    assert_start_roundtrip(session_both[1])


def test_start_request_roundtrip_sum_only(session_sum_only):
    assert_start_roundtrip(session_sum_only)


def test_start_request_roundtrip_sumsq_only(session_sumsq_only):
    assert_start_roundtrip(session_sumsq_only)


def test_start_request_rejections():
    v = struct.pack(">H", protocol.PROTOCOL_VERSION)
    sum_byte = bytes([0, SUM.value])
    with pytest.raises(MalformedMessage):  # zero entries
        wire.decode_start_request(v + b"\x01\x00")
    with pytest.raises(MalformedMessage):  # unknown operator byte
        wire.decode_start_request(v + b"\x01\x01\x00\x09")
    with pytest.raises(MalformedMessage):  # presence flag 2
        wire.decode_start_request(v + b"\x01\x01" + sum_byte + b"\x02")
    n_even = 1 << 511
    enc = n_even.to_bytes(64, "big")
    with pytest.raises(MalformedMessage):  # even modulus
        wire.decode_start_request(
            v + b"\x01\x01" + sum_byte + b"\x01" + struct.pack(">I", 64) + enc
        )
    n_small = (1 << 255) | 1
    enc = n_small.to_bytes(32, "big")
    with pytest.raises(MalformedMessage):  # unsupported modulus size
        wire.decode_start_request(
            v + b"\x01\x01" + sum_byte + b"\x01" + struct.pack(">I", 32) + enc
        )
    with pytest.raises(MalformedMessage):  # non-minimal modulus encoding
        wire.decode_start_request(
            v + b"\x01\x01" + sum_byte + b"\x01" + struct.pack(">I", 2) + b"\x00\x05"
        )
    with pytest.raises(MalformedMessage):  # ring degree not a power of two
        wire.decode_start_request(
            v + b"\x01\x01" + sum_byte + b"\x00\x01" + struct.pack(">I", 4095)
        )


def test_server_set_roundtrip(rng):
    key = commutative.keygen(rng)
    elems = tuple(commutative.encrypt(key, i) for i in (b"x", b"y", b"z"))
    msg = protocol.ServerShuffledSet(elems)
    blob = wire.encode_server_set(msg)
    back = wire.decode_server_set(blob)
    assert back.elements == elems
    assert wire.encode_server_set(back) == blob


def test_server_set_rejections():
    one = commutative.hash_to_group(b"x").encode()
    with pytest.raises(MalformedMessage):  # count overruns payload
        wire.decode_server_set(struct.pack(">I", 2) + one)
    with pytest.raises(MalformedMessage):  # trailing bytes
        wire.decode_server_set(struct.pack(">I", 1) + one + b"\x00")
    with pytest.raises(MalformedMessage):  # not a subgroup element
        wire.decode_server_set(struct.pack(">I", 1) + b"\xff" * 256)


def test_round_one_and_result_roundtrip(session_both):
    state, req = session_both
    ctx = wire.CipherContext.from_start_request(req)
    server_ds = protocol.Dataset(
        tuple(protocol.Record(i, ()) for i in (b"bob", b"carol", b"dave")),
        0,
        31,
    )
    r = random.Random(404)
    sstate, shuffled = protocol.server_on_start(server_ds, req, r, PAPER_LIMITS)
    round_one = protocol.client_round_one(state, shuffled, r)

    blob = wire.encode_client_round_one(round_one)
    back = wire.decode_client_round_one(blob, ctx)
    assert back.reencrypted_server == round_one.reencrypted_server
    assert [row.element for row in back.rows] == [
        row.element for row in round_one.rows
    ]
    assert wire.encode_client_round_one(back) == blob

    result = protocol.server_round_two(sstate, back, r)
    sig = bytes(64)
    rblob = wire.encode_server_result(result, sig)
    back_res, back_sig, core = wire.decode_server_result(rblob, ctx)
    assert back_res.cardinality == result.cardinality == 2
    assert back_sig == sig
    assert core == wire.encode_server_result_core(result)
    assert wire.encode_server_result(back_res, back_sig) == rblob

    out = protocol.client_finalize(state, back_res)
    assert out.cardinality == 2
    assert out.aggregates == {(0, SUM): 12, (0, SUMSQ): 74}


def test_server_result_rejections(session_both):
    _, req = session_both
    ctx = wire.CipherContext.from_start_request(req)
    with pytest.raises(MalformedMessage):  # shorter than a signature
        wire.decode_server_result(b"\x00" * 63, ctx)
    # aggregate count disagrees with the session spec
    core = struct.pack(">I", 2) + b"\x01"
    with pytest.raises(MalformedMessage):
        wire.decode_server_result(core + bytes(64), ctx)


# --- ciphertext field policing ---------------------------------------------------


def element_bytes():
    return commutative.hash_to_group(b"someone").encode()


def row_payload(ct_bytes):
    # no re-encrypted elements, a single row
    return struct.pack(">I", 0) + struct.pack(">I", 1) + element_bytes() + ct_bytes


def lp_min(x):
    enc = x.to_bytes((x.bit_length() + 7) // 8 or 1, "big")
    return struct.pack(">I", len(enc)) + enc


def test_sum_field_must_be_additive(session_sum_only):
    ctx = wire.CipherContext.from_start_request(session_sum_only)
    with pytest.raises(MalformedMessage):
        wire.decode_client_round_one(row_payload(b"\x02" + b"\x00" * 8), ctx)
    with pytest.raises(MalformedMessage):  # tag 0 is no scheme at all
        wire.decode_client_round_one(row_payload(b"\x00"), ctx)


def test_additive_ciphertext_range(session_sum_only):
    ctx = wire.CipherContext.from_start_request(session_sum_only)
    n_sq = ctx.paillier_pk.n_sq
    with pytest.raises(MalformedMessage):  # zero is not a ciphertext
        wire.decode_client_round_one(row_payload(b"\x01" + lp_min(0)), ctx)
    with pytest.raises(MalformedMessage):  # >= n^2
        wire.decode_client_round_one(row_payload(b"\x01" + lp_min(n_sq)), ctx)
    with pytest.raises(MalformedMessage):  # non-minimal integer
        bad = struct.pack(">I", 2) + b"\x00\x07"
        wire.decode_client_round_one(row_payload(b"\x01" + bad), ctx)
    ok = row_payload(b"\x01" + lp_min(n_sq - 1))
    msg = wire.decode_client_round_one(ok, ctx)
    assert msg.rows[0].ciphertexts[0].c == n_sq - 1


def test_sumsq_field_must_be_rlwe(session_sumsq_only):
    ctx = wire.CipherContext.from_start_request(session_sumsq_only)
    with pytest.raises(MalformedMessage):
        wire.decode_client_round_one(row_payload(b"\x01" + lp_min(5)), ctx)


def test_rlwe_params_hash_checked(session_sumsq_only):
    ctx = wire.CipherContext.from_start_request(session_sumsq_only)
    with pytest.raises(MalformedMessage):
        wire.decode_client_round_one(
            row_payload(b"\x02" + b"\xde\xad\xbe\xef\xde\xad\xbe\xef"), ctx
        )


def test_rlwe_coefficients_must_be_reduced(session_sumsq_only):
    ctx = wire.CipherContext.from_start_request(session_sumsq_only)
    params = ctx.bfv_params
    cw = (params.q.bit_length() + 7) // 8
    poly = params.q.to_bytes(cw, "big") + bytes(cw * (params.n - 1))
    with pytest.raises(MalformedMessage):
        wire.decode_client_round_one(
            row_payload(b"\x02" + params.params_hash + poly + poly), ctx
        )


def test_trailing_bytes_rejected(session_sum_only):
    ctx = wire.CipherContext.from_start_request(session_sum_only)
    ok = row_payload(b"\x01" + lp_min(7))
    wire.decode_client_round_one(ok, ctx)
    with pytest.raises(MalformedMessage):
        wire.decode_client_round_one(ok + b"\x00", ctx)


def test_payload_dispatch():
    with pytest.raises(MalformedMessage):
        wire.decode_payload(wire.MSG_CLIENT_ROUND_ONE, b"", None)
    with pytest.raises(MalformedMessage):
        wire.decode_payload(wire.MSG_SERVER_RESULT, b"", None)
    with pytest.raises(UnknownMessageType):
        wire.decode_payload(0x42, b"", None)
    with pytest.raises(MalformedMessage):
        wire.encode_payload(object())
    with pytest.raises(MalformedMessage):  # result without a signature
        wire.encode_payload(protocol.ServerResult(0, ()))


# --- golden message vectors -------------------------------------------------------


def test_golden_messages():
    vec = load_vectors("messages")
    n = int(vec["paillier_n_hex"], 16)
    p = int(vec["paillier_p_hex"], 16)
    q = int(vec["paillier_q_hex"], 16)
    sk = paillier.PaillierSecretKey(p, q)
    assert sk.public_key.n == n

    req_blob = bytes.fromhex(vec["start_request_hex"])
    req = wire.decode_start_request(req_blob)
    assert req.entries == ((0, SUM),)
    assert req.paillier_pk.n == n
    assert req.bfv_pk is None
    assert wire.encode_start_request(req) == req_blob

    set_blob = bytes.fromhex(vec["server_set_hex"])
    sset = wire.decode_server_set(set_blob)
    assert len(sset.elements) == 3
    assert wire.encode_server_set(sset) == set_blob

    ctx = wire.CipherContext.from_start_request(req)
    r1_blob = bytes.fromhex(vec["client_round_one_hex"])
    r1 = wire.decode_client_round_one(r1_blob, ctx)
    assert wire.encode_client_round_one(r1) == r1_blob
    values = [paillier.dec(sk, row.ciphertexts[0]) for row in r1.rows]
    assert values == vec["row_values"]
