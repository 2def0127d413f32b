"""Client and server state machines for intersection statistics.

Flow (after the authentication handshake):

  client                                server
    | -- StartRequest: spec + keys  -->   |
    | <-- ServerShuffledSet: E_s(ids) --  |
    | -- ClientRoundOne:                  |
    |      E_c(E_s(server ids)) shuffled, |
    |      rows (E_c(id), enc(values)) -->|
    | <-- ServerResult: count, sums ----  |

The server re-encrypts each client row element with its own scalar and
matches the double encryptions against its own set as returned by the
client, so both exponents end up applied to every identifier and neither
side ever sees the other's plaintext set.  Matching rows' value
ciphertexts are aggregated homomorphically (Paillier for SUM, RLWE for
SUM_OF_SQUARES via one self-multiplication per row) and rerandomized, so
the client cannot link returned aggregates to the ciphertexts it sent.

Aggregates are computed over the client's columns; the server contributes
identifiers only.  Swap roles and run again to aggregate the other side's
values.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass

from . import bfv, commutative, paillier
from .errors import (
    BoundExceeded,
    CapacityExceeded,
    ColumnMismatch,
    DuplicateIdentifier,
    MalformedMessage,
    PhaseViolation,
    ProtocolViolation,
    TooManyRecords,
    UnsupportedVersion,
)

PROTOCOL_VERSION = 1

_sysrand = random.SystemRandom()


class Operator(enum.Enum):
    SUM = 1
    SUM_OF_SQUARES = 2

    @property
    def token(self) -> str:
        return "sum" if self is Operator.SUM else "sumsq"

    @classmethod
    def from_token(cls, token: str) -> "Operator":
        for op in cls:
            if op.token == token:
                return op
        raise ValueError(f"unknown operator {token!r}")


@dataclass(frozen=True)
class AggregationSpec:
    """Ordered (column, operator) requests, e.g. ((0, SUM), (0, SUM_OF_SQUARES))."""

    entries: tuple[tuple[int, Operator], ...]

    def check(self) -> "AggregationSpec":
        if not self.entries:
            raise ColumnMismatch("aggregation spec is empty")
        seen = set()
        for col, op in self.entries:
            if not isinstance(op, Operator):
                raise ColumnMismatch(f"unknown operator {op!r}")
            if not 0 <= col <= 3:
                raise ColumnMismatch(f"column index {col} out of range")
            if (col, op) in seen:
                raise ColumnMismatch(f"duplicate request ({col}, {op.name})")
            seen.add((col, op))
        cols = sorted({c for c, _ in self.entries})
        if cols != list(range(len(cols))):
            raise ColumnMismatch("column indices must be dense from 0")
        return self

    def column_span(self) -> int:
        return 1 + max(c for c, _ in self.entries)

    def needs_sum(self) -> bool:
        return any(op is Operator.SUM for _, op in self.entries)

    def needs_sumsq(self) -> bool:
        return any(op is Operator.SUM_OF_SQUARES for _, op in self.entries)


@dataclass(frozen=True)
class Record:
    identifier: bytes
    values: tuple[int, ...]


@dataclass(frozen=True)
class Dataset:
    records: tuple[Record, ...]
    column_count: int
    bound: int

    def __post_init__(self):
        if self.bound < 1:
            raise BoundExceeded("value bound must be at least 1")
        seen = set()
        for rec in self.records:
            if len(rec.values) != self.column_count:
                raise ColumnMismatch(
                    f"record {rec.identifier!r} has {len(rec.values)} values, "
                    f"dataset declares {self.column_count} columns"
                )
            if rec.identifier in seen:
                raise DuplicateIdentifier(
                    f"duplicate identifier {rec.identifier!r}"
                )
            seen.add(rec.identifier)


@dataclass(frozen=True)
class Limits:
    max_records: int
    max_bound: int


DEFAULT_LIMITS = Limits(max_records=1000, max_bound=2**20)
# reproduces the original PoC's transport and parameter ceilings
PAPER_LIMITS = Limits(max_records=20, max_bound=31)


def validate_request(
    spec: AggregationSpec,
    ds: Dataset,
    limits: Limits = DEFAULT_LIMITS,
    plaintext_modulus: int = bfv.DEFAULT_T,
) -> None:
    """Reject anything the protocol could not aggregate exactly."""
    spec.check()
    if ds.column_count != spec.column_span():
        raise ColumnMismatch(
            f"spec spans {spec.column_span()} columns, "
            f"dataset has {ds.column_count}"
        )
    if len(ds.records) > limits.max_records:
        raise TooManyRecords(
            f"{len(ds.records)} records exceeds limit {limits.max_records}"
        )
    if ds.bound > limits.max_bound:
        raise BoundExceeded(
            f"declared bound {ds.bound} exceeds limit {limits.max_bound}"
        )
    for rec in ds.records:
        for v in rec.values:
            if not 0 <= v <= ds.bound:
                raise BoundExceeded(
                    f"value {v} of {rec.identifier!r} outside [0, {ds.bound}]"
                )
    if spec.needs_sumsq():
        # worst case every record matches; the summed squares must fit one
        # plaintext slot with no modular wrap
        worst = len(ds.records) * ds.bound * ds.bound
        if worst >= plaintext_modulus:
            raise CapacityExceeded(
                f"{len(ds.records)} records at bound {ds.bound} could reach "
                f"{worst} >= plaintext modulus {plaintext_modulus}"
            )


# --- messages ----------------------------------------------------------------


@dataclass(frozen=True)
class StartRequest:
    version: int
    column_count: int
    entries: tuple[tuple[int, Operator], ...]
    paillier_pk: paillier.PaillierPublicKey | None
    bfv_params: bfv.BfvParams | None
    bfv_pk: bfv.BfvPublicKey | None
    bfv_relin: bfv.BfvRelinKey | None


@dataclass(frozen=True)
class ServerShuffledSet:
    elements: tuple[commutative.GroupElement, ...]


@dataclass(frozen=True)
class ClientRow:
    element: commutative.GroupElement
    ciphertexts: tuple  # one per spec entry, Paillier or RLWE per operator


@dataclass(frozen=True)
class ClientRoundOne:
    reencrypted_server: tuple[commutative.GroupElement, ...]
    rows: tuple[ClientRow, ...]


@dataclass(frozen=True)
class ServerResult:
    cardinality: int
    aggregates: tuple  # one ciphertext per spec entry


@dataclass(frozen=True)
class ProtocolOutput:
    cardinality: int
    aggregates: dict[tuple[int, Operator], int]


# --- client ------------------------------------------------------------------


class _ClientPhase(enum.Enum):
    AWAIT_SET = 1
    AWAIT_RESULT = 2
    DONE = 3


class ClientState:
    def __init__(self, spec, ds, limits, key, p_pk, p_sk, bfv_keys):
        self.spec = spec
        self.ds = ds
        self.limits = limits
        self.key = key  # commutative scalar, never serialized
        self.paillier_pk = p_pk
        self.paillier_sk = p_sk
        self.bfv_keys = bfv_keys
        self.server_count: int | None = None
        self.phase = _ClientPhase.AWAIT_SET


def client_start(
    spec: AggregationSpec,
    ds: Dataset,
    rng: random.Random | None = None,
    limits: Limits = DEFAULT_LIMITS,
    paillier_bits: int = paillier.DEFAULT_KEY_BITS,
) -> tuple[ClientState, StartRequest]:
    """Validate, generate per-session keys, build the opening message."""
    rng = rng or _sysrand
    validate_request(spec, ds, limits)
    key = commutative.keygen(rng)
    p_pk = p_sk = None
    if spec.needs_sum():
        p_pk, p_sk = paillier.keygen(paillier_bits, rng)
    bfv_keys = None
    if spec.needs_sumsq():
        bfv_keys = bfv.keygen(bfv.params_default(), rng)
    state = ClientState(spec, ds, limits, key, p_pk, p_sk, bfv_keys)
    req = StartRequest(
        version=PROTOCOL_VERSION,
        column_count=spec.column_span(),
        entries=spec.entries,
        paillier_pk=p_pk,
        bfv_params=bfv_keys.public.params if bfv_keys else None,
        bfv_pk=bfv_keys.public if bfv_keys else None,
        bfv_relin=bfv_keys.relin if bfv_keys else None,
    )
    return state, req


def client_round_one(
    cs: ClientState, msg: ServerShuffledSet, rng: random.Random | None = None
) -> ClientRoundOne:
    """Re-encrypt the server's set; send own ids and value ciphertexts."""
    if cs.phase is not _ClientPhase.AWAIT_SET:
        raise PhaseViolation(f"round one not allowed in {cs.phase.name}")
    rng = rng or _sysrand
    cs.server_count = len(msg.elements)
    reenc = commutative.shuffle(
        [commutative.reencrypt(cs.key, e) for e in msg.elements], rng
    )
    rows = []
    for rec in cs.ds.records:
        element = commutative.encrypt(cs.key, rec.identifier)
        cts = []
        for col, op in cs.spec.entries:
            v = rec.values[col]
            if op is Operator.SUM:
                cts.append(paillier.enc(cs.paillier_pk, v, rng))
            else:
                cts.append(bfv.enc(cs.bfv_keys.public, v, rng))
        rows.append(ClientRow(element, tuple(cts)))
    rows = commutative.shuffle(rows, rng)
    cs.phase = _ClientPhase.AWAIT_RESULT
    return ClientRoundOne(tuple(reenc), tuple(rows))


def client_finalize(cs: ClientState, msg: ServerResult) -> ProtocolOutput:
    """Decrypt aggregates, hold them to the declared bounds."""
    if cs.phase is not _ClientPhase.AWAIT_RESULT:
        raise PhaseViolation(f"finalize not allowed in {cs.phase.name}")
    card = msg.cardinality
    if card > len(cs.ds.records) or card > (cs.server_count or 0):
        raise ProtocolViolation(
            f"cardinality {card} exceeds a participant's set size"
        )
    if len(msg.aggregates) != len(cs.spec.entries):
        raise MalformedMessage("aggregate count does not match the spec")
    out: dict[tuple[int, Operator], int] = {}
    bound = cs.ds.bound
    for (col, op), ct in zip(cs.spec.entries, msg.aggregates):
        if op is Operator.SUM:
            if not isinstance(ct, paillier.PaillierCiphertext):
                raise MalformedMessage("SUM aggregate is not additive-scheme")
            value = paillier.dec(cs.paillier_sk, ct)
            ceiling = card * bound
        else:
            if not isinstance(ct, bfv.BfvCiphertext):
                raise MalformedMessage("SUM_OF_SQUARES aggregate is not RLWE")
            value = bfv.dec(cs.bfv_keys.secret, ct)
            ceiling = card * bound * bound
        if value > ceiling:
            raise ProtocolViolation(
                f"aggregate {value} exceeds ceiling {ceiling} "
                f"for ({col}, {op.name})"
            )
        out[(col, op)] = value
    cs.phase = _ClientPhase.DONE
    return ProtocolOutput(card, out)


# --- server ------------------------------------------------------------------


class _ServerPhase(enum.Enum):
    AWAIT_ROUND_ONE = 1
    DONE = 2


class ServerState:
    def __init__(self, key, spec, req: StartRequest, sent_count, limits):
        self.key = key
        self.spec = spec
        self.paillier_pk = req.paillier_pk
        self.bfv_pk = req.bfv_pk
        self.bfv_relin = req.bfv_relin
        self.sent_count = sent_count
        self.limits = limits
        self.phase = _ServerPhase.AWAIT_ROUND_ONE


def server_on_start(
    server_ds: Dataset,
    req: StartRequest,
    rng: random.Random | None = None,
    limits: Limits = DEFAULT_LIMITS,
) -> tuple[ServerState, ServerShuffledSet]:
    """Check the request, blind and shuffle the server's identifiers."""
    if req.version != PROTOCOL_VERSION:
        raise UnsupportedVersion(f"protocol version {req.version} not supported")
    spec = AggregationSpec(req.entries).check()
    if req.column_count != spec.column_span():
        raise ColumnMismatch(
            "declared column count does not match the spec entries"
        )
    if spec.needs_sum() and req.paillier_pk is None:
        raise MalformedMessage("SUM requested but no additive key supplied")
    if spec.needs_sumsq() and (
        req.bfv_params is None or req.bfv_pk is None or req.bfv_relin is None
    ):
        raise MalformedMessage("SUM_OF_SQUARES requested but RLWE keys missing")
    if len(server_ds.records) > limits.max_records:
        raise TooManyRecords(
            f"server set {len(server_ds.records)} exceeds limit "
            f"{limits.max_records}"
        )
    rng = rng or _sysrand
    key = commutative.keygen(rng)
    elements = commutative.shuffle(
        [commutative.encrypt(key, rec.identifier) for rec in server_ds.records],
        rng,
    )
    state = ServerState(key, spec, req, len(elements), limits)
    return state, ServerShuffledSet(tuple(elements))


def server_round_two(
    ss: ServerState, msg: ClientRoundOne, rng: random.Random | None = None
) -> ServerResult:
    """Match double encryptions, aggregate the matching rows' ciphertexts."""
    if ss.phase is not _ServerPhase.AWAIT_ROUND_ONE:
        raise PhaseViolation(f"round two not allowed in {ss.phase.name}")
    rng = rng or _sysrand
    if len(msg.reencrypted_server) != ss.sent_count:
        raise MalformedMessage(
            f"client returned {len(msg.reencrypted_server)} elements, "
            f"server sent {ss.sent_count}"
        )
    if len(msg.rows) > ss.limits.max_records:
        raise TooManyRecords(
            f"client sent {len(msg.rows)} rows, limit {ss.limits.max_records}"
        )
    double_server = {e.encode() for e in msg.reencrypted_server}
    if len(double_server) != len(msg.reencrypted_server):
        raise MalformedMessage("duplicate element in returned server set")

    matched: list[ClientRow] = []
    seen_rows = set()
    for row in msg.rows:
        enc_id = row.element.encode()
        if enc_id in seen_rows:
            raise MalformedMessage("duplicate identifier element in client rows")
        seen_rows.add(enc_id)
        if len(row.ciphertexts) != len(ss.spec.entries):
            raise MalformedMessage("row ciphertext count does not match spec")
        double = commutative.reencrypt(ss.key, row.element)
        if double.encode() in double_server:
            matched.append(row)

    aggregates = []
    for i, (col, op) in enumerate(ss.spec.entries):
        if op is Operator.SUM:
            acc = None
            for row in matched:
                ct = row.ciphertexts[i]
                if not isinstance(ct, paillier.PaillierCiphertext):
                    raise MalformedMessage("SUM field is not additive-scheme")
                acc = ct if acc is None else paillier.add(ss.paillier_pk, acc, ct)
            if acc is None:
                acc = paillier.enc(ss.paillier_pk, 0, rng)
            aggregates.append(paillier.rerandomize(ss.paillier_pk, acc, rng))
        else:
            acc = None
            for row in matched:
                ct = row.ciphertexts[i]
                if not isinstance(ct, bfv.BfvCiphertext):
                    raise MalformedMessage("SUM_OF_SQUARES field is not RLWE")
                sq = bfv.mul(ss.bfv_relin, ct, ct)
                acc = sq if acc is None else bfv.add(acc, sq)
            if acc is None:
                acc = bfv.enc(ss.bfv_pk, 0, rng)
            aggregates.append(bfv.add_zero_rerandomize(ss.bfv_pk, acc, rng))
    ss.phase = _ServerPhase.DONE
    return ServerResult(len(matched), tuple(aggregates))
