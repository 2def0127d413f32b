"""Commutative cipher over a prime-order subgroup of Z_p*.

Identifiers are hashed onto the order-q subgroup with a full-domain hash
(wide digest reduced mod p, then raised to the cofactor), and encrypted by
exponentiation with a secret scalar:

    E_k(x) = H(x)^k  (mod p)

Exponentiation commutes, so two parties holding scalars a and b can both
arrive at H(x)^(a*b) without either learning H(x)^(a*b) from the other's
plaintext set:

    E_b(E_a(x)) = H(x)^(a*b) = E_a(E_b(x))

The group: p is a 2048-bit prime with p = q*r + 1 for a 256-bit prime q.
All cipher values live in the order-q subgroup, so scalars are 256-bit and
membership of received elements is checkable (v^q == 1 mod p).  The
constants below were found by deterministic search (seed 20260819): first
256-bit prime q from the stream, then the first even 1792-bit r making
q*r + 1 a 2048-bit prime.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass

from .errors import InvalidGroupElement, InvalidIdentifier, RngError
from .numutil import powmod, randbelow

P = int(
    "B20A05471D2BEEB736816D54CB1710545068E9080C84DEDB5C25C1C747E99156"
    "3C7D576826514223330FF5470E0AA7948096F0AC34989FC4BB13CA1B65DA90BF"
    "386DF961ADD8E04CBD9EACB3AE4A245057255BB549E2D421C540F73B581AB135"
    "48F0BC6A289FF19F2A5EA4099CF360ABA6B5E3BBAB956774C00BB43BE9011BD9"
    "E5476F843E45FD2DB042B4C09F1AFC6A272C116722B7AD4AE5CD471B98073436"
    "36EA9EB8555C4BFBAF4A95684B0B77BA807C6ED81B0DFD6365C480AD9EDDB84C"
    "BCA68F7F32996F3F79D102C6F62ADE90CE34E3809EB3C2FE354DE92128711FC0"
    "5FF2FD052F6216A4066570FADAC28299B1A81E69F1487C126DC036E6216FE75D",
    16,
)
Q = int("F37CA415C523542DC47A6C25B739AA5B5862F68CCFE49962DF4C35AC8CF0A76B", 16)
COFACTOR = (P - 1) // Q

ELEMENT_BYTES = 256
MAX_IDENTIFIER_BYTES = 128

_H2G_DOMAIN = b"jingbing/hash-to-group/v1"
# 9 SHA-256 blocks = 2304 bits of digest, 256 bits beyond |p| so the
# reduction mod p is statistically uniform.
_H2G_BLOCKS = 9

_sysrand = random.SystemRandom()


@dataclass(frozen=True)
class GroupElement:
    """Element of the order-q subgroup, canonically encoded big-endian."""

    value: int

    def encode(self) -> bytes:
        return self.value.to_bytes(ELEMENT_BYTES, "big")

    @classmethod
    def decode(cls, data: bytes) -> "GroupElement":
        if len(data) != ELEMENT_BYTES:
            raise InvalidGroupElement(
                f"expected {ELEMENT_BYTES} bytes, got {len(data)}"
            )
        v = int.from_bytes(data, "big")
        if not 1 < v < P:
            raise InvalidGroupElement("value outside [2, p-1]")
        if powmod(v, Q, P) != 1:
            raise InvalidGroupElement("not in the order-q subgroup")
        return cls(v)


@dataclass(frozen=True)
class GroupScalar:
    """Secret exponent in [1, q-1]."""

    value: int

    def __post_init__(self):
        if not 1 <= self.value < Q:
            raise ValueError("scalar outside [1, q-1]")

    def __repr__(self):  # never leak the exponent in logs
        return "GroupScalar(<secret>)"


def hash_to_group(id_bytes: bytes) -> GroupElement:
    """Full-domain hash of an identifier onto the order-q subgroup.

    Deterministic across processes and platforms; never returns the
    identity.
    """
    if not id_bytes:
        raise InvalidIdentifier("empty identifier")
    if len(id_bytes) > MAX_IDENTIFIER_BYTES:
        raise InvalidIdentifier(
            f"identifier longer than {MAX_IDENTIFIER_BYTES} bytes"
        )
    prefix = _H2G_DOMAIN + len(id_bytes).to_bytes(2, "big") + id_bytes
    for attempt in range(256):
        blocks = b"".join(
            hashlib.sha256(prefix + bytes([attempt, i])).digest()
            for i in range(_H2G_BLOCKS)
        )
        u = int.from_bytes(blocks, "big") % P
        e = powmod(u, COFACTOR, P)
        # e == 1 only if u lands in the order-r subgroup; probability ~2^-256
        if e != 1:
            return GroupElement(e)
    raise InvalidIdentifier("hash-to-group failed to leave the identity")


def keygen(rng: random.Random | None = None) -> GroupScalar:
    """Uniform secret scalar in [1, q-1]."""
    rng = rng or _sysrand
    try:
        return GroupScalar(1 + randbelow(Q - 1, rng))
    except (OSError, NotImplementedError) as exc:
        raise RngError(f"randomness source failed: {exc}") from exc


def encrypt(k: GroupScalar, id_bytes: bytes) -> GroupElement:
    """H(id)^k."""
    return reencrypt(k, hash_to_group(id_bytes))


def reencrypt(k: GroupScalar, element: GroupElement) -> GroupElement:
    """element^k; commutes with any other reencrypt."""
    return GroupElement(powmod(element.value, k.value, P))


def shuffle(items: list, rng: random.Random | None = None) -> list:
    """Uniformly random permutation of `items` (input list untouched).

    Fisher-Yates; each index is drawn by reducing 256 fresh random bits,
    which is rejection-free with bias below 2^-190 for any list that fits
    in memory.
    """
    rng = rng or _sysrand
    out = list(items)
    for i in range(len(out) - 1, 0, -1):
        j = rng.getrandbits(256) % (i + 1)
        out[i], out[j] = out[j], out[i]
    return out
