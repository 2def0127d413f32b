"""Paillier additively homomorphic encryption.

Standard scheme with the generator fixed to g = n + 1, which turns
encryption's g^m into the cheap (1 + m*n) mod n^2 and decryption's
L(g^lambda) into lambda mod n.  Only the operations the aggregation
protocol needs are provided: encrypt, decrypt, ciphertext addition and
rerandomization.  Values are non-negative integers below n; there is no
signed encoding.

Ciphertexts carry an 8-byte tag derived from the public modulus so that
mixing ciphertexts from different keys fails loudly instead of decrypting
to noise.
"""

from __future__ import annotations

import hashlib
import math
import random

from .errors import (
    InvalidCiphertext,
    KeygenError,
    KeyMismatch,
    PlaintextOutOfRange,
)
from .numutil import getprimeover, invert, mulmod, powmod, randbelow

KEY_SIZES = (512, 1024, 2048)
DEFAULT_KEY_BITS = 2048

_sysrand = random.SystemRandom()


def _key_id(n: int) -> bytes:
    nb = n.to_bytes((n.bit_length() + 7) // 8, "big")
    return hashlib.sha256(b"jingbing/paillier-key/v1" + nb).digest()[:8]


class PaillierPublicKey:
    def __init__(self, n: int):
        self.n = n
        self.n_sq = n * n
        self.key_id = _key_id(n)

    def __eq__(self, other):
        return isinstance(other, PaillierPublicKey) and self.n == other.n

    def __hash__(self):
        return hash(("PaillierPublicKey", self.n))

    def __repr__(self):
        return f"PaillierPublicKey(n~2^{self.n.bit_length()})"


class PaillierSecretKey:
    def __init__(self, p: int, q: int):
        if p == q:
            raise ValueError("p and q must be distinct")
        self.p = p
        self.q = q
        n = p * q
        self.public_key = PaillierPublicKey(n)
        self.lam = math.lcm(p - 1, q - 1)
        # mu = L((n+1)^lam mod n^2)^-1 mod n; with g = n+1 the inner value
        # collapses to lam mod n
        self.mu = invert(self.lam % n, n)

    def __repr__(self):
        return f"PaillierSecretKey(n~2^{self.public_key.n.bit_length()})"


class PaillierCiphertext:
    """Integer c in [1, n^2) with gcd(c, n^2) = 1, tagged by key."""

    __slots__ = ("c", "key_id")

    def __init__(self, c: int, key_id: bytes):
        self.c = c
        self.key_id = key_id

    def __eq__(self, other):
        return (
            isinstance(other, PaillierCiphertext)
            and self.c == other.c
            and self.key_id == other.key_id
        )

    def __repr__(self):
        return f"PaillierCiphertext(key_id={self.key_id.hex()})"


def keygen(
    bits: int = DEFAULT_KEY_BITS, rng: random.Random | None = None
) -> tuple[PaillierPublicKey, PaillierSecretKey]:
    """Fresh keypair with an exactly `bits`-bit modulus."""
    if bits not in KEY_SIZES:
        raise KeygenError(f"key size must be one of {KEY_SIZES}")
    rng = rng or _sysrand
    while True:
        p = getprimeover(bits // 2, rng)
        q = getprimeover(bits // 2, rng)
        n = p * q
        if p == q or n.bit_length() != bits:
            continue
        # guards the invertibility of lam mod n (always holds for distinct
        # equal-size primes, but cheap to assert)
        if math.gcd(n, (p - 1) * (q - 1)) != 1:
            continue
        sk = PaillierSecretKey(p, q)
        return sk.public_key, sk


def enc(
    pk: PaillierPublicKey, m: int, rng: random.Random | None = None
) -> PaillierCiphertext:
    if not 0 <= m < pk.n:
        raise PlaintextOutOfRange(f"plaintext must lie in [0, n), got {m}")
    rng = rng or _sysrand
    while True:
        r = 1 + randbelow(pk.n - 1, rng)
        if math.gcd(r, pk.n) == 1:
            break
    c = mulmod(1 + m * pk.n, powmod(r, pk.n, pk.n_sq), pk.n_sq)
    return PaillierCiphertext(c, pk.key_id)


def dec(sk: PaillierSecretKey, ct: PaillierCiphertext) -> int:
    pk = sk.public_key
    if ct.key_id != pk.key_id:
        raise KeyMismatch("ciphertext was produced under a different key")
    _check_ciphertext(pk, ct)
    u = powmod(ct.c, sk.lam, pk.n_sq)
    return ((u - 1) // pk.n) * sk.mu % pk.n


def add(
    pk: PaillierPublicKey, ct1: PaillierCiphertext, ct2: PaillierCiphertext
) -> PaillierCiphertext:
    """Ciphertext of the sum (mod n) of the two plaintexts."""
    if ct1.key_id != pk.key_id or ct2.key_id != pk.key_id:
        raise KeyMismatch("cannot add ciphertexts under different keys")
    return PaillierCiphertext(mulmod(ct1.c, ct2.c, pk.n_sq), pk.key_id)


def rerandomize(
    pk: PaillierPublicKey,
    ct: PaillierCiphertext,
    rng: random.Random | None = None,
) -> PaillierCiphertext:
    """Same plaintext under fresh randomness: c * r^n mod n^2."""
    if ct.key_id != pk.key_id:
        raise KeyMismatch("ciphertext was produced under a different key")
    _check_ciphertext(pk, ct)
    rng = rng or _sysrand
    while True:
        r = 1 + randbelow(pk.n - 1, rng)
        if math.gcd(r, pk.n) == 1:
            break
    return PaillierCiphertext(
        mulmod(ct.c, powmod(r, pk.n, pk.n_sq), pk.n_sq), pk.key_id
    )


def _check_ciphertext(pk: PaillierPublicKey, ct: PaillierCiphertext) -> None:
    if not 1 <= ct.c < pk.n_sq:
        raise InvalidCiphertext("ciphertext outside [1, n^2)")
    if math.gcd(ct.c, pk.n_sq) != 1:
        raise InvalidCiphertext("ciphertext shares a factor with n^2")
