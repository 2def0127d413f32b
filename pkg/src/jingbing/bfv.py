"""BFV homomorphic encryption over Z_q[X]/(X^n + 1).

Scale-invariant scheme: a plaintext m in [0, t) sits in the ciphertext as
delta*m with delta = floor(q/t), decryption rescales by t/q and rounds.
Addition is component-wise; multiplication tensors the ciphertexts over
the integers, rescales by t/q, and relinearizes the degree-2 term back to
degree 1 with a base-T digit decomposition of c2 against key material
encrypting T^i * s^2.

Only scalars are encrypted: the value occupies coefficient 0 and every
other plaintext coefficient is zero.  No batching, no modulus switching,
no bootstrapping; the aggregation workload is one multiplication followed
by additions, which the default parameters absorb with a wide margin.

Noise accounting uses the invariant-noise convention: for ciphertext
(c0, c1), noise = t * ||centered(c0 + c1*s - delta*m)||_inf and the budget
is floor(log2(q / (2*noise))).  Budget 0 means the rounding step can no
longer be trusted.
"""

from __future__ import annotations

import hashlib
import random

from .errors import (
    NoiseOverflow,
    ParamMismatch,
    PlaintextOutOfRange,
    RngError,
)
from .numutil import div_round_half_up, is_probable_prime, randbelow
from .ring import (
    RingPoly,
    negacyclic_convolve,
    poly_add,
    poly_mul,
    poly_neg,
    scalar_mul,
)

# 54- and 55-bit primes, both 1 mod 8192, found by descending search from
# 2^54 / 2^55
DEFAULT_Q_FACTORS = (0x3FFFFFFFFD6001, 0x7FFFFFFFFB4001)
DEFAULT_N = 4096
DEFAULT_T = 65537
RELIN_BASE = 1 << 30

_sysrand = random.SystemRandom()


class BfvParams:
    """Ring degree, moduli and relinearization base; immutable."""

    __slots__ = (
        "n",
        "q_factors",
        "t",
        "relin_base",
        "q",
        "delta",
        "relin_width",
        "params_hash",
    )

    def __init__(
        self,
        n: int,
        q_factors: tuple[int, ...],
        t: int,
        relin_base: int = RELIN_BASE,
    ):
        self.n = n
        self.q_factors = tuple(q_factors)
        self.t = t
        self.relin_base = relin_base
        q = 1
        for f in self.q_factors:
            q *= f
        self.q = q
        self.delta = q // t
        base_bits = relin_base.bit_length() - 1
        self.relin_width = (q.bit_length() + base_bits - 1) // base_bits
        h = hashlib.sha256(
            b"jingbing/bfv-params/v1"
            + n.to_bytes(4, "big")
            + len(self.q_factors).to_bytes(1, "big")
            + b"".join(f.to_bytes(8, "big") for f in self.q_factors)
            + t.to_bytes(8, "big")
            + relin_base.to_bytes(8, "big")
        )
        self.params_hash = h.digest()[:8]

    def validate(self) -> "BfvParams":
        n = self.n
        if n < 2 or n & (n - 1):
            raise ParamMismatch("ring degree must be a power of two >= 2")
        if len(set(self.q_factors)) != len(self.q_factors):
            raise ParamMismatch("coefficient modulus factors must be distinct")
        for f in self.q_factors:
            if not is_probable_prime(f):
                raise ParamMismatch(f"modulus factor {f} is not prime")
            if f % (2 * n) != 1:
                raise ParamMismatch(f"factor {f} is not 1 mod 2n")
            if self.t >= f:
                raise ParamMismatch("t must be below every modulus factor")
        if not is_probable_prime(self.t):
            raise ParamMismatch("plaintext modulus must be prime")
        if self.t % (2 * n) != 1:
            raise ParamMismatch("plaintext modulus must be 1 mod 2n")
        if self.delta < 2:
            raise ParamMismatch("q/t headroom too small")
        if self.relin_base < 2 or self.relin_base & (self.relin_base - 1):
            raise ParamMismatch("relinearization base must be a power of two")
        return self

    def __eq__(self, other):
        return (
            isinstance(other, BfvParams)
            and self.params_hash == other.params_hash
        )

    def __hash__(self):
        return hash(self.params_hash)

    def __repr__(self):
        return (
            f"BfvParams(n={self.n}, q~2^{self.q.bit_length()}, t={self.t})"
        )


def params_default() -> BfvParams:
    return BfvParams(DEFAULT_N, DEFAULT_Q_FACTORS, DEFAULT_T).validate()


class BfvSecretKey:
    __slots__ = ("params", "s", "key_id")

    def __init__(self, params: BfvParams, s: RingPoly, key_id: bytes):
        self.params = params
        self.s = s
        self.key_id = key_id

    def __repr__(self):
        return f"BfvSecretKey(key_id={self.key_id.hex()})"


class BfvPublicKey:
    __slots__ = ("params", "b", "a", "key_id")

    def __init__(self, params: BfvParams, b: RingPoly, a: RingPoly, key_id: bytes):
        self.params = params
        self.b = b
        self.a = a
        self.key_id = key_id

    def __repr__(self):
        return f"BfvPublicKey(key_id={self.key_id.hex()})"


class BfvRelinKey:
    """Per-digit encryptions of T^i * s^2: rows of (b_i, a_i)."""

    __slots__ = ("params", "rows", "key_id")

    def __init__(
        self,
        params: BfvParams,
        rows: tuple[tuple[RingPoly, RingPoly], ...],
        key_id: bytes,
    ):
        self.params = params
        self.rows = rows
        self.key_id = key_id

    def __repr__(self):
        return f"BfvRelinKey(key_id={self.key_id.hex()})"


class BfvKeys:
    __slots__ = ("secret", "public", "relin")

    def __init__(self, secret: BfvSecretKey, public: BfvPublicKey, relin: BfvRelinKey):
        self.secret = secret
        self.public = public
        self.relin = relin


class BfvCiphertext:
    """Degree-1 ciphertext (c0, c1), tagged with params and key."""

    __slots__ = ("c0", "c1", "params", "key_id")

    def __init__(self, c0: RingPoly, c1: RingPoly, params: BfvParams, key_id: bytes):
        self.c0 = c0
        self.c1 = c1
        self.params = params
        self.key_id = key_id

    def __eq__(self, other):
        return (
            isinstance(other, BfvCiphertext)
            and self.params == other.params
            and self.key_id == other.key_id
            and self.c0 == other.c0
            and self.c1 == other.c1
        )

    def __repr__(self):
        return f"BfvCiphertext(key_id={self.key_id.hex()})"


def _ternary(params: BfvParams, rng) -> RingPoly:
    return RingPoly(
        [randbelow(3, rng) - 1 for _ in range(params.n)], params.q
    )


def _noise(params: BfvParams, rng) -> RingPoly:
    # centered binomial, eta = 3: difference of two 3-bit popcounts
    coeffs = []
    for _ in range(params.n):
        bits = rng.getrandbits(6)
        coeffs.append((bits & 7).bit_count() - (bits >> 3).bit_count())
    return RingPoly(coeffs, params.q)


def _uniform(params: BfvParams, rng) -> RingPoly:
    return RingPoly(
        [randbelow(params.q, rng) for _ in range(params.n)], params.q
    )


def keygen(params: BfvParams, rng: random.Random | None = None) -> BfvKeys:
    """Secret, public and relinearization keys under `params`."""
    rng = rng or _sysrand
    q = params.q
    try:
        s = _ternary(params, rng)
        a = _uniform(params, rng)
        e = _noise(params, rng)
        b = poly_neg(poly_add(poly_mul(a, s, q), e, q), q)
        s_sq = poly_mul(s, s, q)
        rows = []
        for i in range(params.relin_width):
            a_i = _uniform(params, rng)
            e_i = _noise(params, rng)
            mask = poly_neg(poly_add(poly_mul(a_i, s, q), e_i, q), q)
            chunk = scalar_mul(pow(params.relin_base, i, q), s_sq, q)
            rows.append((poly_add(mask, chunk, q), a_i))
    except (OSError, NotImplementedError) as exc:
        raise RngError(f"randomness source failed: {exc}") from exc
    key_id = derive_key_id(params, b, a)
    return BfvKeys(
        BfvSecretKey(params, s, key_id),
        BfvPublicKey(params, b, a, key_id),
        BfvRelinKey(params, tuple(rows), key_id),
    )


def derive_key_id(params: BfvParams, b: RingPoly, a: RingPoly) -> bytes:
    """Key tag bound to the public key bytes; stable across serialization."""
    h = hashlib.sha256(b"jingbing/bfv-key/v1" + params.params_hash)
    cw = (params.q.bit_length() + 7) // 8
    for p in (b, a):
        for c in p.coeffs:
            h.update(c.to_bytes(cw, "big"))
    return h.digest()[:8]


def _check_ct(ct: BfvCiphertext, params: BfvParams, key_id: bytes) -> None:
    if ct.params != params:
        raise ParamMismatch("ciphertext parameters differ")
    if ct.key_id != key_id:
        raise ParamMismatch("ciphertext belongs to a different key")


def enc(pk: BfvPublicKey, m: int, rng: random.Random | None = None) -> BfvCiphertext:
    params = pk.params
    if not 0 <= m < params.t:
        raise PlaintextOutOfRange(f"plaintext must lie in [0, t), got {m}")
    rng = rng or _sysrand
    q = params.q
    u = _ternary(params, rng)
    e1 = _noise(params, rng)
    e2 = _noise(params, rng)
    c0 = poly_add(poly_mul(pk.b, u, q), e1, q)
    if m:
        lift = RingPoly(
            [params.delta * m] + [0] * (params.n - 1), q
        )
        c0 = poly_add(c0, lift, q)
    c1 = poly_add(poly_mul(pk.a, u, q), e2, q)
    return BfvCiphertext(c0, c1, params, pk.key_id)


def _phase(sk: BfvSecretKey, ct: BfvCiphertext) -> RingPoly:
    q = sk.params.q
    return poly_add(ct.c0, poly_mul(ct.c1, sk.s, q), q)


def _noise_norm(sk: BfvSecretKey, ct: BfvCiphertext) -> int:
    """max over coefficients of t * |centered residue after rounding|."""
    params = sk.params
    q, t, delta = params.q, params.t, params.delta
    half = q // 2
    worst = 0
    for c in _phase(sk, ct).coeffs:
        m_hat = div_round_half_up(t * c, q) % t
        r = (c - delta * m_hat) % q
        if r > half:
            r -= q
        if abs(r) > worst:
            worst = abs(r)
    return worst * t


def noise_budget(sk: BfvSecretKey, ct: BfvCiphertext) -> int:
    """Bits of decryption headroom left; 0 means unreliable."""
    _check_ct(ct, sk.params, sk.key_id)
    noise = _noise_norm(sk, ct)
    if noise == 0:
        noise = 1
    headroom = sk.params.q // (2 * noise)
    return max(0, headroom.bit_length() - 1)


def dec(sk: BfvSecretKey, ct: BfvCiphertext) -> int:
    _check_ct(ct, sk.params, sk.key_id)
    if noise_budget(sk, ct) == 0:
        raise NoiseOverflow("noise budget exhausted; refusing to decrypt")
    params = sk.params
    v0 = _phase(sk, ct).coeffs[0]
    return div_round_half_up(params.t * v0, params.q) % params.t


def add(ct1: BfvCiphertext, ct2: BfvCiphertext) -> BfvCiphertext:
    _check_ct(ct2, ct1.params, ct1.key_id)
    q = ct1.params.q
    return BfvCiphertext(
        poly_add(ct1.c0, ct2.c0, q),
        poly_add(ct1.c1, ct2.c1, q),
        ct1.params,
        ct1.key_id,
    )


def mul(rlk: BfvRelinKey, ct1: BfvCiphertext, ct2: BfvCiphertext) -> BfvCiphertext:
    """Ciphertext product, relinearized back to degree 1.

    The tensor is taken over the integers (negacyclic convolutions of the
    [0, q) representatives), scaled by t/q with half-up rounding, and only
    then reduced mod q; doing the scaling on exact integers is what keeps
    the rounding error to 1/2 per coefficient.
    """
    params = rlk.params
    _check_ct(ct1, params, rlk.key_id)
    _check_ct(ct2, params, rlk.key_id)
    q, t = params.q, params.t
    a0, a1 = ct1.c0.coeffs, ct1.c1.coeffs
    b0, b1 = ct2.c0.coeffs, ct2.c1.coeffs
    if a0 == b0 and a1 == b1:
        # squaring: reuse the cross product
        d0 = negacyclic_convolve(a0, a0, q)
        cross = negacyclic_convolve(a0, a1, q)
        d1 = [2 * c for c in cross]
        d2 = negacyclic_convolve(a1, a1, q)
    else:
        d0 = negacyclic_convolve(a0, b0, q)
        x = negacyclic_convolve(a0, b1, q)
        y = negacyclic_convolve(a1, b0, q)
        d1 = [u + v for u, v in zip(x, y)]
        d2 = negacyclic_convolve(a1, b1, q)
    r0 = RingPoly([div_round_half_up(t * c, q) for c in d0], q)
    r1 = RingPoly([div_round_half_up(t * c, q) for c in d1], q)
    r2 = RingPoly([div_round_half_up(t * c, q) for c in d2], q)

    # relinearize: r2 = sum_i T^i * digit_i with digits in [0, T)
    base_bits = params.relin_base.bit_length() - 1
    mask = params.relin_base - 1
    c0, c1 = r0, r1
    for i, (b_i, a_i) in enumerate(rlk.rows):
        shift = base_bits * i
        digit = RingPoly([(c >> shift) & mask for c in r2.coeffs], q)
        c0 = poly_add(
            c0,
            RingPoly(
                negacyclic_convolve(
                    digit.coeffs, b_i.coeffs, params.relin_base, q
                ),
                q,
            ),
            q,
        )
        c1 = poly_add(
            c1,
            RingPoly(
                negacyclic_convolve(
                    digit.coeffs, a_i.coeffs, params.relin_base, q
                ),
                q,
            ),
            q,
        )
    return BfvCiphertext(c0, c1, params, rlk.key_id)


def add_zero_rerandomize(
    pk: BfvPublicKey, ct: BfvCiphertext, rng: random.Random | None = None
) -> BfvCiphertext:
    """Fresh randomness, same plaintext: ct + enc(0)."""
    _check_ct(ct, pk.params, pk.key_id)
    return add(ct, enc(pk, 0, rng))
