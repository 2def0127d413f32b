"""Big-integer helpers.

Uses gmpy2 when importable (it is a declared dependency, so normally always)
and falls back to pure-Python equivalents so the package still works on
interpreters where the extension cannot load.
"""

from __future__ import annotations

import random

from .errors import KeygenError

try:
    import gmpy2

    HAVE_GMP = True

    def powmod(base: int, exp: int, mod: int) -> int:
        return int(gmpy2.powmod(base, exp, mod))

    def invert(a: int, mod: int) -> int:
        return int(gmpy2.invert(a, mod))

    def mul(a: int, b: int) -> int:
        return int(gmpy2.mpz(a) * b)

    def mulmod(a: int, b: int, mod: int) -> int:
        return int(gmpy2.mpz(a) * b % mod)

    def is_probable_prime(n: int) -> bool:
        return bool(gmpy2.is_prime(n, 40))

except ImportError:  # pragma: no cover - exercised only without gmpy2
    HAVE_GMP = False

    powmod = pow

    def invert(a: int, mod: int) -> int:
        return pow(a, -1, mod)

    def mul(a: int, b: int) -> int:
        return a * b

    def mulmod(a: int, b: int, mod: int) -> int:
        return a * b % mod

    _SMALL_PRIMES = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47]

    def is_probable_prime(n: int) -> bool:
        if n < 2:
            return False
        for p in _SMALL_PRIMES:
            if n % p == 0:
                return n == p
        # Miller-Rabin, 40 fixed-base-independent rounds
        d = n - 1
        r = 0
        while d % 2 == 0:
            d //= 2
            r += 1
        rng = random.Random(0xC0FFEE ^ (n & 0xFFFFFFFF))
        for _ in range(40):
            a = rng.randrange(2, n - 1)
            x = pow(a, d, n)
            if x in (1, n - 1):
                continue
            for _ in range(r - 1):
                x = pow(x, 2, n)
                if x == n - 1:
                    break
            else:
                return False
        return True


def randbelow(bound: int, rng: random.Random) -> int:
    """Uniform integer in [0, bound) from the supplied source."""
    if bound <= 0:
        raise ValueError("bound must be positive")
    k = bound.bit_length()
    while True:
        v = rng.getrandbits(k)
        if v < bound:
            return v


def getprimeover(bits: int, rng: random.Random, max_tries: int = 100_000) -> int:
    """Random prime with exactly `bits` bits."""
    if bits < 4:
        raise ValueError("prime size too small")
    for _ in range(max_tries):
        candidate = rng.getrandbits(bits) | (1 << (bits - 1)) | 1
        if is_probable_prime(candidate):
            return candidate
    raise KeygenError(f"no {bits}-bit prime found in {max_tries} tries")


def div_round_half_up(num: int, den: int) -> int:
    """round(num/den) with ties away from the floor (toward +infinity).

    den must be positive; num may be negative.  Deterministic, no floats.
    """
    if den <= 0:
        raise ValueError("denominator must be positive")
    return (2 * num + den) // (2 * den)
