"""Arithmetic in Z_q[X]/(X^n + 1).

Polynomials are coefficient vectors reduced mod q.  Multiplication is
negacyclic: X^n wraps to -1, so the linear convolution folds as
c[i] - c[i+n].

Two multiplication routes are provided.  `poly_mul` packs each polynomial
into one big integer (Kronecker substitution: coefficients become fixed
width limbs of the integer), multiplies once, and slices the product back
into limbs; GMP's integer multiply then does the heavy lifting, and no
floating point or NTT-friendliness assumption enters the ring layer.
`poly_mul_schoolbook` is the quadratic reference the fast path is tested
against.
"""

from __future__ import annotations

from typing import Sequence

from .errors import ParamMismatch
from .numutil import mul


class RingPoly:
    """Element of Z_q[X]/(X^n + 1); coefficients always reduced to [0, q)."""

    __slots__ = ("coeffs", "modulus")

    def __init__(self, coeffs: Sequence[int], modulus: int):
        if modulus < 2:
            raise ParamMismatch("modulus must be at least 2")
        if len(coeffs) == 0:
            raise ParamMismatch("polynomial needs at least one coefficient")
        self.coeffs: tuple[int, ...] = tuple(c % modulus for c in coeffs)
        self.modulus = modulus

    @property
    def n(self) -> int:
        return len(self.coeffs)

    def __eq__(self, other):
        return (
            isinstance(other, RingPoly)
            and self.modulus == other.modulus
            and self.coeffs == other.coeffs
        )

    def __hash__(self):
        return hash((self.coeffs, self.modulus))

    def __repr__(self):
        return f"RingPoly(n={self.n}, q~2^{self.modulus.bit_length()})"


def zero(n: int, q: int) -> RingPoly:
    return RingPoly([0] * n, q)


def _check_pair(a: RingPoly, b: RingPoly, q: int) -> None:
    if a.modulus != q or b.modulus != q:
        raise ParamMismatch("operand modulus differs from requested q")
    if a.n != b.n:
        raise ParamMismatch(f"degree mismatch: {a.n} vs {b.n}")


def poly_add(a: RingPoly, b: RingPoly, q: int) -> RingPoly:
    _check_pair(a, b, q)
    return RingPoly([x + y for x, y in zip(a.coeffs, b.coeffs)], q)


def poly_sub(a: RingPoly, b: RingPoly, q: int) -> RingPoly:
    _check_pair(a, b, q)
    return RingPoly([x - y for x, y in zip(a.coeffs, b.coeffs)], q)


def poly_neg(a: RingPoly, q: int) -> RingPoly:
    if a.modulus != q:
        raise ParamMismatch("operand modulus differs from requested q")
    return RingPoly([-x for x in a.coeffs], q)


def scalar_mul(c: int, a: RingPoly, q: int) -> RingPoly:
    if a.modulus != q:
        raise ParamMismatch("operand modulus differs from requested q")
    c %= q
    return RingPoly([c * x for x in a.coeffs], q)


def negacyclic_convolve(
    a: Sequence[int],
    b: Sequence[int],
    bound_a: int,
    bound_b: int | None = None,
) -> list[int]:
    """Exact negacyclic convolution over the integers (no modular step).

    Inputs are non-negative coefficient vectors with a[i] < bound_a and
    b[i] < bound_b.  Kronecker substitution: each vector becomes one big
    integer with coefficients in fixed-width limbs, one integer multiply
    computes the whole linear convolution (every convolution coefficient is
    below n*bound_a*bound_b, so limbs never carry into each other), and the
    upper half folds down negated since X^n == -1.  Output coefficients may
    be negative; callers reduce as needed.
    """
    if bound_b is None:
        bound_b = bound_a
    n = len(a)
    if len(b) != n:
        raise ParamMismatch(f"degree mismatch: {n} vs {len(b)}")
    limb_bits = (
        (bound_a - 1).bit_length() + (bound_b - 1).bit_length() + n.bit_length()
    )
    lb = (limb_bits + 7) // 8
    va = ((bound_a - 1).bit_length() + 7) // 8
    vb = ((bound_b - 1).bit_length() + 7) // 8
    bufa = bytearray(n * lb)
    off = 0
    for c in a:
        bufa[off : off + va] = c.to_bytes(va, "little")
        off += lb
    bufb = bytearray(n * lb)
    off = 0
    for c in b:
        bufb[off : off + vb] = c.to_bytes(vb, "little")
        off += lb
    raw = mul(
        int.from_bytes(bufa, "little"), int.from_bytes(bufb, "little")
    ).to_bytes(2 * n * lb, "little")
    conv = [
        int.from_bytes(raw[i * lb : (i + 1) * lb], "little")
        for i in range(2 * n)
    ]
    return [conv[i] - conv[i + n] for i in range(n)]


def poly_mul(a: RingPoly, b: RingPoly, q: int) -> RingPoly:
    """Negacyclic product in Z_q[X]/(X^n + 1), Kronecker fast path."""
    _check_pair(a, b, q)
    return RingPoly(negacyclic_convolve(a.coeffs, b.coeffs, q), q)


def poly_mul_schoolbook(a: RingPoly, b: RingPoly, q: int) -> RingPoly:
    """Quadratic negacyclic convolution; reference for poly_mul."""
    _check_pair(a, b, q)
    n = a.n
    out = [0] * n
    for i, ai in enumerate(a.coeffs):
        if ai == 0:
            continue
        for j, bj in enumerate(b.coeffs):
            k = i + j
            if k < n:
                out[k] += ai * bj
            else:
                out[k - n] -= ai * bj
    return RingPoly(out, q)
