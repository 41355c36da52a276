"""Two's-complement fixed-point numbers with truncated multiplication.

A value with format ``(n_int, n_frac)`` is stored as a signed integer ``raw``
occupying ``n = n_int + n_frac`` bits and represents ``raw * 2**-n_frac``.

Multiplication truncates every partial product to ``n_frac`` fractional bits
before accumulating, which is what a reversible shift-and-add multiplier
produces. Division is the restoring procedure that inverts it.

The raw kernels :func:`mul_raw` and :func:`div_raw` accept Python ints or
numpy ``int64`` arrays and are shared by the classical engine and the circuit
simulator so both produce identical bits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

import numpy as np

__all__ = [
    "FixedPointOverflow",
    "FormatMismatch",
    "FxFormat",
    "FxNum",
    "DivResult",
    "wrap_signed",
    "mul_raw",
    "div_raw",
    "fx_add",
    "fx_sub",
    "fx_compare",
    "trunc_mul",
    "trunc_div",
    "is_invertible_multiplier",
]

IntLike = Union[int, np.ndarray]


class FixedPointOverflow(ArithmeticError):
    """A result does not fit the integer bits of its format."""


class FormatMismatch(ValueError):
    """Operands carry different fixed-point formats."""


@dataclass(frozen=True)
class FxFormat:
    """Digit layout of a signed fixed-point number."""

    n_int: int
    n_frac: int

    def __post_init__(self) -> None:
        if self.n_int < 1:
            raise ValueError(f"n_int must be >= 1, got {self.n_int}")
        if self.n_frac < 0:
            raise ValueError(f"n_frac must be >= 0, got {self.n_frac}")
        if self.n > 64:
            raise ValueError(f"total width {self.n} exceeds 64 bits")

    @property
    def n(self) -> int:
        return self.n_int + self.n_frac

    @property
    def min_raw(self) -> int:
        return -(1 << (self.n - 1))

    @property
    def max_raw(self) -> int:
        return (1 << (self.n - 1)) - 1

    @property
    def resolution(self) -> float:
        return 2.0 ** -self.n_frac

    @property
    def min_value(self) -> float:
        return self.min_raw * self.resolution

    @property
    def max_value(self) -> float:
        return self.max_raw * self.resolution

    def fits(self, raw: int) -> bool:
        return self.min_raw <= raw <= self.max_raw

    def encode_raw(self, value: float | Fraction | int) -> int:
        """Truncate ``value`` toward minus infinity onto the grid."""
        if isinstance(value, float) and not math.isfinite(value):
            raise FixedPointOverflow(f"cannot encode non-finite value {value}")
        raw = math.floor(Fraction(value) * (1 << self.n_frac))
        if not self.fits(raw):
            raise FixedPointOverflow(
                f"value {float(value)} outside [{self.min_value}, {self.max_value}] "
                f"for format {self}"
            )
        return raw

    def encode(self, value: float | Fraction | int) -> "FxNum":
        return FxNum(self.encode_raw(value), self)

    def decode(self, raw: IntLike) -> float | np.ndarray:
        return raw * self.resolution

    def from_bits(self, bits: IntLike) -> IntLike:
        """Interpret an unsigned n-bit pattern as a signed raw value."""
        return wrap_signed(bits, self.n)

    def to_bits(self, raw: IntLike) -> IntLike:
        return raw & ((1 << self.n) - 1)

    def __str__(self) -> str:
        return f"{self.n_int}.{self.n_frac}"

    @classmethod
    def parse(cls, text: str) -> "FxFormat":
        """Build a format from ``"n_int.n_frac"``."""
        n_int, n_frac = text.split(".")
        return cls(int(n_int), int(n_frac))


@dataclass(frozen=True)
class FxNum:
    """A fixed-point value: ``raw * 2**-fmt.n_frac``."""

    raw: int
    fmt: FxFormat

    def __post_init__(self) -> None:
        if not self.fmt.fits(self.raw):
            raise FixedPointOverflow(f"raw {self.raw} does not fit {self.fmt.n} bits")

    @property
    def value(self) -> float:
        return self.raw * self.fmt.resolution

    def exact(self) -> Fraction:
        return Fraction(self.raw, 1 << self.fmt.n_frac)

    def __float__(self) -> float:
        return self.value

    def __add__(self, other: "FxNum") -> "FxNum":
        return fx_add(self, other)

    def __sub__(self, other: "FxNum") -> "FxNum":
        return fx_sub(self, other)

    def __mul__(self, other: "FxNum") -> "FxNum":
        return trunc_mul(self, other)


def wrap_signed(value: IntLike, width: int) -> IntLike:
    """Reduce ``value`` modulo ``2**width`` into the signed range."""
    half = 1 << (width - 1)
    return ((value + half) & ((1 << width) - 1)) - half


def mul_raw(
    x: IntLike,
    y: IntLike,
    x_frac: int,
    x_width: int,
    x_signed: bool = True,
) -> IntLike:
    """Truncated product in raw units of ``y``.

    Bit ``k`` of ``x`` selects ``floor(y * 2**k / 2**x_frac)``; for a signed
    ``x`` the top bit carries negative weight. The result keeps the scale of
    ``y``. With ``x_frac = 0`` this is the exact integer product.
    """
    bits = x & ((1 << x_width) - 1)
    acc = 0
    for k in range(x_width):
        term = (y << k) >> x_frac
        sel = (bits >> k) & 1
        if x_signed and k == x_width - 1:
            acc = acc - sel * term
        else:
            acc = acc + sel * term
    return acc


@dataclass(frozen=True)
class DivResult:
    """Quotient from restoring division plus whether it is an exact preimage."""

    quotient: IntLike
    exact: IntLike


def div_raw(
    z: IntLike,
    y: IntLike,
    x_frac: int,
    x_width: int,
    x_signed: bool = True,
) -> DivResult:
    """Restoring division inverting :func:`mul_raw`.

    Walks the quotient bits from the most significant non-sign bit down,
    subtracting the partial term ``floor(y * 2**k / 2**x_frac)`` and restoring
    when the remainder goes negative. Bits whose term truncates to zero stay
    clear, so the quotient is the smallest candidate. For a signed quotient a
    negative ``z`` sets the sign bit first and restores from
    ``z + floor(y * 2**(n-1) / 2**x_frac)``; the sign term outweighs all
    others when ``y >= 1``. ``exact`` is true iff ``mul_raw(quotient, y) == z``.
    A negative ``z`` with an unsigned quotient yields 0 and ``exact`` false.
    """
    top = x_width - 1 if x_signed else x_width
    if isinstance(z, np.ndarray) or isinstance(y, np.ndarray):
        z_arr = np.asarray(z, dtype=np.int64)
        y_arr = np.asarray(y, dtype=np.int64)
        neg = z_arr < 0
        if x_signed:
            rem = np.where(neg, z_arr + ((y_arr << top) >> x_frac), z_arr)
            q = np.where(neg, -(1 << top), 0).astype(np.int64)
            valid = rem >= 0
        else:
            rem = z_arr
            q = np.zeros(np.broadcast(z_arr, y_arr).shape, dtype=np.int64)
            valid = ~neg
        rem = np.where(valid, rem, 0)
        q = np.broadcast_to(q, np.broadcast(z_arr, y_arr).shape).copy()
        for k in range(top - 1, -1, -1):
            term = (y_arr << k) >> x_frac
            trial = rem - term
            take = (trial >= 0) & (term > 0)
            rem = np.where(take, trial, rem)
            q = q | (take.astype(np.int64) << k)
        return DivResult(np.where(valid, q, 0), (rem == 0) & valid)
    q = 0
    rem = z
    if z < 0:
        if not x_signed:
            return DivResult(0, False)
        rem = z + ((y << top) >> x_frac)
        if rem < 0:
            return DivResult(0, False)
        q = -(1 << top)
    for k in range(top - 1, -1, -1):
        term = (y << k) >> x_frac
        if term > 0 and rem - term >= 0:
            rem -= term
            q |= 1 << k
    return DivResult(q, rem == 0)


def _check_same(x: FxNum, y: FxNum) -> FxFormat:
    if x.fmt != y.fmt:
        raise FormatMismatch(f"format mismatch: {x.fmt} vs {y.fmt}")
    return x.fmt


def fx_add(x: FxNum, y: FxNum) -> FxNum:
    """Sum with two's-complement wraparound."""
    fmt = _check_same(x, y)
    return FxNum(wrap_signed(x.raw + y.raw, fmt.n), fmt)


def fx_sub(x: FxNum, y: FxNum) -> FxNum:
    """Difference with two's-complement wraparound."""
    fmt = _check_same(x, y)
    return FxNum(wrap_signed(x.raw - y.raw, fmt.n), fmt)


def fx_compare(x: FxNum, y: FxNum) -> int:
    """Return 1 iff ``x > y``.

    Computed as the sign bit of ``y - x`` on a register one bit wider than
    the operands, so the subtraction cannot wrap.
    """
    fmt = _check_same(x, y)
    diff = (y.raw - x.raw) & ((1 << (fmt.n + 1)) - 1)
    return (diff >> fmt.n) & 1


def trunc_mul(x: FxNum, y: FxNum) -> FxNum:
    """Truncated product; raises :class:`FixedPointOverflow` when it does not fit."""
    fmt = _check_same(x, y)
    raw = mul_raw(x.raw, y.raw, fmt.n_frac, fmt.n)
    if not fmt.fits(raw):
        raise FixedPointOverflow(f"product {x.value} * {y.value} overflows format {fmt}")
    return FxNum(raw, fmt)


def trunc_div(z: FxNum, y: FxNum) -> tuple[FxNum, bool]:
    """Invert :func:`trunc_mul` in its first argument.

    Returns ``(x, exact)``. When ``z`` has a preimage ``exact`` is true and
    ``trunc_mul(x, y) == z``. Otherwise ``x`` is the quotient the restoring
    loop settles on and ``exact`` is false.
    """
    fmt = _check_same(z, y)
    if y.raw <= 0:
        raise ZeroDivisionError(f"divisor must be positive, got {y.value}")
    res = div_raw(z.raw, y.raw, fmt.n_frac, fmt.n)
    return FxNum(int(res.quotient), fmt), bool(res.exact)


def is_invertible_multiplier(y: FxNum) -> bool:
    """True iff ``trunc_mul(., y)`` is injective on non-negative operands.

    Every partial term must be at least one unit in the last place, which
    holds exactly when ``y >= 1``. Below that the lowest bits of ``x`` are
    multiplied into zero and cannot be recovered.
    """
    return y.raw >= (1 << y.fmt.n_frac)
