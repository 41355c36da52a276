"""Jumpable linear congruential generator with an xorshift output permutation.

The sequence ``x_{k+1} = (a x_k + c) mod 2**n_bits`` can jump ``n`` elements
at once: ``x_n = a**n x_0 + c * G(n)`` with ``G(n) = sum_{k<n} a**k``.
Every map here is a bijection on ``n_bits``-bit words, which is what the
circuit implementation needs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

__all__ = [
    "LcgParams",
    "PermutationSpec",
    "PrnStream",
    "DEFAULT_LCG",
    "lcg_step",
    "lcg_jump",
    "geometric_sum",
    "permute",
    "permute_inv",
    "uniform_bits",
    "uniform_unit",
]


@dataclass(frozen=True)
class LcgParams:
    """``x -> (a x + c) mod 2**n_bits``."""

    n_bits: int
    a: int
    c: int

    def __post_init__(self) -> None:
        if self.n_bits < 1:
            raise ValueError("n_bits must be positive")
        if not 0 <= self.a < self.modulus or not 0 <= self.c < self.modulus:
            raise ValueError("a and c must lie in [0, 2**n_bits)")
        if self.a % 2 == 0:
            raise ValueError(f"multiplier must be odd to be invertible, got {self.a}")

    @property
    def modulus(self) -> int:
        return 1 << self.n_bits

    @property
    def alpha(self) -> int:
        """Inverse of ``a`` modulo N."""
        return pow(self.a, -1, self.modulus)

    @property
    def beta(self) -> int | None:
        """Inverse of ``a - 1`` modulo N, or None when it does not exist.

        With a power-of-two modulus and odd ``a`` this is always None.
        """
        if math.gcd(self.a - 1, self.modulus) != 1:
            return None
        return pow(self.a - 1, -1, self.modulus)

    @property
    def full_period(self) -> bool:
        return self.c % 2 == 1 and (self.a % 4 == 1 or self.n_bits == 1)


DEFAULT_LCG = LcgParams(64, 6364136223846793005, 1442695040888963407)


def lcg_step(params: LcgParams, x: int) -> int:
    return (params.a * x + params.c) % params.modulus


def geometric_sum(a: int, n: int, modulus: int) -> int:
    """``sum_{k<n} a**k mod modulus`` by binary doubling, without division."""
    if n < 0:
        raise ValueError("n must be non-negative")
    # G(2m) = G(m) (1 + a^m), G(m + 1) = 1 + a G(m)
    total, power = 0, 1
    for bit in bin(n)[2:] if n else "":
        total = (total * (1 + power)) % modulus
        power = (power * power) % modulus
        if bit == "1":
            total = (1 + a * total) % modulus
            power = (power * a) % modulus
    return total


def lcg_jump(params: LcgParams, x0: int, n: int) -> int:
    """Element ``n`` of the sequence started at ``x0``."""
    N = params.modulus
    an = pow(params.a, n, N)
    beta = params.beta
    if beta is not None:
        geo = ((an - 1) * beta) % N
    else:
        geo = geometric_sum(params.a, n, N)
    return (an * x0 + params.c * geo) % N


@dataclass(frozen=True)
class PermutationSpec:
    """Ordered xorshift steps ``x ^= x >> s`` or ``x ^= x << s`` on n-bit words."""

    n_bits: int
    steps: tuple[tuple[str, int], ...] = ()

    def __post_init__(self) -> None:
        for direction, shift in self.steps:
            if direction not in ("right", "left"):
                raise ValueError(f"direction must be 'right' or 'left', got {direction!r}")
            if not 1 <= shift < self.n_bits:
                raise ValueError(f"shift {shift} outside 1..{self.n_bits - 1}")

    @classmethod
    def default(cls, n_bits: int) -> "PermutationSpec":
        """Two xorshift steps scaled to the word width."""
        if n_bits < 2:
            return cls(n_bits, ())
        right = max(1, (3 * n_bits) // 8)
        left = max(1, n_bits // 4)
        return cls(n_bits, (("right", right), ("left", left)))


def _xorshift(x: int, direction: str, shift: int, mask: int) -> int:
    if direction == "right":
        return x ^ (x >> shift)
    return x ^ ((x << shift) & mask)


def _xorshift_inv(y: int, direction: str, shift: int, n_bits: int, mask: int) -> int:
    # Each pass fixes another `shift` bits, so ceil(n/shift) passes suffice.
    x = y
    for _ in range(-(-n_bits // shift)):
        x = y ^ ((x >> shift) if direction == "right" else ((x << shift) & mask))
    return x


def permute(spec: PermutationSpec, x: int) -> int:
    mask = (1 << spec.n_bits) - 1
    for direction, shift in spec.steps:
        x = _xorshift(x, direction, shift, mask)
    return x


def permute_inv(spec: PermutationSpec, y: int) -> int:
    mask = (1 << spec.n_bits) - 1
    for direction, shift in reversed(spec.steps):
        y = _xorshift_inv(y, direction, shift, spec.n_bits, mask)
    return y


def uniform_bits(x: int, n_bits: int, n_dig: int) -> int:
    """Top ``n_dig`` bits of an ``n_bits``-bit word."""
    if not 1 <= n_dig <= n_bits:
        raise ValueError(f"n_dig must lie in 1..{n_bits}")
    return x >> (n_bits - n_dig)


def uniform_unit(
    x: int, n_dig: int, spec: PermutationSpec | None = None, n_bits: int | None = None
) -> float:
    """``(top n_dig bits of permute(x)) * 2**-n_dig``."""
    if spec is not None:
        x = permute(spec, x)
        n_bits = spec.n_bits
    if n_bits is None:
        raise ValueError("n_bits is required when no permutation is given")
    return uniform_bits(x, n_bits, n_dig) / (1 << n_dig)


@dataclass(frozen=True)
class PrnStream:
    """Generator, permutation and seed defining the per-path uniform streams.

    Path ``i`` of a run with ``n_t`` steps consumes elements
    ``x_{i n_t + 1} .. x_{i n_t + n_t}``.
    """

    params: LcgParams = DEFAULT_LCG
    perm: PermutationSpec = field(default_factory=lambda: PermutationSpec.default(64))
    seed: int = 0
    n_dig: int = 16

    def __post_init__(self) -> None:
        if self.perm.n_bits != self.params.n_bits:
            raise ValueError("permutation width differs from generator width")
        if not 1 <= self.n_dig <= self.params.n_bits:
            raise ValueError("n_dig must not exceed the generator width")
        if not 0 <= self.seed < self.params.modulus:
            raise ValueError("seed must be an n_bits-bit word")

    def element(self, k: int) -> int:
        return lcg_jump(self.params, self.seed, k)

    def path_start(self, path: int, n_t: int) -> int:
        return self.element(path * n_t + 1)

    def path_words(self, path: int, n_t: int) -> Iterator[int]:
        x = self.path_start(path, n_t)
        for _ in range(n_t):
            yield x
            x = lcg_step(self.params, x)

    def uniform_index(self, x: int) -> int:
        """Top ``n_dig`` bits of the permuted word, the integer behind ``u``."""
        return uniform_bits(permute(self.perm, x), self.params.n_bits, self.n_dig)

    def path_indices(self, path: int, n_t: int) -> list[int]:
        return [self.uniform_index(x) for x in self.path_words(path, n_t)]

    def index_matrix(self, n_paths: int, n_t: int) -> np.ndarray:
        """Uniform indices for paths ``0..n_paths-1``, shape ``(n_paths, n_t)``.

        Vectorised over paths with unsigned 64-bit wraparound arithmetic.
        """
        n = self.params.n_bits
        if n > 64:
            raise ValueError("vectorised streams need n_bits <= 64")
        mask = np.uint64((1 << n) - 1) if n < 64 else np.uint64(0xFFFFFFFFFFFFFFFF)
        starts = np.array(
            [self.path_start(i, n_t) for i in range(n_paths)], dtype=np.uint64
        )
        a = np.uint64(self.params.a)
        c = np.uint64(self.params.c)
        out = np.empty((n_paths, n_t), dtype=np.int64)
        x = starts
        with np.errstate(over="ignore"):
            for j in range(n_t):
                y = x.copy()
                for direction, shift in self.perm.steps:
                    s = np.uint64(shift)
                    if direction == "right":
                        y = y ^ (y >> s)
                    else:
                        y = y ^ ((y << s) & mask)
                out[:, j] = (y >> np.uint64(n - self.n_dig)).astype(np.int64)
                x = (a * x + c) & mask
        return out
