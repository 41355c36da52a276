"""Registers, bit references and read-only slices used as gate operands."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Union

from ..fixedpoint import FxFormat, wrap_signed

__all__ = ["Register", "View", "Qubit", "Operand", "operand_register", "ROLES"]

ROLES = frozenset(
    {"samp", "W", "S", "payoff", "PRN", "count", "flag", "ancilla", "LV", "S'", "theta", "out"}
)


@dataclass(frozen=True)
class Register:
    """A named block of qubits holding an integer or fixed-point value.

    ``frac`` fractional bits and ``signed`` select how the stored bit pattern
    is read by arithmetic gates. Signed registers hold two's-complement values.
    """

    name: str
    width: int
    frac: int = 0
    signed: bool = False
    role: str = "ancilla"

    def __post_init__(self) -> None:
        if self.width < 1:
            raise ValueError(f"register {self.name!r} needs a positive width")
        if not 0 <= self.frac <= self.width + 64:
            raise ValueError(f"register {self.name!r} has invalid fractional bits")
        if self.role not in ROLES:
            raise ValueError(f"unknown register role {self.role!r}")

    @classmethod
    def fixed(cls, name: str, fmt: FxFormat, role: str = "ancilla") -> "Register":
        return cls(name, fmt.n, fmt.n_frac, True, role)

    @property
    def fmt(self) -> FxFormat | None:
        if not self.signed:
            return None
        return FxFormat(self.width - self.frac, self.frac)

    @property
    def mask(self) -> int:
        return (1 << self.width) - 1

    @property
    def reg(self) -> "Register":
        return self

    @property
    def lo(self) -> int:
        return 0

    def bit(self, index: int) -> "Qubit":
        if not 0 <= index < self.width:
            raise IndexError(f"bit {index} outside register {self.name!r}")
        return Qubit(self, index)

    def bits(self) -> tuple["Qubit", ...]:
        return tuple(Qubit(self, i) for i in range(self.width))

    def view(self, lo: int, width: int, frac: int = 0, signed: bool = False) -> "View":
        return View(self, lo, width, frac, signed)

    def top(self, width: int, frac: int | None = None) -> "View":
        """The ``width`` most significant bits, unsigned, by default read as a fraction."""
        return View(self, self.width - width, width, width if frac is None else frac, False)

    def interpret(self, bits: int) -> int:
        return wrap_signed(bits, self.width) if self.signed else bits

    def to_bits(self, value: int) -> int:
        return value & self.mask


@dataclass(frozen=True)
class View:
    """Contiguous bits ``lo .. lo+width-1`` of a register, read as a number."""

    reg: Register
    lo: int
    width: int
    frac: int = 0
    signed: bool = False

    def __post_init__(self) -> None:
        if self.width < 1 or self.lo < 0 or self.lo + self.width > self.reg.width:
            raise ValueError(f"view [{self.lo}, {self.lo + self.width}) outside {self.reg.name!r}")

    @property
    def name(self) -> str:
        return f"{self.reg.name}[{self.lo}:{self.lo + self.width}]"

    @property
    def mask(self) -> int:
        return (1 << self.width) - 1

    def interpret(self, bits: int) -> int:
        return wrap_signed(bits, self.width) if self.signed else bits


class Qubit(NamedTuple):
    reg: Register
    index: int


Operand = Union[Register, View]


def operand_register(op: Operand) -> Register:
    return op.reg
