"""Macro-gates with basis-state semantics, inverses and cost rows.

Permutation gates rewrite the list of register values of one basis state in
place through :meth:`Gate.apply`. Hadamard and rotations split amplitudes
through :meth:`Gate.branch`. Arithmetic gates call the kernels of
:mod:`lvqmc.fixedpoint`, so a simulated multiply is the classical multiply.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

from ..fixedpoint import div_raw, mul_raw
from .registers import Operand, Qubit, Register, View

__all__ = [
    "CostRow",
    "NonReversibleCustom",
    "Gate",
    "XorConst",
    "Copy",
    "Add",
    "ConstMul",
    "Multiply",
    "Divide",
    "Swap",
    "CompareConst",
    "MCT",
    "XorShift",
    "Hadamard",
    "Rotation",
    "XorFunction",
    "AddFunction",
    "Custom",
    "Alloc",
    "Free",
    "flatten_controls",
]

Vals = list  # register values of one basis state, unsigned bit patterns
Index = dict  # register name -> position in Vals


class CostRow(NamedTuple):
    """``count`` macro-gates of cost-model row ``kind`` at operand width ``n``."""

    kind: str
    n: int
    count: int = 1


class NonReversibleCustom(RuntimeError):
    """A custom action failed its own inverse check."""


def _read(op: Operand, vals: Vals, idx: Index) -> int:
    bits = vals[idx[op.reg.name]]
    if isinstance(op, View):
        bits = (bits >> op.lo) & op.mask
    return op.interpret(bits)


def _bit(q: Qubit, vals: Vals, idx: Index) -> int:
    return (vals[idx[q.reg.name]] >> q.index) & 1


def _regs(*items) -> tuple[Register, ...]:
    out: list[Register] = []
    for item in items:
        if item is None:
            continue
        if isinstance(item, (list, tuple)) and not isinstance(item, Qubit):
            out.extend(_regs(*item))
        else:
            reg = item.reg if isinstance(item, (View, Qubit)) else item
            if reg not in out:
                out.append(reg)
    return tuple(out)


def _distinct(target: Register, *sources) -> None:
    for s in sources:
        if s is not None and s.reg.name == target.name:
            raise ValueError(f"target {target.name!r} cannot also be an operand")


class Gate:
    """Base class. Subclasses are frozen dataclasses."""

    kind: str = "Gate"
    branching: bool = False
    controls: tuple[Qubit, ...] = ()
    label: str = ""

    def registers(self) -> tuple[Register, ...]:
        raise NotImplementedError

    def enabled(self, vals: Vals, idx: Index) -> bool:
        return all(_bit(q, vals, idx) for q in self.controls)

    def apply(self, vals: Vals, idx: Index) -> None:
        raise NotImplementedError

    def branch(self, vals: Vals, idx: Index) -> list[tuple[tuple[int, ...], complex]]:
        raise NotImplementedError

    def inverse(self) -> "Gate":
        raise NotImplementedError

    def cost_rows(self) -> list[CostRow]:
        return []

    def describe(self) -> str:
        return self.label or self.kind


@dataclass(frozen=True, eq=False)
class XorConst(Gate):
    """XOR classical constants into one or more operands; self-inverse."""

    targets: tuple[tuple[Operand, int], ...]
    controls: tuple[Qubit, ...] = ()
    kind: str = "LoadConst"
    label: str = ""

    def registers(self):
        return _regs([t for t, _ in self.targets], self.controls)

    def apply(self, vals, idx):
        if self.controls and not self.enabled(vals, idx):
            return
        for op, value in self.targets:
            vals[idx[op.reg.name]] ^= (value & op.mask) << op.lo

    def inverse(self):
        return self

    def cost_rows(self):
        if len(self.controls) < 2:
            return []
        flips = sum(bin(v & op.mask).count("1") for op, v in self.targets)
        return [CostRow("MCT", len(self.controls), flips)] if flips else []


@dataclass(frozen=True, eq=False)
class Copy(Gate):
    """``target ^= source`` bitwise (CNOT fan-out)."""

    target: Register
    source: Operand
    label: str = ""
    kind: str = "CopyCNOT"

    def __post_init__(self):
        if self.target.width != self.source.width:
            raise ValueError("copy needs equal widths")
        _distinct(self.target, self.source)

    def registers(self):
        return _regs(self.target, self.source)

    def apply(self, vals, idx):
        vals[idx[self.target.name]] ^= _read(self.source, vals, idx) & self.target.mask

    def inverse(self):
        return self


@dataclass(frozen=True, eq=False)
class Add(Gate):
    """``target += sign * (source or const)`` modulo ``2**width``."""

    target: Register
    source: Operand | None = None
    const: int = 0
    sign: int = 1
    controls: tuple[Qubit, ...] = ()
    modular: bool = False
    label: str = ""

    def __post_init__(self):
        _distinct(self.target, self.source)

    @property
    def kind(self) -> str:  # type: ignore[override]
        if self.modular:
            return "ModularAdder"
        return "CtrlAdder" if self.controls else "Adder"

    def registers(self):
        return _regs(self.target, self.source, self.controls)

    def apply(self, vals, idx):
        if self.controls and not self.enabled(vals, idx):
            return
        value = self.const if self.source is None else _read(self.source, vals, idx)
        i = idx[self.target.name]
        vals[i] = (vals[i] + self.sign * value) & self.target.mask

    def inverse(self):
        return Add(self.target, self.source, self.const, -self.sign, self.controls, self.modular, self.label)

    def cost_rows(self):
        return [CostRow(self.kind, self.target.width)]


@dataclass(frozen=True, eq=False)
class ConstMul(Gate):
    """``target += sign * c * source`` by shift-and-add with a classical ``c``.

    With ``const_is_x`` the bits of ``c`` select shifted copies of the source.
    Otherwise the source bits select shifted copies of ``c``. Either way the
    product is :func:`mul_raw` with the selecting operand first. Costed as one
    adder per bit of the selecting operand.
    """

    target: Register
    source: Operand
    const: int
    const_frac: int
    const_width: int
    const_signed: bool = True
    const_is_x: bool = True
    sign: int = 1
    controls: tuple[Qubit, ...] = ()
    modular: bool = False
    label: str = ""
    kind: str = "ConstMul"

    def __post_init__(self):
        _distinct(self.target, self.source)

    def registers(self):
        return _regs(self.target, self.source, self.controls)

    def product(self, src: int) -> int:
        if self.const_is_x:
            return mul_raw(self.const, src, self.const_frac, self.const_width, self.const_signed)
        return mul_raw(src, self.const, self.source.frac, self.source.width, self.source.signed)

    def apply(self, vals, idx):
        if self.controls and not self.enabled(vals, idx):
            return
        i = idx[self.target.name]
        vals[i] = (vals[i] + self.sign * self.product(_read(self.source, vals, idx))) & self.target.mask

    def inverse(self):
        return ConstMul(
            self.target, self.source, self.const, self.const_frac, self.const_width,
            self.const_signed, self.const_is_x, -self.sign, self.controls, self.modular, self.label,
        )

    def cost_rows(self):
        adds = self.const_width if self.const_is_x else self.source.width
        kind = "ModularAdder" if self.modular else ("CtrlAdder" if self.controls else "Adder")
        return [CostRow(kind, self.target.width, adds)]


@dataclass(frozen=True, eq=False)
class Multiply(Gate):
    """``target += sign * trunc(x * y)``; bits of ``x`` select shifted ``y``."""

    target: Register
    x: Operand
    y: Operand
    sign: int = 1
    label: str = ""
    kind: str = "TruncMul"

    def __post_init__(self):
        _distinct(self.target, self.x, self.y)

    def registers(self):
        return _regs(self.target, self.x, self.y)

    def apply(self, vals, idx):
        prod = mul_raw(_read(self.x, vals, idx), _read(self.y, vals, idx), self.x.frac, self.x.width, self.x.signed)
        i = idx[self.target.name]
        vals[i] = (vals[i] + self.sign * prod) & self.target.mask

    def inverse(self):
        return Multiply(self.target, self.x, self.y, -self.sign, self.label)

    def cost_rows(self):
        return [CostRow("Multiplier", self.target.width)]


@dataclass(frozen=True, eq=False)
class Divide(Gate):
    """``target ^= q`` where ``q`` is the restoring quotient of ``z`` by ``y``.

    ``q`` is the preimage under the truncated multiply in the target's
    format. It is 0 when ``y <= 0``. The gate is self-inverse.
    """

    target: Register
    z: Operand
    y: Operand
    label: str = ""
    kind: str = "TruncDiv"

    def __post_init__(self):
        _distinct(self.target, self.z, self.y)

    def registers(self):
        return _regs(self.target, self.z, self.y)

    def apply(self, vals, idx):
        y = _read(self.y, vals, idx)
        if y <= 0:
            return
        res = div_raw(_read(self.z, vals, idx), y, self.target.frac, self.target.width, self.target.signed)
        vals[idx[self.target.name]] ^= int(res.quotient) & self.target.mask

    def inverse(self):
        return self

    def cost_rows(self):
        return [CostRow("Divider", self.target.width)]


@dataclass(frozen=True, eq=False)
class Swap(Gate):
    """Exchange two equal-width registers (relabelling, no gates)."""

    a: Register
    b: Register
    label: str = ""
    kind: str = "SwapRoles"

    def __post_init__(self):
        if self.a.width != self.b.width or self.a.name == self.b.name:
            raise ValueError("swap needs two distinct registers of equal width")

    def registers(self):
        return (self.a, self.b)

    def apply(self, vals, idx):
        i, j = idx[self.a.name], idx[self.b.name]
        vals[i], vals[j] = vals[j], vals[i]

    def inverse(self):
        return self


_COMPARE = {
    "lt": lambda v, c: v < c,
    "ge": lambda v, c: v >= c,
    "le": lambda v, c: v <= c,
    "gt": lambda v, c: v > c,
}


@dataclass(frozen=True, eq=False)
class CompareConst(Gate):
    """``flag ^= (source <op> const)``; a subtraction and its uncomputation."""

    flag: Qubit
    source: Operand
    const: int
    op: str = "lt"
    controls: tuple[Qubit, ...] = ()
    label: str = ""
    kind: str = "Comparator"

    def __post_init__(self):
        if self.op not in _COMPARE:
            raise ValueError(f"unknown comparison {self.op!r}")
        if self.flag.reg.name == self.source.reg.name:
            raise ValueError("flag cannot live in the compared register")

    def registers(self):
        return _regs(self.flag, self.source, self.controls)

    def apply(self, vals, idx):
        if self.controls and not self.enabled(vals, idx):
            return
        if _COMPARE[self.op](_read(self.source, vals, idx), self.const):
            vals[idx[self.flag.reg.name]] ^= 1 << self.flag.index

    def inverse(self):
        return self

    def cost_rows(self):
        return [CostRow("Comparator", self.source.width)]


@dataclass(frozen=True, eq=False)
class MCT(Gate):
    """Multi-controlled NOT; zero controls is X, one is CNOT."""

    target: Qubit
    controls: tuple[Qubit, ...] = ()
    label: str = ""
    kind: str = "MCT"

    def __post_init__(self):
        if self.target in self.controls:
            raise ValueError("target cannot be a control")

    def registers(self):
        return _regs(self.target, self.controls)

    def apply(self, vals, idx):
        if self.enabled(vals, idx):
            vals[idx[self.target.reg.name]] ^= 1 << self.target.index

    def inverse(self):
        return self

    def cost_rows(self):
        return [CostRow("MCT", len(self.controls))] if len(self.controls) > 1 else []


@dataclass(frozen=True, eq=False)
class XorShift(Gate):
    """``x ^= x >> s`` or ``x ^= x << s`` (CNOT ladder), or its inverse."""

    target: Register
    direction: str
    shift: int
    inverted: bool = False
    label: str = ""
    kind: str = "XorShift"

    def __post_init__(self):
        if self.direction not in ("right", "left") or not 1 <= self.shift < self.target.width:
            raise ValueError("invalid xorshift step")

    def registers(self):
        return (self.target,)

    def _once(self, x: int, y: int) -> int:
        mask = self.target.mask
        return y ^ ((x >> self.shift) if self.direction == "right" else ((x << self.shift) & mask))

    def apply(self, vals, idx):
        i = idx[self.target.name]
        y = vals[i]
        if not self.inverted:
            vals[i] = self._once(y, y)
            return
        x = y
        for _ in range(-(-self.target.width // self.shift)):
            x = self._once(x, y)
        vals[i] = x

    def inverse(self):
        return XorShift(self.target, self.direction, self.shift, not self.inverted, self.label)


_H = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class Hadamard(Gate):
    target: Qubit
    label: str = ""
    kind: str = "Hadamard"
    branching = True

    def registers(self):
        return _regs(self.target)

    def branch(self, vals, idx):
        i = idx[self.target.reg.name]
        bit = 1 << self.target.index
        v0 = list(vals)
        v1 = list(vals)
        v0[i] &= ~bit
        v1[i] |= bit
        s = -_H if vals[i] & bit else _H
        return [(tuple(v0), _H), (tuple(v1), s)]

    def inverse(self):
        return self


@dataclass(frozen=True, eq=False)
class Rotation(Gate):
    """``|0> -> cos t |0> + sin t |1>``, ``|1> -> -sin t |0> + cos t |1>``.

    ``t = sign * angle(value of source)``. ``precision`` is the angle width
    used for the cost row.
    """

    target: Qubit
    angle: Callable[[int], float]
    source: Operand | None = None
    sign: int = 1
    precision: int = 16
    controls: tuple[Qubit, ...] = ()
    label: str = ""
    kind: str = "CtrlRotation"
    branching = True

    def registers(self):
        return _regs(self.target, self.source, self.controls)

    def branch(self, vals, idx):
        if self.controls and not self.enabled(vals, idx):
            return [(tuple(vals), 1.0)]
        theta = self.sign * self.angle(0 if self.source is None else _read(self.source, vals, idx))
        c, s = math.cos(theta), math.sin(theta)
        i = idx[self.target.reg.name]
        bit = 1 << self.target.index
        v0 = list(vals)
        v1 = list(vals)
        v0[i] &= ~bit
        v1[i] |= bit
        if vals[i] & bit:
            return [(tuple(v0), -s), (tuple(v1), c)]
        return [(tuple(v0), c), (tuple(v1), s)]

    def inverse(self):
        return Rotation(self.target, self.angle, self.source, -self.sign, self.precision, self.controls, self.label)

    def cost_rows(self):
        return [CostRow("CtrlRotation", self.precision)]


@dataclass(frozen=True, eq=False)
class XorFunction(Gate):
    """``target ^= f(source)``: any classical function, self-inverse."""

    target: Register
    source: Operand
    fn: Callable[[int], int]
    kind: str = "Custom"
    rows: tuple[CostRow, ...] = ()
    label: str = ""

    def __post_init__(self):
        _distinct(self.target, self.source)

    def registers(self):
        return _regs(self.target, self.source)

    def apply(self, vals, idx):
        vals[idx[self.target.name]] ^= self.fn(_read(self.source, vals, idx)) & self.target.mask

    def inverse(self):
        return self

    def cost_rows(self):
        return list(self.rows)


@dataclass(frozen=True, eq=False)
class AddFunction(Gate):
    """``target += sign * f(source)`` modulo ``2**width``."""

    target: Register
    source: Operand
    fn: Callable[[int], int]
    sign: int = 1
    kind: str = "Custom"
    rows: tuple[CostRow, ...] = ()
    label: str = ""

    def __post_init__(self):
        _distinct(self.target, self.source)

    def registers(self):
        return _regs(self.target, self.source)

    def apply(self, vals, idx):
        i = idx[self.target.name]
        vals[i] = (vals[i] + self.sign * self.fn(_read(self.source, vals, idx))) & self.target.mask

    def inverse(self):
        return AddFunction(self.target, self.source, self.fn, -self.sign, self.kind, self.rows, self.label)

    def cost_rows(self):
        return list(self.rows)


@dataclass(frozen=True, eq=False)
class Custom(Gate):
    """Arbitrary action on a tuple of register bit patterns plus its inverse.

    Every application checks ``inverse(forward(v)) == v`` and raises
    :class:`NonReversibleCustom` otherwise.
    """

    targets: tuple[Register, ...]
    forward: Callable[[tuple[int, ...]], tuple[int, ...]]
    backward: Callable[[tuple[int, ...]], tuple[int, ...]]
    kind: str = "Custom"
    rows: tuple[CostRow, ...] = ()
    label: str = ""

    def registers(self):
        return tuple(self.targets)

    def apply(self, vals, idx):
        pos = [idx[r.name] for r in self.targets]
        before = tuple(vals[p] for p in pos)
        after = tuple(int(v) & r.mask for v, r in zip(self.forward(before), self.targets))
        if tuple(self.backward(after)) != before:
            raise NonReversibleCustom(f"{self.describe()}: inverse does not restore {before}")
        for p, v in zip(pos, after):
            vals[p] = v

    def inverse(self):
        return Custom(self.targets, self.backward, self.forward, self.kind, self.rows, self.label)

    def cost_rows(self):
        return list(self.rows)


@dataclass(frozen=True, eq=False)
class Alloc(Gate):
    """Start of a register's lifetime; it must be zero on every branch."""

    target: Register
    label: str = ""
    kind: str = "Alloc"

    def registers(self):
        return (self.target,)

    def apply(self, vals, idx):
        return None

    def inverse(self):
        return Free(self.target, self.label)


@dataclass(frozen=True, eq=False)
class Free(Gate):
    """End of a register's lifetime; it must have been returned to zero."""

    target: Register
    label: str = ""
    kind: str = "Free"

    def registers(self):
        return (self.target,)

    def apply(self, vals, idx):
        return None

    def inverse(self):
        return Alloc(self.target, self.label)


def flatten_controls(items: Sequence[Qubit | Register]) -> tuple[Qubit, ...]:
    out: list[Qubit] = []
    for item in items:
        out.extend(item.bits() if isinstance(item, Register) else [item])
    return tuple(out)

