"""Reusable sub-circuits: interval load cascades, equality tests, amplitude encoding."""

from __future__ import annotations

import math
from typing import Sequence

from .circuit import Circuit
from .gates import MCT, CompareConst, Gate, Rotation, XorConst
from .registers import Operand, Qubit, Register, View

__all__ = [
    "AmplitudeRangeError",
    "cascade_masks",
    "load_cascade",
    "equality_flip",
    "table_load",
    "table_masks",
    "encode_amplitude",
    "operand_bits",
]


class AmplitudeRangeError(ValueError):
    """A value to encode lies outside ``[0, scale]``."""


def operand_bits(op: Operand) -> tuple[Qubit, ...]:
    return tuple(Qubit(op.reg, op.lo + i) for i in range(op.width))


def cascade_masks(codes: Sequence[int]) -> list[int]:
    """XOR masks for a comparator cascade over ``R`` intervals.

    ``codes[r]`` is the bit pattern wanted for interval ``r``. Mask ``r < R-1``
    is applied when the running flag is set after the ``(r+1)``-th comparison.
    The last mask is applied unconditionally. For an input in interval ``M``
    the active masks are ``M, M+2, ...`` and the last one, and their XOR
    telescopes to ``codes[M]``.
    """
    R = len(codes)
    if R == 0:
        raise ValueError("need at least one interval")
    masks = [0] * R
    masks[R - 1] = codes[R - 1]
    if R >= 2:
        masks[R - 2] = codes[R - 2] ^ codes[R - 1]
    for r in range(R - 3, -1, -1):
        masks[r] = codes[r] ^ codes[r + 2]
    return masks


def load_cascade(
    flag: Qubit,
    source: Operand,
    thresholds: Sequence[int],
    targets: Sequence[Operand],
    codes: Sequence[Sequence[int]],
    kind: str = "LoadConst",
) -> list[Gate]:
    """Load ``codes[r]`` into ``targets`` for the interval ``r`` holding ``source``.

    Interval ``r`` is ``thresholds[r-1] <= source < thresholds[r]``. The
    flag is left holding the parity of the number of thresholds above the
    source. Applying the returned gates a second time (in reverse) clears
    both the targets and the flag.
    """
    R = len(thresholds) + 1
    if len(codes) != R:
        raise ValueError(f"{R} intervals need {R} code tuples, got {len(codes)}")
    if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
        raise ValueError("thresholds must increase")
    per_target = [cascade_masks([int(c[t]) & op.mask for c in codes]) for t, op in enumerate(targets)]
    gates: list[Gate] = []
    for m, thr in enumerate(thresholds, start=1):
        gates.append(CompareConst(flag, source, int(thr), "lt", label=f"cmp<{thr}"))
        load = tuple((op, masks[m - 1]) for op, masks in zip(targets, per_target) if masks[m - 1])
        if load:
            gates.append(XorConst(load, (flag,), kind, label=f"load[{m - 1}]"))
    last = tuple((op, masks[R - 1]) for op, masks in zip(targets, per_target) if masks[R - 1])
    if last:
        gates.append(XorConst(last, (), kind, label=f"load[{R - 1}]"))
    return gates


def equality_flip(
    target: Qubit, source: Operand, value: int, extra_controls: Sequence[Qubit] = ()
) -> list[Gate]:
    """``target ^= (source == value) AND extra_controls`` by bit flips around an MCT."""
    pattern = ~value & source.mask
    bits = operand_bits(source)
    flips = [XorConst(((source, pattern),), (), "BitFlipPattern", label=f"flip!={value}")] if pattern else []
    return [*flips, MCT(target, bits + tuple(extra_controls), label=f"=={value}"), *flips]


def table_masks(codes: Sequence[int]) -> list[int]:
    """Masks for a table load where entry ``i`` is applied for every index ``>= value``."""
    n = len(codes)
    return [codes[i] ^ codes[i + 1] if i + 1 < n else codes[i] for i in range(n)]


def table_load(flag: Qubit, source: Operand, target: Operand, codes: Sequence[int]) -> list[Gate]:
    """XOR ``codes[source]`` into ``target`` using one equality test per entry.

    The flag turns on at the entry equal to the source and stays on, so the
    masks telescope. A final X returns the flag to zero.
    """
    if len(codes) != 1 << source.width:
        raise ValueError("need one code per source value")
    gates: list[Gate] = []
    for i, mask in enumerate(table_masks([int(c) & target.mask for c in codes])):
        gates.extend(equality_flip(flag, source, i))
        if mask:
            gates.append(XorConst(((target, mask),), (flag,), "LoadConst", label=f"f[{i}]"))
    gates.append(MCT(flag, (), label="reset"))
    return gates


def encode_amplitude(
    circuit: Circuit,
    payoff_reg: Register | View,
    ancilla: Qubit,
    scale: float,
    precision: int = 16,
    group: str = "encode",
) -> Circuit:
    """Rotate ``ancilla`` so that ``P(1) = v / scale`` for payoff value ``v``.

    The rotation angle ``asin(sqrt(v / scale))`` is computed per branch during
    simulation. Values outside ``[0, scale]`` raise :class:`AmplitudeRangeError`.
    """
    if not scale > 0:
        raise ValueError("scale must be positive")
    ulp = 2.0 ** -payoff_reg.frac

    def angle(raw: int) -> float:
        v = raw * ulp
        if v < 0 or v > scale:
            raise AmplitudeRangeError(f"payoff {v} outside [0, {scale}]")
        return math.asin(math.sqrt(v / scale))

    circuit.append(
        Rotation(ancilla, angle, payoff_reg, precision=precision, label="encode payoff"), group
    )
    return circuit
