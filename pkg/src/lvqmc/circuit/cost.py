"""Leading-order T-count and qubit cost model for macro-gates."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING

from .gates import Alloc, CostRow, Free

if TYPE_CHECKING:  # pragma: no cover
    from .circuit import Circuit

__all__ = ["CostModel", "ResourceReport", "DEFAULT_COST_MODEL", "cost", "round_sig"]


def round_sig(x: float, digits: int = 2) -> float:
    """Round to ``digits`` significant figures (``373847040 -> 3.7e8``)."""
    if x == 0:
        return 0.0
    exponent = math.floor(math.log10(abs(x)))
    return round(x, digits - 1 - exponent)


@dataclass(frozen=True)
class CostModel:
    """Per-kind T-count and internal ancilla as functions of operand width ``n``.

    Comparators against a constant are a subtraction plus its undo, so they
    cost two adders.
    """

    adder: int = 14
    ctrl_adder: int = 21
    modular_adder: int = 70
    multiplier: int = 21
    divider: int = 35
    mct: int = 8
    mct_exact_max: int = 8
    square_root: int = 14
    arccos_t: int = 34000
    arccos_qubits: int = 105
    rotation: int = 3

    def t_count(self, kind: str, n: int) -> int:
        if kind == "Adder":
            return self.adder * n
        if kind == "CtrlAdder":
            return self.ctrl_adder * n
        if kind == "ModularAdder":
            return self.modular_adder * n
        if kind == "Comparator":
            return 2 * self.adder * n
        if kind == "Multiplier":
            return self.multiplier * n * n
        if kind == "Divider":
            return self.divider * n * n
        if kind == "MCT":
            if n <= 1:
                return 0
            return max(0, self.mct * n - 9) if n <= self.mct_exact_max else self.mct * n
        if kind == "SquareRoot":
            return self.square_root * n * n
        if kind == "Arccos":
            return self.arccos_t
        if kind == "CtrlRotation":
            return self.rotation * n
        raise KeyError(f"no cost row for gate kind {kind!r}")

    def ancilla(self, kind: str, n: int) -> int:
        """Qubits a gate borrows internally and returns clean."""
        if kind == "Divider":
            return 2 * n
        if kind == "MCT":
            return n if n > 2 else 0
        if kind == "SquareRoot":
            return 2 * n
        if kind == "Arccos":
            # input and output registers are counted separately
            return max(0, self.arccos_qubits - 2 * n)
        return 0

    def row_t(self, row: CostRow) -> int:
        return self.t_count(row.kind, row.n) * row.count


DEFAULT_COST_MODEL = CostModel()


@dataclass(frozen=True)
class ResourceReport:
    """Qubit and T totals with per-component contributions.

    ``breakdown`` splits the T-count and ``qubit_breakdown`` the qubit count.
    Both sum to their totals.
    """

    qubits: int
    t_count: int
    breakdown: dict[str, int] = field(default_factory=dict)
    qubit_breakdown: dict[str, int] = field(default_factory=dict)
    histogram: dict[str, int] = field(default_factory=dict)
    label: str = ""

    def __post_init__(self) -> None:
        if self.breakdown and sum(self.breakdown.values()) != self.t_count:
            raise ValueError("T breakdown does not sum to the total")
        if self.qubit_breakdown and sum(self.qubit_breakdown.values()) != self.qubits:
            raise ValueError("qubit breakdown does not sum to the total")
        if any(v < 0 for v in (*self.breakdown.values(), *self.qubit_breakdown.values())):
            raise ValueError("breakdown entries must be non-negative")

    @property
    def qubits_2sf(self) -> float:
        return round_sig(self.qubits)

    @property
    def t_count_2sf(self) -> float:
        return round_sig(self.t_count)

    def scaled(self, label: str) -> "ResourceReport":
        return replace(self, label=label)

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "qubits": self.qubits,
            "t_count": self.t_count,
            "qubits_2sf": self.qubits_2sf,
            "t_count_2sf": self.t_count_2sf,
            "breakdown": dict(self.breakdown),
            "qubit_breakdown": dict(self.qubit_breakdown),
            "histogram": dict(self.histogram),
        }


def cost(circuit: "Circuit", model: CostModel = DEFAULT_COST_MODEL) -> ResourceReport:
    """Sum per-gate costs and track the peak width of live registers.

    A register whose first use in the circuit is an :class:`Alloc` is dead
    until then and again after its :class:`Free`. All other registers are
    live throughout. The peak adds each gate's internal ancilla.
    """
    first_alloc = set()
    seen = set()
    for gate, _ in circuit.entries():
        for reg in gate.registers():
            if reg.name not in seen:
                seen.add(reg.name)
                if isinstance(gate, Alloc):
                    first_alloc.add(reg.name)
    live = {r.name: r.width for r in circuit.registers if r.name not in first_alloc}
    base = sum(live.values())
    peak, peak_regs, peak_anc = base, base, 0

    by_group: Counter[str] = Counter()
    hist: Counter[str] = Counter()
    for gate, group in circuit.entries():
        hist[gate.kind] += 1
        if isinstance(gate, Alloc):
            live[gate.target.name] = gate.target.width
        elif isinstance(gate, Free):
            live.pop(gate.target.name, None)
        anc = 0
        t = 0
        for row in gate.cost_rows():
            t += model.row_t(row)
            anc = max(anc, model.ancilla(row.kind, row.n))
        by_group[group] += t
        width = sum(live.values())
        if width + anc > peak:
            peak, peak_regs, peak_anc = width + anc, width, anc

    breakdown = {g: int(v) for g, v in by_group.items() if v}
    return ResourceReport(
        qubits=int(peak),
        t_count=int(sum(breakdown.values())),
        breakdown=breakdown,
        qubit_breakdown={"registers": int(peak_regs), "gate_ancilla": int(peak_anc)},
        histogram=dict(sorted(hist.items())),
        label=circuit.name,
    )
