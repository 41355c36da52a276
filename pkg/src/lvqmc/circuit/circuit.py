"""Ordered macro-gate sequences over a closed set of registers."""

from __future__ import annotations

import json
from collections import Counter
from typing import Iterable, Iterator

from .cost import DEFAULT_COST_MODEL, CostModel, ResourceReport, cost
from .gates import Gate
from .registers import Register

__all__ = ["Circuit", "UnknownRegister", "RegisterMismatch"]


class UnknownRegister(KeyError):
    """A gate touches a register the circuit does not declare."""


class RegisterMismatch(ValueError):
    """Two registers share a name but differ in width or format."""


class Circuit:
    """Gates in application order, each tagged with a group label.

    Registers must be declared before a gate may use them. Groups label the
    component a gate belongs to and drive the cost breakdown.
    """

    def __init__(self, name: str = "circuit", registers: Iterable[Register] = ()) -> None:
        self.name = name
        self._registers: dict[str, Register] = {}
        self._ops: list[tuple[Gate, str]] = []
        for reg in registers:
            self.add_register(reg)

    # registers -----------------------------------------------------------

    @property
    def registers(self) -> tuple[Register, ...]:
        return tuple(self._registers.values())

    def register(self, name: str) -> Register:
        try:
            return self._registers[name]
        except KeyError:
            raise UnknownRegister(name) from None

    def has_register(self, name: str) -> bool:
        return name in self._registers

    def add_register(self, reg: Register) -> Register:
        known = self._registers.get(reg.name)
        if known is None:
            self._registers[reg.name] = reg
            return reg
        if known != reg:
            raise RegisterMismatch(f"register {reg.name!r} redeclared as {reg} (was {known})")
        return known

    def add_registers(self, *regs: Register) -> None:
        for reg in regs:
            self.add_register(reg)

    # gates ---------------------------------------------------------------

    def append(self, gate: Gate, group: str | None = None) -> "Circuit":
        for reg in gate.registers():
            known = self._registers.get(reg.name)
            if known is None:
                raise UnknownRegister(f"gate {gate.describe()} uses undeclared register {reg.name!r}")
            if known != reg:
                raise RegisterMismatch(
                    f"gate {gate.describe()} sees {reg.name!r} as width {reg.width}, declared {known.width}"
                )
        self._ops.append((gate, group or self.name))
        return self

    def extend(self, gates: Iterable[Gate], group: str | None = None) -> "Circuit":
        for gate in gates:
            self.append(gate, group)
        return self

    def compose(self, other: "Circuit", group: str | None = None) -> "Circuit":
        """Append ``other`` in place, merging its registers.

        ``group`` relabels all of ``other``'s gates. Otherwise they keep their labels.
        """
        for reg in other.registers:
            self.add_register(reg)
        for gate, g in other.entries():
            self._ops.append((gate, group or g))
        return self

    def __add__(self, other: "Circuit") -> "Circuit":
        out = self.copy()
        return out.compose(other)

    def copy(self, name: str | None = None) -> "Circuit":
        out = Circuit(name or self.name, self.registers)
        out._ops = list(self._ops)
        return out

    def inverse(self, name: str | None = None) -> "Circuit":
        out = Circuit(name or f"{self.name}^-1", self.registers)
        out._ops = [(g.inverse(), grp) for g, grp in reversed(self._ops)]
        return out

    def entries(self) -> Iterator[tuple[Gate, str]]:
        return iter(self._ops)

    @property
    def gates(self) -> tuple[Gate, ...]:
        return tuple(g for g, _ in self._ops)

    def __iter__(self) -> Iterator[Gate]:
        return (g for g, _ in self._ops)

    def __len__(self) -> int:
        return len(self._ops)

    def groups(self) -> list[str]:
        return list(dict.fromkeys(g for _, g in self._ops))

    # reporting -----------------------------------------------------------

    def histogram(self) -> dict[str, int]:
        return dict(sorted(Counter(g.kind for g, _ in self._ops).items()))

    def cost(self, model: CostModel = DEFAULT_COST_MODEL) -> ResourceReport:
        return cost(self, model)

    def summary(self, model: CostModel = DEFAULT_COST_MODEL) -> dict:
        report = self.cost(model)
        return {
            "name": self.name,
            "n_gates": len(self),
            "registers": [
                {"name": r.name, "width": r.width, "frac": r.frac, "signed": r.signed, "role": r.role}
                for r in self.registers
            ],
            "histogram": self.histogram(),
            "cost": report.to_dict(),
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.summary(), **kwargs)

    def __repr__(self) -> str:
        return f"Circuit({self.name!r}, {len(self._registers)} registers, {len(self)} gates)"
