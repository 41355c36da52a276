"""Sparse basis-amplitude simulation of macro-gate circuits.

A state maps one bit pattern per register to a complex amplitude. Permutation
gates move amplitudes between keys. Hadamard and rotations split them. The
support only ever holds the branches the circuit creates, which keeps desk
scale circuits with 16-bit registers tractable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterator, Mapping

from .circuit import Circuit
from .gates import Alloc, Free, Gate
from .registers import Qubit, Register

__all__ = [
    "QuantumState",
    "SimulationBudgetExceeded",
    "NonReversible",
    "AncillaNotClean",
    "simulate",
    "measure_prob",
    "DEFAULT_BUDGET",
]

DEFAULT_BUDGET = 1 << 20
_PRUNE = 1e-30


class SimulationBudgetExceeded(RuntimeError):
    """The support outgrew the configured number of basis states."""


class NonReversible(RuntimeError):
    """A permutation gate sent two basis states to the same image."""


class AncillaNotClean(RuntimeError):
    """A register was freed while non-zero on some branch."""


@dataclass
class QuantumState:
    """Sparse state over an ordered tuple of registers."""

    registers: tuple[Register, ...]
    amps: dict[tuple[int, ...], complex]

    def __post_init__(self) -> None:
        self.registers = tuple(self.registers)
        self._index = {r.name: i for i, r in enumerate(self.registers)}
        if len(self._index) != len(self.registers):
            raise ValueError("register names must be unique")

    @classmethod
    def basis(
        cls, registers: tuple[Register, ...] | list[Register], values: Mapping[str, int] | None = None
    ) -> "QuantumState":
        """Single basis state; ``values`` holds signed or unsigned raw values by register name."""
        values = dict(values or {})
        regs = tuple(registers)
        unknown = set(values) - {r.name for r in regs}
        if unknown:
            raise KeyError(f"values for unknown registers {sorted(unknown)}")
        key = tuple(r.to_bits(int(values.get(r.name, 0))) for r in regs)
        return cls(regs, {key: 1.0 + 0j})

    @property
    def index(self) -> dict[str, int]:
        return self._index

    def __len__(self) -> int:
        return len(self.amps)

    def norm(self) -> float:
        return math.sqrt(math.fsum(abs(a) ** 2 for a in self.amps.values()))

    def value(self, key: tuple[int, ...], reg: Register | str) -> int:
        """Signed-aware value of ``reg`` in basis key ``key``."""
        r = self._reg(reg)
        return r.interpret(key[self._index[r.name]])

    def _reg(self, reg: Register | str) -> Register:
        name = reg if isinstance(reg, str) else reg.name
        return self.registers[self._index[name]]

    def branches(self) -> Iterator[tuple[dict[str, int], complex]]:
        """Each basis state as a name -> value mapping plus its amplitude."""
        for key, amp in self.amps.items():
            yield {r.name: r.interpret(v) for r, v in zip(self.registers, key)}, amp

    def marginal(self, reg: Register | str) -> dict[int, float]:
        r = self._reg(reg)
        i = self._index[r.name]
        out: dict[int, float] = {}
        for key, amp in self.amps.items():
            v = r.interpret(key[i])
            out[v] = out.get(v, 0.0) + abs(amp) ** 2
        return out

    def is_zero(self, reg: Register | str) -> bool:
        i = self._index[self._reg(reg).name]
        return all(key[i] == 0 for key in self.amps)

    def extended(self, registers: tuple[Register, ...]) -> "QuantumState":
        """Same state over ``registers`` (a superset order); new ones start at zero."""
        missing = [r for r in registers if r.name not in self._index]
        for r in registers:
            if r.name in self._index and self.registers[self._index[r.name]] != r:
                raise ValueError(f"register {r.name!r} differs from the state's")
        order = list(registers) + [r for r in self.registers if r.name not in {x.name for x in registers}]
        if not missing and [r.name for r in order] == [r.name for r in self.registers]:
            return self
        pos = [self._index.get(r.name) for r in order]
        amps = {tuple(0 if p is None else key[p] for p in pos): a for key, a in self.amps.items()}
        return QuantumState(tuple(order), amps)


def _apply(gate: Gate, state: QuantumState, budget: int, check_ancillas: bool) -> dict:
    idx = state.index
    amps = state.amps
    if isinstance(gate, (Alloc, Free)):
        if check_ancillas and not state.is_zero(gate.target):
            bad = next(k for k in amps if k[idx[gate.target.name]] != 0)
            what = "allocated" if isinstance(gate, Alloc) else "freed"
            raise AncillaNotClean(
                f"register {gate.target.name!r} {what} while holding "
                f"{bad[idx[gate.target.name]]} on some branch"
            )
        return amps
    if not gate.branching:
        out: dict[tuple[int, ...], complex] = {}
        for key, amp in amps.items():
            vals = list(key)
            gate.apply(vals, idx)
            new = tuple(vals)
            if new in out:
                raise NonReversible(f"{gate.describe()} maps two basis states onto {new}")
            out[new] = amp
        return out
    out = {}
    for key, amp in amps.items():
        for new, coef in gate.branch(list(key), idx):
            out[new] = out.get(new, 0.0) + amp * coef
    out = {k: a for k, a in out.items() if abs(a) ** 2 > _PRUNE}
    if len(out) > budget:
        raise SimulationBudgetExceeded(
            f"{gate.describe()} grew the support to {len(out)} > {budget} basis states; "
            "reduce the number of samples, grid points or time steps"
        )
    return out


def simulate(
    circuit: Circuit,
    initial: QuantumState | Mapping[str, int] | None = None,
    budget: int = DEFAULT_BUDGET,
    check_ancillas: bool = True,
    observer: Callable[[int, Gate, str, QuantumState], None] | None = None,
) -> QuantumState:
    """Run ``circuit`` on ``initial`` (all-zero basis state by default).

    ``initial`` may be a state over a subset of the circuit's registers or a
    mapping of register values. ``observer`` is called after every gate with
    its position, the gate, its group and the current state.
    """
    if initial is None or isinstance(initial, Mapping):
        state = QuantumState.basis(circuit.registers, initial)
    else:
        state = initial.extended(circuit.registers)
    if len(state) > budget:
        raise SimulationBudgetExceeded(f"initial support {len(state)} exceeds budget {budget}")
    for pos, (gate, group) in enumerate(circuit.entries()):
        state = QuantumState(state.registers, _apply(gate, state, budget, check_ancillas))
        if observer is not None:
            observer(pos, gate, group, state)
    return state


def measure_prob(
    state: QuantumState,
    target: Qubit | Register | str | Callable[[dict[str, int]], bool],
    value: int = 1,
) -> float:
    """Probability of a qubit or register holding ``value``, or of a predicate on branches."""
    if callable(target) and not isinstance(target, (Register, Qubit)):
        return math.fsum(abs(a) ** 2 for vals, a in state.branches() if target(vals))
    if isinstance(target, Qubit):
        i = state.index[target.reg.name]
        return math.fsum(
            abs(a) ** 2 for k, a in state.amps.items() if ((k[i] >> target.index) & 1) == value
        )
    reg = state._reg(target)
    i = state.index[reg.name]
    return math.fsum(abs(a) ** 2 for k, a in state.amps.items() if reg.interpret(k[i]) == value)
