"""Reversible macro-gate circuits, their cost and their sparse simulation."""

from .circuit import Circuit, RegisterMismatch, UnknownRegister
from .cost import DEFAULT_COST_MODEL, CostModel, ResourceReport, cost, round_sig
from .gates import (
    MCT,
    Add,
    AddFunction,
    Alloc,
    CompareConst,
    ConstMul,
    Copy,
    CostRow,
    Custom,
    Divide,
    Free,
    Gate,
    Hadamard,
    Multiply,
    NonReversibleCustom,
    Rotation,
    Swap,
    XorConst,
    XorFunction,
    XorShift,
)
from .library import (
    AmplitudeRangeError,
    cascade_masks,
    encode_amplitude,
    equality_flip,
    load_cascade,
    table_load,
    table_masks,
)
from .registers import Qubit, Register, View
from .simulator import (
    DEFAULT_BUDGET,
    AncillaNotClean,
    NonReversible,
    QuantumState,
    SimulationBudgetExceeded,
    measure_prob,
    simulate,
)

__all__ = [
    "Add", "AddFunction", "Alloc", "AmplitudeRangeError", "AncillaNotClean", "Circuit",
    "CompareConst", "ConstMul", "Copy", "CostModel", "CostRow", "Custom", "DEFAULT_BUDGET",
    "DEFAULT_COST_MODEL", "Divide", "Free", "Gate", "Hadamard", "MCT", "Multiply",
    "NonReversible", "NonReversibleCustom", "QuantumState", "Qubit", "Register",
    "RegisterMismatch", "ResourceReport", "Rotation", "SimulationBudgetExceeded", "Swap",
    "UnknownRegister", "View", "XorConst", "XorFunction", "XorShift", "cascade_masks", "cost",
    "encode_amplitude", "equality_flip", "load_cascade", "measure_prob", "round_sig",
    "simulate", "table_load", "table_masks",
]
