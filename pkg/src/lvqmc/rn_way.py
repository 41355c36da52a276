"""Pricing circuit with one superposed standard-normal register per time step.

Each ``R_W_j`` is prepared in ``sum_i sqrt(p_i) |i>`` over a grid of
``2**n_dig`` cells of ``[x_lo, x_hi]`` by refining one bit at a time: at
level ``m`` the conditional probability ``f`` that the next bit is zero is
computed from the top ``m`` bits, turned into an angle ``arccos sqrt f`` and
applied as a rotation. Price and payoff registers are fresh for every step and
nothing is uncomputed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .circuit import (
    AddFunction,
    Circuit,
    ConstMul,
    Copy,
    CostRow,
    Hadamard,
    Multiply,
    Add,
    QuantumState,
    Register,
    Rotation,
    SimulationBudgetExceeded,
    XorConst,
    XorFunction,
    encode_amplitude,
    load_cascade,
    measure_prob,
    simulate,
    table_load,
)
from .circuit.simulator import DEFAULT_BUDGET
from .fixedpoint import FxFormat
from .lvmodel import FixedStepTables, LvModel, PayoffSpec, SnGrid, price_enumerated, sn_grid
from .normal import interval_mass

__all__ = [
    "SnConfig",
    "RnWayConfig",
    "RnSimulation",
    "g_taylor",
    "g_exact",
    "f_table",
    "affine_coefficients",
    "build_fmi_gate",
    "build_sn_gate",
    "build_uj_rn",
    "build_full_rn",
    "sn_probabilities",
    "simulate_rn",
]


def g_taylor(x, delta):
    """Second-order share of a cell ``[x, x + delta]``'s normal mass in its left half."""
    return 0.5 + delta * x / 8.0 + delta * delta / 16.0


def g_exact(x: float, delta: float) -> float:
    """``P(x <= Z < x + delta/2) / P(x <= Z < x + delta)`` for standard normal ``Z``."""
    return interval_mass(x, x + delta / 2.0) / interval_mass(x, x + delta)


@dataclass(frozen=True)
class SnConfig:
    """Standard-normal grid and state preparation settings.

    Levels ``m < m_star`` load exact conditional probabilities from a table;
    levels ``m >= m_star`` evaluate the affine approximation. ``precision`` is
    the number of fractional bits of the probability, square root and angle
    registers.
    """

    x_lo: float = -4.0
    x_hi: float = 4.0
    n_dig: int = 6
    m_star: int = 7
    precision: int = 30

    def __post_init__(self) -> None:
        if not self.x_hi > self.x_lo:
            raise ValueError("x_hi must exceed x_lo")
        if self.n_dig < 1:
            raise ValueError("n_dig must be positive")
        if self.m_star < 2:
            raise ValueError("m_star must be at least 2")
        if not 2 <= self.precision <= 52:
            raise ValueError("precision must lie in 2..52")

    @property
    def delta(self) -> float:
        return self.x_hi - self.x_lo

    @property
    def n_points(self) -> int:
        return 1 << self.n_dig

    def cell(self, m: int) -> float:
        return self.delta / (1 << m)

    def grid(self) -> SnGrid:
        return sn_grid(self.x_lo, self.x_hi, self.n_points)


def f_table(sn: SnConfig, m: int) -> list[float]:
    """Exact left-half shares for the ``2**m`` cells of level ``m``."""
    d = sn.cell(m)
    return [g_exact(sn.x_lo + i * d, d) for i in range(1 << m)]


def affine_coefficients(sn: SnConfig, m: int) -> tuple[float, float]:
    """``(alpha, beta)`` with ``g_taylor(x_lo + i d, d) = alpha + beta i``."""
    d = sn.cell(m)
    return 0.5 + d * sn.x_lo / 8.0 + d * d / 16.0, d * d / 8.0


def _encode_unit(value: float, frac: int) -> int:
    raw = math.floor(value * (1 << frac))
    if not 0 <= raw <= 1 << frac:
        raise ValueError(f"probability {value} not representable with {frac} fractional bits")
    return raw


@dataclass(frozen=True)
class _SnRegs:
    w: Register
    f: tuple[Register, ...]
    sq: tuple[Register, ...]
    th: tuple[Register, ...]
    flag: Register

    def all(self) -> tuple[Register, ...]:
        return (self.w, *self.f, *self.sq, *self.th, self.flag)


def _sn_registers(sn: SnConfig, tag: str) -> _SnRegs:
    width = sn.precision + 1
    levels = range(1, sn.n_dig)
    return _SnRegs(
        w=Register(f"R_W{tag}", sn.n_dig, role="W"),
        f=tuple(Register(f"R_f{tag}_{m}", width, frac=sn.precision) for m in levels),
        sq=tuple(Register(f"R_sqrt{tag}_{m}", width, frac=sn.precision) for m in levels),
        th=tuple(Register(f"R_theta{tag}_{m}", width, frac=sn.precision, role="theta") for m in levels),
        flag=Register(f"R_fflag{tag}", 1, role="flag"),
    )


def build_fmi_gate(sn: SnConfig, m: int, regs: _SnRegs | None = None) -> Circuit:
    """XOR the level-``m`` share ``f`` of the cell indexed by the top ``m`` bits into ``R_f``.

    Below ``m_star`` every cell has its own exactly computed entry, selected by
    an equality test. From ``m_star`` on, ``f = alpha + beta i`` is a constant
    load plus one constant multiply of the index.
    """
    if not 1 <= m < sn.n_dig:
        raise ValueError(f"level must lie in 1..{sn.n_dig - 1}")
    regs = regs or _sn_registers(sn, "")
    f = regs.f[m - 1]
    idx = regs.w.top(m, frac=0)
    circ = Circuit(f"f[{m}]", regs.all())
    if m < sn.m_star:
        codes = [_encode_unit(v, sn.precision) for v in f_table(sn, m)]
        circ.extend(table_load(regs.flag.bit(0), idx, f, codes))
    else:
        alpha, beta = affine_coefficients(sn, m)
        circ.append(XorConst(((f, _encode_unit(alpha, sn.precision)),), label="f = alpha"))
        beta_raw = _encode_unit(beta, sn.precision)
        circ.append(ConstMul(f, idx, beta_raw, sn.precision, f.width, False, False, label="f += beta i"))
    return circ


def build_sn_gate(sn: SnConfig, tag: str = "") -> Circuit:
    """Prepare ``R_W`` in the discretised standard normal state, one bit per level."""
    regs = _sn_registers(sn, tag)
    prec = sn.precision
    circ = Circuit(f"SN{tag}", regs.all())
    circ.append(Hadamard(regs.w.bit(sn.n_dig - 1), label="top bit"))
    one = 1 << prec
    for m in range(1, sn.n_dig):
        f, sq, th = regs.f[m - 1], regs.sq[m - 1], regs.th[m - 1]
        circ.compose(build_fmi_gate(sn, m, regs))

        def root(raw: int) -> int:
            return math.isqrt(raw << prec)

        def angle(raw: int) -> int:
            return math.floor(math.acos(min(raw, one) / one) * one)

        circ.append(XorFunction(sq, f, root, "SquareRoot", (CostRow("SquareRoot", f.width),), f"sqrt f[{m}]"))
        circ.append(XorFunction(th, sq, angle, "Arccos", (CostRow("Arccos", sq.width),), f"acos[{m}]"))
        circ.append(
            Rotation(
                regs.w.bit(sn.n_dig - 1 - m), lambda raw: raw / one, th, precision=th.width,
                label=f"rotate bit {sn.n_dig - 1 - m}",
            )
        )
    return circ


def sn_probabilities(sn: SnConfig, budget: int = DEFAULT_BUDGET) -> np.ndarray:
    """Simulated ``|amp_i|**2`` per grid index after the SN gate."""
    circ = build_sn_gate(sn)
    state = simulate(circ, budget=budget)
    reg = circ.register("R_W")
    out = np.zeros(sn.n_points)
    for value, p in state.marginal(reg).items():
        out[value] += p
    return out


# Full circuit -------------------------------------------------------------------------


@dataclass(frozen=True)
class RnWayConfig:
    model: LvModel
    payoffs: PayoffSpec
    sn: SnConfig
    fmt: FxFormat
    scale: float | None = None

    def __post_init__(self) -> None:
        if self.payoffs.n_dates != self.model.n_t:
            raise ValueError(
                f"payoff has {self.payoffs.n_dates} dates, model has {self.model.n_t} steps"
            )
        if self.scale is not None and not self.scale > 0:
            raise ValueError("scale must be positive")

    @property
    def n_t(self) -> int:
        return self.model.n_t

    @cached_property
    def tables(self) -> FixedStepTables:
        return FixedStepTables.build(self.model, self.payoffs, self.fmt)

    @property
    def payoff_fmt(self) -> FxFormat:
        extra = math.ceil(math.log2(self.n_t)) if self.n_t > 1 else 0
        return FxFormat(self.fmt.n_int + extra, self.fmt.n_frac)

    @property
    def payoff_scale(self) -> float:
        if self.scale is not None:
            return float(self.scale)
        total = sum(max(0.0, min(c, self.fmt.max_value)) for c in self.payoffs.cap)
        return total if total > 0 else 1.0

    @property
    def n_branches(self) -> int:
        return self.sn.n_points**self.n_t


def _step_registers(cfg: RnWayConfig, j: int) -> dict[str, Register]:
    fmt = cfg.fmt
    return {
        "X": Register.fixed(f"R_X{j}", fmt, "W"),
        "S": Register.fixed(f"R_S{j}", fmt, "S"),
        "a": Register.fixed(f"R_LVa{j}", fmt, "LV"),
        "b": Register.fixed(f"R_LVb{j}", fmt, "LV"),
        "flag": Register(f"R_lvflag{j}", 1, role="flag"),
        "anc": Register.fixed(f"R_SW{j}", fmt),
        "ptmp": Register.fixed(f"R_ptmp{j}", fmt),
        "pay": Register.fixed(f"R_payoff{j}", cfg.payoff_fmt, "payoff"),
    }


def _all_registers(cfg: RnWayConfig) -> list[Register]:
    regs = [Register.fixed("R_S0", cfg.fmt, "S"), Register("R_out", 1, role="out")]
    for j in range(1, cfg.n_t + 1):
        regs.extend(_sn_registers(cfg.sn, str(j)).all())
        regs.extend(_step_registers(cfg, j).values())
    return regs


def build_uj_rn(cfg: RnWayConfig, j: int) -> Circuit:
    """Step ``j``: draw value, coefficient load, price update and payoff, all into fresh registers.

    ``S_j = S_{j-1} + a' (S_{j-1} X_j) + b' X_j`` with the interval
    coefficients ``a', b'`` selected by a comparator cascade on ``S_{j-1}``.
    """
    fmt = cfg.fmt
    t = cfg.tables
    sn = cfg.sn
    r = _step_registers(cfg, j)
    w = _sn_registers(sn, str(j)).w
    s_prev = Register.fixed(f"R_S{j - 1}", fmt, "S")
    circ = Circuit(f"U[{j}]", _all_registers(cfg))
    grid = sn.grid()
    # draw value enc(x_lo) + i enc(cell)
    circ.append(XorConst(((r["X"], fmt.encode_raw(grid.x_lo)),), label="X = x_lo"))
    circ.append(ConstMul(r["X"], w, fmt.encode_raw(grid.step), fmt.n_frac, fmt.n, True, False, label="X += i cell"))
    codes = list(zip(t.a_raw[j - 1], t.b_raw[j - 1]))
    circ.extend(load_cascade(r["flag"].bit(0), s_prev, t.thresholds[j - 1], [r["a"], r["b"]], codes), f"LV[{j}]")
    circ.extend(
        [
            Copy(r["S"], s_prev, label="S_j = S_{j-1}"),
            Multiply(r["anc"], s_prev, r["X"], label="SW = S X"),
            Multiply(r["S"], r["a"], r["anc"], label="S_j += a' SW"),
            Multiply(r["S"], r["b"], r["X"], label="S_j += b' X"),
        ],
        f"update[{j}]",
    )
    if j > 1:
        prev = Register.fixed(f"R_payoff{j - 1}", cfg.payoff_fmt, "payoff")
        circ.append(Copy(r["pay"], prev, label="carry payoff"), f"payoff[{j}]")
    i = j - 1
    p = cfg.payoffs
    if not (p.a[i] == 0 and p.b[i] == 0 and p.floor[i] <= 0 <= p.cap[i]):
        a, b = t.pay_a[i], t.pay_b[i]
        lo, hi = t.pay_floor[i], t.pay_cap[i]
        if a:
            circ.append(ConstMul(r["ptmp"], r["S"], a, fmt.n_frac, fmt.n, True, True, label="ptmp = a S"), f"payoff[{j}]")
        if b:
            circ.append(Add(r["ptmp"], const=b, label="ptmp += b"), f"payoff[{j}]")

        def clamp(x: int) -> int:
            if lo is not None:
                x = max(x, lo)
            if hi is not None:
                x = min(x, hi)
            return x

        n_cmp = (lo is not None) + (hi is not None)
        rows = ((CostRow("Comparator", fmt.n, n_cmp),) if n_cmp else ()) + (CostRow("Adder", r["pay"].width),)
        circ.append(AddFunction(r["pay"], r["ptmp"], clamp, 1, "ClampAccumulate", rows, "payoff += clamp"), f"payoff[{j}]")
    return circ


def build_full_rn(cfg: RnWayConfig) -> Circuit:
    """SN gates on every draw register, the steps in order, then payoff encoding."""
    regs = _all_registers(cfg)
    circ = Circuit("rn_way", regs)
    circ.append(XorConst(((regs[0], cfg.tables.s0_raw),), label="load S0"), "init")
    for j in range(1, cfg.n_t + 1):
        circ.compose(build_sn_gate(cfg.sn, str(j)), f"SN[{j}]")
    for j in range(1, cfg.n_t + 1):
        circ.compose(build_uj_rn(cfg, j))
    pay = circ.register(f"R_payoff{cfg.n_t}")
    encode_amplitude(circ, pay, circ.register("R_out").bit(0), cfg.payoff_scale, precision=cfg.sn.n_dig)
    return circ


@dataclass
class RnSimulation:
    price: float
    probability: float
    scale: float
    enumerated_price: float
    difference: float
    n_branches: int


def simulate_rn(cfg: RnWayConfig, budget: int = DEFAULT_BUDGET) -> RnSimulation:
    """Simulate the full circuit and compare with exhaustive enumeration.

    The reference uses the grid probabilities renormalised over the truncated
    range, which is the distribution the SN gate prepares.
    """
    if cfg.n_branches > budget:
        raise SimulationBudgetExceeded(
            f"{cfg.sn.n_points}^{cfg.n_t} = {cfg.n_branches} branches exceed the budget {budget}; "
            "reduce n_dig or the number of steps"
        )
    circ = build_full_rn(cfg)
    state: QuantumState = simulate(circ, budget=budget)
    prob = measure_prob(state, circ.register("R_out").bit(0))
    scale = cfg.payoff_scale
    ref = price_enumerated(cfg.model, cfg.payoffs, cfg.sn.grid().normalized(), cfg.fmt, "accumulate")
    price = prob * scale
    return RnSimulation(price, prob, scale, ref, abs(price - ref), cfg.n_branches)

