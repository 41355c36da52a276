"""Pricing circuit that generates its pseudo-random numbers on one register.

Every sample index ``i`` in ``R_samp`` drives its own path. The generator
register jumps to element ``i n_t + 1`` of the LCG sequence and then advances
one element per time step. Each uniform is permuted and mapped through the
fixed-point inverse normal CDF into ``R_W``. The price update gadgets
``V_jk`` act only on branches whose price lies in interval ``k`` and then
uncompute their flag from the updated price, so all scratch space is clean
after every step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .circuit import (
    MCT,
    Add,
    AddFunction,
    Alloc,
    Circuit,
    CompareConst,
    ConstMul,
    CostRow,
    Divide,
    Free,
    Gate,
    Hadamard,
    Multiply,
    QuantumState,
    Register,
    Swap,
    XorConst,
    XorFunction,
    XorShift,
    encode_amplitude,
    equality_flip,
    load_cascade,
    measure_prob,
    simulate,
)
from .circuit.simulator import DEFAULT_BUDGET
from .fixedpoint import FxFormat, div_raw, mul_raw
from .icdf import IcdfApprox, IcdfTable, quantize_icdf
from .lvmodel import (
    FixedStepTables,
    LvModel,
    MonotonicityError,
    PayoffSpec,
    fixed_point_paths,
    monotonicity_check,
)
from .prng import LcgParams, PermutationSpec, PrnStream, geometric_sum

__all__ = [
    "ReversibilityError",
    "PrnWayConfig",
    "PrnRegisters",
    "PrnSimulation",
    "build_jw",
    "build_pw",
    "build_ppr",
    "build_icdf_gate",
    "build_vjk",
    "build_uj",
    "build_payoff",
    "build_stages",
    "build_full",
    "check_update_reversible",
    "simulate_prn",
]


_EXHAUSTIVE_LIMIT = 1 << 22


class ReversibilityError(ValueError):
    """A fixed-point update gadget would not return its scratch registers to zero."""


@dataclass(frozen=True)
class PrnWayConfig:
    """Everything the PRN-on-a-register circuit needs.

    ``n_samp`` qubits index ``2**n_samp`` paths. ``n_dig`` is the number of
    generator bits fed to the inverse CDF. ``scale`` normalises the summed
    payoff for amplitude encoding; by default it is a bound from the payoff
    caps and the number format.
    """

    model: LvModel
    payoffs: PayoffSpec
    lcg: LcgParams
    perm: PermutationSpec
    icdf: IcdfApprox
    n_samp: int
    fmt: FxFormat
    n_dig: int
    seed: int = 0
    scale: float | None = None

    def __post_init__(self) -> None:
        if self.n_samp < 0:
            raise ValueError("n_samp must be non-negative")
        if self.perm.n_bits != self.lcg.n_bits:
            raise ValueError("permutation width differs from generator width")
        if not 1 <= self.n_dig <= self.lcg.n_bits:
            raise ValueError(f"n_dig must lie in 1..{self.lcg.n_bits}")
        if self.payoffs.n_dates != self.model.n_t:
            raise ValueError(
                f"payoff has {self.payoffs.n_dates} dates, model has {self.model.n_t} steps"
            )
        if not 0 <= self.seed < self.lcg.modulus:
            raise ValueError("seed must be a generator word")
        used = (1 << self.n_samp) * self.model.n_t + 1
        if used > self.lcg.modulus:
            raise ValueError(
                f"{1 << self.n_samp} paths x {self.model.n_t} steps need {used} generator "
                f"elements, more than the period {self.lcg.modulus}"
            )
        if self.scale is not None and not self.scale > 0:
            raise ValueError("scale must be positive")

    @property
    def n_t(self) -> int:
        return self.model.n_t

    @property
    def n_paths(self) -> int:
        return 1 << self.n_samp

    @cached_property
    def tables(self) -> FixedStepTables:
        return FixedStepTables.build(self.model, self.payoffs, self.fmt)

    @cached_property
    def icdf_table(self) -> IcdfTable:
        return quantize_icdf(self.icdf, self.n_dig, self.fmt)

    @cached_property
    def stream(self) -> PrnStream:
        return PrnStream(self.lcg, self.perm, self.seed, self.n_dig)

    @property
    def payoff_fmt(self) -> FxFormat:
        """Wide enough for the sum of ``n_t`` payoffs in ``fmt``."""
        extra = math.ceil(math.log2(self.n_t)) if self.n_t > 1 else 0
        return FxFormat(self.fmt.n_int + extra, self.fmt.n_frac)

    @property
    def payoff_scale(self) -> float:
        if self.scale is not None:
            return float(self.scale)
        total = 0.0
        for cap in self.payoffs.cap:
            total += max(0.0, min(cap, self.fmt.max_value))
        return total if total > 0 else 1.0

    @cached_property
    def registers(self) -> "PrnRegisters":
        return PrnRegisters.for_config(self)


@dataclass(frozen=True)
class PrnRegisters:
    samp: Register
    prn: Register
    w: Register
    s: Register
    payoff: Register
    count: Register
    out: Register
    jpow: Register
    jgeo: Register
    lcg: Register
    inc: Register
    coef: tuple[Register, Register, Register, Register]
    v: Register
    h1: Register
    h2: Register
    gi: Register
    g: Register
    cmp: Register
    tmp: Register
    mul: Register
    sp: Register
    ptmp: Register

    @classmethod
    def for_config(cls, cfg: PrnWayConfig) -> "PrnRegisters":
        n_bits = cfg.lcg.n_bits
        fmt = cfg.fmt
        coef_fmt = cfg.icdf_table.coef_fmt
        return cls(
            samp=Register("R_samp", max(1, cfg.n_samp), role="samp"),
            prn=Register("R_PRN", n_bits, role="PRN"),
            w=Register.fixed("R_W", fmt, "W"),
            s=Register.fixed("R_S", fmt, "S"),
            payoff=Register.fixed("R_payoff", cfg.payoff_fmt, "payoff"),
            count=Register("R_count", max(1, math.ceil(math.log2(cfg.n_t + 1))), role="count"),
            out=Register("R_out", 1, role="out"),
            jpow=Register("R_jpow", n_bits),
            jgeo=Register("R_jgeo", n_bits),
            lcg=Register("R_lcg", n_bits),
            inc=Register("R_inc", n_bits),
            coef=tuple(Register.fixed(f"R_c{i}", coef_fmt) for i in range(4)),  # type: ignore[arg-type]
            v=Register("R_v", cfg.n_dig, frac=cfg.n_dig),
            h1=Register.fixed("R_h1", coef_fmt),
            h2=Register.fixed("R_h2", coef_fmt),
            gi=Register("R_gi", 1, role="flag"),
            g=Register("R_g", 1, role="flag"),
            cmp=Register("R_cmp", 2, role="flag"),
            tmp=Register.fixed("R_tmp", fmt),
            mul=Register.fixed("R_mul", fmt),
            sp=Register.fixed("R_Sp", fmt, "S'"),
            ptmp=Register.fixed("R_ptmp", fmt),
        )

    def persistent(self) -> tuple[Register, ...]:
        return (self.samp, self.prn, self.w, self.s, self.payoff, self.count, self.out)

    def scratch(self) -> tuple[Register, ...]:
        """Registers that must be zero between components."""
        return (
            self.jpow, self.jgeo, self.lcg, self.inc, *self.coef, self.v, self.h1, self.h2,
            self.gi, self.g, self.cmp, self.tmp, self.mul, self.sp, self.ptmp,
        )

    def all(self) -> tuple[Register, ...]:
        return self.persistent() + self.scratch()


def _circuit(cfg: PrnWayConfig, name: str) -> Circuit:
    return Circuit(name, cfg.registers.all())


def _alloc(regs) -> list[Gate]:
    return [Alloc(r) for r in regs]


def _free(regs) -> list[Gate]:
    return [Free(r) for r in regs]


def _permute_gates(cfg: PrnWayConfig) -> list[Gate]:
    prn = cfg.registers.prn
    return [XorShift(prn, d, s) for d, s in cfg.perm.steps]


def _unpermute_gates(cfg: PrnWayConfig) -> list[Gate]:
    return [g.inverse() for g in reversed(_permute_gates(cfg))]


def _modmul(target: Register, source: Register, const: int, sign: int = 1) -> ConstMul:
    return ConstMul(
        target, source, const % (1 << target.width), 0, target.width, False, True, sign,
        modular=True, label=f"{sign:+d}*{const}*{source.name}",
    )


# Inverse normal CDF -----------------------------------------------------------


def build_icdf_gate(cfg: PrnWayConfig) -> Circuit:
    """``R_W += icdf(top n_dig bits of R_PRN)`` with all scratch returned to zero.

    A comparator cascade over the interval starts loads the four Horner
    coefficients and the negated interval start into scratch registers. The
    offset ``v = u - start`` then drives three truncated multiplies. The
    intermediates are uncomputed and the cascade is mirrored.
    """
    r = cfg.registers
    table = cfg.icdf_table
    u = r.prn.top(cfg.n_dig)
    c0, c1, c2, c3 = r.coef
    n_mask = (1 << cfg.n_dig) - 1
    codes = [(*cf, (-st) & n_mask) for cf, st in zip(table.coeffs, table.starts)]
    cascade = load_cascade(r.gi.bit(0), u, table.thresholds, [c0, c1, c2, c3, r.v], codes)
    scratch = (c0, c1, c2, c3, r.v, r.h1, r.h2, r.gi)

    circ = _circuit(cfg, "icdf")
    circ.extend(_alloc(scratch))
    circ.extend(cascade)
    circ.append(Add(r.v, u, label="v = u - start"))
    horner_h = [
        Multiply(r.h1, r.v, c3, label="h1 = v c3"),
        Add(r.h1, c2, label="h1 += c2"),
        Multiply(r.h2, r.v, r.h1, label="h2 = v h1"),
        Add(r.h2, c1, label="h2 += c1"),
    ]
    circ.extend(horner_h)
    circ.append(Multiply(r.w, r.v, r.h2, label="W = v h2"))
    circ.append(Add(r.w, c0, label="W += c0"))
    circ.extend(g.inverse() for g in reversed(horner_h))
    circ.append(Add(r.v, u, sign=-1, label="v -= u"))
    circ.extend(reversed(cascade))
    circ.extend(_free(scratch))
    return circ


# Generator jump and progress ---------------------------------------------------


def build_jw(cfg: PrnWayConfig) -> Circuit:
    """``|i>|0>|0> -> |i>|x_{i n_t + 1}>|w>`` with ``w`` the quantile of its uniform.

    ``x_k = a**k x_0 + c G(k)``: the powers and geometric sums of the jump
    index are computed into scratch registers (modular exponentiation),
    multiplied into ``R_PRN`` by the classical seed and increment, and
    uncomputed.
    """
    r = cfg.registers
    p = cfg.lcg
    N = p.modulus
    n_t = cfg.n_t
    n_bits = p.n_bits
    rows = (CostRow("ModularAdder", n_bits, max(1, cfg.n_samp) * n_bits),)

    def power(i: int) -> int:
        return pow(p.a, n_t * i + 1, N)

    def geo(i: int) -> int:
        return geometric_sum(p.a, n_t * i + 1, N)

    jump = [
        XorFunction(r.jpow, r.samp, power, "ModExp", rows, label="a^(n_t i + 1)"),
        _modmul(r.prn, r.jpow, cfg.seed),
        XorFunction(r.jgeo, r.samp, geo, "GeoSum", rows, label="G(n_t i + 1)"),
        _modmul(r.prn, r.jgeo, p.c),
    ]
    circ = _circuit(cfg, "J_W")
    circ.extend(_alloc((r.jpow, r.jgeo)))
    circ.extend(jump)
    circ.append(jump[2])
    circ.append(jump[0])
    circ.extend(_free((r.jpow, r.jgeo)))
    circ.extend(_permute_gates(cfg))
    circ.compose(build_icdf_gate(cfg), "J_W")
    circ.extend(_unpermute_gates(cfg))
    return circ


def build_ppr(cfg: PrnWayConfig) -> Circuit:
    """``|x> -> |a x + c mod N>`` using one scratch register and a role swap.

    ``y += a x`` then ``x -= a^-1 y`` clears ``x``. The increment is loaded,
    added and unloaded, and the two registers swap roles.
    """
    r = cfg.registers
    p = cfg.lcg
    circ = _circuit(cfg, "P_PRN")
    circ.extend(_alloc((r.lcg, r.inc)))
    circ.append(_modmul(r.lcg, r.prn, p.a))
    circ.append(_modmul(r.prn, r.lcg, p.alpha, sign=-1))
    load = XorConst(((r.inc, p.c),), label="load c")
    circ.append(load)
    circ.append(Add(r.lcg, r.inc, modular=True, label="y += c"))
    circ.append(load)
    circ.append(Swap(r.prn, r.lcg))
    circ.extend(_free((r.lcg, r.inc)))
    return circ


def build_pw(cfg: PrnWayConfig) -> Circuit:
    """Advance the generator one element and refresh ``R_W``.

    The quantile of the current element is first subtracted so that ``R_W``
    is zero before the new one is added.
    """
    icdf = build_icdf_gate(cfg)
    circ = _circuit(cfg, "P_W")
    circ.extend(_permute_gates(cfg), "icdf")
    circ.compose(icdf.inverse(), "icdf")
    circ.extend(_unpermute_gates(cfg), "icdf")
    circ.compose(build_ppr(cfg), "P_PRN")
    circ.extend(_permute_gates(cfg), "icdf")
    circ.compose(icdf, "icdf")
    circ.extend(_unpermute_gates(cfg), "icdf")
    return circ


# Price update ----------------------------------------------------------------------


def _interval_bounds(cfg: PrnWayConfig, j: int, k: int) -> tuple[int | None, int | None]:
    thr = cfg.tables.thresholds[j - 1]
    if not 1 <= k <= len(thr) + 1:
        raise IndexError(f"interval must lie in 1..{len(thr) + 1}")
    lo = thr[k - 2] if k >= 2 else None
    hi = thr[k - 1] if k <= len(thr) else None
    return lo, hi


def _interval_test(cfg: PrnWayConfig, j: int, k: int, src: Register, count_value: int) -> list[Gate]:
    """``R_g ^= (R_count == count_value) AND (src in interval k)``."""
    r = cfg.registers
    lo, hi = _interval_bounds(cfg, j, k)
    comps: list[Gate] = []
    bits = []
    if lo is not None:
        comps.append(CompareConst(r.cmp.bit(0), src, lo, "ge"))
        bits.append(r.cmp.bit(0))
    if hi is not None:
        comps.append(CompareConst(r.cmp.bit(1), src, hi, "lt"))
        bits.append(r.cmp.bit(1))
    return [*comps, *equality_flip(r.g.bit(0), r.count, count_value, bits), *comps]


def _w_image(cfg: PrnWayConfig) -> np.ndarray:
    return np.unique(cfg.icdf_table.all_outputs())


def check_update_reversible(cfg: PrnWayConfig, j: int) -> None:
    """Build-time guarantee that the step-``j`` gadgets leave scratch clean.

    The real-valued map must be strictly increasing over the range of draws
    the inverse CDF can produce. Then, for every representable draw and every
    representable price, two fixed-point properties are checked: the in-place
    multiply by ``1 + a'w`` must be undone exactly by restoring division, and
    a price updated in interval ``k`` must never look like a preimage inside a
    later interval ``k'``, which would flip the flag a second time. Above
    ``2**22`` (price, draw) pairs only the sufficient condition
    ``1 + a'w >= 1`` is checked.
    """
    w_img = _w_image(cfg)
    fmt = cfg.fmt
    w_min, w_max = float(fmt.decode(int(w_img.min()))), float(fmt.decode(int(w_img.max())))
    report = monotonicity_check(cfg.model, min(w_min, -fmt.resolution), max(w_max, fmt.resolution))
    if not report:
        raise MonotonicityError("; ".join(report.violations))
    t = cfg.tables
    n, nf, one = fmt.n, fmt.n_frac, t.one_raw
    thr = t.thresholds[j - 1]
    n_int = len(thr) + 1
    a_row, b_row = t.a_raw[j - 1], t.b_raw[j - 1]
    S = np.arange(fmt.min_raw, fmt.max_raw + 1, dtype=np.int64)
    k_of = np.searchsorted(np.asarray(thr, dtype=np.int64), S, side="right")
    exhaustive = len(S) * len(w_img) <= _EXHAUSTIVE_LIMIT
    for w in w_img.tolist():
        factors = [one + mul_raw(a, w, nf, n) for a in a_row]
        bws = [mul_raw(b, w, nf, n) for b in b_row]
        for k in range(n_int):
            if factors[k] <= 0:
                raise MonotonicityError(
                    f"step {j} interval {k + 1}: 1 + a'w <= 0 at w = {fmt.decode(w)}"
                )
        if not exhaustive:
            if min(factors) < one:
                raise ReversibilityError(
                    f"step {j}: 1 + a'w < 1 at w = {fmt.decode(w)}; restoring division "
                    "only undoes multipliers of at least 1"
                )
            continue
        # updated price per branch, mirroring the gadget that fires
        f_s = np.asarray(factors, dtype=np.int64)[k_of]
        prod = np.asarray(mul_raw(S, f_s, nf, n), dtype=np.int64)
        s_new = prod + np.asarray(bws, dtype=np.int64)[k_of]
        ok = (prod >= fmt.min_raw) & (prod <= fmt.max_raw) & (s_new >= fmt.min_raw) & (s_new <= fmt.max_raw)
        back = div_raw(prod, f_s, nf, n)
        bad = ok & ~((np.asarray(back.quotient) == S) & np.asarray(back.exact, dtype=bool))
        if bad.any():
            s_bad = int(S[np.argmax(bad)])
            raise ReversibilityError(
                f"step {j}: price {fmt.decode(s_bad)} times 1 + a'w at w = {fmt.decode(w)} "
                "cannot be undone by restoring division; the multiplier must be at least 1"
            )
        for k2 in range(n_int):
            z = s_new - bws[k2]
            q = np.asarray(div_raw(z, np.full_like(z, factors[k2]), nf, n).quotient)
            q_int = np.searchsorted(np.asarray(thr, dtype=np.int64), q, side="right")
            clash = ok & (k_of < k2) & (q_int == k2)
            if clash.any():
                s_bad = int(S[np.argmax(clash)])
                raise ReversibilityError(
                    f"step {j}: price {fmt.decode(s_bad)} updated in interval {int(k_of[np.argmax(clash)]) + 1} "
                    f"also passes the interval {k2 + 1} test at w = {fmt.decode(w)}"
                )


def build_vjk(cfg: PrnWayConfig, j: int, k: int, checked: bool = True) -> Circuit:
    """Update ``R_S`` by one Euler step on branches at step ``j`` with price in interval ``k``.

    1. flag branches with ``R_count = j-1`` and ``R_S`` in interval ``k``;
    2. on flagged branches ``S <- S (1 + a'w) + b'w`` (multiply, role swap,
       clear the old value by division) and increment ``R_count``;
    3. recompute the pre-update price ``(S - b'w) / (1 + a'w)`` into ``R_S'``;
    4. unflag branches with ``R_count = j`` and ``R_S'`` in interval ``k``;
    5. undo step 3.
    """
    if checked:
        check_update_reversible(cfg, j)
    r = cfg.registers
    t = cfg.tables
    fmt = cfg.fmt
    a_raw = t.a_raw[j - 1][k - 1]
    b_raw = t.b_raw[j - 1][k - 1]
    g = (r.g.bit(0),)
    one = ((r.tmp, t.one_raw),)

    def const_mul(target, c, sign=1, controls=()):
        return ConstMul(target, r.w, c, fmt.n_frac, fmt.n, True, True, sign, controls, label=f"{target.name} += {c}w")

    update: list[Gate] = [XorConst(one, label="tmp = 1")]
    if a_raw:
        update.append(const_mul(r.tmp, a_raw, 1, g))
    update += [
        Multiply(r.mul, r.s, r.tmp, label="mul = S tmp"),
        Swap(r.s, r.mul),
        Divide(r.mul, r.s, r.tmp, label="mul ^= S / tmp"),
    ]
    if b_raw:
        update.append(const_mul(r.s, b_raw, 1, g))
    if a_raw:
        update.append(const_mul(r.tmp, a_raw, -1, g))
    update += [XorConst(one, label="tmp = 0"), Add(r.count, const=1, controls=g, label="count += 1")]

    pre: list[Gate] = [XorConst(one, label="tmp = 1")]
    if a_raw:
        pre.append(const_mul(r.tmp, a_raw))
    if b_raw:
        pre.append(const_mul(r.s, b_raw, -1))
    pre.append(Divide(r.sp, r.s, r.tmp, label="S' = (S - b'w) / (1 + a'w)"))
    undo_pre = [g_.inverse() for g_ in reversed(pre)]

    scratch = (r.g, r.cmp, r.tmp, r.mul, r.sp)
    circ = _circuit(cfg, f"V[{j},{k}]")
    circ.extend(_alloc(scratch))
    circ.extend(_interval_test(cfg, j, k, r.s, j - 1))
    circ.extend(update)
    circ.extend(pre)
    circ.extend(_interval_test(cfg, j, k, r.sp, j))
    circ.extend(undo_pre)
    circ.extend(_free(scratch))
    return circ


def _zero_payoff(payoffs: PayoffSpec, date: int) -> bool:
    i = date - 1
    return payoffs.a[i] == 0 and payoffs.b[i] == 0 and payoffs.floor[i] <= 0 <= payoffs.cap[i]


def build_payoff(cfg: PrnWayConfig, j: int) -> Circuit:
    """``R_payoff += clamp(a_j S + b_j)``; empty for an identically zero date."""
    r = cfg.registers
    t = cfg.tables
    fmt = cfg.fmt
    circ = _circuit(cfg, f"payoff[{j}]")
    if _zero_payoff(cfg.payoffs, j):
        return circ
    a, b = t.pay_a[j - 1], t.pay_b[j - 1]
    lo, hi = t.pay_floor[j - 1], t.pay_cap[j - 1]
    linear: list[Gate] = []
    if a:
        linear.append(ConstMul(r.ptmp, r.s, a, fmt.n_frac, fmt.n, True, True, label="ptmp = a S"))
    if b:
        linear.append(Add(r.ptmp, const=b, label="ptmp += b"))

    def clamp(x: int) -> int:
        if lo is not None:
            x = max(x, lo)
        if hi is not None:
            x = min(x, hi)
        return x

    n_cmp = (lo is not None) + (hi is not None)
    rows = (CostRow("Comparator", fmt.n, n_cmp), CostRow("Adder", r.payoff.width)) if n_cmp else (
        CostRow("Adder", r.payoff.width),
    )
    circ.append(Alloc(r.ptmp))
    circ.extend(linear)
    circ.append(AddFunction(r.payoff, r.ptmp, clamp, 1, "ClampAccumulate", rows, label="payoff += clamp"))
    circ.extend(g.inverse() for g in reversed(linear))
    circ.append(Free(r.ptmp))
    return circ


def build_uj(cfg: PrnWayConfig, j: int, checked: bool = True) -> Circuit:
    """All ``V_jk`` for ``k = 1 .. n_S + 1`` followed by the step-``j`` payoff."""
    if checked:
        check_update_reversible(cfg, j)
    circ = _circuit(cfg, f"U[{j}]")
    for k in range(1, len(cfg.tables.thresholds[j - 1]) + 2):
        circ.compose(build_vjk(cfg, j, k, checked=False), f"V[{j}]")
    circ.compose(build_payoff(cfg, j), f"payoff[{j}]")
    return circ


def build_stages(cfg: PrnWayConfig, checked: bool = True) -> list[tuple[str, Circuit]]:
    """The full circuit as labelled stages: prep, then ``U_j`` and ``P_W`` per step, then encode."""
    r = cfg.registers
    prep = _circuit(cfg, "prep")
    prep.extend((Hadamard(r.samp.bit(i)) for i in range(cfg.n_samp)), "H")
    prep.append(XorConst(((r.s, cfg.tables.s0_raw),), label="load S0"), "H")
    prep.compose(build_jw(cfg), "J_W")
    stages = [("prep", prep)]
    for j in range(1, cfg.n_t + 1):
        stages.append((f"U[{j}]", build_uj(cfg, j, checked)))
        if j < cfg.n_t:
            pw = build_pw(cfg)
            relabelled = _circuit(cfg, f"P_W[{j}]")
            for gate, grp in pw.entries():
                relabelled.append(gate, f"{grp}[{j}]")
            stages.append((f"P_W[{j}]", relabelled))
    enc = _circuit(cfg, "encode")
    encode_amplitude(enc, r.payoff, r.out.bit(0), cfg.payoff_scale, precision=cfg.n_dig)
    stages.append(("encode", enc))
    return stages


def build_full(cfg: PrnWayConfig, checked: bool = True) -> Circuit:
    """Hadamards, jump, then per step the update sweep, payoff and progress, then encoding."""
    circ = _circuit(cfg, "prn_way")
    for _, stage in build_stages(cfg, checked):
        circ.compose(stage)
    return circ


# Simulation against the classical engine -------------------------------------------


@dataclass
class PrnSimulation:
    price: float
    probability: float
    scale: float
    classical_price: float
    paths: list[dict]
    match: bool
    hygiene: bool
    mismatches: list[str] = field(default_factory=list)


def simulate_prn(cfg: PrnWayConfig, budget: int = DEFAULT_BUDGET) -> PrnSimulation:
    """Run the circuit stage by stage and compare every branch with the classical paths.

    After each ``U_j`` every scratch register must be zero, ``R_count`` must
    equal ``j`` and ``R_S`` must equal the classical fixed-point price of the
    branch's path.
    """
    r = cfg.registers
    fmt = cfg.fmt
    values, trajectories = fixed_point_paths(
        cfg.model, cfg.payoffs, cfg.stream, cfg.icdf, cfg.n_paths, fmt
    )
    state: QuantumState | None = None
    quantum_traj: dict[int, list[int]] = {}
    problems: list[str] = []
    hygiene = True
    for label, stage in build_stages(cfg):
        state = simulate(stage, state, budget=budget)
        if label.startswith("U["):
            j = int(label[2:-1])
            for vals, _ in state.branches():
                i = vals["R_samp"] if cfg.n_samp else 0
                quantum_traj.setdefault(i, [cfg.tables.s0_raw]).append(vals["R_S"])
                if vals["R_count"] != j:
                    problems.append(f"path {i}: R_count = {vals['R_count']} after U_{j}")
                dirty = [reg.name for reg in r.scratch() if vals[reg.name] != 0]
                if dirty:
                    hygiene = False
                    problems.append(f"path {i}: scratch {dirty} non-zero after U_{j}")
    assert state is not None
    totals: dict[int, int] = {}
    for vals, _ in state.branches():
        totals[vals["R_samp"] if cfg.n_samp else 0] = vals["R_payoff"]
    paths = []
    match = not problems
    for i in range(cfg.n_paths):
        q_traj = quantum_traj.get(i, [])
        c_traj = trajectories[i]
        q_total = totals.get(i, 0) * fmt.resolution
        same = q_traj == c_traj and q_total == values[i]
        if not same:
            match = False
            problems.append(f"path {i}: quantum {q_traj} vs classical {c_traj}")
        paths.append(
            {
                "index": i,
                "trajectory": [float(fmt.decode(s)) for s in q_traj],
                "classical_trajectory": [float(fmt.decode(s)) for s in c_traj],
                "payoff": float(q_total),
                "classical_payoff": float(values[i]),
                "match": same,
            }
        )
    prob = measure_prob(state, r.out.bit(0))
    scale = cfg.payoff_scale
    return PrnSimulation(
        price=prob * scale,
        probability=prob,
        scale=scale,
        classical_price=float(np.mean(values)),
        paths=paths,
        match=match,
        hygiene=hygiene,
        mismatches=problems,
    )
