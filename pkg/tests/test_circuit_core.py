import math
from itertools import product

import pytest
from hypothesis import given
from hypothesis import strategies as st

from lvqmc.circuit import (
    DEFAULT_COST_MODEL,
    MCT,
    Add,
    Alloc,
    AmplitudeRangeError,
    AncillaNotClean,
    Circuit,
    CompareConst,
    ConstMul,
    CostRow,
    Custom,
    Divide,
    Free,
    Hadamard,
    Multiply,
    NonReversible,
    NonReversibleCustom,
    Register,
    RegisterMismatch,
    Rotation,
    SimulationBudgetExceeded,
    UnknownRegister,
    XorFunction,
    XorShift,
    cascade_masks,
    encode_amplitude,
    equality_flip,
    load_cascade,
    measure_prob,
    simulate,
    table_load,
)
from lvqmc.fixedpoint import div_raw, mul_raw


def only_branch(state):
    assert len(state) == 1
    vals, amp = next(state.branches())
    assert abs(abs(amp) - 1) < 1e-12
    return vals


class TestCost:
    def test_empty_circuit_is_free(self):
        report = Circuit("empty").cost()
        assert (report.qubits, report.t_count) == (0, 0)

    @pytest.mark.parametrize(
        "kind,n,t",
        [
            ("Adder", 16, 14 * 16),
            ("CtrlAdder", 16, 21 * 16),
            ("ModularAdder", 64, 70 * 64),
            ("Comparator", 10, 28 * 10),
            ("Multiplier", 16, 21 * 16 * 16),
            ("Divider", 8, 35 * 64),
            ("MCT", 4, 8 * 4 - 9),
            ("MCT", 9, 72),
            ("MCT", 1, 0),
            ("SquareRoot", 30, 14 * 900),
            ("Arccos", 20, 34000),
            ("CtrlRotation", 16, 48),
        ],
    )
    def test_cost_rows(self, kind, n, t):
        assert DEFAULT_COST_MODEL.t_count(kind, n) == t

    def test_hand_values(self):
        assert DEFAULT_COST_MODEL.t_count("Adder", 16) == 224
        assert DEFAULT_COST_MODEL.t_count("Multiplier", 16) == 5376
        assert DEFAULT_COST_MODEL.t_count("ModularAdder", 64) == 4480
        assert DEFAULT_COST_MODEL.t_count("MCT", 4) == 23

    def test_unknown_kind(self):
        with pytest.raises(KeyError):
            DEFAULT_COST_MODEL.t_count("Teleport", 3)

    def test_gate_costs_and_breakdown(self):
        a, b = Register("a", 16), Register("b", 16)
        c = Circuit("c", [a, b])
        c.append(Add(a, b), "add")
        c.append(Add(a, b, controls=(b.bit(0),)), "ctrl")
        c.append(Add(a, const=3, modular=True), "mod")
        report = c.cost()
        assert report.breakdown == {"add": 224, "ctrl": 336, "mod": 70 * 16}
        assert report.qubits == 32
        assert report.histogram == {"Adder": 1, "CtrlAdder": 1, "ModularAdder": 1}

    def test_const_mul_counts_one_adder_per_selecting_bit(self):
        t, s = Register("t", 8, 4, True), Register("s", 8, 4, True)
        g = ConstMul(t, s, const=21, const_frac=4, const_width=6)
        assert g.cost_rows() == [CostRow("Adder", 8, 6)]

    def test_divider_ancilla_counts_towards_peak(self):
        q, z, y = Register("q", 8, 4), Register("z", 8, 4), Register("y", 8, 4)
        c = Circuit("d", [q, z, y]).append(Divide(q, z, y))
        report = c.cost()
        assert report.qubits == 24 + 16
        assert report.qubit_breakdown == {"registers": 24, "gate_ancilla": 16}
        assert report.t_count == 35 * 64

    def test_liveness_tracks_alloc_and_free(self):
        a, t1, t2 = Register("a", 4), Register("t1", 10), Register("t2", 10)
        c = Circuit("live", [a, t1, t2])
        c.extend([Alloc(t1), Free(t1), Alloc(t2), Free(t2)])
        # the two temporaries never overlap
        assert c.cost().qubits == 14
        c2 = Circuit("overlap", [a, t1, t2]).extend([Alloc(t1), Alloc(t2), Free(t2), Free(t1)])
        assert c2.cost().qubits == 24

    def test_compose_is_associative(self):
        a, b = Register("a", 6), Register("b", 6)
        parts = [
            Circuit("x", [a, b]).append(Add(a, b), "x"),
            Circuit("y", [a]).append(XorShift(a, "right", 2), "y"),
            Circuit("z", [a, b]).append(Add(b, a, sign=-1), "z"),
        ]
        left = (parts[0] + parts[1]) + parts[2]
        right = parts[0] + (parts[1] + parts[2])
        assert left.gates == right.gates
        assert left.cost() == right.cost()
        assert [r.name for r in left.registers] == [r.name for r in right.registers]


class TestRegisters:
    def test_undeclared_and_mismatched(self):
        a = Register("a", 4)
        with pytest.raises(UnknownRegister):
            Circuit("c").append(Add(a, const=1))
        c = Circuit("c", [a])
        with pytest.raises(RegisterMismatch):
            c.append(Add(Register("a", 5), const=1))
        with pytest.raises(RegisterMismatch):
            c.add_register(Register("a", 6))

    def test_validation(self):
        with pytest.raises(ValueError):
            Register("z", 0)
        with pytest.raises(ValueError):
            Register("z", 4, role="mystery")
        with pytest.raises(IndexError):
            Register("z", 4).bit(4)
        with pytest.raises(ValueError):
            Register("z", 4).view(2, 3)

    def test_signed_interpretation(self):
        r = Register("r", 4, signed=True)
        assert r.interpret(0b1111) == -1 and r.to_bits(-1) == 0b1111


class TestSimulation:
    def test_adder_example(self):
        a, b = Register("a", 4), Register("b", 4)
        c = Circuit("add", [a, b]).append(Add(a, b))
        assert only_branch(simulate(c, {"a": 3, "b": 5})) == {"a": 8, "b": 5}

    def test_hadamard_amplitudes(self):
        q = Register("q", 1)
        state = simulate(Circuit("h", [q]).append(Hadamard(q.bit(0))))
        amps = dict((vals["q"], amp) for vals, amp in state.branches())
        assert amps[0] == pytest.approx(1 / math.sqrt(2))
        assert amps[1] == pytest.approx(1 / math.sqrt(2))
        # H twice is the identity
        back = simulate(Circuit("hh", [q]).extend([Hadamard(q.bit(0))] * 2))
        assert only_branch(back) == {"q": 0}

    def test_rotation_quarter_turn_gives_half(self):
        q = Register("q", 1)
        state = simulate(Circuit("r", [q]).append(Rotation(q.bit(0), lambda _: math.pi / 4)))
        assert measure_prob(state, q.bit(0)) == pytest.approx(0.5, abs=1e-12)

    def test_controlled_operations_need_all_controls(self):
        a, c = Register("a", 4), Register("c", 2)
        circ = Circuit("ctl", [a, c]).append(Add(a, const=1, controls=c.bits()))
        circ.append(MCT(a.bit(3), c.bits()))
        for cv in range(4):
            vals = only_branch(simulate(circ, {"c": cv}))
            assert vals["a"] == (9 if cv == 3 else 0)

    def test_multiply_and_divide_gates_match_raw_arithmetic(self):
        x, y = Register("x", 8, 4, True), Register("y", 8, 4, True)
        z, q = Register("z", 8, 4, True), Register("q", 8, 4, True)
        c = Circuit("md", [x, y, z, q]).append(Multiply(z, x, y)).append(Divide(q, z, y))
        for xr, yr in product(range(0, 64, 5), range(16, 64, 7)):
            if mul_raw(xr, yr, 4, 8) > 127:
                continue
            vals = only_branch(simulate(c, {"x": xr, "y": yr}))
            assert vals["z"] == mul_raw(xr, yr, 4, 8)
            assert vals["q"] == int(div_raw(vals["z"], yr, 4, 8).quotient) == xr

    def test_divide_by_non_positive_leaves_target(self):
        z, y, q = Register("z", 8, 4, True), Register("y", 8, 4, True), Register("q", 8, 4, True)
        c = Circuit("d", [z, y, q]).append(Divide(q, z, y))
        assert only_branch(simulate(c, {"z": 20, "y": -16}))["q"] == 0

    def test_compare_and_xorshift(self):
        s, f = Register("s", 5), Register("f", 1)
        c = Circuit("cmp", [s, f]).append(CompareConst(f.bit(0), s, 7, "lt"))
        for v in range(32):
            assert only_branch(simulate(c, {"s": v}))["f"] == int(v < 7)
        x = Register("x", 8)
        for d, k in product(("left", "right"), range(1, 8)):
            g = XorShift(x, d, k)
            circ = Circuit("xs", [x]).append(g).append(g.inverse())
            outs = {only_branch(simulate(Circuit("f", [x]).append(g), {"x": v}))["x"] for v in range(256)}
            assert len(outs) == 256
            assert all(only_branch(simulate(circ, {"x": v}))["x"] == v for v in range(0, 256, 17))

    def test_non_injective_function_is_detected(self):
        a = Register("a", 3)
        collapse = Custom((a,), lambda v: (0,), lambda v: (0,))
        with pytest.raises(NonReversibleCustom):
            simulate(Circuit("bad", [a]).append(collapse), {"a": 5})

    def test_collision_between_branches_is_detected(self):
        a, b = Register("a", 1), Register("b", 1)
        # a valid-looking gate that forgets its input merges two branches
        forget = Custom((b,), lambda v: (0,), lambda v: v)
        c = Circuit("merge", [a, b]).append(Hadamard(b.bit(0)))
        c.append(Custom((a,), lambda v: v, lambda v: v))
        with pytest.raises((NonReversible, NonReversibleCustom)):
            simulate(c.append(forget))

    def test_ancilla_must_be_clean(self):
        a, t = Register("a", 4), Register("t", 4)
        c = Circuit("leak", [a, t]).extend([Alloc(t), Add(t, a), Free(t)])
        with pytest.raises(AncillaNotClean):
            simulate(c, {"a": 3})
        fine = Circuit("ok", [a, t]).extend([Alloc(t), Add(t, a), Add(t, a, sign=-1), Free(t)])
        assert only_branch(simulate(fine, {"a": 3})) == {"a": 3, "t": 0}

    def test_budget_exceeded(self):
        q = Register("q", 4)
        c = Circuit("wide", [q]).extend(Hadamard(b) for b in q.bits())
        assert len(simulate(c, budget=16)) == 16
        with pytest.raises(SimulationBudgetExceeded):
            simulate(c, budget=8)

    @given(
        st.lists(
            st.tuples(st.sampled_from(["add", "sub", "xs", "cmul", "mul", "xor", "swapadd"]), st.integers(1, 7)),
            max_size=12,
        ),
        st.integers(0, 255),
        st.integers(0, 255),
    )
    def test_circuit_then_inverse_is_identity(self, ops, av, bv):
        a, b = Register("a", 8, 4, True), Register("b", 8, 4, True)
        p = Register("p", 8, 4, True)
        c = Circuit("rand", [a, b, p])
        for kind, k in ops:
            if kind == "add":
                c.append(Add(a, b))
            elif kind == "sub":
                c.append(Add(b, const=k, sign=-1))
            elif kind == "xs":
                c.append(XorShift(a, "left" if k % 2 else "right", k))
            elif kind == "cmul":
                c.append(ConstMul(b, a, const=k, const_frac=2, const_width=4))
            elif kind == "mul":
                c.append(Multiply(p, a, b))
            elif kind == "xor":
                c.append(XorFunction(p, a, lambda v, k=k: v * k))
            else:
                c.append(Add(b, a, controls=(p.bit(k),)))
        full = c + c.inverse()
        assert only_branch(simulate(full, {"a": av, "b": bv})) == {
            "a": Register("a", 8, 4, True).interpret(av),
            "b": Register("b", 8, 4, True).interpret(bv),
            "p": 0,
        }


class TestEncodeAmplitude:
    def run(self, payoffs, scale):
        idx = Register("i", max(1, (len(payoffs) - 1).bit_length()))
        pay = Register("pay", 8, 4)
        anc = Register("anc", 1)
        c = Circuit("enc", [idx, pay, anc])
        c.extend(Hadamard(b) for b in idx.bits())
        c.append(XorFunction(pay, idx, lambda i: int(payoffs[i] * 16)))
        encode_amplitude(c, pay, anc.bit(0), scale)
        return measure_prob(simulate(c), anc.bit(0))

    def test_zero_payoff(self):
        assert self.run([0.0, 0.0], 4.0) == pytest.approx(0.0, abs=1e-15)

    def test_full_scale(self):
        assert self.run([4.0, 4.0], 4.0) == pytest.approx(1.0, abs=1e-12)

    def test_mean_of_half_and_zero(self):
        assert self.run([0.0, 2.0], 4.0) == pytest.approx(0.25, abs=1e-12)

    def test_out_of_range(self):
        with pytest.raises(AmplitudeRangeError):
            self.run([5.0, 0.0], 4.0)
        with pytest.raises(ValueError):
            encode_amplitude(Circuit("c"), Register("p", 4), Register("a", 1).bit(0), 0.0)


class TestCascades:
    @given(st.lists(st.integers(0, 255), min_size=1, max_size=9))
    def test_masks_telescope(self, codes):
        masks = cascade_masks(codes)
        R = len(codes)
        for M in range(R):
            acc = 0
            for r in range(M, R - 1, 2):
                acc ^= masks[r]
            acc ^= masks[R - 1]
            assert acc == codes[M]

    @given(
        st.lists(st.integers(1, 62), min_size=1, max_size=5, unique=True).map(sorted),
        st.data(),
    )
    def test_load_cascade_loads_and_clears(self, thresholds, data):
        codes = data.draw(st.lists(st.integers(0, 255), min_size=len(thresholds) + 1, max_size=len(thresholds) + 1))
        s, t, f = Register("s", 6), Register("t", 8), Register("f", 1)
        gates = load_cascade(f.bit(0), s, thresholds, [t], [(c,) for c in codes])
        once = Circuit("load", [s, t, f]).extend(gates)
        twice = once + once.inverse()
        for v in range(64):
            r = sum(v >= thr for thr in thresholds)
            vals = only_branch(simulate(once, {"s": v}))
            assert vals["t"] == codes[r]
            assert vals["f"] == (len(thresholds) - r) % 2
            assert only_branch(simulate(twice, {"s": v})) == {"s": v, "t": 0, "f": 0}

    def test_load_cascade_validation(self):
        s, t, f = Register("s", 4), Register("t", 4), Register("f", 1)
        with pytest.raises(ValueError):
            load_cascade(f.bit(0), s, [3, 2], [t], [(0,), (1,), (2,)])
        with pytest.raises(ValueError):
            load_cascade(f.bit(0), s, [3], [t], [(0,)])

    def test_equality_flip_and_table_load(self):
        s, t, f, g = Register("s", 3), Register("t", 5), Register("f", 1), Register("g", 1)
        codes = [7, 0, 31, 4, 4, 9, 1, 30]
        c = Circuit("tab", [s, t, f, g]).extend(table_load(f.bit(0), s, t, codes))
        c.extend(equality_flip(g.bit(0), s, 5))
        for v in range(8):
            vals = only_branch(simulate(c, {"s": v}))
            assert vals == {"s": v, "t": codes[v], "f": 0, "g": int(v == 5)}
        with pytest.raises(ValueError):
            table_load(f.bit(0), s, t, codes[:-1])
