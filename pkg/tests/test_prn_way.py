import dataclasses

import numpy as np
import pytest
from conftest import SMALL_LCG

from lvqmc.circuit import Circuit, Hadamard, simulate
from lvqmc.fixedpoint import FixedPointOverflow
from lvqmc.lvmodel import LvModel, MonotonicityError, PayoffSpec, price_sampled
from lvqmc.prn_way import (
    build_full,
    build_icdf_gate,
    build_jw,
    build_ppr,
    build_pw,
    build_uj,
    build_vjk,
    check_update_reversible,
    simulate_prn,
)
from lvqmc.prng import PermutationSpec, lcg_jump, lcg_step
from lvqmc.resources import prn_builder_consistency


def branches(state):
    return [vals for vals, _ in state.branches()]


def scratch_clean(cfg, vals):
    return all(vals[r.name] == 0 for r in cfg.registers.scratch())


@pytest.fixture(scope="module")
def jw_state(prn_desk):
    r = prn_desk.registers
    prep = Circuit("prep", r.all())
    prep.extend(Hadamard(r.samp.bit(i)) for i in range(prn_desk.n_samp))
    prep.compose(build_jw(prn_desk))
    return simulate(prep)


def test_jump_loads_each_paths_first_element(prn_desk, jw_state):
    table = prn_desk.icdf_table
    stream = prn_desk.stream
    seen = set()
    for vals in branches(jw_state):
        i = vals["R_samp"]
        seen.add(i)
        x = lcg_jump(prn_desk.lcg, prn_desk.seed, i * prn_desk.n_t + 1)
        assert vals["R_PRN"] == x
        assert vals["R_W"] == table.evaluate_raw(stream.uniform_index(x))
        assert scratch_clean(prn_desk, vals)
    assert seen == set(range(prn_desk.n_paths))


def test_generator_step_on_register(prn_desk):
    ppr = build_ppr(prn_desk)
    for x in range(0, SMALL_LCG.modulus, 97):
        (vals,) = branches(simulate(ppr, {"R_PRN": x}))
        assert vals["R_PRN"] == lcg_step(SMALL_LCG, x)
        assert scratch_clean(prn_desk, vals)


def test_progress_twice_equals_two_generator_steps(prn_desk, jw_state):
    pw = build_pw(prn_desk)
    state = simulate(pw + pw, jw_state)
    table = prn_desk.icdf_table
    for vals in branches(state):
        x0 = lcg_jump(prn_desk.lcg, prn_desk.seed, vals["R_samp"] * prn_desk.n_t + 1)
        x2 = lcg_jump(prn_desk.lcg, x0, 2)
        assert vals["R_PRN"] == x2
        assert vals["R_W"] == table.evaluate_raw(prn_desk.stream.uniform_index(x2))
        assert scratch_clean(prn_desk, vals)


def test_icdf_gate_matches_table_on_every_input(prn_desk):
    gate = build_icdf_gate(prn_desk)
    table = prn_desk.icdf_table
    shift = SMALL_LCG.n_bits - prn_desk.n_dig
    for u in range(1 << prn_desk.n_dig):
        # low generator bits must not leak into the quantile
        (vals,) = branches(simulate(gate, {"R_PRN": (u << shift) | 0b1011}))
        assert vals["R_W"] == table.evaluate_raw(u)
        assert scratch_clean(prn_desk, vals)


def test_icdf_gate_inverse_clears_output(prn_desk):
    gate = build_icdf_gate(prn_desk)
    (vals,) = branches(simulate(gate + gate.inverse(), {"R_PRN": 0xA5C}))
    assert vals["R_W"] == 0 and vals["R_PRN"] == 0xA5C


class TestPriceUpdate:
    @pytest.mark.parametrize("j", [1, 2])
    def test_gadget_fires_only_on_its_interval(self, prn_desk, j):
        t = prn_desk.tables
        fmt = prn_desk.fmt
        circuits = [build_vjk(prn_desk, j, k) for k in (1, 2, 3)]
        ws = sorted({int(w) for w in prn_desk.icdf_table.all_outputs()})[::7]
        checked = 0
        for k, circ in enumerate(circuits):
            for s in range(fmt.min_raw, fmt.max_raw + 1, 3):
                for w in ws:
                    try:
                        want = t.step_raw(j, s, w)
                    except FixedPointOverflow:
                        continue
                    (vals,) = branches(simulate(circ, {"R_S": s, "R_W": w, "R_count": j - 1}))
                    active = t.interval(j, s) == k
                    assert vals["R_S"] == (want if active else s)
                    assert vals["R_count"] == j - 1 + active
                    assert scratch_clean(prn_desk, vals)
                    checked += 1
        assert checked > 100

    def test_sweep_updates_exactly_once(self, prn_desk):
        t = prn_desk.tables
        sweep = build_uj(prn_desk, 1)
        # only draws the inverse CDF can emit are covered by the build-time check
        ws = sorted({int(w) for w in prn_desk.icdf_table.all_outputs()})[::5]
        for s in range(prn_desk.fmt.min_raw, prn_desk.fmt.max_raw + 1, 5):
            for w in ws:
                try:
                    want = t.step_raw(1, s, w)
                except FixedPointOverflow:
                    continue
                (vals,) = branches(simulate(sweep, {"R_S": s, "R_W": w}))
                assert vals["R_S"] == want and vals["R_count"] == 1

    def test_steep_volatility_is_rejected_at_build_time(self, prn_desk):
        steep = LvModel(2.0, (0.0, 1.0), ((1.5, 2.5),), ((0.5,) * 3,), ((0.0,) * 3,))
        cfg = dataclasses.replace(prn_desk, model=steep, payoffs=PayoffSpec.european_call(1.5, 1))
        with pytest.raises(MonotonicityError):
            build_vjk(cfg, 1, 1)
        with pytest.raises(MonotonicityError):
            check_update_reversible(cfg, 1)


def test_single_step_single_path(prn_desk):
    model = LvModel(2.0, (0.0, 1.0), ((1.5, 2.5),), ((0.0,) * 3,), ((0.25,) * 3,))
    cfg = dataclasses.replace(prn_desk, model=model, payoffs=PayoffSpec.european_call(1.5, 1), n_samp=0)
    sim = simulate_prn(cfg)
    assert sim.match and sim.hygiene
    assert len(sim.paths) == 1
    assert sim.price == pytest.approx(sim.classical_price, abs=1e-12)


def test_desk_configuration_matches_classical_paths(prn_desk):
    sim = simulate_prn(prn_desk)
    assert sim.match, sim.mismatches
    assert sim.hygiene
    assert len(sim.paths) == prn_desk.n_paths
    # amplitude estimation reads back the mean payoff up to float rounding
    assert sim.price == pytest.approx(sim.classical_price, abs=1e-12)
    est = price_sampled(
        prn_desk.model, prn_desk.payoffs, prn_desk.stream, prn_desk.icdf, prn_desk.n_paths, prn_desk.fmt
    )
    assert est.price == pytest.approx(sim.classical_price, abs=1e-12)


def test_config_validation(prn_desk):
    with pytest.raises(ValueError):
        dataclasses.replace(prn_desk, n_dig=13)
    with pytest.raises(ValueError):
        dataclasses.replace(prn_desk, perm=PermutationSpec.default(8))
    with pytest.raises(ValueError):
        # 2**10 paths of 4 steps need more elements than a 12-bit period holds
        dataclasses.replace(prn_desk, n_samp=10)
    with pytest.raises(ValueError):
        dataclasses.replace(prn_desk, payoffs=PayoffSpec.european_call(1.5, 2))


def test_full_circuit_cost_is_reported_by_component(prn_desk):
    report = build_full(prn_desk).cost()
    assert report.t_count == sum(report.breakdown.values())
    assert any(g.startswith("V[") for g in report.breakdown)
    assert any(g.startswith("P_PRN[") for g in report.breakdown)
    assert report.qubits >= sum(r.width for r in prn_desk.registers.persistent())


def test_builder_consistency_is_advisory(prn_desk):
    out = prn_builder_consistency(prn_desk)
    for key in ("total", "V_sweep", "P_PRN", "icdf"):
        entry = out[key]
        assert entry["builder"] > 0 and entry["formula"] > 0
        assert entry["ratio"] == pytest.approx(entry["builder"] / entry["formula"])
        assert isinstance(entry["within_band"], bool)
    assert np.isfinite(out["total"]["ratio"])
