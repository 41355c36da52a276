"""Closed-form qubit and T-count estimates for both pricing circuits.

All formulas are evaluated in exact integer arithmetic. Each report splits
its totals into the components that produce them.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

from .circuit.cost import ResourceReport, round_sig

__all__ = [
    "ResourceParams",
    "ResourceReport",
    "REFERENCE_PARAMS",
    "prn_way_qubits",
    "prn_way_tcount",
    "prn_way_report",
    "rn_way_qubits",
    "rn_way_tcount",
    "rn_way_report",
    "compare_ways",
    "format_table",
    "round_sig",
    "ARCCOS_T",
    "ARCCOS_QUBITS",
    "prn_builder_consistency",
    "rn_builder_consistency",
]

ARCCOS_T = 34000
ARCCOS_QUBITS = 105


@dataclass(frozen=True)
class ResourceParams:
    """Sample-index, number, generator and ICDF widths, and step and grid counts."""

    n_samp: int
    n_dig: int
    n_PRN: int
    n_ICDF: int
    n_t: int
    n_S: int

    def __post_init__(self) -> None:
        for name, value in asdict(self).items():
            if not isinstance(value, int) or value < 0:
                raise ValueError(f"{name} must be a non-negative integer, got {value!r}")

    def to_dict(self) -> dict:
        return asdict(self)


# 65536 paths, 16-bit numbers, 64-bit generator, 109 ICDF pieces, 360 steps, 5 grid points
REFERENCE_PARAMS = ResourceParams(n_samp=16, n_dig=16, n_PRN=64, n_ICDF=109, n_t=360, n_S=5)


def _prn_qubit_parts(p: ResourceParams) -> dict[str, int]:
    return {
        "R_samp": p.n_samp,
        "R_S": p.n_dig,
        "R_payoff": p.n_dig,
        "R_PRN": p.n_PRN,
        "peak_phase": max(2 * p.n_PRN, 7 * p.n_dig),
    }


def _prn_t_parts(p: ResourceParams) -> dict[str, int]:
    n, n_t = p.n_dig, p.n_t
    return {
        "V_sweep": 245 * n * n * p.n_S * n_t,
        "P_PRN": 140 * p.n_PRN * p.n_PRN * n_t,
        "icdf_multiplies": 210 * n * n * n_t,
        "icdf_comparisons": 56 * n * p.n_ICDF * n_t,
    }


def prn_way_qubits(p: ResourceParams) -> int:
    """``n_samp + 2 n_dig + n_PRN + max(2 n_PRN, 7 n_dig)``."""
    return sum(_prn_qubit_parts(p).values())


def prn_way_tcount(p: ResourceParams) -> int:
    """``(245 n_dig^2 n_S + 140 n_PRN^2 + 210 n_dig^2 + 56 n_dig n_ICDF) n_t``."""
    return sum(_prn_t_parts(p).values())


def prn_way_report(p: ResourceParams) -> ResourceReport:
    parts_q = _prn_qubit_parts(p)
    parts_t = _prn_t_parts(p)
    return ResourceReport(
        qubits=sum(parts_q.values()),
        t_count=sum(parts_t.values()),
        breakdown=parts_t,
        qubit_breakdown=parts_q,
        label="prn_way",
    )


def _rn_qubit_parts(p: ResourceParams) -> dict[str, int]:
    n, n_t = p.n_dig, p.n_t
    return {
        "R_S": n * n_t,
        "R_W": n * n_t,
        "R_payoff": n * n_t,
        "R_LV": 2 * n * n_t,
        "update_ancilla": n * n_t,
        "sn_f": n * n * n_t,
        "sn_sqrt_ancilla": 2 * n * n * n_t,
        "sn_arccos": ARCCOS_QUBITS * n * n_t,
    }


def _rn_t_parts(p: ResourceParams) -> dict[str, int]:
    n, n_t = p.n_dig, p.n_t
    return {
        "sn_f_multiplies": 7 * n * n * n * n_t,
        "sn_arccos": ARCCOS_T * n * n_t,
        "update_multiplies": 63 * n * n * n_t,
        "lv_comparisons": 28 * p.n_S * n * n_t,
    }


def rn_way_qubits(p: ResourceParams) -> int:
    """``(3 n_dig^2 + 111 n_dig) n_t``."""
    return sum(_rn_qubit_parts(p).values())


def rn_way_tcount(p: ResourceParams) -> int:
    """``(7 n_dig^2 + 63 n_dig + 28 n_S + 34000) n_dig n_t``."""
    return sum(_rn_t_parts(p).values())


def rn_way_report(p: ResourceParams) -> ResourceReport:
    parts_q = _rn_qubit_parts(p)
    parts_t = _rn_t_parts(p)
    return ResourceReport(
        qubits=sum(parts_q.values()),
        t_count=sum(parts_t.values()),
        breakdown=parts_t,
        qubit_breakdown=parts_q,
        label="rn_way",
    )


def compare_ways(p: ResourceParams) -> dict:
    """Both reports, their ratios, and whether the PRN qubit count ignores ``n_t``."""
    prn = prn_way_report(p)
    rn = rn_way_report(p)
    t_ratio = prn.t_count / rn.t_count if rn.t_count else float("inf")
    q_ratio = rn.qubits / prn.qubits if prn.qubits else float("inf")
    n_t_free = all(
        prn_way_qubits(ResourceParams(**{**p.to_dict(), "n_t": n_t})) == prn.qubits
        for n_t in (1, 360, 3600)
    )
    return {
        "params": p.to_dict(),
        "prn_way": prn.to_dict(),
        "rn_way": rn.to_dict(),
        "t_ratio_prn_over_rn": t_ratio,
        "qubit_ratio_rn_over_prn": q_ratio,
        "prn_t_larger_by_about_2": 1.0 < t_ratio < 3.0,
        "prn_qubits_independent_of_n_t": n_t_free,
    }


def _sci(x: float) -> str:
    mant, exp = f"{round_sig(x):.1e}".split("e")
    return f"{mant}x10^{int(exp)}"


def format_table(p: ResourceParams) -> str:
    """Two-way comparison as a fixed-width text table, exact and to two significant figures."""
    prn = prn_way_report(p)
    rn = rn_way_report(p)
    rows = [
        ("", "PRN-on-a-register", "register-per-RN"),
        ("qubits", f"{prn.qubits:,} ({_sci(prn.qubits)})", f"{rn.qubits:,} ({_sci(rn.qubits)})"),
        ("T-count", f"{prn.t_count:,} ({_sci(prn.t_count)})", f"{rn.t_count:,} ({_sci(rn.t_count)})"),
    ]
    widths = [max(len(r[i]) for r in rows) for i in range(3)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _ratio_entry(builder: int, formula: int, band: float) -> dict:
    ratio = builder / formula if formula else float("inf")
    return {
        "builder": builder,
        "formula": formula,
        "ratio": ratio,
        "within_band": abs(ratio - 1.0) <= band,
    }


def prn_builder_consistency(cfg, band: float = 0.10) -> dict:
    """Compare the built PRN circuit's T-count with the closed form on the parts it counts.

    Only the update sweeps, generator progress and inverse-CDF pairs enter the
    closed form. The jump, payoff and encoding gates are left out of both
    sides. The result is advisory since the closed form keeps leading terms only.
    """
    from .prn_way import build_full

    params = ResourceParams(
        n_samp=cfg.n_samp,
        n_dig=cfg.fmt.n,
        n_PRN=cfg.lcg.n_bits,
        n_ICDF=cfg.icdf_table.n_intervals,
        n_t=cfg.n_t,
        n_S=len(cfg.model.grids[0]),
    )
    report = build_full(cfg).cost()
    parts = {"V_sweep": "V[", "P_PRN": "P_PRN[", "icdf": "icdf["}
    built = {k: sum(v for g, v in report.breakdown.items() if g.startswith(p)) for k, p in parts.items()}
    formula = _prn_t_parts(params)
    formula_icdf = formula["icdf_multiplies"] + formula["icdf_comparisons"]
    return {
        "params": params.to_dict(),
        "total": _ratio_entry(sum(built.values()), prn_way_tcount(params), band),
        "V_sweep": _ratio_entry(built["V_sweep"], formula["V_sweep"], band),
        "P_PRN": _ratio_entry(built["P_PRN"], formula["P_PRN"], band),
        "icdf": _ratio_entry(built["icdf"], formula_icdf, band),
        "builder_qubits": report.qubits,
        "formula_qubits": prn_way_qubits(params),
    }


def rn_builder_consistency(cfg, band: float = 0.10) -> dict:
    """Same comparison for the register-per-RN circuit (SN gates, coefficient loads, updates)."""
    from .rn_way import build_full_rn

    params = ResourceParams(
        n_samp=0,
        n_dig=cfg.sn.n_dig,
        n_PRN=0,
        n_ICDF=0,
        n_t=cfg.n_t,
        n_S=len(cfg.model.grids[0]),
    )
    report = build_full_rn(cfg).cost()
    prefixes = ("SN[", "LV[", "update[")
    built = sum(v for g, v in report.breakdown.items() if g.startswith(prefixes))
    return {
        "params": params.to_dict(),
        "total": _ratio_entry(built, rn_way_tcount(params), band),
        "builder_qubits": report.qubits,
        "formula_qubits": rn_way_qubits(params),
    }
