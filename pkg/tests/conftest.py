"""Shared desk-scale configurations."""

from __future__ import annotations

import pytest
from hypothesis import settings

from lvqmc.fixedpoint import FxFormat
from lvqmc.icdf import fit_icdf
from lvqmc.lvmodel import LvModel, PayoffSpec
from lvqmc.prn_way import PrnWayConfig
from lvqmc.prng import LcgParams, PermutationSpec
from lvqmc.rn_way import RnWayConfig, SnConfig

settings.register_profile("lvqmc", deadline=None, max_examples=60)
settings.load_profile("lvqmc")

SMALL_LCG = LcgParams(12, 1365, 1013)


def prn_desk_model() -> LvModel:
    """Four quarterly steps, two grid points, piecewise-constant volatility."""
    return LvModel(
        2.0,
        (0.0, 0.25, 0.5, 0.75, 1.0),
        ((1.5, 2.5),) * 4,
        ((0.0, 0.0, 0.0),) * 4,
        ((0.25,) * 3, (0.5,) * 3, (0.25,) * 3, (0.5,) * 3),
    )


def rn_desk_model() -> LvModel:
    """Two steps with continuous, price-dependent volatility."""
    return LvModel(
        2.0,
        (0.0, 0.5, 1.0),
        ((1.5, 2.5),) * 2,
        ((0.1, 0.2, 0.1), (0.2, 0.1, 0.05)),
        ((0.2, 0.05, 0.3), (0.05, 0.2, 0.325)),
    )


@pytest.fixture(scope="session")
def icdf_approx():
    return fit_icdf()


@pytest.fixture(scope="session")
def prn_desk(icdf_approx) -> PrnWayConfig:
    return PrnWayConfig(
        prn_desk_model(),
        PayoffSpec.european_call(1.5, 4),
        SMALL_LCG,
        PermutationSpec.default(12),
        icdf_approx,
        n_samp=3,
        fmt=FxFormat(4, 4),
        n_dig=8,
        seed=77,
    )


@pytest.fixture(scope="session")
def rn_desk() -> RnWayConfig:
    return RnWayConfig(rn_desk_model(), PayoffSpec.european_call(2.0, 2), SnConfig(n_dig=3), FxFormat(6, 10))


# criterion number -> (passed, detail), filled by the acceptance suite
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
