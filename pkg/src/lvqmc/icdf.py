"""Piecewise-cubic inverse normal CDF.

Fitting bisects the domain until every interval's least-squares cubic is
within ``target_err`` of the exact quantile. Each cubic is stored in the
local offset ``v = u - left_breakpoint``. Expanding it in ``u`` instead loses
about four digits to cancellation near ``u = 1``.

:class:`IcdfTable` is the fixed-point image used by the circuit. Its intervals
are aligned with the ``n_dig``-bit input grid and every coefficient is encoded
in the data-path format, so :func:`icdf_fixed` can act as a bit-exact oracle
for the quantum gate.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import expit, logit
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .fixedpoint import FixedPointOverflow, FxFormat, FxNum, mul_raw
from .normal import norm_cdf, norm_ppf

__all__ = [
    "IcdfFitError",
    "IcdfApprox",
    "IcdfTable",
    "fit_icdf",
    "fit_cubic",
    "eval_icdf",
    "quantize_icdf",
    "icdf_fixed",
    "horner_fixed",
    "approximation_error",
    "InverseNormalCDF",
    "DEFAULT_DOMAIN",
]

DEFAULT_DOMAIN = (2.0**-16, 1.0 - 2.0**-16)
_FIT_POINTS = 64
_CHECK_POINTS = 1025


class IcdfFitError(RuntimeError):
    """The requested accuracy needs more intervals than allowed."""


def _cheb_nodes(n: int) -> np.ndarray:
    return 0.5 * (1.0 - np.cos(np.linspace(0.0, np.pi, n)))


def fit_cubic(lo: float, hi: float) -> tuple[np.ndarray, float]:
    """Least-squares cubic for the quantile on ``[lo, hi]``.

    Returns coefficients in ``v = u - lo`` and the max abs error on a dense
    uniform grid. The solve runs in the normalised ``t = v / h`` so the
    Vandermonde system stays well conditioned.
    """
    h = hi - lo
    t = _cheb_nodes(_FIT_POINTS)
    design = np.vander(t, 4, increasing=True)
    coef_t, *_ = np.linalg.lstsq(design, norm_ppf(lo + h * t), rcond=None)
    coef_v = coef_t / h ** np.arange(4)
    td = np.linspace(0.0, 1.0, _CHECK_POINTS)
    approx = np.polynomial.polynomial.polyval(td, coef_t)
    err = float(np.max(np.abs(approx - norm_ppf(lo + h * td))))
    return coef_v, err


def _split_point(lo: float, hi: float) -> float:
    mid = float(expit(0.5 * (logit(lo) + logit(hi))))
    if not lo < mid < hi:
        mid = 0.5 * (lo + hi)
    return mid


@dataclass(frozen=True)
class IcdfApprox:
    """Breakpoints ``x_0 < ... < x_n`` and cubic coefficients per interval.

    ``coeffs`` has ``n + 2`` entries. Entry 0 covers ``u < x_0`` and entry
    ``n + 1`` covers ``u >= x_n``. Both are constants equal to the boundary
    value of the adjacent cubic, so inputs outside the domain clamp. Entry
    ``m`` for ``1 <= m <= n`` is the cubic on ``[x_{m-1}, x_m)`` in powers of
    ``u - x_{m-1}``.
    """

    breakpoints: tuple[float, ...]
    coeffs: tuple[tuple[float, float, float, float], ...]
    target_err: float = 1e-6
    max_err: float = math.nan

    def __post_init__(self) -> None:
        bp = np.asarray(self.breakpoints)
        if len(bp) < 2 or np.any(np.diff(bp) <= 0):
            raise ValueError("breakpoints must be strictly increasing, at least two")
        if not (0.0 < bp[0] and bp[-1] < 1.0):
            raise ValueError("breakpoints must lie inside (0, 1)")
        if len(self.coeffs) != len(bp) + 1:
            raise ValueError("need one coefficient set per interval plus two sentinels")

    @property
    def n_intervals(self) -> int:
        return len(self.breakpoints) - 1

    @property
    def domain(self) -> tuple[float, float]:
        return self.breakpoints[0], self.breakpoints[-1]

    def anchor(self, m: int) -> float:
        """Left breakpoint the cubic of entry ``m`` is expanded about."""
        return self.breakpoints[max(m - 1, 0)] if m <= self.n_intervals else self.breakpoints[-1]

    def interval_index(self, u):
        return np.searchsorted(self.breakpoints, u, side="right")

    def to_dict(self) -> dict:
        return {
            "kind": "piecewise_cubic_inverse_normal_cdf",
            "breakpoints": list(self.breakpoints),
            "coeffs": [list(c) for c in self.coeffs],
            "target_err": self.target_err,
            "max_err": self.max_err,
            "n_intervals": self.n_intervals,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "IcdfApprox":
        return cls(
            breakpoints=tuple(float(x) for x in data["breakpoints"]),
            coeffs=tuple(tuple(float(c) for c in row) for row in data["coeffs"]),
            target_err=float(data.get("target_err", 1e-6)),
            max_err=float(data.get("max_err", math.nan)),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path: str | Path) -> "IcdfApprox":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _assemble(
    pieces: Sequence[tuple[float, float, np.ndarray]], target_err: float, max_err: float
) -> IcdfApprox:
    breakpoints = [pieces[0][0]] + [hi for _, hi, _ in pieces]
    interior = [tuple(float(c) for c in coef) for _, _, coef in pieces]
    first = interior[0][0]
    lo_n, hi_n, coef_n = pieces[-1]
    last = float(np.polynomial.polynomial.polyval(hi_n - lo_n, coef_n))
    coeffs = [(first, 0.0, 0.0, 0.0)] + interior + [(last, 0.0, 0.0, 0.0)]
    return IcdfApprox(tuple(breakpoints), tuple(coeffs), target_err, max_err)


def fit_icdf(
    domain: tuple[float, float] = DEFAULT_DOMAIN,
    target_err: float = 1e-6,
    max_intervals: int = 128,
    strategy: str = "bisect",
) -> IcdfApprox:
    """Adaptive piecewise-cubic fit of the standard normal quantile.

    ``strategy="bisect"`` splits a failing interval at the midpoint in
    log-odds, which tracks how the quantile's curvature grows toward both
    tails. ``strategy="greedy"`` grows each interval as far as the tolerance
    allows and usually needs fewer pieces.
    """
    lo, hi = float(domain[0]), float(domain[1])
    if not 0.0 < lo < hi < 1.0:
        raise ValueError(f"domain must satisfy 0 < u_lo < u_hi < 1, got {domain}")
    if target_err <= 0:
        raise ValueError("target_err must be positive")

    pieces: list[tuple[float, float, np.ndarray]] = []
    if strategy == "bisect":
        stack = [(lo, hi)]
        while stack:
            a, b = stack.pop()
            coef, err = fit_cubic(a, b)
            if err <= target_err:
                pieces.append((a, b, coef))
            else:
                m = _split_point(a, b)
                stack.extend([(m, b), (a, m)])
            if len(pieces) + len(stack) > max_intervals:
                raise IcdfFitError(
                    f"more than {max_intervals} intervals needed for error {target_err}"
                )
        pieces.sort(key=lambda p: p[0])
    elif strategy == "greedy":
        a = lo
        while a < hi:
            coef, err = fit_cubic(a, hi)
            if err <= target_err:
                pieces.append((a, hi, coef))
                break
            good, bad = a, hi
            for _ in range(60):
                mid = _split_point(good, bad) if good > a else 0.5 * (good + bad)
                if fit_cubic(a, mid)[1] <= target_err:
                    good = mid
                else:
                    bad = mid
                if bad - good <= 1e-14 * max(1.0, bad):
                    break
            if good <= a:
                raise IcdfFitError(f"cannot reach error {target_err} near u={a}")
            pieces.append((a, good, fit_cubic(a, good)[0]))
            a = good
            if len(pieces) > max_intervals:
                raise IcdfFitError(
                    f"more than {max_intervals} intervals needed for error {target_err}"
                )
    else:
        raise ValueError(f"unknown strategy {strategy!r}")

    max_err = max(fit_cubic(a, b)[1] for a, b, _ in pieces)
    return _assemble(pieces, target_err, max_err)


def eval_icdf(approx: IcdfApprox, u):
    """Evaluate the piecewise cubic by Horner's rule at ``u`` (scalar or array)."""
    scalar = np.isscalar(u)
    uu = np.atleast_1d(np.asarray(u, dtype=float))
    m = approx.interval_index(uu)
    bp = np.asarray(approx.breakpoints)
    anchors = bp[np.clip(m - 1, 0, len(bp) - 1)]
    coef = np.asarray(approx.coeffs)[m]
    v = uu - anchors
    out = ((coef[:, 3] * v + coef[:, 2]) * v + coef[:, 1]) * v + coef[:, 0]
    return float(out[0]) if scalar else out


def approximation_error(approx: IcdfApprox, per_interval: int = _CHECK_POINTS) -> float:
    """Max abs error against the exact quantile, sampled densely in every interval."""
    bp = np.asarray(approx.breakpoints)
    grids = [np.linspace(a, b, per_interval) for a, b in zip(bp[:-1], bp[1:])]
    u = np.concatenate(grids)
    return float(np.max(np.abs(eval_icdf(approx, u) - norm_ppf(u))))


# Fixed-point table --------------------------------------------------------


def _shift_poly(coef: Sequence[float], d: float) -> list[float]:
    """Coefficients of ``p(v + d)`` given those of ``p(v)``."""
    out = [0.0] * 4
    for i, c in enumerate(coef):
        for j in range(i + 1):
            out[j] += c * math.comb(i, j) * d ** (i - j)
    return out


def _wrap(x, width: int, check: bool):
    half = 1 << (width - 1)
    if check and np.any((x < -half) | (x >= half)):
        raise FixedPointOverflow(f"value outside {width}-bit range")
    return ((x + half) & ((1 << width) - 1)) - half


def horner_fixed(
    v,
    coeffs_raw: Sequence,
    n_dig: int,
    fmt: FxFormat,
    coef_fmt: FxFormat | None = None,
    check: bool = False,
):
    """Fixed-point Horner with the input offset ``v`` as multiplier operand.

    ``v`` is an unsigned ``n_dig``-bit integer with ``n_dig`` fractional bits.
    Coefficients and the two intermediates live in ``coef_fmt``, which shares
    the fractional bits of ``fmt`` but may carry more integer bits. The result
    is written in ``fmt``. Every product goes through :func:`mul_raw` and every
    register value wraps to its width, or raises when ``check`` is set.
    """
    coef_fmt = coef_fmt or fmt
    if coef_fmt.n_frac != fmt.n_frac:
        raise ValueError("coefficient format must share the fractional bits of fmt")
    c0, c1, c2, c3 = coeffs_raw
    wide, narrow = coef_fmt.n, fmt.n
    h1 = _wrap(_wrap(mul_raw(v, c3, n_dig, n_dig, x_signed=False), wide, check) + c2, wide, check)
    h2 = _wrap(_wrap(mul_raw(v, h1, n_dig, n_dig, x_signed=False), wide, check) + c1, wide, check)
    out = _wrap(mul_raw(v, h2, n_dig, n_dig, x_signed=False), narrow, check)
    return _wrap(out + c0, narrow, check)


@dataclass(frozen=True)
class IcdfTable:
    """Grid-aligned fixed-point version of an :class:`IcdfApprox`.

    Interval ``r`` covers input integers ``starts[r] <= U < starts[r + 1]`` of
    the ``n_dig``-bit uniform grid. Its coefficients are raw ``coef_fmt``
    values of the cubic expanded about ``starts[r] / 2**n_dig``.
    """

    n_dig: int
    fmt: FxFormat
    coef_fmt: FxFormat
    starts: tuple[int, ...]
    coeffs: tuple[tuple[int, int, int, int], ...]

    def __post_init__(self) -> None:
        if not self.starts or self.starts[0] != 0:
            raise ValueError("first interval must start at 0")
        if any(b <= a for a, b in zip(self.starts, self.starts[1:])):
            raise ValueError("interval starts must increase")
        if self.starts[-1] >= 1 << self.n_dig:
            raise ValueError("interval start beyond the input grid")
        if len(self.coeffs) != len(self.starts):
            raise ValueError("one coefficient set per interval")
        if self.coef_fmt.n_frac != self.fmt.n_frac or self.coef_fmt.n_int < self.fmt.n_int:
            raise ValueError("coefficient format must extend fmt by integer bits only")

    @property
    def n_intervals(self) -> int:
        return len(self.starts)

    @property
    def thresholds(self) -> tuple[int, ...]:
        """Comparator constants: the starts of intervals ``1..R-1``."""
        return self.starts[1:]

    def interval_of(self, u_raw):
        return np.searchsorted(self.starts, u_raw, side="right") - 1

    def evaluate_raw(self, u_raw):
        """Raw output for input integer(s) ``u_raw`` in ``[0, 2**n_dig)``."""
        scalar = np.isscalar(u_raw)
        U = np.atleast_1d(np.asarray(u_raw, dtype=np.int64))
        if np.any((U < 0) | (U >= 1 << self.n_dig)):
            raise ValueError(f"input outside [0, 2**{self.n_dig})")
        r = self.interval_of(U)
        starts = np.asarray(self.starts, dtype=np.int64)[r]
        coef = np.asarray(self.coeffs, dtype=np.int64)[r]
        out = horner_fixed(U - starts, tuple(coef.T), self.n_dig, self.fmt, self.coef_fmt)
        return int(out[0]) if scalar else out

    def evaluate(self, u: FxNum) -> FxNum:
        if u.fmt.n_frac != self.n_dig:
            raise ValueError(f"input needs {self.n_dig} fractional bits, got {u.fmt.n_frac}")
        return FxNum(self.evaluate_raw(u.raw), self.fmt)

    def all_outputs(self) -> np.ndarray:
        return self.evaluate_raw(np.arange(1 << self.n_dig))

    def output_range(self) -> tuple[float, float]:
        out = self.all_outputs()
        return float(self.fmt.decode(int(out.min()))), float(self.fmt.decode(int(out.max())))


def _encode_run(
    approx: IcdfApprox,
    m: int,
    first: int,
    last: int,
    n_dig: int,
    fmt: FxFormat,
    coef_fmt: FxFormat,
) -> tuple[int, int, int, int] | None:
    u0 = first / (1 << n_dig)
    base = approx.coeffs[m]
    shifted = _shift_poly(base, u0 - approx.anchor(m))
    if first == last:
        shifted = [shifted[0], 0.0, 0.0, 0.0]
    try:
        raw = tuple(coef_fmt.encode_raw(c) for c in shifted)
        v = np.arange(last - first + 1, dtype=np.int64)
        horner_fixed(v, raw, n_dig, fmt, coef_fmt, check=True)
    except FixedPointOverflow:
        if first == last:
            raise FixedPointOverflow(
                f"quantile value {shifted[0]:.6g} at u={u0} is not representable in {fmt}"
            ) from None
        return None
    return raw  # type: ignore[return-value]


def _grid_runs(approx: IcdfApprox, n_dig: int) -> list[tuple[int, int, int]]:
    m_of = approx.interval_index(np.arange(1 << n_dig) / (1 << n_dig))
    edges = np.flatnonzero(np.diff(m_of)) + 1
    firsts = np.concatenate(([0], edges))
    lasts = np.concatenate((edges - 1, [len(m_of) - 1]))
    return [(int(m_of[f]), int(f), int(l)) for f, l in zip(firsts, lasts)]


def _build_table(
    approx: IcdfApprox, n_dig: int, fmt: FxFormat, coef_fmt: FxFormat
) -> IcdfTable:
    starts: list[int] = []
    coeffs: list[tuple[int, int, int, int]] = []
    pending = list(reversed(_grid_runs(approx, n_dig)))
    while pending:
        m, first, last = pending.pop()
        raw = _encode_run(approx, m, first, last, n_dig, fmt, coef_fmt)
        if raw is None:
            mid = (first + last + 1) // 2
            pending.extend([(m, mid, last), (m, first, mid - 1)])
            continue
        starts.append(first)
        coeffs.append(raw)
    return IcdfTable(n_dig, fmt, coef_fmt, tuple(starts), tuple(coeffs))


@lru_cache(maxsize=32)
def quantize_icdf(
    approx: IcdfApprox, n_dig: int, fmt: FxFormat, coef_int_bits: int | None = None
) -> IcdfTable:
    """Align ``approx`` to the ``n_dig``-bit input grid and encode it.

    Grid points falling into the same fitted interval form a run, and each run
    is re-expanded about its first point. Coefficients use ``fmt``'s fractional
    bits with ``coef_int_bits`` integer bits. By default the width is sized
    from the largest coefficient or Horner intermediate over all runs. A run that still overflows is
    halved until it fits; a single point keeps only its constant term.
    """
    if not 1 <= n_dig <= 30:
        raise ValueError("n_dig must lie in 1..30")
    if coef_int_bits is not None:
        return _build_table(approx, n_dig, fmt, FxFormat(coef_int_bits, fmt.n_frac))
    bound = 0.0
    for m, first, last in _grid_runs(approx, n_dig):
        c0, c1, c2, c3 = _shift_poly(approx.coeffs[m], first / (1 << n_dig) - approx.anchor(m))
        v = np.arange(last - first + 1) / (1 << n_dig)
        h1 = c3 * v + c2
        h2 = h1 * v + c1
        bound = max(bound, abs(c0), float(np.max(np.abs(h1))), float(np.max(np.abs(h2))))
    # one spare bit absorbs truncation drift in the intermediates
    n_int = max(fmt.n_int, math.ceil(math.log2(bound + 1.0)) + 2)
    n_int = min(n_int, 64 - fmt.n_frac)
    return _build_table(approx, n_dig, fmt, FxFormat(n_int, fmt.n_frac))


def icdf_fixed(approx: IcdfApprox | IcdfTable, u: FxNum, fmt: FxFormat | None = None) -> FxNum:
    """Fixed-point quantile of ``u``, bit-identical to the circuit's gate.

    ``u`` carries ``n_dig`` fractional bits. Passing an :class:`IcdfApprox`
    quantizes it for ``(n_dig, fmt)`` first.
    """
    if isinstance(approx, IcdfApprox):
        if fmt is None:
            raise ValueError("fmt is required when passing an IcdfApprox")
        table = quantize_icdf(approx, u.fmt.n_frac, fmt)
    else:
        table = approx
        if fmt is not None and fmt != table.fmt:
            raise ValueError(f"table format {table.fmt} differs from requested {fmt}")
    return table.evaluate(u)


class InverseNormalCDF(TransformerMixin, BaseEstimator):
    """Transformer mapping probabilities to standard normal quantiles.

    ``fit`` builds the piecewise-cubic approximation and ignores its data
    arguments. ``transform`` evaluates it elementwise. ``inverse_transform``
    applies the exact normal CDF.
    """

    def __init__(
        self,
        domain: tuple[float, float] = DEFAULT_DOMAIN,
        target_err: float = 1e-6,
        max_intervals: int = 128,
        strategy: str = "bisect",
    ):
        self.domain = domain
        self.target_err = target_err
        self.max_intervals = max_intervals
        self.strategy = strategy

    def fit(self, X=None, y=None):
        self.approx_ = fit_icdf(self.domain, self.target_err, self.max_intervals, self.strategy)
        self.n_intervals_ = self.approx_.n_intervals
        self.max_err_ = self.approx_.max_err
        return self

    def transform(self, X):
        check_is_fitted(self, "approx_")
        X = check_array(X, dtype=np.float64)
        if np.any((X < 0.0) | (X > 1.0)):
            raise ValueError("probabilities must lie in [0, 1]")
        return eval_icdf(self.approx_, X.ravel()).reshape(X.shape)

    def inverse_transform(self, X):
        X = check_array(X, dtype=np.float64)
        return norm_cdf(X)

    def table(self, n_dig: int, fmt: FxFormat) -> IcdfTable:
        check_is_fitted(self, "approx_")
        return quantize_icdf(self.approx_, n_dig, fmt)

