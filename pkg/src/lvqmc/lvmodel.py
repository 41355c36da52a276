"""Local-volatility model with piecewise-linear volatility and its classical pricers.

On step ``j`` (from ``t_{j-1}`` to ``t_j``) the volatility is
``sigma = a_{j,k} S + b_{j,k}`` on the price interval ``[s_{j,k-1}, s_{j,k})``
with ``s_{j,0} = -inf`` and ``s_{j,n_S+1} = +inf``. An Euler step moves
``S -> S + sigma sqrt(dt_j) w``.

The fixed-point engine encodes the folded constants ``a sqrt(dt)`` and
``b sqrt(dt)`` once, in :class:`FixedStepTables`. The circuit builders read the
same tables, which makes classical and simulated paths identical bit for bit.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Callable, Literal, Sequence

import numpy as np

from .fixedpoint import FixedPointOverflow, FxFormat, FxNum, div_raw, mul_raw, wrap_signed
from .icdf import IcdfApprox, eval_icdf, quantize_icdf
from .normal import interval_mass, norm_cdf
from .prng import PrnStream

__all__ = [
    "LvModel",
    "PayoffSpec",
    "SnGrid",
    "PriceEstimate",
    "MonotonicityReport",
    "MonotonicityError",
    "EnumerationBudgetExceeded",
    "FixedStepTables",
    "local_vol",
    "euler_step",
    "inverse_euler_step",
    "monotonicity_check",
    "payoff_eval",
    "payoff_fixed",
    "price_sampled",
    "price_enumerated",
    "bs_call_price",
    "implied_vol",
    "dupire_local_vol",
    "sn_grid",
    "sn_value_raw",
]

UpdateForm = Literal["self_update", "accumulate"]


class MonotonicityError(ValueError):
    """A step's price map is not strictly increasing, so it cannot be reversed."""


class EnumerationBudgetExceeded(RuntimeError):
    """Too many random-number patterns to enumerate."""


@dataclass(frozen=True)
class LvModel:
    """Time grid, per-step price grids and volatility coefficients.

    ``grids[j-1]`` holds ``s_{j,1..n_S}``, and ``a[j-1]``/``b[j-1]`` hold the
    ``n_S + 1`` interval coefficients of step ``j``.
    """

    s0: float
    times: tuple[float, ...]
    grids: tuple[tuple[float, ...], ...]
    a: tuple[tuple[float, ...], ...]
    b: tuple[tuple[float, ...], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))
        object.__setattr__(self, "grids", tuple(tuple(map(float, g)) for g in self.grids))
        object.__setattr__(self, "a", tuple(tuple(map(float, r)) for r in self.a))
        object.__setattr__(self, "b", tuple(tuple(map(float, r)) for r in self.b))
        if len(self.times) < 2 or self.times[0] != 0.0:
            raise ValueError("times must start at 0 and contain at least one step")
        if any(t1 <= t0 for t0, t1 in zip(self.times, self.times[1:])):
            raise ValueError("times must be strictly increasing")
        n_t = self.n_t
        if not (len(self.grids) == len(self.a) == len(self.b) == n_t):
            raise ValueError(f"need grids and coefficients for each of the {n_t} steps")
        for j, (g, ra, rb) in enumerate(zip(self.grids, self.a, self.b), start=1):
            if any(y <= x for x, y in zip(g, g[1:])):
                raise ValueError(f"price grid of step {j} is not strictly increasing")
            if len(ra) != len(g) + 1 or len(rb) != len(g) + 1:
                raise ValueError(f"step {j} needs {len(g) + 1} slope and intercept values")
        problems = self.sigma_violations()
        if problems:
            raise ValueError("volatility not positive: " + "; ".join(problems))

    @property
    def n_t(self) -> int:
        return len(self.times) - 1

    @property
    def n_s(self) -> int:
        return max(len(g) for g in self.grids)

    def dt(self, step: int) -> float:
        return self.times[step] - self.times[step - 1]

    def interval(self, step: int, S: float) -> int:
        """0-based interval index: number of grid points at or below ``S``."""
        return bisect.bisect_right(self.grids[step - 1], S)

    def coefficients(self, step: int, k: int) -> tuple[float, float]:
        return self.a[step - 1][k], self.b[step - 1][k]

    def sigma_violations(self) -> list[str]:
        """Places where ``sigma`` is not positive for positive prices.

        Each interval is clipped to ``S >= 0``. A strictly positive value is
        required at interior grid points. At ``S = 0`` zero is allowed, which
        admits the proportional-volatility case. An unbounded interval with
        negative slope always fails.
        """
        out = []
        for j, (g, ra, rb) in enumerate(zip(self.grids, self.a, self.b), start=1):
            edges = (-math.inf,) + g + (math.inf,)
            for k, (ak, bk) in enumerate(zip(ra, rb)):
                lo, hi = max(edges[k], 0.0), edges[k + 1]
                if hi <= 0.0:
                    continue
                if ak >= 0:
                    val = ak * lo + bk
                    ok = val >= 0 if lo == 0.0 else val > 0
                    where = lo
                elif math.isinf(hi):
                    ok, val, where = False, -math.inf, hi
                else:
                    val = ak * hi + bk
                    ok = val > 0
                    where = hi
                if not ok:
                    out.append(f"step {j} interval {k + 1}: sigma({where}) = {val}")
        return out

    @classmethod
    def constant(
        cls, s0: float, sigma: float, maturity: float, n_t: int, proportional: bool = False
    ) -> "LvModel":
        """Single-interval model on an even time grid.

        With ``proportional`` the volatility is ``sigma * S``, which is the
        Black-Scholes model. Otherwise it is the constant ``sigma``.
        """
        times = tuple(maturity * i / n_t for i in range(n_t + 1))
        a = (sigma,) if proportional else (0.0,)
        b = (0.0,) if proportional else (sigma,)
        return cls(s0, times, ((),) * n_t, (a,) * n_t, (b,) * n_t)

    def to_dict(self) -> dict:
        return {
            "s0": self.s0,
            "times": list(self.times),
            "grids": [list(g) for g in self.grids],
            "a": [list(r) for r in self.a],
            "b": [list(r) for r in self.b],
        }


def _opt(x: float | None, default: float) -> float:
    return default if x is None else float(x)


@dataclass(frozen=True)
class PayoffSpec:
    """Per-date capped and floored linear payoff ``min(max(a S + b, f), c)``."""

    a: tuple[float, ...]
    b: tuple[float, ...]
    cap: tuple[float, ...]
    floor: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "a", tuple(map(float, self.a)))
        object.__setattr__(self, "b", tuple(map(float, self.b)))
        object.__setattr__(self, "cap", tuple(_opt(c, math.inf) for c in self.cap))
        object.__setattr__(self, "floor", tuple(_opt(f, -math.inf) for f in self.floor))
        if not len(self.a) == len(self.b) == len(self.cap) == len(self.floor):
            raise ValueError("payoff fields need one entry per payment date")
        for i, (f, c) in enumerate(zip(self.floor, self.cap), start=1):
            if f > c:
                raise ValueError(f"date {i}: floor {f} exceeds cap {c}")

    @property
    def n_dates(self) -> int:
        return len(self.a)

    @classmethod
    def zero(cls, n_t: int) -> "PayoffSpec":
        return cls((0.0,) * n_t, (0.0,) * n_t, (0.0,) * n_t, (0.0,) * n_t)

    @classmethod
    def european_call(cls, strike: float, n_t: int) -> "PayoffSpec":
        """Pays ``max(S - K, 0)`` at the last date only."""
        zeros = (0.0,) * (n_t - 1)
        return cls(zeros + (1.0,), zeros + (-strike,), zeros + (math.inf,), zeros + (0.0,))

    def to_dict(self) -> dict:
        def enc(x: float) -> float | None:
            return None if math.isinf(x) else x

        return {
            "a": list(self.a),
            "b": list(self.b),
            "cap": [enc(c) for c in self.cap],
            "floor": [enc(f) for f in self.floor],
        }


@dataclass(frozen=True)
class SnGrid:
    """Equally spaced truncated standard-normal grid with interval masses."""

    x_lo: float
    x_hi: float
    probabilities: tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.x_hi > self.x_lo:
            raise ValueError("x_hi must exceed x_lo")
        if len(self.probabilities) < 1:
            raise ValueError("need at least one point")

    @property
    def n_points(self) -> int:
        return len(self.probabilities)

    @property
    def step(self) -> float:
        return (self.x_hi - self.x_lo) / self.n_points

    @property
    def points(self) -> np.ndarray:
        """Left endpoints ``x_{SN,i}``, the value identified with index ``i``."""
        return self.x_lo + self.step * np.arange(self.n_points)

    def normalized(self) -> "SnGrid":
        total = math.fsum(self.probabilities)
        return SnGrid(self.x_lo, self.x_hi, tuple(p / total for p in self.probabilities))


def sn_grid(x_lo: float, x_hi: float, n_points: int) -> SnGrid:
    """Masses of ``N(0,1)`` over ``n_points`` equal cells of ``[x_lo, x_hi]``."""
    if n_points < 1:
        raise ValueError("n_points must be positive")
    if not x_hi > x_lo:
        raise ValueError("x_hi must exceed x_lo")
    edges = [x_lo + (x_hi - x_lo) * i / n_points for i in range(n_points + 1)]
    return SnGrid(float(x_lo), float(x_hi), tuple(interval_mass(a, b) for a, b in zip(edges, edges[1:])))


# Exact dynamics ------------------------------------------------------------


def local_vol(model: LvModel, step: int, S: float) -> float:
    if not 1 <= step <= model.n_t:
        raise IndexError(f"step must lie in 1..{model.n_t}")
    a, b = model.coefficients(step, model.interval(step, S))
    return a * S + b


@dataclass(frozen=True)
class FixedStepTables:
    """Fixed-point constants driving step updates and payoffs.

    Per step: raw grid thresholds, and raw ``a sqrt(dt)`` and ``b sqrt(dt)``
    per interval. Per date: raw payoff slope, intercept, floor and cap
    (``None`` when unbounded).
    """

    fmt: FxFormat
    thresholds: tuple[tuple[int, ...], ...]
    a_raw: tuple[tuple[int, ...], ...]
    b_raw: tuple[tuple[int, ...], ...]
    pay_a: tuple[int, ...]
    pay_b: tuple[int, ...]
    pay_floor: tuple[int | None, ...]
    pay_cap: tuple[int | None, ...]
    s0_raw: int
    one_raw: int
    encoding_loss: float = 0.0

    @classmethod
    def build(cls, model: LvModel, payoffs: PayoffSpec | None, fmt: FxFormat) -> "FixedStepTables":
        loss = 0.0

        def enc(x: float) -> int:
            nonlocal loss
            raw = fmt.encode_raw(x)
            loss = max(loss, abs(x - raw * fmt.resolution))
            return raw

        thresholds, a_raw, b_raw = [], [], []
        for j in range(1, model.n_t + 1):
            root = math.sqrt(model.dt(j))
            thresholds.append(tuple(_encode_threshold(s, fmt) for s in model.grids[j - 1]))
            a_raw.append(tuple(enc(a * root) for a in model.a[j - 1]))
            b_raw.append(tuple(enc(b * root) for b in model.b[j - 1]))
        if payoffs is None:
            payoffs = PayoffSpec.zero(model.n_t)
        if payoffs.n_dates != model.n_t:
            raise ValueError(f"payoff has {payoffs.n_dates} dates, model has {model.n_t} steps")
        pay_floor = tuple(None if math.isinf(f) else enc(f) for f in payoffs.floor)
        pay_cap = tuple(None if math.isinf(c) else enc(c) for c in payoffs.cap)
        return cls(
            fmt=fmt,
            thresholds=tuple(thresholds),
            a_raw=tuple(a_raw),
            b_raw=tuple(b_raw),
            pay_a=tuple(enc(x) for x in payoffs.a),
            pay_b=tuple(enc(x) for x in payoffs.b),
            pay_floor=pay_floor,
            pay_cap=pay_cap,
            s0_raw=enc(model.s0),
            one_raw=fmt.encode_raw(1),
            encoding_loss=loss,
        )

    def interval(self, step: int, s_raw: int) -> int:
        return bisect.bisect_right(self.thresholds[step - 1], s_raw)

    def step_raw(self, step: int, s_raw: int, w_raw: int, form: UpdateForm = "self_update") -> int:
        """One fixed-point Euler step on raw values. Raises on overflow."""
        k = self.interval(step, s_raw)
        return fixed_update(
            s_raw, w_raw, self.a_raw[step - 1][k], self.b_raw[step - 1][k], self.fmt, form
        )

    def payoff_raw(self, date: int, s_raw: int) -> int:
        return payoff_fixed(
            s_raw,
            self.pay_a[date - 1],
            self.pay_b[date - 1],
            self.pay_floor[date - 1],
            self.pay_cap[date - 1],
            self.fmt,
        )


def _encode_threshold(s: float, fmt: FxFormat) -> int:
    """Smallest raw value ``r`` with ``r * ulp >= s``, clamped to the format.

    With this rounding ``S_raw >= r`` holds exactly when the decoded price is
    at least ``s``.
    """
    raw = math.ceil(s * (1 << fmt.n_frac))
    return min(max(raw, fmt.min_raw), fmt.max_raw + 1)


def _checked(raw: int, fmt: FxFormat, what: str) -> int:
    if not fmt.fits(raw):
        raise FixedPointOverflow(f"{what} overflows format {fmt}")
    return raw


def fixed_update(
    s_raw: int, w_raw: int, a_raw: int, b_raw: int, fmt: FxFormat, form: UpdateForm
) -> int:
    """Euler step on raw fixed-point values with folded constants.

    ``self_update`` multiplies ``S`` in place by ``1 + a'w`` and then adds
    ``b'w``. ``accumulate`` adds ``a' (S w) + b'w`` to a copy of ``S``. The two
    forms truncate at different points and so differ in the last bits.
    """
    n, nf = fmt.n, fmt.n_frac

    def mul(x: int, y: int, what: str) -> int:
        return _checked(mul_raw(x, y, nf, n), fmt, what)

    bw = mul(b_raw, w_raw, "b'w")
    if form == "self_update":
        factor = _checked((1 << nf) + mul(a_raw, w_raw, "a'w"), fmt, "1 + a'w")
        scaled = mul(s_raw, factor, "S (1 + a'w)")
        return _checked(scaled + bw, fmt, "updated price")
    if form == "accumulate":
        sw = mul(s_raw, w_raw, "S w")
        return _checked(s_raw + mul(a_raw, sw, "a'(S w)") + bw, fmt, "updated price")
    raise ValueError(f"unknown update form {form!r}")


def euler_step(
    model: LvModel,
    step: int,
    S: float | FxNum,
    w: float | FxNum,
    fmt: FxFormat | None = None,
    form: UpdateForm = "self_update",
    tables: FixedStepTables | None = None,
) -> float | FxNum:
    """``S + sigma(t, S) sqrt(dt) w``; exact when ``fmt`` is None."""
    if fmt is None and tables is None:
        return float(S) + local_vol(model, step, float(S)) * math.sqrt(model.dt(step)) * float(w)
    tables = tables or FixedStepTables.build(model, None, fmt)  # type: ignore[arg-type]
    fmt = tables.fmt
    s_raw = S.raw if isinstance(S, FxNum) else fmt.encode_raw(S)
    w_raw = w.raw if isinstance(w, FxNum) else fmt.encode_raw(w)
    return FxNum(tables.step_raw(step, s_raw, w_raw, form), fmt)


def inverse_euler_step(
    model: LvModel,
    step: int,
    S_next: float | FxNum,
    w: float | FxNum,
    fmt: FxFormat | None = None,
    tables: FixedStepTables | None = None,
) -> float | FxNum:
    """Recover ``S`` from ``S' = euler_step(S, w)``.

    Each interval's linear map is inverted in turn and the preimage that lands
    inside its own interval is returned. Fixed-point mode inverts the
    ``self_update`` form by restoring division.
    """
    if fmt is None and tables is None:
        root = math.sqrt(model.dt(step))
        found = []
        for k in range(len(model.grids[step - 1]) + 1):
            a, b = model.coefficients(step, k)
            den = 1.0 + a * root * float(w)
            if den <= 0.0:
                raise MonotonicityError(
                    f"step {step} interval {k + 1}: 1 + a sqrt(dt) w = {den} <= 0"
                )
            S = (float(S_next) - b * root * float(w)) / den
            if model.interval(step, S) == k:
                found.append(S)
        if len(found) != 1:
            raise MonotonicityError(f"step {step}: {len(found)} preimages of {float(S_next)}")
        return found[0]

    tables = tables or FixedStepTables.build(model, None, fmt)  # type: ignore[arg-type]
    fmt = tables.fmt
    t_raw = S_next.raw if isinstance(S_next, FxNum) else fmt.encode_raw(S_next)
    w_raw = w.raw if isinstance(w, FxNum) else fmt.encode_raw(w)
    found = []
    for k in range(len(tables.thresholds[step - 1]) + 1):
        a_raw, b_raw = tables.a_raw[step - 1][k], tables.b_raw[step - 1][k]
        factor = (1 << fmt.n_frac) + mul_raw(a_raw, w_raw, fmt.n_frac, fmt.n)
        if factor <= 0:
            raise MonotonicityError(f"step {step} interval {k + 1}: non-positive factor")
        z = t_raw - mul_raw(b_raw, w_raw, fmt.n_frac, fmt.n)
        res = div_raw(z, factor, fmt.n_frac, fmt.n)
        if res.exact and tables.interval(step, int(res.quotient)) == k:
            found.append(int(res.quotient))
    if len(found) != 1:
        raise MonotonicityError(f"step {step}: {len(found)} fixed-point preimages")
    return FxNum(found[0], fmt)


@dataclass(frozen=True)
class MonotonicityReport:
    passed: bool
    violations: tuple[str, ...] = ()

    def __bool__(self) -> bool:
        return self.passed


def monotonicity_check(
    model: LvModel, w_min: float, w_max: float, rel_tol: float = 1e-9
) -> MonotonicityReport:
    """Conditions for every step map to be strictly increasing in ``S``.

    ``1 + a sqrt(dt) w`` must be positive at both draw bounds on every
    interval, and ``sigma`` must be continuous at every grid point.
    """
    if not w_min < 0.0 < w_max:
        raise ValueError("need w_min < 0 < w_max")
    out = []
    for j in range(1, model.n_t + 1):
        root = math.sqrt(model.dt(j))
        for k, a in enumerate(model.a[j - 1]):
            for w in (w_min, w_max):
                d = 1.0 + a * root * w
                if d <= 0.0:
                    out.append(
                        f"step {j} interval {k + 1}: 1 + a sqrt(dt) w = {d:.6g} <= 0 at w = {w}"
                    )
        for k, s in enumerate(model.grids[j - 1]):
            a0, b0 = model.coefficients(j, k)
            a1, b1 = model.coefficients(j, k + 1)
            left, right = a0 * s + b0, a1 * s + b1
            if abs(left - right) > rel_tol * max(1.0, abs(left), abs(right)):
                out.append(
                    f"step {j}: sigma discontinuous at s = {s} ({left:.6g} vs {right:.6g})"
                )
    return MonotonicityReport(not out, tuple(out))


# Payoffs -------------------------------------------------------------------


def payoff_eval(spec: PayoffSpec, date: int, S: float) -> float:
    i = date - 1
    return min(max(spec.a[i] * S + spec.b[i], spec.floor[i]), spec.cap[i])


def payoff_fixed(
    s_raw: int, a_raw: int, b_raw: int, floor_raw: int | None, cap_raw: int | None, fmt: FxFormat
) -> int:
    """Clamped linear payoff on raw values; the slope is the multiplier operand."""
    lin = _checked(mul_raw(a_raw, s_raw, fmt.n_frac, fmt.n) + b_raw, fmt, "payoff")
    if floor_raw is not None:
        lin = max(lin, floor_raw)
    if cap_raw is not None:
        lin = min(lin, cap_raw)
    return lin


# Pricers -------------------------------------------------------------------


@dataclass(frozen=True)
class PriceEstimate:
    price: float
    std_error: float
    n_paths: int
    path_values: np.ndarray | None = field(default=None, repr=False, compare=False)


def _fixed_paths(
    model: LvModel,
    payoffs: PayoffSpec,
    stream: PrnStream,
    table,
    tables: FixedStepTables,
    n_paths: int,
) -> tuple[np.ndarray, list[list[int]]]:
    values = np.empty(n_paths)
    trajectories = []
    for i in range(n_paths):
        s_raw = tables.s0_raw
        total = 0
        traj = [s_raw]
        for j, u in enumerate(stream.path_indices(i, model.n_t), start=1):
            w_raw = table.evaluate_raw(u)
            s_raw = tables.step_raw(j, s_raw, w_raw, "self_update")
            total += tables.payoff_raw(j, s_raw)
            traj.append(s_raw)
        values[i] = total * tables.fmt.resolution
        trajectories.append(traj)
    return values, trajectories


def fixed_point_paths(
    model: LvModel,
    payoffs: PayoffSpec,
    stream: PrnStream,
    icdf: IcdfApprox,
    n_paths: int,
    fmt: FxFormat,
) -> tuple[np.ndarray, list[list[int]]]:
    """Per-path payoff sums and raw price trajectories in fixed point."""
    tables = FixedStepTables.build(model, payoffs, fmt)
    table = quantize_icdf(icdf, stream.n_dig, fmt)
    return _fixed_paths(model, payoffs, stream, table, tables, n_paths)


def price_sampled(
    model: LvModel,
    payoffs: PayoffSpec,
    stream: PrnStream,
    icdf: IcdfApprox,
    n_paths: int,
    fmt: FxFormat | None = None,
) -> PriceEstimate:
    """Average over paths of the summed payoffs.

    Path ``i`` draws its uniforms from elements ``i n_t + 1 .. i n_t + n_t``
    of the stream. Floating-point mode is vectorised over paths. Fixed-point
    mode follows the circuit's arithmetic exactly.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be positive")
    if payoffs.n_dates != model.n_t:
        raise ValueError("payoff dates must match model steps")
    if fmt is not None:
        values, _ = fixed_point_paths(model, payoffs, stream, icdf, n_paths, fmt)
    else:
        idx = stream.index_matrix(n_paths, model.n_t)
        w = eval_icdf(icdf, idx.ravel() / float(1 << stream.n_dig)).reshape(idx.shape)
        S = np.full(n_paths, float(model.s0))
        values = np.zeros(n_paths)
        for j in range(1, model.n_t + 1):
            grid = np.asarray(model.grids[j - 1])
            k = np.searchsorted(grid, S, side="right")
            a = np.asarray(model.a[j - 1])[k]
            b = np.asarray(model.b[j - 1])[k]
            S = S + (a * S + b) * math.sqrt(model.dt(j)) * w[:, j - 1]
            i = j - 1
            values += np.minimum(np.maximum(payoffs.a[i] * S + payoffs.b[i], payoffs.floor[i]), payoffs.cap[i])
    price = float(np.mean(values))
    se = float(np.std(values, ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else math.nan
    return PriceEstimate(price, se, n_paths, values)


def sn_value_raw(index: int, grid: SnGrid, fmt: FxFormat) -> int:
    """Fixed-point draw for grid index ``i``: ``enc(x_lo) + i enc(step)``, wrapped."""
    return wrap_signed(fmt.encode_raw(grid.x_lo) + index * fmt.encode_raw(grid.step), fmt.n)


def price_enumerated(
    model: LvModel,
    payoffs: PayoffSpec,
    grid: SnGrid,
    fmt: FxFormat | None = None,
    form: UpdateForm = "accumulate",
    max_patterns: int = 1 << 22,
) -> float:
    """Probability-weighted payoff over every pattern of grid draws.

    Each draw takes the left endpoint of its cell. Fixed-point mode uses the
    ``accumulate`` update by default, which is what the register-per-draw
    circuit computes.
    """
    n_pat = grid.n_points**model.n_t
    if n_pat > max_patterns:
        raise EnumerationBudgetExceeded(
            f"{grid.n_points}^{model.n_t} = {n_pat} patterns exceed the budget {max_patterns}"
        )
    probs = grid.probabilities
    if fmt is None:
        draws = grid.points

        def walk(j: int, S: float) -> float:
            if j > model.n_t:
                return 0.0
            acc = 0.0
            for i, w in enumerate(draws):
                S1 = float(euler_step(model, j, S, float(w)))
                acc += probs[i] * (payoff_eval(payoffs, j, S1) + walk(j + 1, S1))
            return acc

        return walk(1, float(model.s0))

    tables = FixedStepTables.build(model, payoffs, fmt)
    w_raws = [sn_value_raw(i, grid, fmt) for i in range(grid.n_points)]

    def walk_fixed(j: int, s_raw: int) -> float:
        if j > model.n_t:
            return 0.0
        acc = 0.0
        for i, w_raw in enumerate(w_raws):
            s1 = tables.step_raw(j, s_raw, w_raw, form)
            pay = tables.payoff_raw(j, s1) * fmt.resolution
            acc += probs[i] * (pay + walk_fixed(j + 1, s1))
        return acc

    return walk_fixed(1, tables.s0_raw)


# Black-Scholes utilities ---------------------------------------------------


def bs_call_price(T: float, K: float, S0: float, sigma: float) -> float:
    """Zero-rate Black-Scholes call price."""
    if T <= 0 or sigma <= 0:
        raise ValueError("T and sigma must be positive")
    if K < 0:
        raise ValueError("strike must be non-negative")
    if K == 0:
        return float(S0)
    vol = sigma * math.sqrt(T)
    d1 = (math.log(S0 / K) + 0.5 * vol * vol) / vol
    d2 = d1 - vol
    return S0 * norm_cdf(d1) - K * norm_cdf(d2)


def implied_vol(
    T: float, K: float, S0: float, price: float, lo: float = 1e-6, hi: float = 10.0, tol: float = 1e-10
) -> float:
    """Volatility reproducing ``price`` by bisection."""
    lower = max(S0 - K, 0.0)
    if not lower < price < S0:
        raise ValueError(f"price {price} outside the no-arbitrage range ({lower}, {S0})")
    f_lo = bs_call_price(T, K, S0, lo) - price
    f_hi = bs_call_price(T, K, S0, hi) - price
    if f_lo > 0 or f_hi < 0:
        raise ValueError(f"price {price} not bracketed by volatilities [{lo}, {hi}]")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f_mid = bs_call_price(T, K, S0, mid) - price
        if abs(f_mid) <= tol:
            return mid
        if f_mid < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def dupire_local_vol(
    surface: Callable[[float, float], float], T: float, K: float, h_T: float, h_K: float
) -> float:
    """``sqrt(2 dV/dT / d2V/dK2)`` by centred differences."""
    h_T, h_K = abs(h_T), abs(h_K)
    if h_T <= 0 or h_K <= 0 or h_T >= T:
        raise ValueError("bumps must be positive and h_T < T")
    dV_dT = (surface(T + h_T, K) - surface(T - h_T, K)) / (2.0 * h_T)
    d2V_dK2 = (surface(T, K + h_K) - 2.0 * surface(T, K) + surface(T, K - h_K)) / (h_K * h_K)
    if d2V_dK2 <= 0.0:
        raise ValueError(f"second strike derivative {d2V_dK2:.3g} is not positive")
    if dV_dT < 0.0:
        raise ValueError(f"time derivative {dV_dT:.3g} is negative")
    return math.sqrt(2.0 * dV_dT / d2V_dK2)

