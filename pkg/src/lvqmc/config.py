"""Run configuration: JSON schema, validation and construction of engine objects.

A run document has four sections. ``model`` gives the time grid, price grids
and volatility coefficients, or a constant-volatility shorthand. ``payoff``
gives per-date clamped linear payoffs or a European call. ``engine`` picks the
circuit construction and its number format, generator and inverse-CDF
settings. ``output`` picks the report format and destination. An optional
``resources`` section holds widths for the closed-form estimates.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import jsonschema

from .fixedpoint import FxFormat
from .icdf import DEFAULT_DOMAIN, IcdfApprox, fit_icdf
from .lvmodel import LvModel, PayoffSpec
from .prn_way import PrnWayConfig
from .prng import LcgParams, PermutationSpec, PrnStream
from .resources import REFERENCE_PARAMS, ResourceParams
from .rn_way import RnWayConfig, SnConfig

__all__ = ["ConfigError", "RUN_SCHEMA", "RunConfig", "load_config", "parse_config"]


class ConfigError(ValueError):
    """The run document is malformed or describes an inconsistent setup."""

    def __init__(self, message: str, where: str = ""):
        super().__init__(message)
        self.where = where


_num = {"type": "number"}
_int = {"type": "integer"}
_pos_int = {"type": "integer", "minimum": 1}
_nn_int = {"type": "integer", "minimum": 0}
_num_list = {"type": "array", "items": _num}
_num_rows = {"type": "array", "items": _num_list}
_opt_num_list = {"type": "array", "items": {"type": ["number", "null"]}}

_MODEL_TABLE = {
    "type": "object",
    "required": ["s0", "times", "grids", "a", "b"],
    "properties": {
        "s0": _num,
        "times": {**_num_list, "minItems": 2},
        "grids": _num_rows,
        "a": _num_rows,
        "b": _num_rows,
    },
    "additionalProperties": False,
}

_MODEL_CONSTANT = {
    "type": "object",
    "required": ["kind", "s0", "sigma", "maturity", "n_t"],
    "properties": {
        "kind": {"enum": ["black_scholes", "constant"]},
        "s0": _num,
        "sigma": {"type": "number", "exclusiveMinimum": 0},
        "maturity": {"type": "number", "exclusiveMinimum": 0},
        "n_t": _pos_int,
    },
    "additionalProperties": False,
}

_PAYOFF_TABLE = {
    "type": "object",
    "required": ["a", "b"],
    "properties": {"a": _num_list, "b": _num_list, "cap": _opt_num_list, "floor": _opt_num_list},
    "additionalProperties": False,
}

_PAYOFF_CALL = {
    "type": "object",
    "required": ["kind", "strike"],
    "properties": {"kind": {"const": "european_call"}, "strike": _num},
    "additionalProperties": False,
}

_PAYOFF_ZERO = {
    "type": "object",
    "required": ["kind"],
    "properties": {"kind": {"const": "zero"}},
    "additionalProperties": False,
}

_PRNG = {
    "type": "object",
    "properties": {
        "n_bits": {"type": "integer", "minimum": 1, "maximum": 64},
        "a": _nn_int,
        "c": _nn_int,
        "seed": _nn_int,
        "permutation": {
            "oneOf": [
                {"const": "default"},
                {
                    "type": "array",
                    "items": {
                        "type": "array",
                        "prefixItems": [{"enum": ["left", "right"]}, _pos_int],
                        "minItems": 2,
                        "maxItems": 2,
                    },
                },
            ]
        },
    },
    "additionalProperties": False,
}

_ICDF = {
    "oneOf": [
        {
            "type": "object",
            "required": ["path"],
            "properties": {"path": {"type": "string"}},
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "target_err": {"type": "number", "exclusiveMinimum": 0},
                "max_intervals": _pos_int,
                "strategy": {"enum": ["bisect", "greedy"]},
                "domain": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
            },
            "additionalProperties": False,
        },
    ]
}

_SN = {
    "type": "object",
    "properties": {
        "x_lo": _num,
        "x_hi": _num,
        "n_dig": _pos_int,
        "m_star": _int,
        "precision": _pos_int,
    },
    "additionalProperties": False,
}

_ENGINE = {
    "type": "object",
    "properties": {
        "way": {"enum": ["prn", "rn", "classical"]},
        "fmt": {"type": ["string", "null"], "pattern": r"^[0-9]+\.[0-9]+$"},
        "n_samp": _nn_int,
        "n_paths": _pos_int,
        "n_dig": _pos_int,
        "prng": _PRNG,
        "icdf": _ICDF,
        "sn": _SN,
        "scale": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "budget": _pos_int,
    },
    "additionalProperties": False,
}

_RESOURCES = {
    "type": "object",
    "properties": {k: _nn_int for k in ("n_samp", "n_dig", "n_PRN", "n_ICDF", "n_t", "n_S")},
    "additionalProperties": False,
}

RUN_SCHEMA: dict = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "model": {"oneOf": [_MODEL_TABLE, _MODEL_CONSTANT]},
        "payoff": {"oneOf": [_PAYOFF_TABLE, _PAYOFF_CALL, _PAYOFF_ZERO]},
        "engine": _ENGINE,
        "output": {
            "type": "object",
            "properties": {
                "format": {"enum": ["json", "csv"]},
                "path": {"type": ["string", "null"]},
            },
            "additionalProperties": False,
        },
        "resources": _RESOURCES,
    },
    "additionalProperties": False,
}

_ENGINE_DEFAULTS = {
    "way": "classical",
    "fmt": None,
    "n_samp": 10,
    "n_dig": 16,
    "scale": None,
    "budget": 1 << 20,
}
_PRNG_DEFAULTS = {"n_bits": 64, "a": 6364136223846793005, "c": 1442695040888963407, "seed": 0}
_ICDF_DEFAULTS = {"target_err": 1e-6, "max_intervals": 128, "strategy": "bisect"}


def _error_path(err: jsonschema.ValidationError) -> str:
    return "/".join(str(p) for p in err.absolute_path) or "<root>"


def _validate_schema(doc: Any) -> None:
    validator = jsonschema.Draft202012Validator(RUN_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        # oneOf failures hide the useful message in their context
        err = errors[0]
        best = jsonschema.exceptions.best_match([err]) if err.context else err
        raise ConfigError(f"{_error_path(best)}: {best.message}", _error_path(best))


@dataclass
class RunConfig:
    """A validated run document with defaults filled in."""

    raw: dict
    model: LvModel | None
    payoffs: PayoffSpec | None
    engine: dict
    output: dict
    resources: ResourceParams
    _icdf: IcdfApprox | None = field(default=None, repr=False)

    @property
    def way(self) -> str:
        return self.engine["way"]

    @property
    def fmt(self) -> FxFormat | None:
        text = self.engine["fmt"]
        return None if text is None else FxFormat.parse(text)

    @property
    def budget(self) -> int:
        return int(self.engine["budget"])

    def require_model(self) -> tuple[LvModel, PayoffSpec]:
        if self.model is None or self.payoffs is None:
            raise ConfigError("this command needs both a model and a payoff section", "model")
        return self.model, self.payoffs

    @property
    def lcg(self) -> LcgParams:
        p = self.engine["prng"]
        return LcgParams(p["n_bits"], p["a"], p["c"])

    @property
    def perm(self) -> PermutationSpec:
        p = self.engine["prng"]
        if p["permutation"] == "default":
            return PermutationSpec.default(p["n_bits"])
        return PermutationSpec(p["n_bits"], tuple((d, int(s)) for d, s in p["permutation"]))

    @property
    def seed(self) -> int:
        return int(self.engine["prng"]["seed"])

    @property
    def n_dig(self) -> int:
        return int(self.engine["n_dig"])

    @property
    def n_paths(self) -> int:
        return int(self.engine.get("n_paths") or (1 << self.engine["n_samp"]))

    @property
    def sn(self) -> SnConfig:
        return SnConfig(**self.engine["sn"])

    def stream(self) -> PrnStream:
        return PrnStream(self.lcg, self.perm, self.seed, self.n_dig)

    def icdf(self) -> IcdfApprox:
        if self._icdf is None:
            spec = self.engine["icdf"]
            if "path" in spec:
                try:
                    self._icdf = IcdfApprox.load(spec["path"])
                except (OSError, KeyError, ValueError) as exc:
                    raise ConfigError(f"cannot read inverse-CDF file {spec['path']}: {exc}", "engine/icdf/path")
            else:
                self._icdf = fit_icdf(
                    tuple(spec["domain"]), spec["target_err"], spec["max_intervals"], spec["strategy"]
                )
        return self._icdf

    def prn_config(self) -> PrnWayConfig:
        model, payoffs = self.require_model()
        fmt = self._need_fmt()
        return _wrap(
            lambda: PrnWayConfig(
                model, payoffs, self.lcg, self.perm, self.icdf(), self.engine["n_samp"],
                fmt, self.n_dig, self.seed, self.engine["scale"],
            ),
            "engine",
        )

    def rn_config(self) -> RnWayConfig:
        model, payoffs = self.require_model()
        fmt = self._need_fmt()
        return _wrap(lambda: RnWayConfig(model, payoffs, self.sn, fmt, self.engine["scale"]), "engine")

    def _need_fmt(self) -> FxFormat:
        fmt = self.fmt
        if fmt is None:
            raise ConfigError(f"the {self.way} circuit needs engine.fmt", "engine/fmt")
        return fmt

    def resolved(self) -> dict:
        """The document as run, including every default."""
        out: dict[str, Any] = {}
        if self.model is not None:
            out["model"] = self.raw.get("model")
            out["payoff"] = self.raw.get("payoff")
        out["engine"] = self.engine
        out["output"] = self.output
        out["resources"] = self.resources.to_dict()
        return json.loads(json.dumps(out))


def _wrap(build, where: str):
    try:
        return build()
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc), where) from exc


def _build_model(doc: dict) -> LvModel:
    if "kind" in doc:
        return LvModel.constant(
            doc["s0"], doc["sigma"], doc["maturity"], doc["n_t"], doc["kind"] == "black_scholes"
        )
    return LvModel(doc["s0"], doc["times"], doc["grids"], doc["a"], doc["b"])


def _build_payoff(doc: dict, n_t: int) -> PayoffSpec:
    kind = doc.get("kind")
    if kind == "european_call":
        return PayoffSpec.european_call(doc["strike"], n_t)
    if kind == "zero":
        return PayoffSpec.zero(n_t)
    n = len(doc["a"])
    cap = doc.get("cap", [None] * n)
    floor = doc.get("floor", [None] * n)
    return PayoffSpec(doc["a"], doc["b"], cap, floor)


def _fill_engine(doc: dict) -> dict:
    engine = {**_ENGINE_DEFAULTS, **doc}
    engine["prng"] = {**_PRNG_DEFAULTS, "permutation": "default", **doc.get("prng", {})}
    icdf = doc.get("icdf", {})
    if "path" in icdf:
        engine["icdf"] = dict(icdf)
    else:
        engine["icdf"] = {**_ICDF_DEFAULTS, "domain": list(DEFAULT_DOMAIN), **icdf}
    defaults = SnConfig()
    engine["sn"] = {
        "x_lo": defaults.x_lo,
        "x_hi": defaults.x_hi,
        "n_dig": defaults.n_dig,
        "m_star": defaults.m_star,
        "precision": defaults.precision,
        **doc.get("sn", {}),
    }
    return engine


def parse_config(doc: Any, require_model: bool = True, base_dir: Path | None = None) -> RunConfig:
    """Validate a decoded JSON document and build the objects it describes.

    Schema errors and every constructor check of the referenced objects are
    reported as :class:`ConfigError` with the offending location.
    """
    if doc is None:
        doc = {}
    _validate_schema(doc)
    if require_model and not ("model" in doc and "payoff" in doc):
        missing = "model" if "model" not in doc else "payoff"
        raise ConfigError(f"missing required section '{missing}'", missing)
    model = payoffs = None
    if "model" in doc:
        model = _wrap(lambda: _build_model(doc["model"]), "model")
        if "payoff" not in doc:
            raise ConfigError("missing required section 'payoff'", "payoff")
        payoffs = _wrap(lambda: _build_payoff(doc["payoff"], model.n_t), "payoff")
        if payoffs.n_dates != model.n_t:
            raise ConfigError(
                f"payoff has {payoffs.n_dates} dates but the model has {model.n_t} steps", "payoff"
            )
    engine = _fill_engine(doc.get("engine", {}))
    if base_dir is not None and "path" in engine["icdf"]:
        p = Path(engine["icdf"]["path"])
        if not p.is_absolute():
            engine["icdf"]["path"] = str(base_dir / p)
    _wrap(lambda: FxFormat.parse(engine["fmt"]) if engine["fmt"] else None, "engine/fmt")
    cfg_prng = engine["prng"]
    _wrap(lambda: LcgParams(cfg_prng["n_bits"], cfg_prng["a"], cfg_prng["c"]), "engine/prng")
    sn = _wrap(lambda: SnConfig(**engine["sn"]), "engine/sn")
    if not math.isfinite(sn.x_lo) or not math.isfinite(sn.x_hi):
        raise ConfigError("grid bounds must be finite", "engine/sn")
    resources = _wrap(
        lambda: ResourceParams(**{**REFERENCE_PARAMS.to_dict(), **doc.get("resources", {})}),
        "resources",
    )
    output = {"format": "json", "path": None, **doc.get("output", {})}
    run = RunConfig(doc, model, payoffs, engine, output, resources)
    _wrap(lambda: run.perm, "engine/prng/permutation")
    _wrap(run.stream, "engine/prng")
    return run


def load_config(path: str | Path, require_model: bool = True) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}", "--config") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}", "--config") from exc
    return parse_config(doc, require_model, path.parent)
