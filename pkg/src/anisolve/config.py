"""JSON case files: schema validation, documented defaults, problem assembly."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import jsonschema

from . import expr as ex
from .elliptic import ContinuationParams, EllipticProblem, ExponentSpec
from .frozen import NewtonParams
from .grid import Grid
from .parabolic import NonlocalMap, ParabolicParams, ParabolicProblem


class ConfigError(ValueError):
    """The case file is malformed, violates the schema or is inconsistent."""


@lru_cache(maxsize=1)
def schema() -> dict:
    text = resources.files("anisolve").joinpath("case.schema.json").read_text()
    return json.loads(text)


def _fill_defaults(node: dict, sch: dict) -> None:
    props = sch.get("properties", {})
    for key, sub in props.items():
        if key not in node and "default" in sub:
            node[key] = copy.deepcopy(sub["default"])
        if isinstance(node.get(key), dict) and sub.get("type") == "object":
            _fill_defaults(node[key], sub)


def resolve(raw: dict) -> dict:
    """Validate ``raw`` against the schema and return it with defaults filled."""
    sch = schema()
    validator = jsonschema.Draft202012Validator(sch)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"schema violation at {where}: {err.message}")
    cfg = copy.deepcopy(raw)
    _fill_defaults(cfg, sch)
    if cfg["mode"] == "parabolic":
        # the elliptic section is rejected for parabolic cases, never defaulted
        cfg.pop("elliptic", None)
    _check_consistency(cfg)
    return cfg


def load(path) -> dict:
    """Read and resolve a case file; OSError propagates for I/O problems."""
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as err:
            raise ConfigError(f"{path}: invalid JSON: {err}") from err
    return resolve(raw)


def config_hash(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def _parse(text: str, what: str, allowed: set) -> ex.Expr:
    try:
        e = ex.parse(text)
    except ex.ParseError as err:
        raise ConfigError(f"{what}: {err}") from err
    extra = ex.free_variables(e) - allowed
    if extra:
        raise ConfigError(f"{what}: variables {sorted(extra)} not allowed here (use {sorted(allowed)})")
    return e


def _space_vars(d: int) -> set:
    return {"x"} if d == 1 else {"x", "y"}


def _check_consistency(cfg: dict) -> None:
    d = cfg["grid"]["d"]
    exps = cfg["exponents"]
    k = len(exps["expressions"])
    if k != d:
        raise ConfigError(f"exponents.expressions has {k} entries for a {d}-d grid")
    if len(exps["bounds"]) != d:
        raise ConfigError(f"exponents.bounds has {len(exps['bounds'])} entries for a {d}-d grid")
    for lo, hi in exps["bounds"]:
        if lo > hi:
            raise ConfigError(f"exponent bounds [{lo}, {hi}] are reversed")
    if exps["lipschitz"] is not None and len(exps["lipschitz"]) != d:
        raise ConfigError("exponents.lipschitz needs one constant per axis")
    for i, text in enumerate(exps["expressions"]):
        _parse(text, f"exponents.expressions[{i}]", {"t", "u", "s"})
    space = _space_vars(d)
    if cfg["mode"] == "elliptic":
        _parse(cfg["source"], "source", space | {"u"})
        if cfg["reference"] is not None:
            _parse(cfg["reference"], "reference", space)
    else:
        _parse(cfg["source"], "source", space | {"t"})
        _parse(cfg["parabolic"]["u0"], "parabolic.u0", space)
        if cfg["reference"] is not None:
            _parse(cfg["reference"], "reference", space | {"t"})
        for t in cfg["output"]["snapshots"] or []:
            if t > cfg["parabolic"]["T"] * (1 + 1e-12):
                raise ConfigError(f"snapshot time {t} exceeds T = {cfg['parabolic']['T']}")


def exponent_spec(cfg: dict) -> ExponentSpec:
    exps = cfg["exponents"]
    return ExponentSpec(
        tuple(exps["expressions"]),
        tuple(b[0] for b in exps["bounds"]),
        tuple(b[1] for b in exps["bounds"]),
        lipschitz=None if exps["lipschitz"] is None else tuple(exps["lipschitz"]),
        span=exps["sample_span"],
    )


def newton_params(cfg: dict) -> NewtonParams:
    sv = cfg["solver"]
    return NewtonParams(tol_residual=sv["tol_residual"], max_iter=sv["max_newton"])


def continuation_params(cfg: dict) -> ContinuationParams:
    sv = cfg["solver"]
    return ContinuationParams(
        eps0=sv["eps0"],
        factor=sv["eps_factor"],
        eps_min=sv["eps_min"],
        tol_picard=sv["tol_picard"],
        tol_exponent=sv["tol_exponent"],
        max_picard=sv["max_picard"],
        theta=sv["theta_u"],
    )


def parabolic_params(cfg: dict) -> ParabolicParams:
    sv = cfg["solver"]
    return ParabolicParams(
        newton=newton_params(cfg),
        theta=sv["theta_b"],
        tol_b=sv["tol_b"],
        max_b=sv["max_b"],
        continuation=continuation_params(cfg) if sv["parabolic_continuation"] else None,
    )


@dataclass(frozen=True)
class Case:
    """A resolved config together with the problem it describes."""

    config: dict
    problem: object

    @property
    def mode(self) -> str:
        return self.config["mode"]


def build(cfg: dict, n: int | None = None) -> Case:
    """Assemble the problem; ``n`` overrides the grid resolution."""
    grid = Grid(cfg["grid"]["d"], n or cfg["grid"]["n"])
    spec = exponent_spec(cfg)
    try:
        if cfg["mode"] == "elliptic":
            el = cfg["elliptic"]
            prob = EllipticProblem(
                grid,
                spec,
                cfg["source"],
                growth_c=el["growth_c"],
                growth_r=el["growth_r"],
                expect_negative_at_zero=el["expect_negative_at_zero"],
            )
        else:
            pa = cfg["parabolic"]
            b = pa["b"]
            if b["exponent"] is not None:
                b_exp = b["exponent"]
            else:
                b_exp = spec.p_minus if b["kind"] == "gradnorm" else 2.0
            prob = ParabolicProblem(
                grid,
                spec,
                NonlocalMap(b["kind"], b_exp),
                cfg["source"],
                pa["u0"],
                pa["T"],
                pa["N0"],
            )
    except ValueError as err:
        raise ConfigError(str(err)) from err
    return Case(cfg, prob)
