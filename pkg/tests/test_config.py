import copy

import pytest

from anisolve.config import ConfigError, build, config_hash, resolve, schema
from anisolve.elliptic import EllipticProblem
from anisolve.parabolic import ParabolicProblem

ELLIPTIC = {
    "mode": "elliptic",
    "grid": {"d": 1, "n": 16},
    "exponents": {"expressions": ["3+tanh(u)"], "bounds": [[2, 4]]},
    "source": "1",
}
PARABOLIC = {
    "mode": "parabolic",
    "grid": {"d": 2, "n": 8},
    "exponents": {"expressions": ["3", "3+tanh(s)"], "bounds": [[3, 3], [2.5, 4]]},
    "source": "t",
    "parabolic": {"T": 1.0, "N0": 4},
}


def with_(base, **changes):
    cfg = copy.deepcopy(base)
    for path, value in changes.items():
        node = cfg
        keys = path.split("__")
        for k in keys[:-1]:
            node = node.setdefault(k, {})
        node[keys[-1]] = value
    return cfg


def _defaults(sch):
    out = {}
    for key, sub in sch.get("properties", {}).items():
        if sub.get("type") == "object" and "default" in sub:
            out[key] = _defaults(sub)
        elif "default" in sub:
            out[key] = sub["default"]
    return out


def test_defaults_come_from_the_schema():
    cfg = resolve(ELLIPTIC)
    documented = _defaults(schema())
    for section in ("solver", "output", "elliptic"):
        assert cfg[section] == documented[section]
    assert cfg["seed"] == 42
    assert cfg["exponents"]["sample_span"] == 10.0
    assert "parabolic" not in cfg


def test_parabolic_defaults():
    cfg = resolve(PARABOLIC)
    assert cfg["parabolic"]["b"] == {"kind": "gradnorm", "exponent": None}
    assert cfg["parabolic"]["u0"] == "0"
    assert "elliptic" not in cfg
    case = build(cfg)
    assert isinstance(case.problem, ParabolicProblem)
    # gradient norm exponent defaults to the smallest lower bound
    assert case.problem.bmap.exponent == 2.5


def test_every_schema_key_is_resolved():
    cfg = resolve(PARABOLIC)
    props = schema()["properties"]
    assert set(cfg) == set(props) - {"elliptic"}
    for section in ("solver", "output", "exponents"):
        assert set(cfg[section]) == set(props[section]["properties"])


@pytest.mark.parametrize(
    "cfg, needle",
    [
        (with_(ELLIPTIC, extra=1), "Additional properties"),
        (with_(ELLIPTIC, solver__tolerance=1e-3), "Additional properties"),
        (with_(ELLIPTIC, grid__d=3), "grid/d"),
        (with_(ELLIPTIC, grid__n=1), "grid/n"),
        (with_(ELLIPTIC, parabolic={"T": 1, "N0": 2}), "schema violation"),
        ({k: v for k, v in PARABOLIC.items() if k != "parabolic"}, "schema violation"),
        (with_(PARABOLIC, elliptic={}), "schema violation"),
        (with_(ELLIPTIC, mode="hyperbolic"), "mode"),
        (with_(ELLIPTIC, solver__theta_u=0), "theta_u"),
    ],
)
def test_schema_rejections(cfg, needle):
    with pytest.raises(ConfigError, match=needle):
        resolve(cfg)


@pytest.mark.parametrize(
    "cfg, needle",
    [
        (with_(ELLIPTIC, source="1 +"), "source: expected"),
        (with_(ELLIPTIC, source="t"), "not allowed"),
        (with_(ELLIPTIC, source="y"), "not allowed"),
        (with_(PARABOLIC, source="u"), "not allowed"),
        (with_(PARABOLIC, parabolic__u0="t"), "parabolic.u0"),
        (with_(ELLIPTIC, exponents__expressions=["3", "3"]), "2 entries"),
        (with_(ELLIPTIC, exponents__bounds=[[4, 2]]), "reversed"),
        (with_(ELLIPTIC, exponents__lipschitz=[1, 1]), "lipschitz"),
        (with_(PARABOLIC, output__snapshots=[2.0]), "exceeds"),
        (with_(ELLIPTIC, reference="x*u"), "reference"),
    ],
)
def test_consistency_rejections(cfg, needle):
    with pytest.raises(ConfigError, match=needle):
        resolve(cfg)


def test_build_and_override_resolution():
    case = build(resolve(ELLIPTIC), n=32)
    assert isinstance(case.problem, EllipticProblem)
    assert case.problem.grid.n == 32


def test_hash_is_stable_and_sensitive():
    a = resolve(ELLIPTIC)
    b = resolve(copy.deepcopy(ELLIPTIC))
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(resolve(with_(ELLIPTIC, seed=7)))
