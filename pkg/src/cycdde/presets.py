"""Named example models with versioned default parameters.

Parameter keys are matched after lowercasing and dropping non-alphanumerics, so
``gamma_M``, ``gammaM`` and ``gamma-m`` all name the same constant.
"""
from __future__ import annotations

import json
import math
import re
from importlib import resources
from urllib.parse import parse_qsl, urlsplit

from .errors import InfeasibleParameters, MissingParameter, ModelError, ParseError
from .kernels import DiracAtZero, dirac
from .model import (
    ConstantFeedback,
    Constant,
    CyclicModel,
    HillDown,
    HillGate,
    HillUp,
    Linear,
    SaturatingLoss,
    ScaledLinear,
    Stage,
    Zero,
)

PRESETS = ("goodwin", "yildirim", "knauer", "knauer_singular")
FIXTURE = "presets_v1.json"


def norm_key(key: str) -> str:
    return re.sub(r"[^0-9a-z]", "", key.lower())


def _load_fixture() -> dict:
    text = resources.files("cycdde.fixtures").joinpath(FIXTURE).read_text()
    return json.loads(text)["presets"]


_FIXTURE = _load_fixture()


def defaults(name: str) -> dict:
    return dict(_fixture_entry(name)["defaults"])


def initial_state(name: str) -> list[float]:
    entry = _fixture_entry(name)
    return [float(entry["initial"][lab]) for lab in entry["labels"]]


def _fixture_entry(name: str) -> dict:
    if name not in _FIXTURE:
        raise ParseError(f"unknown preset {name!r}; expected one of {', '.join(PRESETS)}")
    return _FIXTURE[name]


class _Params:
    """Normalized-key view of a parameter map with canonical names."""

    def __init__(self, name: str, params: dict | None, use_defaults: bool):
        canon = _fixture_entry(name)["defaults"]
        self.name = name
        self._by_norm = {norm_key(k): k for k in canon}
        self.values: dict = dict(canon) if use_defaults else {}
        for k, v in (params or {}).items():
            key = self._by_norm.get(norm_key(k))
            if key is None and norm_key(k) == "fc":
                key = "F_c"
                self._by_norm["fc"] = key
            if key is None:
                raise ParseError(f"preset {name}: unknown parameter {k!r}")
            self.values[key] = v

    def num(self, key: str) -> float:
        if key not in self.values:
            raise MissingParameter(f"preset {self.name}: missing parameter {key!r}")
        v = self.values[key]
        try:
            v = float(v)
        except (TypeError, ValueError):
            raise ParseError(f"preset {self.name}: parameter {key!r} must be numeric, got {v!r}") from None
        if not math.isfinite(v):
            raise ModelError(f"preset {self.name}: parameter {key!r} must be finite")
        return v

    def text(self, key: str, default: str) -> str:
        return str(self.values.get(key, default))


def _feedback_F(p: _Params, scale: float = 1.0):
    kind = p.text("F_kind", "constant" if "F_c" in p.values else "hill_down")
    if "F_c" in p.values:
        kind = "constant"
    if kind == "constant":
        return ConstantFeedback(p.num("F_c"))
    cls = {"hill_down": HillDown, "hill_up": HillUp}.get(kind)
    if cls is None:
        raise ParseError(f"preset {p.name}: F_kind must be hill_up, hill_down or constant")
    return cls(p.num("F_vmax"), p.num("F_K"), p.num("F_n"), scale)


def _goodwin(p: _Params) -> CyclicModel:
    # cycle order I <- M, E <- I, M <- E so that the last compartment is M
    stages = (
        Stage(Linear(p.num("alpha_I")), DiracAtZero(), Constant(p.num("gamma_I"))),
        Stage(Linear(p.num("alpha_E")), DiracAtZero(), Constant(p.num("gamma_E"))),
        Stage(_feedback_F(p), DiracAtZero(), Constant(p.num("gamma_M"))),
    )
    return CyclicModel(stages, ("I", "E", "M"))


def _yildirim(p: _Params) -> CyclicModel:
    tau_M, tau_I = p.num("tau_M"), p.num("tau_I")
    if tau_M < 0 or tau_I < 0:
        raise ModelError("preset yildirim: delays must be >= 0")
    alpha_E, beta_E = p.num("alpha_E"), p.num("beta_E")
    notes = []
    if beta_E > alpha_E:
        notes.append("beta_E > alpha_E: effector production can turn negative")
    stages = (
        Stage(_feedback_F(p, math.exp(-p.num("nu_E") * tau_M)), dirac(tau_M), Constant(p.num("gamma_M"))),
        Stage(ScaledLinear(p.num("alpha_I"), math.exp(-p.num("nu_M") * tau_I)), dirac(tau_I),
              Constant(p.num("gamma_I"))),
        Stage(Linear(1.0), DiracAtZero(), Constant(p.num("gamma_E")),
              gate=SaturatingLoss(alpha_E, beta_E, p.num("K_E"))),
    )
    return CyclicModel(stages, ("M", "I", "E"), tuple(notes))


def _knauer_checks(p: _Params, a_keys: tuple[str, ...]) -> None:
    for key in ("p_1", "p_2", "k", "d_3"):
        if key in p.values and p.num(key) <= 0:
            raise ModelError(f"preset {p.name}: {key} must be > 0")
    for key in a_keys:
        if not 0 < p.num(key) <= 1:
            raise ModelError(f"preset {p.name}: {key} must lie in (0, 1]")


def _knauer(p: _Params) -> CyclicModel:
    _knauer_checks(p, ("a_1", "a_2"))
    a1, a2, p1, p2, k, d3 = (p.num(s) for s in ("a_1", "a_2", "p_1", "p_2", "k", "d_3"))
    notes = []
    if a2 >= a1:
        notes.append("infeasible: positive equilibrium requires a_2 < a_1")
    if 2 * a1 <= 1:
        notes.append("infeasible: positive equilibrium requires 2 a_1 > 1")
    stages = (
        # net self-renewal enters as a clearance of either sign
        Stage(Zero(), DiracAtZero(), HillGate(-2 * a1 * p1, k, p1)),
        Stage(Linear(1.0), DiracAtZero(), HillGate(-2 * a2 * p2, k, p2), gate=HillGate(-2 * a1 * p1, k, 2 * p1)),
        Stage(Linear(1.0), DiracAtZero(), Constant(d3), gate=HillGate(-2 * a2 * p2, k, 2 * p2)),
    )
    return CyclicModel(stages, ("u1", "u2", "u3"), tuple(notes))


def _knauer_singular(p: _Params) -> CyclicModel:
    _knauer_checks(p, ("a_2",))
    a2, p2, k, d3 = (p.num(s) for s in ("a_2", "p_2", "k", "d_3"))
    notes = []
    if 2 * a2 <= 1:
        notes.append("infeasible: positive equilibrium requires 2 a_2 > 1")
    stages = (
        Stage(Zero(), DiracAtZero(), HillGate(-2 * a2 * p2, k, p2)),
        Stage(Linear(1.0), DiracAtZero(), Constant(d3), gate=HillGate(-2 * a2 * p2, k, 2 * p2)),
    )
    return CyclicModel(stages, ("u2", "u3"), tuple(notes))


_BUILDERS = {
    "goodwin": _goodwin,
    "yildirim": _yildirim,
    "knauer": _knauer,
    "knauer_singular": _knauer_singular,
}


def preset(name: str, params: dict | None = None, *, use_defaults: bool = True, strict: bool = False) -> CyclicModel:
    """Build a named example model.

    Parameters
    ----------
    name : {"goodwin", "yildirim", "knauer", "knauer_singular"}
    params : dict, optional
        Overrides of the fixture defaults. Goodwin and Yildirim accept
        ``F_kind`` in {"hill_up", "hill_down", "constant"}; supplying ``F_c``
        selects the constant feedback ``F = F_c``.
    use_defaults : bool
        If False every constant must be supplied (``MissingParameter`` otherwise).
    strict : bool
        Raise ``InfeasibleParameters`` instead of recording feasibility notes.
    """
    p = _Params(name, params, use_defaults)
    m = _BUILDERS[name](p)
    if strict and any(s.startswith("infeasible") for s in m.notes):
        raise InfeasibleParameters(f"preset {name}: " + "; ".join(m.notes))
    return m


def resolved_params(name: str, params: dict | None = None) -> dict:
    return _Params(name, params, True).values


def parse_preset_uri(uri: str) -> tuple[str, dict]:
    """Split ``preset://name?key=value&...`` into a name and a parameter map."""
    parts = urlsplit(uri)
    if parts.scheme != "preset" or not parts.netloc:
        raise ParseError(f"not a preset reference: {uri!r}")
    params = {}
    for k, v in parse_qsl(parts.query, keep_blank_values=True):
        try:
            params[k] = float(v)
        except ValueError:
            params[k] = v
    return parts.netloc, params
