import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from cycdde.errors import InfeasibleParameters, MissingParameter, ParseError
from cycdde.kernels import Dirac, DiracAtZero, Erlang
from cycdde.model import (
    Constant,
    ConstantFeedback,
    CyclicModel,
    HillDown,
    HillGate,
    HillUp,
    Linear,
    SaturatingLoss,
    ScaledLinear,
    Stage,
    Zero,
    parse_model_config,
    serialize_model,
    validate,
)
from cycdde.presets import PRESETS, defaults, parse_preset_uri, preset

FEEDBACKS = [
    Linear(1.7),
    ScaledLinear(0.8, 0.6),
    ConstantFeedback(2.0),
    HillUp(4.0, 1.0, 2.0),
    HillUp(1.5, 0.3, 3.5, 0.9),
    HillDown(1.0, 1.0, 2.0),
    HillDown(2.0, 5.0, 12.0),
]
STATE_FNS = [Constant(0.7), HillGate(-1.8, 1.0, 1.0), HillGate(2.0, 0.5), SaturatingLoss(1.0, 0.5, 1.0)]


def _five_point(f, x, h):
    return (f(x - 2 * h) - 8 * f(x - h) + 8 * f(x + h) - f(x + 2 * h)) / (12 * h)


@pytest.mark.parametrize("fn", FEEDBACKS + STATE_FNS, ids=lambda f: repr(f))
@given(st.floats(-3.0, 3.0))
@settings(max_examples=60, deadline=None)
def test_derivative_matches_finite_difference(fn, log10x):
    x = 10.0**log10x
    h = 1e-3 * x
    fd = _five_point(fn, x, h)
    d = float(fn.derivative(x))
    # 1e-6 relative, with a roundoff floor of the stencil
    assert abs(fd - d) <= 1e-6 * abs(d) + 1e-13 * max(abs(float(fn(x))), 1.0) / h


def test_feedback_hypothesis_flags():
    for f in (Linear(1.0), ScaledLinear(1.0, 0.5), HillUp(1.0, 1.0, 2.0)):
        assert f.positive_preserving and f.nonnegative
        assert f(0.0) == 0.0 and f(0.3) > 0
    assert not HillDown(1.0, 1.0, 2.0).positive_preserving
    assert HillDown(1.0, 1.0, 2.0).nonnegative
    assert not Zero().positive_preserving


def test_goodwin_rhs_matches_literal_equations():
    p = defaults("goodwin")
    m = preset("goodwin")
    rng = np.random.default_rng(1)
    for _ in range(20):
        x = rng.uniform(0, 3, 3)
        y = np.array([x[2], x[0], x[1]])
        np.testing.assert_allclose(m.rhs(x, y), oracles.goodwin_rhs(x, p), rtol=1e-12, atol=1e-12)


def test_knauer_rhs_matches_literal_equations():
    p = defaults("knauer")
    m = preset("knauer")
    rng = np.random.default_rng(2)
    for _ in range(20):
        x = rng.uniform(0, 3, 3)
        y = np.array([x[2], x[0], x[1]])
        np.testing.assert_allclose(m.rhs(x, y), oracles.knauer_rhs(x, p), rtol=1e-12, atol=1e-12)


@given(st.lists(st.floats(0.0, 5.0), min_size=5, max_size=5))
@settings(max_examples=50, deadline=None)
def test_yildirim_rhs_matches_literal_equations(v):
    p = defaults("yildirim")
    m = preset("yildirim")
    x = np.array(v[:3])
    E_lag, M_lag = v[3], v[4]
    y = np.array([E_lag, M_lag, x[1]])
    np.testing.assert_allclose(m.rhs(x, y), oracles.yildirim_rhs(x, (E_lag, M_lag), p), rtol=1e-12, atol=1e-12)


def test_preset_goodwin_structure():
    m = preset("goodwin", {"gamma_M": 1, "gamma_I": 1, "gamma_E": 1, "alpha_I": 1, "alpha_E": 1,
                           "F_kind": "hill_down", "F_vmax": 1, "F_K": 1, "F_n": 2})
    assert m.n == 3 and m.names == ("I", "E", "M")
    assert all(isinstance(s.kernel, DiracAtZero) for s in m.stages)
    assert m.stages[2].feedback == HillDown(1.0, 1.0, 2.0)


def test_preset_knauer_structure():
    m = preset("knauer")
    assert isinstance(m.stages[0].feedback, Zero)
    # h(u3) = 1/(1 + k u3) enters as gates 2 p (1 - a h) and clearances p (1 - 2 a h)
    u3 = 0.37
    h = 1 / (1 + u3)
    assert m.stages[1].gate(u3) == pytest.approx(2 * (1 - 0.9 * h))
    assert m.stages[2].gate(u3) == pytest.approx(2 * (1 - 0.5 * h))
    assert m.stages[0].clearance(u3) == pytest.approx(1 - 2 * 0.9 * h)
    assert m.stages[1].clearance(u3) == pytest.approx(1 - 2 * 0.5 * h)


def test_preset_yildirim_collapses_without_delays():
    m = preset("yildirim", {"tau_M": 0, "tau_I": 0, "nu_E": 0, "nu_M": 0, "beta_E": 0})
    assert all(isinstance(s.kernel, DiracAtZero) for s in m.stages)
    assert m.stages[2].gate(5.0) == pytest.approx(1.0)
    m = preset("yildirim")
    assert m.stages[0].kernel == Dirac(0.5) and m.stages[1].kernel == Dirac(1.0)


def test_preset_feasibility():
    m = preset("knauer", {"a_2": 0.95})
    assert any("a_2 < a_1" in n for n in m.notes)
    with pytest.raises(InfeasibleParameters):
        preset("knauer", {"a_2": 0.95}, strict=True)
    with pytest.raises(MissingParameter):
        preset("knauer", {"a_1": 0.9}, use_defaults=False)
    with pytest.raises(ParseError):
        preset("knauer", {"bogus": 1})
    with pytest.raises(ParseError):
        preset("lorenz")


def test_preset_key_normalization_and_uri():
    assert preset("goodwin", {"gammaM": 2.0}) == preset("goodwin", {"gamma_M": 2.0})
    name, params = parse_preset_uri("preset://knauer?a_1=0.8&d_3=2")
    assert name == "knauer" and params == {"a_1": 0.8, "d_3": 2.0}
    with pytest.raises(ParseError):
        parse_preset_uri("file://x.json")


def test_validate_examples():
    rep = validate(preset("goodwin"))
    assert rep.valid and rep.nonnegativity_ok and rep.uniform_clearance
    assert all(isinstance(s.clearance, Constant) for s in preset("goodwin").stages)
    one = CyclicModel((Stage(Linear(1.0), DiracAtZero(), Constant(1.0)),))
    assert validate(one).errors == ["n >= 2 required"]
    rep = validate(preset("knauer"))
    assert rep.valid
    assert "stage-1 feedback is Zero: self-renewal-only first stage" in rep.notes


def test_validate_flags_hilldown_hypothesis():
    rep = validate(preset("goodwin"))
    assert rep.nonnegativity_ok and not rep.strict_hypotheses


def test_parse_minimal_config():
    doc = {
        "stages": [
            {"feedback": {"kind": "linear", "alpha": 1.0}, "clearance": {"kind": "constant", "c": 1.0}},
            {"feedback": {"kind": "linear", "alpha": 2.0}, "clearance": {"kind": "constant", "c": 0.5},
             "kernel": {"kind": "erlang", "shape": 2, "rate": 1.0}},
        ]
    }
    m = parse_model_config(json.dumps(doc))
    assert m.n == 2 and m.stages[1].kernel == Erlang(2, 1.0)
    assert isinstance(m.stages[0].kernel, DiracAtZero)


@pytest.mark.parametrize("name", PRESETS)
def test_serialize_round_trip(name):
    m = preset(name)
    back = parse_model_config(serialize_model(m))
    assert back.stages == m.stages and back.names == m.names
    assert serialize_model(back) == serialize_model(m)


@pytest.mark.parametrize("text,fragment", [
    ('{"stages": [', "line 1"),
    (json.dumps({"stages": [{"feedback": {"kind": "hill_up", "vmax": 1, "K": -1, "n": 2},
                             "clearance": {"kind": "constant", "c": 1}}] * 2}), "stages[0].feedback"),
    (json.dumps({"stages": [{"feedback": {"kind": "linear", "alpha": 1}}] * 2}), "clearance"),
    (json.dumps({"stages": [{"feedback": {"kind": "nope"}, "clearance": {"kind": "constant", "c": 1}}] * 2}),
     "unknown kind"),
    (json.dumps({"stages": [{"feedback": {"kind": "linear", "alpha": 1},
                             "clearance": {"kind": "constant", "c": 1}}]}), "n >= 2"),
])
def test_parse_errors(text, fragment):
    with pytest.raises(ParseError, match=fragment.replace("[", r"\[").replace("]", r"\]")):
        parse_model_config(text)
