import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from cycdde.kernels import Dirac, DiracAtZero, Erlang, Tabulated  # noqa: E402
import numpy as np  # noqa: E402

ACCEPTANCE_LINES: dict[int, str] = {}


def fixture_kernels():
    """The kernel set shared by the kernel-algebra tests."""
    g = np.linspace(0.0, 1.0, 401)
    tri = np.linspace(0.5, 2.5, 801)
    return [
        DiracAtZero(),
        Dirac(0.5),
        Dirac(2.0),
        Erlang(1, 2.0),
        Erlang(2, 1.0),
        Erlang(3, 2.0),
        Erlang(5, 0.5),
        Tabulated(g, np.ones_like(g)),
        Tabulated(tri, 1.0 - np.abs(tri - 1.5)),
    ]


@pytest.fixture
def acceptance():
    def record(number: int, passed: bool, detail: str) -> None:
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])


def random_nonneg_model(rng):
    """Random cyclic model meeting the non-negativity hypotheses (f(0) = 0, f > 0, g >= 0)."""
    from cycdde.model import Constant, CyclicModel, HillGate, HillUp, Linear, ScaledLinear, Stage

    n = int(rng.integers(2, 5))
    stages = []
    for i in range(n):
        # a saturating closing stage keeps every trajectory bounded
        r = 2 if i == n - 1 else rng.integers(3)
        if r == 0:
            fb = Linear(float(rng.uniform(0.2, 2.0)))
        elif r == 1:
            fb = ScaledLinear(float(rng.uniform(0.2, 2.0)), float(rng.uniform(0.3, 1.0)))
        else:
            fb = HillUp(float(rng.uniform(0.5, 4.0)), float(rng.uniform(0.2, 2.0)), float(rng.integers(1, 5)))
        r = rng.integers(3)
        if r == 0:
            k = DiracAtZero()
        elif r == 1:
            k = Dirac(float(rng.uniform(0.1, 3.0)))
        else:
            k = Erlang(int(rng.integers(1, 4)), float(rng.uniform(0.5, 3.0)))
        clear = Constant(float(rng.uniform(0.2, 2.0))) if rng.random() < 0.6 else \
            HillGate(float(rng.uniform(0.5, 2.0)), float(rng.uniform(0.2, 2.0)), float(rng.uniform(0.1, 1.0)))
        gate = Constant(1.0) if rng.random() < 0.5 else HillGate(float(rng.uniform(0.2, 2.0)), 1.0)
        stages.append(Stage(fb, k, clear, gate))
    return CyclicModel(tuple(stages))
