import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from conftest import fixture_kernels
from cycdde.errors import (
    DiracDensityUndefined,
    InvalidTailMass,
    KernelError,
    LaplaceDiverges,
    NegativeTime,
    ParseError,
)
from cycdde.kernels import (
    Dirac,
    DiracAtZero,
    Erlang,
    Tabulated,
    convolve,
    convolve_all,
    dirac,
    kernel_from_dict,
    laplace,
    mean_and_truncation,
    pdf_eval,
)
from oracles import erlang_pdf

SAMPLE_LAMBDAS = (0j, 1 + 0j, 0.5 + 1.0j, -0.2 + 2.0j, 0.3 - 0.7j)


def test_pdf_examples():
    assert pdf_eval(Erlang(1, 2.0), 0.0) == pytest.approx(2.0, rel=1e-14)
    assert pdf_eval(Erlang(2, 1.0), 1.0) == pytest.approx(math.exp(-1), rel=1e-14)
    assert pdf_eval(Tabulated([0.0, 1.0], [1.0, 1.0]), 0.5) == pytest.approx(1.0, rel=1e-14)


def test_pdf_matches_closed_form():
    t = np.linspace(0.0, 12.0, 97)
    for j, v in [(1, 0.5), (2, 1.0), (5, 2.0)]:
        np.testing.assert_allclose(Erlang(j, v).pdf(t), erlang_pdf(t, j, v), rtol=1e-12, atol=1e-300)


def test_pdf_errors():
    with pytest.raises(DiracDensityUndefined):
        Dirac(1.0).pdf(0.5)
    with pytest.raises(DiracDensityUndefined):
        DiracAtZero().pdf(0.0)
    with pytest.raises(NegativeTime):
        Erlang(2, 1.0).pdf(-0.1)


def test_laplace_examples():
    assert abs(laplace(Dirac(2.0), 1.0) - math.exp(-2)) < 1e-14
    assert abs(laplace(Erlang(3, 2.0), 2.0) - 0.125) < 1e-15
    for k in fixture_kernels():
        assert abs(laplace(k, 0.0) - 1.0) <= 1e-8


def test_laplace_diverges_and_continuation():
    k = Erlang(2, 1.0)
    with pytest.raises(LaplaceDiverges):
        k.laplace(-1.5)
    assert k.laplace(-1.5, continuation=True) == pytest.approx((1 / (1 - 1.5)) ** 2)
    with pytest.raises(LaplaceDiverges):
        k.laplace(-1.0, continuation=True)


def test_laplace_derivative_is_minus_mean():
    eps = 1e-5
    for k in fixture_kernels():
        d = (laplace(k, eps) - laplace(k, -eps)) / (2 * eps)
        assert abs(-d - k.mean()) <= 1e-6 * max(1.0, k.mean())


def test_convolve_examples():
    assert convolve(Dirac(1.0), Dirac(2.0)) == Dirac(3.0)
    assert convolve(Erlang(1, 2.0), Erlang(2, 2.0)) == Erlang(3, 2.0)
    k = convolve(Dirac(1.0), Erlang(1, 1.0))
    grid = k.grid
    assert integrate.trapezoid(grid * k.density, grid) == pytest.approx(2.0, abs=1e-6)
    assert convolve(DiracAtZero(), Erlang(2, 1.0)) == Erlang(2, 1.0)
    assert convolve_all([]) == DiracAtZero()


@pytest.mark.parametrize("i,j", list(itertools.combinations_with_replacement(range(9), 2)))
def test_convolution_factorization_and_mean(i, j):
    ks = fixture_kernels()
    k1, k2 = ks[i], ks[j]
    c = convolve(k1, k2)
    # a tabulated result is truncated at a finite horizon, so its transform is
    # only accurate where exp(-lam t) does not amplify the dropped tail
    lams = [z for z in SAMPLE_LAMBDAS if z.real >= 0] if isinstance(c, Tabulated) else SAMPLE_LAMBDAS
    for lam in lams:
        want = laplace(k1, lam) * laplace(k2, lam)
        assert abs(laplace(c, lam) - want) <= 1e-6 * max(1.0, abs(want))
    assert abs(c.mean() - (k1.mean() + k2.mean())) <= 1e-6 * max(1.0, k1.mean() + k2.mean())


@pytest.mark.parametrize("shape", [1, 2, 3, 5])
@pytest.mark.parametrize("rate", [0.5, 1.0, 2.0])
def test_erlang_generator_identity(shape, rate):
    # d/dt g^j = V (g^{j-1} - g^j), with g^0 the point mass at zero (dropped for t > 0)
    t = np.linspace(0.05, 20.0, 200)
    h = 1e-5
    k = Erlang(shape, rate)
    lhs = (k.pdf(t + h) - k.pdf(t - h)) / (2 * h)
    lower = Erlang(shape - 1, rate).pdf(t) if shape > 1 else 0.0
    rhs = rate * (lower - k.pdf(t))
    assert np.max(np.abs(lhs - rhs)) <= 1e-5 * max(1.0, rate**2)


def test_mean_and_truncation_examples():
    assert mean_and_truncation(Dirac(3.0), 1e-10) == (3.0, 3.0)
    m, T = mean_and_truncation(Erlang(1, 1.0), math.exp(-10))
    assert m == 1.0 and T == pytest.approx(10.0, rel=1e-12)
    k = Erlang(4, 2.0)
    m, T = mean_and_truncation(k, 1e-8)
    assert m == pytest.approx(2.0, rel=1e-15)
    tail, _ = integrate.quad(lambda s: erlang_pdf(s, 4, 2.0), T, np.inf, epsabs=1e-16, epsrel=1e-12)
    assert abs(tail - 1e-8) <= 1e-10


def test_invalid_tail_mass():
    for bad in (0.0, 1.0, -1e-3):
        with pytest.raises(InvalidTailMass):
            mean_and_truncation(Erlang(2, 1.0), bad)


def test_construction_invariants():
    with pytest.raises(KernelError):
        Erlang(0, 1.0)
    with pytest.raises(KernelError):
        Erlang(2.5, 1.0)
    with pytest.raises(KernelError):
        Erlang(2, 0.0)
    with pytest.raises(KernelError):
        Dirac(-1.0)
    with pytest.raises(KernelError):
        Tabulated([0.0, 1.0, 0.5], [1.0, 1.0, 1.0])
    with pytest.raises(KernelError):
        Tabulated([0.0, 1.0], [2.0, -0.5])
    with pytest.raises(KernelError):
        Tabulated([0.0, 1.0], [2.0, 2.0])
    assert isinstance(dirac(0.0), DiracAtZero)
    assert dirac(0.5) == Dirac(0.5)


def test_tabulated_renormalized():
    k = Tabulated([0.0, 1.0], [1.0005, 1.0005])
    assert integrate.trapezoid(k.density, k.grid) == pytest.approx(1.0, abs=1e-12)


@given(st.lists(st.floats(0.0, 5.0), min_size=3, max_size=30), st.floats(0.1, 5.0))
@settings(max_examples=50, deadline=None)
def test_tabulated_normalization_property(raw, width):
    dens = np.asarray(raw) + 1e-3
    grid = np.linspace(0.0, width, dens.size)
    dens = dens / integrate.trapezoid(dens, grid)
    k = Tabulated(grid, dens)
    assert abs(k.laplace(0.0) - 1.0) <= 1e-8
    assert 0.0 <= k.mean() <= width


@given(st.integers(1, 6), st.floats(0.1, 10.0), st.floats(-0.09, 5.0), st.floats(-5.0, 5.0))
@settings(max_examples=100, deadline=None)
def test_erlang_laplace_closed_form(shape, rate, re, im):
    lam = complex(re * rate, im)
    got = Erlang(shape, rate).laplace(lam)
    assert abs(got - (rate / (rate + lam)) ** shape) <= 1e-12


def test_kernel_dict_round_trip():
    for k in fixture_kernels():
        assert kernel_from_dict(k.to_dict()) == k


@pytest.mark.parametrize("doc", [
    {"kind": "gamma", "shape": 2},
    {"kind": "erlang", "shape": 2.5, "rate": 1},
    {"kind": "erlang", "rate": 1},
    {"kind": "dirac", "tau": -1},
    {"kind": "dirac", "tau": 1, "extra": 0},
    {"shape": 2},
])
def test_kernel_dict_errors(doc):
    with pytest.raises(ParseError):
        kernel_from_dict(doc)
