"""Delay kernels: probability densities on [0, inf) that weight a compartment's past.

Four kinds are supported:

* ``DiracAtZero`` -- no delay, the input is the current value.
* ``Dirac(tau)`` -- a discrete delay.
* ``Erlang(shape, rate)`` -- gamma density with integer shape; the sojourn-time
  law of ``shape`` exponential transit compartments with common ``rate``.
* ``Tabulated(grid, density)`` -- a sampled density, linearly interpolated.

Kernels are immutable. Tabulated quadratures (mass, mean, Laplace transform) use
the trapezoid rule throughout so that they agree with the history quadrature
used by the integrators.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, signal, special
from scipy.integrate import trapezoid

from .errors import (
    DiracDensityUndefined,
    InvalidTailMass,
    KernelError,
    LaplaceDiverges,
    NegativeTime,
    ParseError,
)

# Tabulated input whose trapezoid mass is within this of 1 is renormalized.
RENORMALIZE_TOL = 1e-3
# Tail mass dropped when an Erlang kernel has to be tabulated.
TABULATION_TAIL = 1e-12
# Erlang tabulation step is ERLANG_STEP / rate.
ERLANG_STEP = 5e-4


def _check_tail(tail_mass: float) -> None:
    if not 0.0 < tail_mass < 1.0:
        raise InvalidTailMass(f"tail_mass must lie in (0, 1), got {tail_mass!r}")


def _check_time(t):
    if np.any(np.asarray(t) < 0):
        raise NegativeTime("kernel evaluated at negative time")


class DelayKernel:
    """Common interface; see the concrete subclasses."""

    kind: str = ""

    def pdf(self, t):
        raise DiracDensityUndefined(f"{type(self).__name__} has no pointwise density")

    def laplace(self, lam: complex, *, continuation: bool = False) -> complex:
        raise NotImplementedError

    def mean(self) -> float:
        raise NotImplementedError

    def horizon(self, tail_mass: float) -> float:
        raise NotImplementedError

    @property
    def delay(self) -> float | None:
        """Discrete delay for point-mass kernels, ``None`` for densities."""
        return None

    @property
    def resolution(self) -> float | None:
        """Natural tabulation step, ``None`` for point masses."""
        return None

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class DiracAtZero(DelayKernel):
    kind = "none"

    def laplace(self, lam, *, continuation=False):
        return complex(1.0)

    def mean(self):
        return 0.0

    def horizon(self, tail_mass):
        _check_tail(tail_mass)
        return 0.0

    @property
    def delay(self):
        return 0.0

    def to_dict(self):
        return {"kind": "none"}


@dataclass(frozen=True)
class Dirac(DelayKernel):
    tau: float
    kind = "dirac"

    def __post_init__(self):
        if not (self.tau >= 0 and math.isfinite(self.tau)):
            raise KernelError(f"Dirac delay must be finite and >= 0, got {self.tau!r}")
        object.__setattr__(self, "tau", float(self.tau))

    def laplace(self, lam, *, continuation=False):
        return complex(np.exp(-complex(lam) * self.tau))

    def mean(self):
        return self.tau

    def horizon(self, tail_mass):
        _check_tail(tail_mass)
        return self.tau

    @property
    def delay(self):
        return self.tau

    def to_dict(self):
        return {"kind": "dirac", "tau": self.tau}


@dataclass(frozen=True)
class Erlang(DelayKernel):
    shape: int
    rate: float
    kind = "erlang"

    def __post_init__(self):
        if int(self.shape) != self.shape or self.shape < 1:
            raise KernelError(f"Erlang shape must be a positive integer, got {self.shape!r}")
        if not (self.rate > 0 and math.isfinite(self.rate)):
            raise KernelError(f"Erlang rate must be > 0, got {self.rate!r}")
        object.__setattr__(self, "shape", int(self.shape))
        object.__setattr__(self, "rate", float(self.rate))

    def pdf(self, t):
        _check_time(t)
        t = np.asarray(t, dtype=float)
        j, v = self.shape, self.rate
        with np.errstate(divide="ignore", invalid="ignore"):
            logp = j * math.log(v) + (j - 1) * np.log(t) - v * t - math.lgamma(j)
        out = np.exp(logp)
        if j == 1:
            out = np.where(t == 0, v, out)
        else:
            out = np.where(t == 0, 0.0, out)
        return float(out) if out.ndim == 0 else out

    def laplace(self, lam, *, continuation=False):
        lam = complex(lam)
        if lam == -self.rate or (not continuation and lam.real <= -self.rate):
            raise LaplaceDiverges(
                f"Laplace transform of Erlang(rate={self.rate}) diverges at {lam}"
            )
        return (self.rate / (self.rate + lam)) ** self.shape

    def mean(self):
        return self.shape / self.rate

    def horizon(self, tail_mass):
        _check_tail(tail_mass)

        def tail(T):
            return special.gammaincc(self.shape, self.rate * T) - tail_mass

        hi = max(self.mean(), 1.0 / self.rate)
        while tail(hi) > 0:
            hi *= 2.0
        return optimize.brentq(tail, 0.0, hi, xtol=1e-14, rtol=1e-15)

    @property
    def resolution(self):
        return ERLANG_STEP / self.rate

    def to_dict(self):
        return {"kind": "erlang", "shape": self.shape, "rate": self.rate}


@dataclass(frozen=True, eq=False)
class Tabulated(DelayKernel):
    """Sampled density; zero outside ``[grid[0], grid[-1]]``.

    The trapezoid mass is renormalized to 1 when it is within
    ``RENORMALIZE_TOL`` of 1; larger deviations are rejected.
    """

    grid: np.ndarray
    density: np.ndarray
    kind = "tabulated"

    def __post_init__(self):
        grid = np.array(self.grid, dtype=float)
        density = np.array(self.density, dtype=float)
        if grid.ndim != 1 or grid.shape != density.shape or grid.size < 2:
            raise KernelError("tabulated kernel needs matching 1-D grid and density, length >= 2")
        if not np.all(np.isfinite(grid)) or not np.all(np.isfinite(density)):
            raise KernelError("tabulated kernel contains non-finite values")
        if grid[0] < 0:
            raise KernelError("tabulated grid must start at t >= 0")
        if np.any(np.diff(grid) <= 0):
            raise KernelError("tabulated grid must be strictly ascending")
        if np.any(density < 0):
            raise KernelError("tabulated density must be nonnegative")
        mass = trapezoid(density, grid)
        if abs(mass - 1.0) > RENORMALIZE_TOL:
            raise KernelError(f"tabulated mass {mass:.6g} deviates from 1 by more than {RENORMALIZE_TOL}")
        density = density / mass
        grid.setflags(write=False)
        density.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "density", density)

    def __eq__(self, other):
        return (
            isinstance(other, Tabulated)
            and np.array_equal(self.grid, other.grid)
            and np.array_equal(self.density, other.density)
        )

    __hash__ = None

    def pdf(self, t):
        _check_time(t)
        out = np.interp(t, self.grid, self.density, left=0.0, right=0.0)
        return float(out) if np.ndim(out) == 0 else out

    def laplace(self, lam, *, continuation=False):
        return complex(trapezoid(self.density * np.exp(-complex(lam) * self.grid), self.grid))

    def mean(self):
        return float(trapezoid(self.grid * self.density, self.grid))

    def horizon(self, tail_mass):
        _check_tail(tail_mass)
        return float(self.grid[-1])

    @property
    def resolution(self):
        return float(np.min(np.diff(self.grid)))

    def to_dict(self):
        return {"kind": "tabulated", "grid": self.grid.tolist(), "density": self.density.tolist()}


def dirac(tau: float) -> DelayKernel:
    """Discrete delay; ``tau == 0`` gives :class:`DiracAtZero`."""
    return DiracAtZero() if tau == 0 else Dirac(tau)


# -- spec-level operations ---------------------------------------------------


def pdf_eval(k: DelayKernel, t):
    return k.pdf(t)


def laplace(k: DelayKernel, lam: complex, *, continuation: bool = False) -> complex:
    return k.laplace(lam, continuation=continuation)


def mean_and_truncation(k: DelayKernel, tail_mass: float) -> tuple[float, float]:
    """Mean delay and the smallest horizon ``T`` with tail mass beyond ``T`` <= ``tail_mass``."""
    _check_tail(tail_mass)
    return k.mean(), k.horizon(tail_mass)


def _uniform_samples(k: DelayKernel, step: float) -> tuple[float, np.ndarray]:
    """Density samples on ``start + step * arange(m)``; returns ``(start, samples)``."""
    if isinstance(k, Erlang):
        T = k.horizon(TABULATION_TAIL)
        m = int(math.ceil(T / step)) + 1
        return 0.0, np.asarray(k.pdf(step * np.arange(m)))
    assert isinstance(k, Tabulated)
    g = k.grid
    if np.allclose(np.diff(g), step, rtol=1e-9, atol=0):
        return float(g[0]), k.density.copy()
    m = int(math.ceil((g[-1] - g[0]) / step - 1e-9)) + 1
    pts = g[0] + step * np.arange(m)
    return float(g[0]), np.interp(pts, g, k.density, left=0.0, right=0.0)


def convolve(k1: DelayKernel, k2: DelayKernel) -> DelayKernel:
    """Density of the sum of two independent delays.

    Closed forms for point masses and equal-rate Erlang pairs; everything else is
    tabulated on a common uniform grid (step = the finer input resolution) and
    convolved with trapezoid end weights.
    """
    if isinstance(k1, DiracAtZero):
        return k2
    if isinstance(k2, DiracAtZero):
        return k1
    if isinstance(k1, Dirac) and isinstance(k2, Dirac):
        return Dirac(k1.tau + k2.tau)
    if isinstance(k2, Dirac):
        k1, k2 = k2, k1
    if isinstance(k1, Dirac):
        if isinstance(k2, Erlang):
            start, dens = _uniform_samples(k2, k2.resolution)
            grid = start + k2.resolution * np.arange(dens.size)
        else:
            grid, dens = k2.grid, k2.density
        return Tabulated(grid + k1.tau, dens)
    if isinstance(k1, Erlang) and isinstance(k2, Erlang) and math.isclose(k1.rate, k2.rate, rel_tol=1e-12):
        return Erlang(k1.shape + k2.shape, k1.rate)

    step = min(k1.resolution, k2.resolution)
    s1, a = _uniform_samples(k1, step)
    s2, b = _uniform_samples(k2, step)
    a = a.copy()
    b = b.copy()
    a[[0, -1]] *= 0.5
    b[[0, -1]] *= 0.5
    c = step * signal.fftconvolve(a, b)
    c = np.maximum(c, 0.0)
    grid = s1 + s2 + step * np.arange(c.size)
    return Tabulated(grid, c)


def convolve_all(kernels) -> DelayKernel:
    out: DelayKernel = DiracAtZero()
    for k in kernels:
        out = convolve(out, k)
    return out


def kernel_from_dict(d: dict, where: str = "kernel") -> DelayKernel:
    """Build a kernel from its config fragment (see :meth:`DelayKernel.to_dict`)."""
    if not isinstance(d, dict) or "kind" not in d:
        raise ParseError(f"{where}: expected an object with a 'kind' field")
    kind = d["kind"]
    try:
        if kind == "none":
            _no_extra(d, set(), where)
            return DiracAtZero()
        if kind == "dirac":
            _no_extra(d, {"tau"}, where)
            return dirac(float(d["tau"]))
        if kind == "erlang":
            _no_extra(d, {"shape", "rate"}, where)
            shape = d["shape"]
            if isinstance(shape, float) and shape.is_integer():
                shape = int(shape)
            if not isinstance(shape, int) or isinstance(shape, bool):
                raise ParseError(f"{where}.shape: must be an integer")
            return Erlang(shape, float(d["rate"]))
        if kind == "tabulated":
            _no_extra(d, {"grid", "density"}, where)
            return Tabulated(np.asarray(d["grid"], float), np.asarray(d["density"], float))
    except ParseError:
        raise
    except KeyError as exc:
        raise ParseError(f"{where}: missing field {exc.args[0]!r}") from None
    except KernelError as exc:
        raise ParseError(f"{where}: {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{where}: {exc}") from None
    raise ParseError(f"{where}.kind: unknown kernel kind {kind!r}")


def _no_extra(d: dict, allowed: set, where: str) -> None:
    extra = set(d) - allowed - {"kind"}
    if extra:
        raise ParseError(f"{where}: unexpected field(s) {sorted(extra)}")
