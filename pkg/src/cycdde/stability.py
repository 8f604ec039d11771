"""Equilibria, characteristic functions, complex roots and Hopf scans.

Linearizing stage ``i`` at an equilibrium with Laplace variable ``lam`` gives

    (lam + nu_i) dx_i = a_i L_i(lam) dx_{i-1} + b_i dx_n,

    a_i = g_i(x*) f_i'(x*_{i-1}),   nu_i = mu_i(x*),
    b_i = g_i'(x*) f_i(x*_{i-1}) - mu_i'(x*) x*_i.

Eliminating ``dx_1 .. dx_{n-1}`` (``dx_0 = dx_n``) leaves a scalar equation. With
``P_i = prod_{j<=i} (lam + nu_j)`` and ``d_0 = 1``, ``d_i = a_i L_i d_{i-1} + b_i P_{i-1}``,
the characteristic function with cleared denominators is

    D(lam) = (lam + nu_n - b_n) P_{n-1}(lam) - a_n L_n(lam) d_{n-1}(lam),

and ``Delta = D / P_{n-1}`` is the scalar form. When every ``b_i`` (i < n)
vanishes, ``d_{n-1} = prod a_i L_i`` and ``Delta`` is the familiar product of
per-stage transfer factors ``a_i L_i / (lam + nu_i)``. ``D`` equals
``det(lam I - J(lam))`` of the full linearized system, which is checked against
a finite-difference Jacobian whenever some ``b_i`` is nonzero.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import (
    CharacteristicMismatch,
    EquilibriumLostDuringSweep,
    InfeasibleParameters,
    NotAnEquilibrium,
    PoleAtEvaluation,
    ZeroClearanceAtCandidate,
)
from .kernels import Dirac, DiracAtZero, Erlang, Tabulated
from .model import CyclicModel, Zero

EQ_XTOL = 1e-14
DEDUP_TOL = 1e-6


# -- equilibria --------------------------------------------------------------


@dataclass
class EquilibriumRoot:
    x_star: float
    residual: float
    stage_values: tuple[float, ...]
    mu_star: float
    branch: str = "composition"

    @property
    def state(self) -> np.ndarray:
        return np.array([*self.stage_values, self.x_star])

    @property
    def positive(self) -> bool:
        return self.x_star > 0 and all(v > 0 for v in self.stage_values)

    def to_dict(self) -> dict:
        return {
            "x_star": self.x_star,
            "residual": self.residual,
            "stage_values": list(self.stage_values),
            "mu_star": self.mu_star,
            "branch": self.branch,
        }


@dataclass
class EquilibriumReport:
    roots: list[EquilibriumRoot]
    interval: tuple[float, float]
    n_brackets: int
    flags: dict = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    def positive_roots(self) -> list[EquilibriumRoot]:
        return [r for r in self.roots if r.positive]

    def to_dict(self, labels=None) -> dict:
        d = {
            "interval": list(self.interval),
            "n_brackets": self.n_brackets,
            "roots": [r.to_dict() for r in self.roots],
            "flags": self.flags,
            "notes": self.notes,
        }
        if labels is not None:
            for r, rd in zip(self.roots, d["roots"]):
                rd["state"] = dict(zip(labels, (float(v) for v in r.state)))
        return d


def state_residual(m: CyclicModel, state) -> float:
    """max |rhs| at a constant state (inputs equal their upstream values)."""
    x = np.asarray(state, dtype=float)
    y = np.array([x[m.upstream(i)] for i in range(m.n)])
    return float(np.max(np.abs(m.rhs(x, y))))


def _compose(m: CyclicModel, x: float, start: int, value: float) -> list[float]:
    """Stage values from ``start`` (given ``value`` there) to n-1 at ``x_n = x``."""
    vals = [value]
    for s in m.stages[start + 1 : m.n - 1]:
        mu = float(s.clearance(x))
        if mu == 0:
            raise ZeroClearanceAtCandidate(f"clearance vanishes at x={x:g}")
        vals.append(float(s.gate(x) * s.feedback(vals[-1])) / mu)
    return vals


def _closing(m: CyclicModel, x: float, last: float) -> float:
    s = m.stages[-1]
    return float(s.gate(x) * s.feedback(last) - s.clearance(x) * x)


def _scan_roots(fun, lo: float, hi: float, n: int) -> list[float]:
    xs = np.linspace(lo, hi, n + 1)
    vals = []
    for x in xs:
        try:
            v = fun(float(x))
        except ZeroClearanceAtCandidate:
            v = math.nan
        vals.append(v)
    roots = []
    for j in range(n):
        a, b = vals[j], vals[j + 1]
        if a == 0.0:
            roots.append(float(xs[j]))
            continue
        if not (math.isfinite(a) and math.isfinite(b)):
            continue
        if a * b < 0:
            roots.append(optimize.brentq(fun, xs[j], xs[j + 1], xtol=EQ_XTOL, rtol=4 * np.finfo(float).eps))
    if vals[-1] == 0.0:
        roots.append(float(xs[-1]))
    return roots


def _is_pole(m: CyclicModel, x: float, span: float) -> bool:
    """True if an intermediate clearance changes sign within ``x +- span``."""
    for s in m.stages[: m.n - 1]:
        a, b = float(s.clearance(x - span)), float(s.clearance(x + span))
        if a * b <= 0:
            return True
    return False


def find_equilibria(m: CyclicModel, interval=(0.0, 10.0), n_brackets: int = 200) -> EquilibriumReport:
    """Equilibria of the reduced scalar equation for ``x_n``.

    Regular models use ``r(x) = g_n(x) f_n(G_{n-1}(x)) - mu_n(x) x`` with the
    constant composition ``G_i = g_i f_i(G_{i-1}) / mu_i``. If stage 1 has Zero
    feedback (self-renewal), nonzero equilibria need ``mu_1(x*) = 0``; ``x*`` is
    located from that condition and ``x_1*`` is then solved from ``r = 0``.
    """
    lo, hi = float(interval[0]), float(interval[1])
    if not lo < hi:
        raise ValueError("interval must satisfy lo < hi")
    if isinstance(m.stages[0].feedback, Zero):
        return _self_renewal_equilibria(m, lo, hi, n_brackets)
    step = (hi - lo) / n_brackets

    def r(x):
        vals = _compose(m, x, 0, float(m.stages[0].gate(x) * m.stages[0].feedback(x)) / _mu(m, 0, x))
        return _closing(m, x, vals[-1])

    roots = []
    notes = []
    for x in _scan_roots(r, lo, hi, n_brackets):
        if _is_pole(m, x, step):
            if abs(r(x)) > 1e-6:
                continue  # sign change through a pole
            raise ZeroClearanceAtCandidate(f"intermediate clearance vanishes near candidate x={x:g}")
        vals = _compose(m, x, 0, float(m.stages[0].gate(x) * m.stages[0].feedback(x)) / _mu(m, 0, x))
        root = EquilibriumRoot(x, 0.0, tuple(vals), float(m.stages[-1].clearance(x)),
                               "trivial" if x == 0 else "composition")
        root.residual = state_residual(m, root.state)
        roots.append(root)
    roots = _dedup_real(roots)
    flags = {
        "no_bracket": not roots,
        "positive_equilibrium": any(rt.positive for rt in roots),
        "self_renewal": False,
    }
    if not roots:
        notes.append("no sign change of the equilibrium residual in the interval")
    return EquilibriumReport(roots, (lo, hi), n_brackets, flags, notes)


def _mu(m, i, x):
    mu = float(m.stages[i].clearance(x))
    if mu == 0:
        raise ZeroClearanceAtCandidate(f"stage {i + 1} clearance vanishes at x={x:g}")
    return mu


def _dedup_real(roots: list[EquilibriumRoot]) -> list[EquilibriumRoot]:
    out: list[EquilibriumRoot] = []
    for r in sorted(roots, key=lambda r: r.x_star):
        if out and abs(r.x_star - out[-1].x_star) <= 1e-10 * (1 + abs(r.x_star)):
            continue
        out.append(r)
    return out


def _self_renewal_equilibria(m: CyclicModel, lo: float, hi: float, n_brackets: int) -> EquilibriumReport:
    roots: list[EquilibriumRoot] = []
    notes = ["stage-1 feedback is Zero: nonzero equilibria require mu_1(x*) = 0"]
    # trivial branch: x_1 = 0 propagates zeros along a chain with f(0) = 0
    s1 = m.stages[0]
    triv = np.zeros(m.n)
    if state_residual(m, triv) <= 1e-14:
        roots.append(EquilibriumRoot(0.0, state_residual(m, triv), tuple(float(v) for v in triv[:-1]),
                                     float(m.stages[-1].clearance(0.0)), "trivial"))
    positive = False
    cand = _scan_roots(lambda x: float(s1.clearance(x)), lo, hi, n_brackets)
    for xs in cand:
        if xs <= 0:
            continue
        mus = [float(s.clearance(xs)) for s in m.stages[1 : m.n - 1]]
        if any(mu <= 0 for mu in mus):
            notes.append(
                f"x*={xs:.12g}: an intermediate clearance is <= 0, so no positive equilibrium on this branch"
            )
            continue

        def close(x1, xs=xs):
            return _closing(m, xs, _compose(m, xs, 0, x1)[-1])

        x1 = _positive_root(close)
        if x1 is None:
            notes.append(f"x*={xs:.12g}: no positive x_1 closes the loop")
            continue
        vals = _compose(m, xs, 0, x1)
        root = EquilibriumRoot(xs, 0.0, tuple(vals), float(m.stages[-1].clearance(xs)), "self_renewal")
        root.residual = state_residual(m, root.state)
        roots.append(root)
        positive = positive or root.positive
    flags = {
        "no_bracket": not cand,
        "positive_equilibrium": positive,
        "self_renewal": True,
    }
    return EquilibriumReport(roots, (lo, hi), n_brackets, flags, notes)


def _positive_root(fun) -> float | None:
    grid = np.logspace(-12, 12, 241)
    vals = [fun(float(x)) for x in grid]
    for j in range(len(grid) - 1):
        if vals[j] == 0:
            return float(grid[j])
        if vals[j] * vals[j + 1] < 0:
            return optimize.brentq(fun, grid[j], grid[j + 1], xtol=1e-300, rtol=4 * np.finfo(float).eps)
    return None


def select_equilibrium(rep: EquilibriumReport, which: str = "positive") -> EquilibriumRoot:
    """Pick a root: ``"positive"`` (largest positive), ``"largest"`` or ``"smallest"``."""
    pool = rep.positive_roots() if which == "positive" else list(rep.roots)
    if not pool:
        raise EquilibriumLostDuringSweep("no suitable equilibrium")
    pool.sort(key=lambda r: r.x_star)
    return pool[0] if which == "smallest" else pool[-1]


# -- characteristic function -------------------------------------------------


def _laplace_vec(k, lam):
    lam = np.asarray(lam, dtype=complex)
    if isinstance(k, DiracAtZero):
        return np.ones_like(lam)
    if isinstance(k, Dirac):
        return np.exp(-lam * k.tau)
    if isinstance(k, Erlang):
        # inf at the kernel pole lam = -rate; root seeds landing there are dropped
        with np.errstate(divide="ignore", invalid="ignore"):
            return (k.rate / (k.rate + lam)) ** k.shape
    if isinstance(k, Tabulated):
        g, d = k.grid, k.density
        w = np.empty_like(g)
        w[1:-1] = 0.5 * (g[2:] - g[:-2])
        w[0] = 0.5 * (g[1] - g[0])
        w[-1] = 0.5 * (g[-1] - g[-2])
        flat = lam.reshape(-1)
        out = np.exp(-np.outer(flat, g)) @ (w * d)
        return out.reshape(lam.shape)
    raise TypeError(f"unsupported kernel {type(k).__name__}")


def _fd(fun, x, rel=1e-6):
    dx = rel * max(1.0, abs(x))
    return (fun(x + dx) - fun(x - dx)) / (2 * dx)


@dataclass(frozen=True)
class CharacteristicFn:
    """Evaluable characteristic function at one equilibrium.

    Calling the object gives ``Delta(lam)``; :meth:`cleared` gives the entire
    function ``D(lam) = Delta(lam) * prod_{i<n} (lam + nu_i)`` used for root finding.
    """

    model: CyclicModel
    state: tuple[float, ...]
    a: tuple[float, ...]
    b: tuple[float, ...]
    nu: tuple[float, ...]
    kernels: tuple
    jacobian_checked: bool = False

    @property
    def n(self) -> int:
        return len(self.a)

    @property
    def x_star(self) -> float:
        return self.state[-1]

    @property
    def poles(self) -> tuple[float, ...]:
        return tuple(-v for v in self.nu[:-1])

    @property
    def own(self) -> float:
        return self.nu[-1] - self.b[-1]

    @property
    def gain(self) -> float:
        return self.a[-1]

    def _parts(self, lam):
        P = np.ones_like(lam)
        d = np.ones_like(lam)
        for i in range(self.n - 1):
            d = self.a[i] * _laplace_vec(self.kernels[i], lam) * d + self.b[i] * P
            P = P * (lam + self.nu[i])
        return P, d

    def cleared(self, lam):
        lam_arr = np.asarray(lam, dtype=complex)
        P, d = self._parts(lam_arr)
        out = (lam_arr + self.own) * P - self.gain * _laplace_vec(self.kernels[-1], lam_arr) * d
        return complex(out) if out.ndim == 0 else out

    def __call__(self, lam):
        lam_arr = np.asarray(lam, dtype=complex)
        kernel_poles = [-k.rate for k in self.kernels if isinstance(k, Erlang)]
        for p in (*self.poles, *kernel_poles):
            if np.any(lam_arr == p):
                raise PoleAtEvaluation(f"Delta has a pole at lambda={p}")
        P, d = self._parts(lam_arr)
        out = lam_arr + self.own - self.gain * _laplace_vec(self.kernels[-1], lam_arr) * d / P
        return complex(out) if out.ndim == 0 else out

    def kernel_product(self, lam) -> complex:
        """``prod_{i<n} L[K_i](lam)``, the transform of the chained delay."""
        out = 1.0 + 0j
        for k in self.kernels[:-1]:
            out *= complex(_laplace_vec(k, lam))
        return out

    def full_determinant(self, lam, rel: float = 1e-6) -> complex:
        """``det(lam I - J_x - J_y(lam))`` from finite-difference derivatives of the model."""
        Jx, Jy = _fd_jacobians(self.model, np.asarray(self.state), rel)
        n = self.n
        M = lam * np.eye(n, dtype=complex) - Jx
        for i in range(n):
            M[i, self.model.upstream(i)] -= Jy[i] * complex(_laplace_vec(self.kernels[i], lam))
        return complex(np.linalg.det(M))

    def to_dict(self) -> dict:
        return {"state": list(self.state), "a": list(self.a), "b": list(self.b), "nu": list(self.nu),
                "kernels": [k.to_dict() for k in self.kernels]}


def _fd_jacobians(m: CyclicModel, x: np.ndarray, rel: float):
    n = m.n
    y = np.array([x[m.upstream(i)] for i in range(n)])
    Jx = np.zeros((n, n))
    for j in range(n):
        dx = rel * max(1.0, abs(x[j]))
        e = np.zeros(n)
        e[j] = dx
        Jx[:, j] = (m.rhs(x + e, y) - m.rhs(x - e, y)) / (2 * dx)
    Jy = np.zeros(n)
    for i in range(n):
        dy = rel * max(1.0, abs(y[i]))
        e = np.zeros(n)
        e[i] = dy
        Jy[i] = ((m.rhs(x, y + e) - m.rhs(x, y - e)) / (2 * dy))[i]
    return Jx, Jy


CHECK_POINTS = (0.3 + 0.7j, -0.2 + 1.9j, 1.1 - 0.4j)


def build_characteristic(m: CyclicModel, x_star: float | None = None, *, state=None, check: bool = True,
                         tol: float = 1e-8) -> CharacteristicFn:
    """Characteristic function at an equilibrium.

    Parameters
    ----------
    x_star : float, optional
        Equilibrium value of the last compartment; intermediate values follow
        from the constant composition.
    state : array_like, optional
        Full equilibrium state (needed when stage 1 has Zero feedback).
    check : bool
        Compare the cleared form against a finite-difference determinant
        when any ``b_i`` is nonzero; ``CharacteristicMismatch`` on disagreement.
    """
    if state is None:
        if x_star is None:
            raise ValueError("give x_star or state")
        if isinstance(m.stages[0].feedback, Zero):
            raise NotAnEquilibrium("stage-1 feedback is Zero: pass the full equilibrium state")
        x = float(x_star)
        vals = _compose(m, x, 0, float(m.stages[0].gate(x) * m.stages[0].feedback(x)) / _mu(m, 0, x))
        state = [*vals, x]
    state = np.asarray(state, dtype=float)
    if state.size != m.n:
        raise ValueError("state length must equal the number of stages")
    res = state_residual(m, state)
    if res > tol * max(1.0, float(np.max(np.abs(state)))):
        raise NotAnEquilibrium(f"equilibrium residual {res:.3g} exceeds {tol:g}")
    xn = float(state[-1])
    a, b, nu = [], [], []
    for i, s in enumerate(m.stages):
        up = float(state[m.upstream(i)])
        g = float(s.gate(xn))
        a.append(g * float(s.feedback.derivative(up)))
        b.append(float(s.gate.derivative(xn)) * float(s.feedback(up))
                 - float(s.clearance.derivative(xn)) * float(state[i]))
        nu.append(float(s.clearance(xn)))
    cf = CharacteristicFn(m, tuple(map(float, state)), tuple(a), tuple(b), tuple(nu),
                          tuple(s.kernel for s in m.stages))
    if check and any(v != 0 for v in b):
        for lam in CHECK_POINTS:
            want = cf.full_determinant(lam)
            got = cf.cleared(lam)
            if abs(got - want) > 1e-6 * max(1.0, abs(want)):
                raise CharacteristicMismatch(
                    f"cleared characteristic {got} differs from the Jacobian determinant {want} at {lam}"
                )
        cf = CharacteristicFn(cf.model, cf.state, cf.a, cf.b, cf.nu, cf.kernels, True)
    return cf


# -- example oracles ---------------------------------------------------------


def _p(params: dict, *keys):
    from .presets import norm_key

    norm = {norm_key(k): v for k, v in params.items()}
    out = []
    for k in keys:
        if norm_key(k) not in norm:
            raise KeyError(f"missing parameter {k!r}")
        out.append(float(norm[norm_key(k)]))
    return out


def yildirim_equilibrium_bar(params: dict, E_star: float) -> float:
    """``Ebar* = (alpha_I / gamma_I) F(exp(-nu_E tau_M) E*) / gamma_M * exp(-nu_M tau_I)``."""
    from .presets import preset

    gM, gI, aI, tM, tI, nE, nM = _p(params, "gamma_M", "gamma_I", "alpha_I", "tau_M", "tau_I", "nu_E", "nu_M")
    F = preset("yildirim", params).stages[0].feedback
    return aI / gI * float(F(E_star)) / gM * math.exp(-nM * tI)


def yildirim_char_oracle(params: dict, E_star: float, Ebar_star: float, lam, *, tol: float = 1e-8) -> complex:
    """Transcendental characteristic polynomial of the delayed lac-operon model.

    ``(lam + beta_E Ebar* K_E/(K_E+E*)^2 + gamma_E)(lam + gamma_I)(lam + gamma_M)
    - (alpha_E - beta_E E*/(K_E+E*)) alpha_I dF e^{-nu_M tau_I} e^{-lam (tau_I + tau_M)}``,
    where ``dF = d/dE F(e^{-nu_E tau_M} E)`` at ``E*``. The equilibrium relation
    ``(alpha_E - beta_E E*/(K_E+E*)) Ebar* = gamma_E E*`` is validated first.
    """
    from .presets import preset

    gM, gI, gE, aI, aE, bE, KE, tM, tI, nM = _p(
        params, "gamma_M", "gamma_I", "gamma_E", "alpha_I", "alpha_E", "beta_E", "K_E", "tau_M", "tau_I", "nu_M"
    )
    gate = aE - bE * E_star / (KE + E_star)
    if abs(gate * Ebar_star - gE * E_star) > tol * max(1.0, abs(gE * E_star)):
        raise NotAnEquilibrium("E*, Ebar* violate the equilibrium relation")
    F = preset("yildirim", params).stages[0].feedback  # includes the exp(-nu_E tau_M) input scale
    dF = float(F.derivative(E_star))
    lam = np.asarray(lam, dtype=complex)
    out = ((lam + bE * Ebar_star * KE / (KE + E_star) ** 2 + gE) * (lam + gI) * (lam + gM)
           - gate * aI * dF * math.exp(-nM * tI) * np.exp(-lam * (tI + tM)))
    return complex(out) if out.ndim == 0 else out


def _knauer_check(a1: float, a2: float) -> None:
    if not a2 < a1:
        raise InfeasibleParameters("positive equilibrium requires a_2 < a_1")
    if not 2 * a1 > 1:
        raise InfeasibleParameters("positive equilibrium requires 2 a_1 > 1")


def knauer_cubic_coeffs(params: dict) -> tuple[float, float, float, float]:
    """Printed cubic ``lam^3 + c2 lam^2 + c1 lam + c0`` (time in units of 1/p_1)."""
    a1, a2, p2, d3 = _p(params, "a_1", "a_2", "p_2", "d_3")
    _knauer_check(a1, a2)
    r = a2 / a1
    q = 1 - 1 / (2 * a1)
    c2 = (1 - r) * p2 + (1 - r) * q / (2 - r)
    c1 = ((1 - r) * (1 - r) * q / (2 - r) - q * (1 - 2 * r)) * d3 * p2
    c0 = q * (1 - 2 * r) * d3 * p2
    return 1.0, c2, c1, c0


def knauer_char_oracle(params: dict, lam) -> complex:
    """The printed Knauer cubic evaluated at ``lam``."""
    c = knauer_cubic_coeffs(params)
    lam = np.asarray(lam, dtype=complex)
    out = ((c[0] * lam + c[1]) * lam + c[2]) * lam + c[3]
    return complex(out) if out.ndim == 0 else out


def knauer_matrix(params: dict, lam) -> np.ndarray:
    """The printed 2x2 linearization matrix ``A(lam)`` in the ``(u_1, u_3)`` variables."""
    a1, a2, p2, d3 = _p(params, "a_1", "a_2", "p_2", "d_3")
    _knauer_check(a1, a2)
    r = a2 / a1
    q = 1 - 1 / (2 * a1)
    lam = complex(lam)
    A12 = q * d3 / (2 - r) * (1 - r)
    A21 = p2 * (2 - r) * (1.0 / (lam + p2 * (1 - r)))  # L[h_1(u*) = 1](lam + p_2(1 - r))
    A22 = d3 * (q * r / (2 - r) - 1) + p2 * d3 * (1 - 2 * r) * q
    return np.array([[0.0, A12], [A21, A22]], dtype=complex)


def knauer_matrix_char(params: dict, lam, *, cleared: bool = True) -> complex:
    """``det(lam I - A(lam))`` with the printed entries; optionally times ``lam + p_2(1 - a_2/a_1)``."""
    a1, a2, p2 = _p(params, "a_1", "a_2", "p_2")
    A = knauer_matrix(params, lam)
    lam = complex(lam)
    det = complex(np.linalg.det(lam * np.eye(2) - A))
    return det * (lam + p2 * (1 - a2 / a1)) if cleared else det


def knauer_jacobian_cubic_coeffs(params: dict) -> tuple[float, float, float, float]:
    """Characteristic polynomial of the Jacobian of the 3-compartment ODE at the positive equilibrium.

    Derived independently from ``det(lam I - J)`` with ``p_1 = 1``:

    ``c2 = (2a1^2 d3 + 2a1^2 p2 - 2a1 a2 d3 - 3a1 a2 p2 + a2^2 p2 + a2 d3/2) / (a1 (2a1 - a2))``
    ``c1 = d3 p2 (2a1^2 a2 + 2a1^2 - 4a1 a2 + a2^2) / (2a1^2 (2a1 - a2))``
    ``c0 = d3 p2 (2a1 - 1)(a1 - a2) / (2 a1^2)``
    """
    a1, a2, p2, d3 = _p(params, "a_1", "a_2", "p_2", "d_3")
    _knauer_check(a1, a2)
    c2 = (2 * a1**2 * d3 + 2 * a1**2 * p2 - 2 * a1 * a2 * d3 - 3 * a1 * a2 * p2 + a2**2 * p2 + a2 * d3 / 2) / (
        a1 * (2 * a1 - a2)
    )
    c1 = d3 * p2 * (2 * a1**2 * a2 + 2 * a1**2 - 4 * a1 * a2 + a2**2) / (2 * a1**2 * (2 * a1 - a2))
    c0 = d3 * p2 * (2 * a1 - 1) * (a1 - a2) / (2 * a1**2)
    return 1.0, c2, c1, c0


def routh_hurwitz_margin(coeffs) -> float:
    """``c2 c1 - c0`` for a monic cubic; positive with all coefficients positive means stable."""
    _, c2, c1, c0 = coeffs
    return c2 * c1 - c0


def knauer_rh_crossing(params: dict, d3_bracket=(1e-4, 10.0)) -> float:
    """``d_3`` where the Jacobian cubic's Routh-Hurwitz margin changes sign."""
    base = dict(params)

    def margin(d3):
        base["d_3"] = d3
        return routh_hurwitz_margin(knauer_jacobian_cubic_coeffs(base))

    return optimize.brentq(margin, *d3_bracket, xtol=1e-14, rtol=4 * np.finfo(float).eps)


# -- roots -------------------------------------------------------------------


@dataclass
class Root:
    lam: complex
    residual: float
    at_pole: bool = False

    def to_dict(self) -> dict:
        return {"re": self.lam.real, "im": self.lam.imag, "residual": self.residual, "at_pole": self.at_pole}


@dataclass
class RootReport:
    roots: list[Root]
    region: dict
    diagnostics: dict

    @property
    def rightmost_real_part(self) -> float:
        return max((r.lam.real for r in self.roots), default=-math.inf)

    @property
    def rightmost(self) -> Root | None:
        return max(self.roots, key=lambda r: (r.lam.real, r.lam.imag), default=None)

    def to_dict(self) -> dict:
        return {
            "rightmost_real_part": self.rightmost_real_part,
            "roots": [r.to_dict() for r in self.roots],
            "region": self.region,
            "diagnostics": self.diagnostics,
        }


def _newton(f, z, *, max_iter=80, h_rel=1e-7):
    """Vectorized Newton with central-difference derivatives; returns (z, converged, iterations)."""
    z = np.array(z, dtype=complex)
    active = np.ones(z.shape, dtype=bool)
    conv = np.zeros(z.shape, dtype=bool)
    iters = np.zeros(z.shape, dtype=int)
    for it in range(max_iter):
        if not active.any():
            break
        za = z[active]
        dz = h_rel * (1 + np.abs(za))
        with np.errstate(all="ignore"):
            fz = f(za)
            dfz = (f(za + dz) - f(za - dz)) / (2 * dz)
            step = fz / dfz
        bad = ~np.isfinite(step)
        step[bad] = 0
        za_new = za - step
        small = np.abs(step) <= 1e-14 * (1 + np.abs(za_new))
        done = small & ~bad
        idx = np.flatnonzero(active)
        z[idx] = za_new
        iters[idx] += 1
        conv[idx[done]] = True
        active[idx[done | bad]] = False
        # drop runaways
        far = np.abs(z) > 1e8
        active &= ~far
    return z, conv, iters


def find_roots(cf, region=None, grid=(24, 24), *, extra_seeds=(), im_min: float = 0.0) -> RootReport:
    """Grid-seeded Newton roots of a characteristic function in a rectangle.

    Parameters
    ----------
    cf : CharacteristicFn or callable
        For a :class:`CharacteristicFn` the cleared form is used; any other
        callable (vectorized over complex arrays) is used as is.
    region : dict
        ``re_min``, ``re_max``, ``im_max``. Only roots with
        ``re_min <= Re <= re_max`` and ``im_min <= Im <= im_max`` are kept
        (upper half-plane; conjugates are implied).
    grid : (int, int)
        Seeds along the real and imaginary directions.
    """
    region = {"re_min": -3.0, "re_max": 1.0, "im_max": 6.0, **(region or {})}
    f = cf.cleared if isinstance(cf, CharacteristicFn) else cf

    def fv(z):
        out = f(z)
        return np.asarray(out, dtype=complex) if np.ndim(out) else np.full(np.shape(z), out, dtype=complex)

    def fvec(z):
        try:
            return fv(z)
        except Exception:
            return np.array([complex(f(complex(v))) for v in np.ravel(z)]).reshape(np.shape(z))

    nr, ni = grid
    re = np.linspace(region["re_min"], region["re_max"], nr)
    im = np.linspace(im_min, region["im_max"], ni)
    seeds = (re[:, None] + 1j * im[None, :]).ravel()
    if len(extra_seeds):
        seeds = np.concatenate([seeds, np.asarray(extra_seeds, dtype=complex)])
    z, conv, iters = _newton(fvec, seeds)
    poles = cf.poles if isinstance(cf, CharacteristicFn) else ()
    slack = 1e-9
    kept: list[Root] = []
    # Newton converges only linearly at multiple roots; unconverged seeds are
    # still kept when they pass the residual test below
    stalls = int((~conv).sum())
    for lam in z[np.isfinite(z)]:
        lam = complex(lam)
        if abs(lam.imag) <= 1e-10 * (1 + abs(lam.real)):
            lam = complex(lam.real, 0.0)
        if not (region["re_min"] - slack <= lam.real <= region["re_max"] + slack):
            continue
        if not (im_min - slack <= lam.imag <= region["im_max"] + slack):
            continue
        res = abs(complex(fvec(np.array([lam]))[0]))
        if res > 1e-9 * (1 + abs(lam)) * max(1.0, _scale(fvec, lam)):
            continue
        if any(abs(lam - r.lam) <= DEDUP_TOL for r in kept):
            continue
        at_pole = any(abs(lam - p) <= 1e-8 * (1 + abs(p)) for p in poles)
        kept.append(Root(lam, res, at_pole))
    kept.sort(key=lambda r: (-r.lam.real, r.lam.imag))
    diag = {
        "grid": [nr, ni],
        "seeds": int(seeds.size),
        "converged": int(conv.sum()),
        "stalled": stalls,
        "max_newton_iterations": int(iters.max()) if iters.size else 0,
        "function": "cleared" if isinstance(cf, CharacteristicFn) else "callable",
    }
    return RootReport(kept, region, diag)


def _scale(f, lam) -> float:
    """Magnitude of the terms of ``f`` near ``lam``, for scale-aware residual checks."""
    ring = lam + 0.5 * (1 + abs(lam)) * np.exp(2j * np.pi * np.arange(4) / 4)
    with np.errstate(all="ignore"):
        v = np.abs(f(ring))
    v = v[np.isfinite(v)]
    return float(v.max()) if v.size else 1.0


# -- Hopf scans --------------------------------------------------------------


@dataclass
class ScanPoint:
    param: float
    rightmost_re: float
    rightmost_im: float
    n_roots: int
    x_star: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class Crossing:
    param: float
    omega: float
    direction: str  # "destabilizing" if Re increases with the parameter

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class ScanReport:
    points: list[ScanPoint]
    crossings: list[Crossing]
    region: dict
    grid: tuple[int, int]

    def to_dict(self) -> dict:
        return {
            "points": [p.to_dict() for p in self.points],
            "crossings": [c.to_dict() for c in self.crossings],
            "region": self.region,
            "grid": list(self.grid),
        }


def _cf_at(family, p, interval, n_brackets, which):
    m = family(p)
    try:
        rep = find_equilibria(m, interval, n_brackets)
        root = select_equilibrium(rep, which)
    except EquilibriumLostDuringSweep:
        raise EquilibriumLostDuringSweep(f"no equilibrium at parameter {p!r}") from None
    return build_characteristic(m, state=root.state), root


def _track(cf: CharacteristicFn, seed: complex) -> complex:
    z, conv, _ = _newton(lambda v: np.asarray(cf.cleared(v), dtype=complex), np.array([seed]))
    if not conv[0]:
        raise RuntimeError("root tracking failed")
    return complex(z[0])


def hopf_scan(family, params, region=None, grid=(24, 24), *, interval=(0.0, 10.0), n_brackets: int = 200,
              which: str = "positive", xtol: float = 1e-12) -> ScanReport:
    """Sweep a one-parameter model family and locate stability changes.

    Parameters
    ----------
    family : callable
        ``family(p) -> CyclicModel``.
    params : sequence of float
        Sweep values (sorted ascending in the report).
    region, grid
        Passed to :func:`find_roots` at each sweep point.
    which : str
        Equilibrium selection, see :func:`select_equilibrium`.

    A sign change of the rightmost real part between neighbours is refined by
    tracking the rightmost root with Newton and solving ``Re lam(p) = 0`` for
    ``p``; the crossing reports ``omega = |Im lam|`` there.
    """
    ps = sorted(float(p) for p in params)
    pts: list[ScanPoint] = []
    rightmost: list[Root | None] = []
    for p in ps:
        cf, root = _cf_at(family, p, interval, n_brackets, which)
        rr = find_roots(cf, region, grid)
        top = rr.rightmost
        rightmost.append(top)
        pts.append(ScanPoint(p, rr.rightmost_real_part, top.lam.imag if top else math.nan, len(rr.roots), root.x_star))
    crossings: list[Crossing] = []
    for j in range(len(ps) - 1):
        s0, s1 = pts[j].rightmost_re, pts[j + 1].rightmost_re
        if not (math.isfinite(s0) and math.isfinite(s1)) or s0 * s1 > 0 or s0 == s1:
            continue
        p0, p1 = ps[j], ps[j + 1]
        # follow the root that is on the right at the unstable end
        unstable_end = j if s0 > 0 else j + 1
        seed_p = ps[unstable_end]
        seed = rightmost[unstable_end].lam
        cache = {seed_p: seed}

        def re_at(p):
            near = min(cache, key=lambda q: abs(q - p))
            cf, _ = _cf_at(family, p, interval, n_brackets, which)
            lam = _track(cf, cache[near])
            cache[p] = lam
            return lam.real

        pc = optimize.brentq(re_at, p0, p1, xtol=xtol, rtol=4 * np.finfo(float).eps)
        cf, _ = _cf_at(family, pc, interval, n_brackets, which)
        lam = _track(cf, cache[min(cache, key=lambda q: abs(q - pc))])
        crossings.append(Crossing(pc, abs(lam.imag), "destabilizing" if s1 > s0 else "stabilizing"))
    return ScanReport(pts, crossings, dict(region or {}), tuple(grid))


# -- CSV ---------------------------------------------------------------------


def write_roots_csv(rep: RootReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["re", "im", "residual"])
        for r in rep.roots:
            w.writerow([f"{r.lam.real:.17g}", f"{r.lam.imag:.17g}", f"{r.residual:.17g}"])


def write_scan_csv(rep: ScanReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["param", "rightmost_re", "rightmost_im", "n_roots_in_region"])
        for p in rep.points:
            w.writerow([f"{p.param:.17g}", f"{p.rightmost_re:.17g}", f"{p.rightmost_im:.17g}", p.n_roots])
