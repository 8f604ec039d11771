"""Fixed-step RK4 integration of cyclic models with delayed inputs.

Delayed inputs are evaluated from the stored grid history:

* ``DiracAtZero``: the current (substep) value of the upstream compartment;
* ``Dirac(tau)``: linear interpolation at ``t - tau`` (method of steps, ``h <= tau``);
* ``Erlang`` / ``Tabulated``: trapezoid quadrature on the lags ``0, h, 2h, ...``
  up to the kernel horizon, with weights normalized to unit mass. The lag-0
  node takes the current substep value; nodes at half-step substeps are linear
  interpolants of neighbouring grid values.

Compartments can also be flagged as *auxiliary*: instead of being advanced by
RK4 they are produced by the trapezoid recursion of the stage-integral
representation

    x_i(t) = int_0^inf g_i f_i(y_i)(t - s) exp(-int_{t-s}^t mu_i) ds,

which is how partially reduced systems are integrated.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientHistory, OutOfSpan, StepTooLarge, UnsupportedKernel
from .kernels import Dirac, DiracAtZero, Erlang, Tabulated, _check_tail
from .model import Constant, CyclicModel, Linear, Stage

# node-alignment slack when converting times to grid indices
_GRID_EPS = 1e-9


@dataclass
class Trajectory:
    """Samples of every compartment on the uniform grid ``t0 - history_span + j*h``.

    ``values`` has shape ``(n, M)``. The part with ``t <= t0`` is history.
    """

    t0: float
    h: float
    values: np.ndarray
    history_span: float = 0.0
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.h <= 0:
            raise ValueError("h must be > 0")
        m = self.history_span / self.h
        if self.history_span < 0 or abs(m - round(m)) > 1e-6:
            raise ValueError("history_span must be a nonnegative multiple of h")
        self.history_span = round(m) * self.h
        if self.labels is not None:
            self.labels = tuple(self.labels)
            if len(self.labels) != self.values.shape[0]:
                raise ValueError("labels must match the number of compartments")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def n_history(self) -> int:
        """Index of the ``t0`` node."""
        return int(round(self.history_span / self.h))

    @property
    def t_start(self) -> float:
        return self.t0 - self.history_span

    @property
    def t_end(self) -> float:
        return self.t_start + (self.values.shape[1] - 1) * self.h

    @property
    def times(self) -> np.ndarray:
        return self.t_start + self.h * np.arange(self.values.shape[1])

    def names(self) -> tuple[str, ...]:
        return self.labels if self.labels is not None else tuple(f"x{i + 1}" for i in range(self.n))

    def __getitem__(self, i) -> np.ndarray:
        return self.values[i]

    def interpolate(self, compartment: int, t):
        return interpolate(self, compartment, t)

    def window(self, t_min: float, t_max: float | None = None, t0: float | None = None) -> Trajectory:
        """Sub-trajectory on nodes in ``[t_min, t_max]``.

        ``t0`` (snapped to the grid) marks the end of the history part; by
        default the original ``t0`` clipped into the window.
        """
        i0 = int(math.ceil((t_min - self.t_start) / self.h - _GRID_EPS))
        i1 = self.values.shape[1] - 1 if t_max is None else int(math.floor((t_max - self.t_start) / self.h + _GRID_EPS))
        if i0 < 0 or i1 >= self.values.shape[1] or i0 > i1:
            raise OutOfSpan(f"window [{t_min}, {t_max}] outside [{self.t_start}, {self.t_end}]")
        start = self.t_start + i0 * self.h
        end = self.t_start + i1 * self.h
        if t0 is None:
            t0 = min(max(self.t0, start), end)
        elif not start - _GRID_EPS * self.h <= t0 <= end + _GRID_EPS * self.h:
            raise OutOfSpan(f"t0={t0} outside the window")
        span = round((t0 - start) / self.h) * self.h
        t0 = start + span
        return Trajectory(t0, self.h, self.values[:, i0 : i1 + 1].copy(), span, self.labels)

    def select(self, compartments) -> Trajectory:
        comps = list(compartments)
        labels = None if self.labels is None else tuple(self.labels[i] for i in comps)
        return Trajectory(self.t0, self.h, self.values[comps].copy(), self.history_span, labels)


@dataclass(frozen=True)
class SimConfig:
    h: float = 1e-3
    t_end: float = 50.0
    tail_mass: float = 1e-10
    method: str = "rk4"

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("h must be > 0")
        _check_tail(self.tail_mass)
        if self.method != "rk4":
            raise ValueError("only method='rk4' is supported")


def interpolate(tr: Trajectory, compartment: int, t):
    """Linear interpolation between bracketing grid nodes; exact at nodes."""
    t_arr = np.asarray(t, dtype=float)
    lo, hi = tr.t_start, tr.t_end
    tol = _GRID_EPS * tr.h
    if np.any(t_arr < lo - tol) or np.any(t_arr > hi + tol):
        raise OutOfSpan(f"t outside trajectory span [{lo}, {hi}]")
    pos = np.clip((t_arr - lo) / tr.h, 0.0, tr.values.shape[1] - 1)
    out = np.interp(pos, np.arange(tr.values.shape[1]), tr.values[compartment])
    return float(out) if np.ndim(out) == 0 else out


def kernel_lookback(k, cfg_or_tail) -> float:
    tail = cfg_or_tail.tail_mass if isinstance(cfg_or_tail, SimConfig) else cfg_or_tail
    if isinstance(k, DiracAtZero):
        return 0.0
    return k.horizon(tail)


def required_history(m: CyclicModel, cfg: SimConfig) -> float:
    """History span (a multiple of ``cfg.h``) needed by every stage's kernel."""
    need = max(kernel_lookback(s.kernel, cfg) for s in m.stages)
    return math.ceil(need / cfg.h - _GRID_EPS) * cfg.h


def constant_history(values, span: float, h: float, t0: float = 0.0, labels=None) -> Trajectory:
    vals = np.asarray(values, dtype=float).reshape(-1, 1)
    nh = int(math.ceil(span / h - _GRID_EPS))
    return Trajectory(t0, h, np.repeat(vals, nh + 1, axis=1), nh * h, labels)


def quadrature_weights(k, h: float, tail_mass: float) -> np.ndarray:
    """Unit-mass trapezoid weights for the lags ``0, h, ..., J h`` covering the horizon."""
    J = max(1, int(math.ceil(k.horizon(tail_mass) / h - _GRID_EPS)))
    dens = np.asarray(k.pdf(h * np.arange(J + 1)), dtype=float)
    w = h * dens
    w[0] *= 0.5
    w[-1] *= 0.5
    total = w.sum()
    if not total > 0:
        raise UnsupportedKernel("kernel has no mass on the quadrature grid; reduce h")
    return w / total


# -- engine ------------------------------------------------------------------


class _Input:
    """Evaluates the delayed input of one stage from stored history."""

    def __init__(self, stage: Stage, up: int, h: float, tail_mass: float):
        k = stage.kernel
        self.up = up
        if isinstance(k, DiracAtZero):
            self.kind = 0
            self.need = 0
        elif isinstance(k, Dirac):
            if h > k.tau * (1 + 1e-12):
                raise StepTooLarge(f"h={h} exceeds the Dirac delay tau={k.tau}")
            self.kind = 1
            self.lag = k.tau / h
            self.need = int(math.ceil(self.lag - _GRID_EPS))
        elif isinstance(k, (Erlang, Tabulated)):
            self.kind = 2
            w = quadrature_weights(k, h, tail_mass)
            self.w0 = float(w[0])
            self.wrev = np.ascontiguousarray(w[:0:-1])  # w_J ... w_1
            self.J = len(w) - 1
            self.need = self.J
        else:  # pragma: no cover
            raise UnsupportedKernel(f"unsupported kernel {type(k).__name__}")


class _Engine:
    def __init__(self, m: CyclicModel, history: Trajectory, cfg: SimConfig, aux=()):
        self.m = m
        self.cfg = cfg
        h = cfg.h
        if abs(history.h - h) > 1e-12 * h:
            raise ValueError(f"history step {history.h} differs from cfg.h={h}")
        if history.n != m.n:
            raise InsufficientHistory(f"history has {history.n} compartments, model needs {m.n}")
        self.aux = sorted(set(aux))
        if m.n - 1 in self.aux:
            raise ValueError("the last compartment cannot be auxiliary")
        self.inputs = [_Input(s, m.upstream(i), h, cfg.tail_mass) for i, s in enumerate(m.stages)]
        need = max(inp.need for inp in self.inputs)
        nh = history.n_history
        if nh < need:
            raise InsufficientHistory(
                f"history span {history.history_span:g} shorter than required {need * h:g}"
            )
        self.N = int(round((cfg.t_end - history.t0) / h))
        if self.N < 1:
            raise ValueError("t_end must exceed the history end time")
        self.nh = nh
        self.store = np.empty((m.n, nh + self.N + 1))
        self.store[:, : nh + 1] = history.values[:, : nh + 1]
        self.t0 = history.t0
        self.h = h
        self.labels = m.labels if m.labels is not None else history.labels
        # running window sums: S0 at the start of the current step
        self._s0 = {}
        self._s1 = {}

    # delayed input of stage i at substep c in {0, 0.5, 1} of step k (store index j = nh + k)
    def _input(self, i: int, j: int, c: float, cur: list) -> float:
        inp = self.inputs[i]
        if inp.kind == 0:
            return cur[inp.up]
        row = self.store[inp.up]
        if inp.kind == 1:
            p = j + c - inp.lag
            q = math.floor(p + _GRID_EPS)
            fr = p - q
            if fr <= _GRID_EPS:
                return float(row[q])
            return float(row[q] + fr * (row[q + 1] - row[q]))
        # window
        if c == 0.0:
            s = self._s0[i]
        elif c == 1.0:
            s = self._s1[i]
        else:
            s = 0.5 * (self._s0[i] + self._s1[i])
        return inp.w0 * cur[inp.up] + s

    def _prepare_windows(self, j: int) -> None:
        for i, inp in enumerate(self.inputs):
            if inp.kind == 2:
                if i in self._s1:
                    self._s0[i] = self._s1[i]
                else:
                    self._s0[i] = float(np.dot(inp.wrev, self.store[inp.up, j - inp.J : j]))
                self._s1[i] = float(np.dot(inp.wrev, self.store[inp.up, j - inp.J + 1 : j + 1]))

    def _source(self, i: int, y: float, xn: float) -> float:
        s = self.m.stages[i]
        return s.gate(xn) * s.feedback(y)

    def run(self) -> Trajectory:
        m, h, n = self.m, self.h, self.m.n
        stages = m.stages
        aux = self.aux
        is_aux = [i in aux for i in range(n)]
        dyn = [i for i in range(n) if not is_aux[i]]
        j = self.nh
        x = [float(v) for v in self.store[:, j]]
        # auxiliary bookkeeping: source and clearance at the current node
        self._prepare_windows(j)
        src0 = [0.0] * n
        mu0 = [0.0] * n
        cur = list(x)
        for i in aux:
            y = self._input(i, j, 0.0, cur)
            src0[i] = self._source(i, y, cur[-1])
            mu0[i] = stages[i].clearance(cur[-1])

        def fill_aux(cur, c, out_src=None):
            xn = cur[-1]
            dt = c * h
            for i in aux:
                y = self._input(i, j, c, cur)
                r = self._source(i, y, xn)
                mu = stages[i].clearance(xn)
                if c == 0.0:
                    cur[i] = x[i]
                else:
                    e = math.exp(-0.5 * dt * (mu0[i] + mu))
                    cur[i] = e * x[i] + 0.5 * dt * (src0[i] * e + r)
                if out_src is not None:
                    out_src[i] = (r, mu)

        def deriv(cur, c):
            xn = cur[-1]
            d = [0.0] * n
            for i in dyn:
                s = stages[i]
                y = self._input(i, j, c, cur)
                d[i] = s.gate(xn) * s.feedback(y) - s.clearance(xn) * cur[i]
            return d

        for step in range(self.N):
            if step:
                self._prepare_windows(j)
            # k1
            cur = list(x)
            fill_aux(cur, 0.0)
            k1 = deriv(cur, 0.0)
            cur = list(x)
            for i in dyn:
                cur[i] = x[i] + 0.5 * h * k1[i]
            fill_aux(cur, 0.5)
            k2 = deriv(cur, 0.5)
            cur = list(x)
            for i in dyn:
                cur[i] = x[i] + 0.5 * h * k2[i]
            fill_aux(cur, 0.5)
            k3 = deriv(cur, 0.5)
            cur = list(x)
            for i in dyn:
                cur[i] = x[i] + h * k3[i]
            fill_aux(cur, 1.0)
            k4 = deriv(cur, 1.0)
            new = list(x)
            for i in dyn:
                new[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            if aux:
                info = {}
                fill_aux(new, 1.0, info)
                for i in aux:
                    src0[i], mu0[i] = info[i]
            j += 1
            self.store[:, j] = new
            x = new
        return Trajectory(self.t0, h, self.store, self.nh * h, self.labels)


def integrate_cyclic(m: CyclicModel, history: Trajectory, cfg: SimConfig, *, aux=()) -> Trajectory:
    """Extend ``history`` to ``cfg.t_end`` with fixed-step RK4.

    Parameters
    ----------
    m : CyclicModel
    history : Trajectory
        Grid values on ``[t0 - H, t0]`` for every compartment, step ``cfg.h``.
        Nodes after ``t0`` are ignored.
    cfg : SimConfig
    aux : iterable of int, optional
        Compartments produced by the stage-integral recursion instead of RK4.

    Returns
    -------
    Trajectory
        History plus the computed span, on one grid.

    Raises
    ------
    InsufficientHistory
        If ``H`` is shorter than some stage's kernel horizon at ``cfg.tail_mass``.
    StepTooLarge
        If ``cfg.h`` exceeds a positive Dirac delay.
    """
    return _Engine(m, history, cfg, aux).run()


def simulate(m: CyclicModel, x0, cfg: SimConfig, t0: float = 0.0, *, aux=()) -> Trajectory:
    """Integrate from the constant history ``x0`` extended back over the required span."""
    span = required_history(m, cfg)
    hist = constant_history(x0, span, cfg.h, t0, m.labels)
    return integrate_cyclic(m, hist, cfg, aux=aux)


# -- linear chain expansion --------------------------------------------------


@dataclass(frozen=True)
class LCTExpansion:
    model: CyclicModel
    mapping: tuple[int, ...]  # original compartment -> expanded index
    chains: dict = field(default_factory=dict)  # stage -> expanded indices of its chain

    def lift_state(self, x0) -> list[float]:
        """Expanded constant state: chain compartments take their upstream value."""
        out = [0.0] * self.model.n
        for i, k in enumerate(self.mapping):
            out[k] = float(x0[i])
        n = len(self.mapping)
        for i, idx in self.chains.items():
            for k in idx:
                out[k] = float(x0[(i - 1) % n])
        return out


def expand_erlang_lct(m: CyclicModel) -> LCTExpansion:
    """Replace each ``Erlang(j, V)`` edge by ``j`` linear transit compartments.

    Transit compartment ``r`` obeys ``z_r' = V z_{r-1} - V z_r`` with ``z_0`` the
    upstream compartment, so ``z_j`` equals the Erlang-weighted history average.
    """
    stages: list[Stage] = []
    labels: list[str] = []
    mapping: list[int] = []
    chains: dict = {}
    for i, s in enumerate(m.stages):
        k = s.kernel
        if isinstance(k, Tabulated):
            raise UnsupportedKernel(f"stage {i + 1}: tabulated kernels have no finite chain")
        if isinstance(k, Erlang):
            idx = []
            for r in range(k.shape):
                idx.append(len(stages))
                stages.append(Stage(Linear(k.rate), DiracAtZero(), Constant(k.rate)))
                labels.append(f"{m.names[i]}_lct{r + 1}")
            chains[i] = tuple(idx)
            s = Stage(s.feedback, DiracAtZero(), s.clearance, s.gate)
        mapping.append(len(stages))
        stages.append(s)
        labels.append(m.names[i])
    return LCTExpansion(CyclicModel(tuple(stages), tuple(labels), m.notes), tuple(mapping), chains)


def write_csv(tr: Trajectory, path, *, include_history: bool = False, every: int = 1) -> None:
    """Write ``t,<labels>`` rows with 17 significant digits."""
    start = 0 if include_history else tr.n_history
    t = tr.times
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", *tr.names()])
        for j in range(start, tr.values.shape[1], every):
            w.writerow([f"{t[j]:.17g}", *(f"{v:.17g}" for v in tr.values[:, j])])
