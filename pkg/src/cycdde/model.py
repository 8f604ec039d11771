"""Cyclic compartmental models with distributed delays.

Stage ``i`` (0-based here, ``i - 1`` is taken mod ``n``) obeys

    dx_i/dt = g_i(x_n) * f_i( int_0^inf x_{i-1}(t - phi) K_i(phi) dphi ) - mu_i(x_n) * x_i

where ``x_n`` is the last compartment. ``f_i`` is a :class:`FeedbackFn`, the gate
``g_i`` and clearance ``mu_i`` are :class:`StateFn` objects of the last
compartment, and ``K_i`` is a :class:`~cycdde.kernels.DelayKernel`.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import ModelError, ParseError
from .kernels import DelayKernel, DiracAtZero, KernelError, kernel_from_dict


def _clip0(x):
    if isinstance(x, float):
        return x if x > 0.0 else 0.0
    return np.maximum(x, 0.0)


class _Fn:
    """Shared plumbing for feedback and state functions."""

    kind = ""

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        for f in fields(self):
            d[f.name] = getattr(self, f.name)
        return d

    def _require(self, cond: bool, msg: str) -> None:
        if not cond:
            raise ModelError(f"{type(self).__name__}: {msg}")

    def _finite(self):
        for f in fields(self):
            v = getattr(self, f.name)
            self._require(math.isfinite(v), f"{f.name} must be finite")
            object.__setattr__(self, f.name, float(v))


# -- feedback functions f_i --------------------------------------------------


class FeedbackFn(_Fn):
    def __call__(self, x):
        raise NotImplementedError

    def derivative(self, x):
        raise NotImplementedError

    @property
    def nonnegative(self) -> bool:
        """f(x) >= 0 for all x >= 0."""
        return True

    @property
    def positive_preserving(self) -> bool:
        """f(0) = 0 and f(x) > 0 for x > 0."""
        return True


@dataclass(frozen=True)
class Zero(FeedbackFn):
    kind = "zero"

    def __call__(self, x):
        return 0.0 * x

    def derivative(self, x):
        return 0.0 * x

    @property
    def positive_preserving(self):
        return False


@dataclass(frozen=True)
class Linear(FeedbackFn):
    alpha: float
    kind = "linear"

    def __post_init__(self):
        self._finite()
        self._require(self.alpha >= 0, "alpha must be >= 0")

    def __call__(self, x):
        return self.alpha * x

    def derivative(self, x):
        return self.alpha + 0.0 * x

    @property
    def positive_preserving(self):
        return self.alpha > 0


@dataclass(frozen=True)
class ScaledLinear(FeedbackFn):
    """``alpha * exp_factor * x``; ``exp_factor`` carries survival through a delay."""

    alpha: float
    exp_factor: float
    kind = "scaled_linear"

    def __post_init__(self):
        self._finite()
        self._require(self.alpha >= 0, "alpha must be >= 0")
        self._require(self.exp_factor > 0, "exp_factor must be > 0")

    def __call__(self, x):
        return self.alpha * self.exp_factor * x

    def derivative(self, x):
        return self.alpha * self.exp_factor + 0.0 * x

    @property
    def positive_preserving(self):
        return self.alpha > 0


@dataclass(frozen=True)
class ConstantFeedback(FeedbackFn):
    c: float
    kind = "constant"

    def __post_init__(self):
        self._finite()
        self._require(self.c >= 0, "c must be >= 0")

    def __call__(self, x):
        return self.c + 0.0 * x

    def derivative(self, x):
        return 0.0 * x

    @property
    def positive_preserving(self):
        return False


@dataclass(frozen=True)
class _Hill(FeedbackFn):
    vmax: float
    K: float
    n: float
    scale: float = 1.0

    def __post_init__(self):
        self._finite()
        self._require(self.vmax > 0, "vmax must be > 0")
        self._require(self.K > 0, "K must be > 0")
        self._require(self.n >= 1, "n must be >= 1")
        self._require(self.scale > 0, "scale must be > 0")


@dataclass(frozen=True)
class HillUp(_Hill):
    """``vmax * u^n / (K^n + u^n)`` with ``u = scale * max(x, 0)``."""

    kind = "hill_up"

    def __call__(self, x):
        un = (self.scale * _clip0(x)) ** self.n
        return self.vmax * un / (self.K**self.n + un)

    def derivative(self, x):
        u = self.scale * _clip0(x)
        kn = self.K**self.n
        return self.scale * self.vmax * self.n * kn * u ** (self.n - 1) / (kn + u**self.n) ** 2


@dataclass(frozen=True)
class HillDown(_Hill):
    """``vmax * K^n / (K^n + u^n)`` with ``u = scale * max(x, 0)``; repressive feedback."""

    kind = "hill_down"

    def __call__(self, x):
        kn = self.K**self.n
        return self.vmax * kn / (kn + (self.scale * _clip0(x)) ** self.n)

    def derivative(self, x):
        u = self.scale * _clip0(x)
        kn = self.K**self.n
        return -self.scale * self.vmax * self.n * kn * u ** (self.n - 1) / (kn + u**self.n) ** 2

    @property
    def positive_preserving(self):
        return False


FEEDBACK_KINDS = {c.kind: c for c in (Zero, Linear, ScaledLinear, ConstantFeedback, HillUp, HillDown)}


# -- state functions g_i, mu_i -----------------------------------------------


class StateFn(_Fn):
    def __call__(self, x):
        raise NotImplementedError

    def derivative(self, x):
        raise NotImplementedError

    def bounds(self) -> tuple[float, float]:
        """Infimum and supremum over x >= 0."""
        raise NotImplementedError


@dataclass(frozen=True)
class Constant(StateFn):
    c: float
    kind = "constant"

    def __post_init__(self):
        self._finite()

    def __call__(self, x):
        return self.c + 0.0 * x

    def derivative(self, x):
        return 0.0 * x

    def bounds(self):
        return self.c, self.c


@dataclass(frozen=True)
class HillGate(StateFn):
    """``offset + a / (1 + k x)``. ``a`` may be negative (net self-renewal)."""

    a: float
    k: float
    offset: float = 0.0
    kind = "hill_gate"

    def __post_init__(self):
        self._finite()
        self._require(self.k > 0, "k must be > 0")

    def __call__(self, x):
        return self.offset + self.a / (1.0 + self.k * x)

    def derivative(self, x):
        return -self.a * self.k / (1.0 + self.k * x) ** 2

    def bounds(self):
        ends = (self.offset + self.a, self.offset)
        return min(ends), max(ends)


@dataclass(frozen=True)
class SaturatingLoss(StateFn):
    """``alpha - beta x / (K + x)``."""

    alpha: float
    beta: float
    K: float
    kind = "saturating_loss"

    def __post_init__(self):
        self._finite()
        self._require(self.alpha >= 0, "alpha must be >= 0")
        self._require(self.beta >= 0, "beta must be >= 0")
        self._require(self.K > 0, "K must be > 0")

    def __call__(self, x):
        return self.alpha - self.beta * x / (self.K + x)

    def derivative(self, x):
        return -self.beta * self.K / (self.K + x) ** 2

    def bounds(self):
        return self.alpha - self.beta, self.alpha


STATE_KINDS = {c.kind: c for c in (Constant, HillGate, SaturatingLoss)}


# -- stages and models -------------------------------------------------------


@dataclass(frozen=True)
class Stage:
    feedback: FeedbackFn
    kernel: DelayKernel
    clearance: StateFn
    gate: StateFn = field(default_factory=lambda: Constant(1.0))

    def __post_init__(self):
        if not isinstance(self.feedback, FeedbackFn):
            raise ModelError("stage feedback must be a FeedbackFn")
        if not isinstance(self.kernel, DelayKernel):
            raise ModelError("stage kernel must be a DelayKernel")
        if not isinstance(self.gate, StateFn) or not isinstance(self.clearance, StateFn):
            raise ModelError("stage gate and clearance must be StateFn objects")

    def to_dict(self) -> dict:
        return {
            "feedback": self.feedback.to_dict(),
            "kernel": self.kernel.to_dict(),
            "gate": self.gate.to_dict(),
            "clearance": self.clearance.to_dict(),
        }


@dataclass(frozen=True)
class CyclicModel:
    """An ordered cycle of stages; stage ``i`` consumes compartment ``i - 1`` (mod n).

    ``notes`` carries feasibility flags raised at construction (e.g. by presets).
    """

    stages: tuple[Stage, ...]
    labels: tuple[str, ...] | None = None
    notes: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))
        if self.labels is not None:
            labels = tuple(str(s) for s in self.labels)
            if len(labels) != len(self.stages):
                raise ModelError("labels must match the number of stages")
            object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "notes", tuple(self.notes))

    @property
    def n(self) -> int:
        return len(self.stages)

    @property
    def names(self) -> tuple[str, ...]:
        return self.labels if self.labels is not None else tuple(f"x{i + 1}" for i in range(self.n))

    def upstream(self, i: int) -> int:
        return (i - 1) % self.n

    def rhs(self, x, y):
        """Right-hand side given the current state ``x`` and kernel-averaged inputs ``y``.

        ``y[i]`` is the delayed input of stage ``i``, i.e. the kernel average of
        compartment ``i - 1``.
        """
        xn = x[-1]
        return np.array(
            [s.gate(xn) * s.feedback(y[i]) - s.clearance(xn) * x[i] for i, s in enumerate(self.stages)]
        )

    def to_dict(self) -> dict:
        d = {"stages": [s.to_dict() for s in self.stages]}
        if self.labels is not None:
            d["labels"] = list(self.labels)
        return d


@dataclass
class ValidationReport:
    errors: list[str]
    nonnegativity_ok: bool
    strict_hypotheses: bool
    uniform_clearance: bool
    notes: list[str]

    @property
    def valid(self) -> bool:
        return not self.errors

    def to_dict(self) -> dict:
        return {
            "valid": self.valid,
            "errors": self.errors,
            "nonnegativity_ok": self.nonnegativity_ok,
            "strict_hypotheses": self.strict_hypotheses,
            "uniform_clearance": self.uniform_clearance,
            "notes": self.notes,
        }


def validate(m: CyclicModel) -> ValidationReport:
    """Structural checks plus the hypotheses of the non-negativity result.

    ``nonnegativity_ok`` asks for feedbacks and gates that are nonnegative on
    ``[0, inf)`` and clearances bounded above; under these, nonnegative initial
    data stay nonnegative. ``strict_hypotheses`` additionally asks for
    ``f(0) = 0`` and ``f > 0`` on ``x > 0`` at every stage.
    """
    errors: list[str] = []
    notes: list[str] = list(m.notes)
    if m.n < 2:
        errors.append("n >= 2 required")
    nonneg = True
    strict = True
    for i, s in enumerate(m.stages):
        tag = f"stage-{i + 1}"
        if not s.feedback.nonnegative:
            nonneg = False
            notes.append(f"{tag} feedback can be negative")
        if s.gate.bounds()[0] < 0:
            nonneg = False
            notes.append(f"{tag} gate can be negative on x >= 0")
        if not math.isfinite(s.clearance.bounds()[1]):
            nonneg = False
            notes.append(f"{tag} clearance is not bounded above")
        if isinstance(s.feedback, Zero):
            strict = False
            notes.append(f"{tag} feedback is Zero: self-renewal-only first stage" if i == 0
                         else f"{tag} feedback is Zero: stage is decoupled from its upstream")
        elif not s.feedback.positive_preserving:
            strict = False
            notes.append(f"{tag} feedback {s.feedback.kind} has f(0) != 0 or f not positive on x > 0")
    uniform = len({json.dumps(s.clearance.to_dict(), sort_keys=True) for s in m.stages}) <= 1
    return ValidationReport(errors, nonneg and not errors, strict and nonneg and not errors, uniform, notes)


# -- config documents --------------------------------------------------------


def _fn_from_dict(d, registry: dict, where: str):
    if not isinstance(d, dict) or "kind" not in d:
        raise ParseError(f"{where}: expected an object with a 'kind' field")
    cls = registry.get(d["kind"])
    if cls is None:
        raise ParseError(f"{where}.kind: unknown kind {d['kind']!r}")
    params = {k: v for k, v in d.items() if k != "kind"}
    names = {f.name for f in fields(cls)}
    extra = set(params) - names
    if extra:
        raise ParseError(f"{where}: unexpected field(s) {sorted(extra)}")
    for k, v in params.items():
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ParseError(f"{where}.{k}: expected a number, got {v!r}")
    try:
        return cls(**params)
    except TypeError as exc:
        raise ParseError(f"{where}: {exc}") from None
    except ModelError as exc:
        raise ParseError(f"{where}: {exc}") from None


def model_from_dict(d: dict) -> CyclicModel:
    if not isinstance(d, dict):
        raise ParseError("model document must be an object")
    extra = set(d) - {"stages", "labels"}
    if extra:
        raise ParseError(f"model: unexpected field(s) {sorted(extra)}")
    stages_doc = d.get("stages")
    if not isinstance(stages_doc, list):
        raise ParseError("stages: expected a list")
    stages = []
    for i, sd in enumerate(stages_doc):
        where = f"stages[{i}]"
        if not isinstance(sd, dict):
            raise ParseError(f"{where}: expected an object")
        extra = set(sd) - {"feedback", "kernel", "gate", "clearance"}
        if extra:
            raise ParseError(f"{where}: unexpected field(s) {sorted(extra)}")
        for req in ("feedback", "clearance"):
            if req not in sd:
                raise ParseError(f"{where}: missing field {req!r}")
        stages.append(
            Stage(
                feedback=_fn_from_dict(sd["feedback"], FEEDBACK_KINDS, f"{where}.feedback"),
                kernel=kernel_from_dict(sd.get("kernel", {"kind": "none"}), f"{where}.kernel"),
                gate=_fn_from_dict(sd.get("gate", {"kind": "constant", "c": 1.0}), STATE_KINDS, f"{where}.gate"),
                clearance=_fn_from_dict(sd["clearance"], STATE_KINDS, f"{where}.clearance"),
            )
        )
    if len(stages) < 2:
        raise ParseError("stages: n >= 2 required")
    labels = d.get("labels")
    if labels is not None and (not isinstance(labels, list) or len(labels) != len(stages)):
        raise ParseError("labels: expected a list with one label per stage")
    return CyclicModel(tuple(stages), tuple(labels) if labels is not None else None)


def parse_model_config(text: str) -> CyclicModel:
    """Parse a JSON model document; errors carry line or field diagnostics."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    try:
        return model_from_dict(doc)
    except KernelError as exc:
        raise ParseError(str(exc)) from None


def serialize_model(m: CyclicModel) -> str:
    """Canonical JSON form; ``parse_model_config(serialize_model(m)) == m``."""
    return json.dumps(m.to_dict(), indent=2, sort_keys=True)
