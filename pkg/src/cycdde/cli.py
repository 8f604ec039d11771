"""Command-line interface.

Usage::

    cycdde <command> (--preset NAME | --model FILE) [--<param> VALUE ...] [options]

Commands: ``simulate``, ``check-equivalence``, ``equilibria``, ``char``, ``roots``,
``scan``, ``validate`` and ``rerun`` (replay a manifest).

``--preset`` takes a name or a ``preset://name?key=value`` reference. Unknown
``--<param>`` flags are preset parameter overrides; keys are matched after
lowercasing and dropping non-alphanumerics, so ``--a1`` sets ``a_1``.

Defaults for numeric flags live in :data:`DEFAULTS`. Every file written with
``-o`` is accompanied by ``<stem>.manifest.json`` recording the command line,
the resolved model and settings; ``cycdde rerun <manifest>`` reproduces the
outputs byte for byte.

Exit status: 0 success, 1 domain failure (infeasible parameters, no
equilibrium, failed equivalence), 2 usage or parse error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DomainError, ParseError
from .model import CyclicModel, Zero, parse_model_config, serialize_model, validate
from .presets import PRESETS, initial_state, parse_preset_uri, preset, resolved_params

DEFAULTS = {
    "h": 1e-3,
    "t_end": 50.0,
    "tail_mass": 1e-10,
    "seed": 0,
    "interval": (0.0, 10.0),
    "n_brackets": 200,
    "re_min": -3.0,
    "re_max": 1.0,
    "im_max": 6.0,
    "grid": (24, 24),
    "num": 50,
    "tol": 1e-3,
    "plot_every": 10,
}


class UsageError(ParseError):
    pass


def _complex(text: str) -> complex:
    try:
        return complex(text.replace(" ", "").replace("i", "j"))
    except ValueError:
        raise UsageError(f"cannot parse complex number {text!r}") from None


def _value(text: str):
    try:
        return float(text)
    except ValueError:
        return text


def _overrides(extra: list[str]) -> dict:
    out = {}
    it = iter(extra)
    for tok in it:
        if not tok.startswith("--") or len(tok) <= 2:
            raise UsageError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, val = key.split("=", 1)
        else:
            val = next(it, None)
            if val is None:
                raise UsageError(f"missing value for {tok}")
        out[key] = _value(val)
    return out


def _common(p: argparse.ArgumentParser, sim: bool = False) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", help="preset name or preset:// reference (%s)" % ", ".join(PRESETS))
    src.add_argument("--model", help="model config file (JSON)")
    p.add_argument("-o", "--out", help="output file")
    p.add_argument("--seed", type=int, default=DEFAULTS["seed"])
    if sim:
        p.add_argument("--h", type=float, default=DEFAULTS["h"])
        p.add_argument("--t-end", type=float, default=DEFAULTS["t_end"])
        p.add_argument("--tail-mass", type=float, default=DEFAULTS["tail_mass"])
        p.add_argument("--x0", help="comma-separated initial (constant history) values")


def _region(p: argparse.ArgumentParser) -> None:
    p.add_argument("--re-min", type=float, default=DEFAULTS["re_min"])
    p.add_argument("--re-max", type=float, default=DEFAULTS["re_max"])
    p.add_argument("--im-max", type=float, default=DEFAULTS["im_max"])
    p.add_argument("--grid", type=int, nargs=2, default=list(DEFAULTS["grid"]), metavar=("NRE", "NIM"))


def _eq_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--interval", type=float, nargs=2, default=list(DEFAULTS["interval"]), metavar=("LO", "HI"))
    p.add_argument("--n-brackets", type=int, default=DEFAULTS["n_brackets"])
    p.add_argument("--which", choices=("positive", "largest", "smallest"), default="positive")
    p.add_argument("--x-star", type=float, help="equilibrium value of the last compartment")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cycdde", description="Cyclic distributed-delay models.")
    ap.add_argument("--version", action="version", version=f"cycdde {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="integrate a model and write a CSV")
    _common(p, sim=True)
    p.add_argument("--plot-data", action="store_true", help="also write a long-format CSV for plotting")
    p.add_argument("--plot-every", type=int, default=DEFAULTS["plot_every"])

    p = sub.add_parser("check-equivalence", help="full vs reduced (or chain-expanded) simulation")
    _common(p, sim=True)
    p.add_argument("--mode", choices=("reduce", "lct"), default="reduce")
    p.add_argument("--eliminate", help="comma-separated labels or 1-based stage numbers")
    p.add_argument("--tol", type=float, default=DEFAULTS["tol"])

    p = sub.add_parser("equilibria", help="equilibria of the reduced scalar equation")
    _common(p)
    _eq_opts(p)

    p = sub.add_parser("char", help="evaluate the characteristic function")
    _common(p)
    _eq_opts(p)
    p.add_argument("--lambda", dest="lam", required=True, help="complex argument, e.g. 1+2i")

    p = sub.add_parser("roots", help="characteristic roots in a region")
    _common(p)
    _eq_opts(p)
    _region(p)

    p = sub.add_parser("scan", help="sweep one parameter and locate stability changes")
    _common(p)
    _eq_opts(p)
    _region(p)
    p.add_argument("--param", required=True)
    p.add_argument("--from", dest="start", type=float, required=True)
    p.add_argument("--to", dest="stop", type=float, required=True)
    p.add_argument("--num", type=int, default=DEFAULTS["num"])

    p = sub.add_parser("validate", help="structural and non-negativity checks")
    _common(p)

    p = sub.add_parser("rerun", help="replay the command recorded in a manifest")
    p.add_argument("manifest")
    return ap


# -- model resolution --------------------------------------------------------


class Source:
    def __init__(self, args, overrides: dict):
        self.overrides = overrides
        if args.preset is not None:
            name, params = args.preset, {}
            if name.startswith("preset://"):
                name, params = parse_preset_uri(name)
            if name not in PRESETS:
                raise UsageError(f"unknown preset {name!r}; expected one of {', '.join(PRESETS)}")
            params.update(overrides)
            self.name = name
            self.params = resolved_params(name, params)
            self.describe = "preset://" + name
            self.file = None
        else:
            if overrides:
                raise UsageError("parameter overrides require --preset")
            self.name = None
            self.params = {}
            self.file = args.model
            self.describe = args.model

    def model(self, extra: dict | None = None) -> CyclicModel:
        if self.name is not None:
            params = dict(self.params)
            params.update(extra or {})
            return preset(self.name, params)
        try:
            text = Path(self.file).read_text()
        except OSError as exc:
            raise UsageError(f"cannot read model file: {exc}") from None
        return parse_model_config(text)

    def x0(self, m: CyclicModel, text: str | None):
        if text:
            try:
                vals = [float(v) for v in text.split(",")]
            except ValueError:
                raise UsageError("--x0 must be comma-separated numbers") from None
            if len(vals) != m.n:
                raise UsageError(f"--x0 needs {m.n} values")
            return vals
        if self.name is not None:
            return initial_state(self.name)
        return [1.0] * m.n


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, complex):
        return {"re": v.real, "im": v.imag}
    return v


def _dump(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=True) + "\n"


class Run:
    """Collects outputs and writes the manifest."""

    def __init__(self, command: str, argv: list[str], args, src: Source | None):
        self.command = command
        self.argv = argv
        self.args = args
        self.src = src
        self.outputs: list[str] = []
        self.settings: dict = {}

    def write_text(self, path: str, text: str) -> None:
        Path(path).write_text(text)
        self.outputs.append(path)

    def emit(self, payload: dict) -> None:
        text = _dump(payload)
        if self.args.out:
            self.write_text(self.args.out, text)
        else:
            sys.stdout.write(text)

    def finish(self, model: CyclicModel | None) -> None:
        if not self.outputs:
            return
        first = Path(self.outputs[0])
        manifest = {
            "tool": "cycdde",
            "version": __version__,
            "command": self.command,
            "argv": self.argv,
            "model_source": self.src.describe if self.src else None,
            "resolved_parameters": self.src.params if self.src else {},
            "model": json.loads(serialize_model(model)) if model is not None else None,
            "settings": self.settings,
            "seed": getattr(self.args, "seed", None),
            "outputs": [os.path.basename(p) for p in self.outputs],
        }
        path = first.with_name(first.stem + ".manifest.json")
        path.write_text(_dump(manifest))


# -- commands ----------------------------------------------------------------


def _sim_config(args):
    from .simulate import SimConfig

    try:
        return SimConfig(h=args.h, t_end=args.t_end, tail_mass=args.tail_mass)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _equilibrium(m: CyclicModel, args):
    from .stability import find_equilibria, select_equilibrium
    from .reduction import compose_constant

    if args.x_star is not None:
        if isinstance(m.stages[0].feedback, Zero):
            raise UsageError("--x-star cannot fix the free first compartment of a self-renewal model")
        return None, [*compose_constant(m, args.x_star), args.x_star]
    rep = find_equilibria(m, tuple(args.interval), args.n_brackets)
    root = select_equilibrium(rep, args.which)
    return root, list(root.state)


def cmd_simulate(run: Run, m: CyclicModel):
    from .simulate import simulate, write_csv

    args = run.args
    cfg = _sim_config(args)
    x0 = run.src.x0(m, args.x0)
    run.settings = {"h": cfg.h, "t_end": cfg.t_end, "tail_mass": cfg.tail_mass, "method": cfg.method, "x0": x0}
    tr = simulate(m, x0, cfg)
    out = args.out or "simulate.csv"
    write_csv(tr, out)
    run.outputs.append(out)
    if args.plot_data:
        p = Path(out)
        plot = str(p.with_name(p.stem + ".plot.csv"))
        t = tr.times
        lines = ["t,compartment,value"]
        for j in range(tr.n_history, t.size, max(1, args.plot_every)):
            for lab, v in zip(tr.names(), tr.values[:, j]):
                lines.append(f"{t[j]:.17g},{lab},{v:.17g}")
        run.write_text(plot, "\n".join(lines) + "\n")
    return 0


def _stage_indices(m: CyclicModel, text: str | None):
    if text is None:
        return None
    out = []
    for tok in filter(None, (s.strip() for s in text.split(","))):
        if tok in m.names:
            out.append(m.names.index(tok))
        elif tok.isdigit() and 1 <= int(tok) <= m.n:
            out.append(int(tok) - 1)
        else:
            raise UsageError(f"unknown stage {tok!r}")
    return out


def cmd_check_equivalence(run: Run, m: CyclicModel):
    from .reduction import check_equivalence

    args = run.args
    cfg = _sim_config(args)
    x0 = run.src.x0(m, args.x0)
    elim = _stage_indices(m, args.eliminate)
    run.settings = {"h": cfg.h, "t_end": cfg.t_end, "tail_mass": cfg.tail_mass, "mode": args.mode,
                    "tol": args.tol, "x0": x0, "eliminate": elim}
    rep = check_equivalence(m, cfg, x0, eliminate=elim, mode=args.mode, tol=args.tol)
    run.emit(rep.to_dict())
    return 0 if rep.passed else 1


def cmd_equilibria(run: Run, m: CyclicModel):
    from .stability import find_equilibria

    args = run.args
    run.settings = {"interval": list(args.interval), "n_brackets": args.n_brackets}
    rep = find_equilibria(m, tuple(args.interval), args.n_brackets)
    run.emit(rep.to_dict(m.names))
    return 0 if rep.flags.get("positive_equilibrium") else 1


def cmd_char(run: Run, m: CyclicModel):
    from .stability import build_characteristic, yildirim_char_oracle, yildirim_equilibrium_bar

    args = run.args
    lam = _complex(args.lam)
    root, state = _equilibrium(m, args)
    cf = build_characteristic(m, state=state)
    payload = {
        "lambda": lam,
        "equilibrium": dict(zip(m.names, state)),
        "cleared": cf.cleared(lam),
        "poles": list(cf.poles),
    }
    try:
        payload["delta"] = cf(lam)
    except DomainError as exc:
        payload["delta"] = None
        payload["note"] = str(exc)
    if run.src.name == "yildirim":
        E = state[-1]
        payload["oracle"] = yildirim_char_oracle(run.src.params, E, yildirim_equilibrium_bar(run.src.params, E), lam)
    run.settings = {"lambda": [lam.real, lam.imag], "which": args.which, "x_star": args.x_star}
    run.emit(payload)
    return 0


def _region_of(args) -> dict:
    return {"re_min": args.re_min, "re_max": args.re_max, "im_max": args.im_max}


def cmd_roots(run: Run, m: CyclicModel):
    from .stability import build_characteristic, find_roots, write_roots_csv

    args = run.args
    root, state = _equilibrium(m, args)
    cf = build_characteristic(m, state=state)
    rep = find_roots(cf, _region_of(args), tuple(args.grid))
    run.settings = {"region": _region_of(args), "grid": list(args.grid), "which": args.which}
    summary = {"equilibrium": dict(zip(m.names, state)), **rep.to_dict()}
    if args.out:
        write_roots_csv(rep, args.out)
        run.outputs.append(args.out)
    sys.stdout.write(_dump(summary))
    return 0


def cmd_scan(run: Run, m: CyclicModel):
    from .stability import hopf_scan, write_scan_csv

    args = run.args
    if run.src.name is None:
        raise UsageError("scan needs --preset (the swept parameter is a preset constant)")
    values = np.linspace(args.start, args.stop, args.num)

    def family(v):
        return run.src.model({args.param: float(v)})

    family(values[0])  # fail early on an unknown parameter
    rep = hopf_scan(family, values, _region_of(args), tuple(args.grid), interval=tuple(args.interval),
                    n_brackets=args.n_brackets, which=args.which)
    run.settings = {"param": args.param, "from": args.start, "to": args.stop, "num": args.num,
                    "region": _region_of(args), "grid": list(args.grid)}
    if args.out:
        write_scan_csv(rep, args.out)
        run.outputs.append(args.out)
    sys.stdout.write(_dump({"crossings": [c.to_dict() for c in rep.crossings], "n_points": len(rep.points)}))
    return 0


def cmd_validate(run: Run, m: CyclicModel):
    rep = validate(m)
    run.emit(rep.to_dict())
    return 0 if rep.valid else 1


COMMANDS = {
    "simulate": cmd_simulate,
    "check-equivalence": cmd_check_equivalence,
    "equilibria": cmd_equilibria,
    "char": cmd_char,
    "roots": cmd_roots,
    "scan": cmd_scan,
    "validate": cmd_validate,
}


def _rerun(path: str) -> int:
    try:
        manifest = json.loads(Path(path).read_text())
        argv = manifest["argv"]
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot read manifest: {exc}") from None
    return run(list(argv))


def run(argv: list[str] | None = None) -> int:
    """Execute one command; returns the exit status."""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "rerun":
            if extra:
                raise UsageError(f"unexpected arguments {extra}")
            return _rerun(args.manifest)
        src = Source(args, _overrides(extra))
        m = src.model()
        r = Run(args.command, argv, args, src)
        status = COMMANDS[args.command](r, m)
        r.finish(m)
        return status
    except ParseError as exc:
        print(f"cycdde: error: {exc}", file=sys.stderr)
        return 2
    except DomainError as exc:
        print(f"cycdde: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"cycdde: error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())
