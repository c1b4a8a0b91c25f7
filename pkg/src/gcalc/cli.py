"""Command-line front end.

JSON results go to stdout, diagnostics to stderr, CSV only to named files.
Exit codes: 0 ok, 2 validation error, 3 numeric error.

Defaults (shared by every subcommand that takes the flag):

=================  ==========  ==============================================
flag               default     meaning
=================  ==========  ==============================================
--sigma-low        0.5         lower volatility bound
--sigma-high       1.0         upper volatility bound
--T                1.0         horizon
--n-points         801         PDE space nodes (cylinder: 201 per axis)
--steps            CFL-min     PDE time steps
--paths            100000      Monte Carlo paths
--mc-steps         512         Monte Carlo time steps
--seed             2024        Philox key
--family           constant:9  control family for Monte Carlo
--threads          $GCALC_THREADS or 1; never changes results
=================  ==========  ==============================================
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import os
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .controls import ControlFamily, ControlPath
from .core import NumericError, TimeGrid, ValidationError, VolatilityInterval, parse_payoff
from .cylinder import (
    CylinderFunction,
    CylinderGrids,
    GridResolutionWarning,
    conditional_g_expectation,
    g_expectation_cylinder,
    parse_cylinder_payoff,
    tower_check,
)
from .gheat import SpaceGrid, _check_cfl, default_space_grid, default_time_grid, extract_policy, solve_g_heat
from .gsde import GeometricSpec, g_expectation_geometric_mc, geometric_case_formula
from .mc import DEFAULT_N_PATHS, DEFAULT_N_STEPS, SimConfig, simulate_controlled_path, sup_over_controls

__all__ = ["RunConfig", "DEFAULTS", "build_parser", "main", "render_reference"]

DEFAULTS = {
    "sigma_low": 0.5,
    "sigma_high": 1.0,
    "T": 1.0,
    "n_points": 801,
    "cylinder_n_points": 201,
    "paths": DEFAULT_N_PATHS,
    "mc_steps": DEFAULT_N_STEPS,
    "seed": 2024,
    "family": "constant:9",
    "threads": 1,
}

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC = 0, 2, 3

# flags that may change speed but never results; kept out of the config echo
_NOT_ECHOED = {"threads", "no_timestamp", "handler", "command", "subcommand", "reference"}


@dataclass(frozen=True)
class RunConfig:
    command: str
    params: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({"command": self.command, "params": self.params}, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        d = json.loads(text)
        return cls(d["command"], d["params"])

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        params = {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_ECHOED}
        name = args.command if getattr(args, "subcommand", None) is None else f"{args.command} {args.subcommand}"
        return cls(name, params)


def _threads_default() -> int:
    env = os.environ.get("GCALC_THREADS")
    if env is None:
        return DEFAULTS["threads"]
    try:
        return max(1, int(env))
    except ValueError:
        return DEFAULTS["threads"]


def _theta(args) -> VolatilityInterval:
    return VolatilityInterval(args.sigma_low, args.sigma_high)


def _space(args, theta) -> SpaceGrid:
    return default_space_grid(theta, args.T, args.n_points)


def _pde_time(args, theta, space) -> TimeGrid:
    return default_time_grid(args.T, space, theta) if args.steps is None else TimeGrid(args.T, args.steps)


def _family(args, theta, payoff=None) -> ControlFamily:
    spec = args.family.strip()
    kind, _, rest = spec.partition(":")
    if kind == "constant":
        try:
            n = int(rest) if rest else 9
        except ValueError as exc:
            raise ValidationError(f"bad family {spec!r}; expected constant:<levels>") from exc
        return ControlFamily.constant_grid(theta, n)
    if kind == "feedback":
        if payoff is None:
            raise ValidationError("feedback family needs a payoff to derive its policy")
        space = _space(args, theta)
        v = solve_g_heat(payoff, theta, _pde_time(args, theta, space), space)
        return ControlFamily.feedback(extract_policy(v, theta), theta)
    if kind == "fixed":
        if not rest:
            raise ValidationError("fixed family needs a CSV path: fixed:<file>")
        grid = TimeGrid(args.T, args.mc_steps)
        try:
            return ControlFamily.fixed(ControlPath.from_csv(rest, grid, theta))
        except OSError as exc:
            raise ValidationError(f"cannot read control path {rest!r}: {exc}") from exc
    raise ValidationError(f"unknown family {spec!r}; use constant:<n>, feedback or fixed:<csv>")


def _sim(args) -> SimConfig:
    return SimConfig(args.paths, TimeGrid(args.T, args.mc_steps), args.seed)


def _within(gap: float, se: float, k: float = 3.0) -> bool:
    return bool(abs(gap) <= k * se)


# -- subcommands -----------------------------------------------------------------


def cmd_gheat(args) -> dict:
    theta = _theta(args)
    payoff = parse_payoff(args.payoff)
    space = _space(args, theta)
    time = _pde_time(args, theta, space)
    ratio = _check_cfl(time, space, theta)
    v = solve_g_heat(payoff, theta, time, space)
    if args.csv:
        v.to_csv(args.csv, time_stride=args.time_stride)
    return {
        "value_at_origin": v.value_at_origin(),
        "grid": {"n_points": space.n_points, "half_width": space.half_width, "dx": space.dx,
                 "n_steps": time.n_steps, "dt": time.dt},
        "cfl_ratio": ratio,
    }


def cmd_gexp(args) -> dict:
    theta = _theta(args)
    payoff = parse_payoff(args.payoff)
    out = {}
    if args.method in ("pde", "both"):
        space = _space(args, theta)
        time = _pde_time(args, theta, space)
        _check_cfl(time, space, theta)
        out["pde"] = solve_g_heat(payoff, theta, time, space).value_at_origin()
    if args.method in ("mc", "both"):
        f = _family(args, theta, payoff)
        out["mc"] = sup_over_controls(payoff, f, _sim(args), args.threads).to_dict()
    if args.method == "both":
        best = out["mc"]["best"]
        out["gap"] = out["pde"] - best["mean"]
        out["within_3se"] = _within(out["gap"], best["std_error"])
    return out


def cmd_gsde(args) -> dict:
    theta = _theta(args)
    g = GeometricSpec(args.sigma, args.gamma, args.x0)
    f = _family(args, theta)
    res = g_expectation_geometric_mc(g, f, _sim(args), args.threads)
    analytic = geometric_case_formula(g, theta, args.T)
    gap = analytic - res.best.mean
    return {"analytic": analytic, "mc": res.to_dict(), "gap": gap,
            "within_3se": _within(gap, res.best.std_error)}


def cmd_cylinder(args) -> dict:
    theta = _theta(args)
    c = CylinderFunction(tuple(args.times), parse_cylinder_payoff(args.phi))
    grids = CylinderGrids(args.n_points, args.richardson_tol, args.threads)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", GridResolutionWarning)
        value = g_expectation_cylinder(c, theta, grids)
    under = any(issubclass(w.category, GridResolutionWarning) for w in caught)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    out = {"value": value, "underresolved": under, "conditional_value": None, "tower_gap": None}
    if args.s is not None:
        out["conditional_value"] = conditional_g_expectation(c, args.s, args.observed, theta, grids, args.b_s)
        if any(abs(args.s - t) <= 1e-12 for t in c.times[:-1]):
            direct, composed = tower_check(c, args.s, theta, grids)
            out["tower_gap"] = abs(direct - composed)
    return out


def cmd_lifts_export(args) -> dict:
    theta = _theta(args)
    payoff = parse_payoff(args.payoff) if args.payoff else None
    f = _family(args, theta, payoff)
    cfg = _sim(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files, monotone = [], True
    for i in range(args.paths):
        lift = simulate_controlled_path(f, args.member, cfg, i)
        monotone &= bool(np.all(np.diff(lift.qv) >= 0))
        name = out_dir / f"lift_{i:06d}.csv"
        lift.to_csv(name)
        files.append(str(name))
    return {"files": files, "qv_monotone": monotone}


# -- parser ----------------------------------------------------------------------


def _csv_floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _common(p: argparse.ArgumentParser, pde=True, mc=False, n_points=DEFAULTS["n_points"], steps=True):
    p.add_argument("--sigma-low", type=float, default=DEFAULTS["sigma_low"], help="lower volatility bound")
    p.add_argument("--sigma-high", type=float, default=DEFAULTS["sigma_high"], help="upper volatility bound")
    p.add_argument("--T", type=float, default=DEFAULTS["T"], help="horizon")
    if pde:
        p.add_argument("--n-points", type=int, default=n_points, help="space nodes (odd)")
        if steps:
            p.add_argument("--steps", type=int, default=None, help="PDE time steps (default: CFL minimum)")
    if mc:
        p.add_argument("--paths", type=int, default=DEFAULTS["paths"], help="Monte Carlo paths")
        flags = ("--mc-steps",) if pde else ("--mc-steps", "--steps")
        p.add_argument(*flags, dest="mc_steps", type=int, default=DEFAULTS["mc_steps"], help="Monte Carlo time steps")
        p.add_argument("--seed", type=int, default=DEFAULTS["seed"], help="64-bit Philox key")
        p.add_argument("--family", default=DEFAULTS["family"],
                       help="control family: constant:<levels> | feedback | fixed:<csv>")
    p.add_argument("--threads", type=int, default=_threads_default(),
                   help="worker threads (env GCALC_THREADS); never changes results")
    p.add_argument("--no-timestamp", action="store_true", help="omit the timestamp field")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gcalc", description="G-expectation solvers and path tools.")
    parser.add_argument("--reference", action="store_true", help="print the flag reference page and exit")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("gheat", help="solve the G-heat equation on a grid")
    p.add_argument("--payoff", required=True, help="terminal payoff, e.g. quadratic, call:K=0, butterfly:K=0,w=1")
    _common(p)
    p.add_argument("--csv", default=None, help="write the value grid (t,x,u) to this file")
    p.add_argument("--time-stride", type=int, default=1, help="keep every k-th time row in the CSV")
    p.set_defaults(handler=cmd_gheat)

    p = sub.add_parser("gexp", help="G-expectation of a payoff by PDE, Monte Carlo, or both")
    p.add_argument("--payoff", required=True, help="terminal payoff")
    p.add_argument("--method", choices=("pde", "mc", "both"), default="both")
    _common(p, mc=True)
    p.set_defaults(handler=cmd_gexp)

    p = sub.add_parser("gsde", help="G-SDE solvers")
    gs = p.add_subparsers(dest="subcommand", metavar="MODEL", required=True)
    q = gs.add_parser("geometric", help="geometric G-Brownian motion dX = sigma X dB + gamma X d<B>")
    q.add_argument("--sigma", type=float, required=True)
    q.add_argument("--gamma", type=float, required=True)
    q.add_argument("--x0", type=float, default=1.0)
    _common(q, pde=False, mc=True)
    q.set_defaults(handler=cmd_gsde)

    p = sub.add_parser("cylinder", help="(conditional) G-expectation of a cylinder function")
    p.add_argument("--times", type=_csv_floats, required=True, help="increment times, e.g. 0.5,1.0")
    p.add_argument("--phi", required=True, help="sum:<p1>,<p2> | product:<p1>;<p2> | <payoff>")
    p.add_argument("--s", type=float, default=None, help="conditioning time")
    p.add_argument("--observed", type=_csv_floats, default=[], help="path values B_{t_i} for t_i <= s")
    p.add_argument("--b-s", type=float, default=None, help="path value at s (default: last observed)")
    p.add_argument("--richardson-tol", type=float, default=1e-2, help="grid-error warning threshold")
    _common(p, n_points=DEFAULTS["cylinder_n_points"], steps=False)
    p.set_defaults(handler=cmd_cylinder)

    p = sub.add_parser("lifts", help="rough-lift tools")
    ls = p.add_subparsers(dest="subcommand", metavar="ACTION", required=True)
    q = ls.add_parser("export", help="write simulated lifts as t,b,qv CSV, one file per path")
    q.add_argument("--out-dir", default="lifts", help="output directory")
    q.add_argument("--member", type=int, default=0, help="family member (constant grid level index)")
    q.add_argument("--payoff", default=None, help="payoff whose policy drives a feedback family")
    _common(q, pde=True, mc=True)
    q.set_defaults(handler=cmd_lifts_export, paths=2)
    return parser


def render_reference() -> str:
    """Markdown page with the ``--help`` text of every subcommand."""
    parser = build_parser()
    parts = ["# gcalc command reference", "", "```", parser.format_help().rstrip(), "```"]

    def walk(p, prefix):
        for action in p._actions:
            if isinstance(action, argparse._SubParsersAction):
                for name, child in action.choices.items():
                    title = f"{prefix} {name}".strip()
                    parts.extend(["", f"## {title}", "", "```", child.format_help().rstrip(), "```"])
                    walk(child, title)

    walk(parser, "")
    return "\n".join(parts) + "\n"


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.reference:
        sys.stdout.write(render_reference())
        return EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_VALIDATION
    args.threads = max(1, args.threads)
    try:
        result = args.handler(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericError, FloatingPointError, OverflowError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    cfg = RunConfig.from_args(args)
    doc = {"command": cfg.command, "config": cfg.params, "result": result}
    if not args.no_timestamp:
        doc["timestamp"] = _dt.datetime.now(_dt.timezone.utc).isoformat()
    sys.stdout.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
