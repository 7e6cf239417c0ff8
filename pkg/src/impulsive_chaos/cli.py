"""Command-line front end.

Exit status: 0 on success, 2 when a hypothesis check fails, 1 on any other
error.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from .config import RunConfig, build_system, example_config, load_config
from .errors import ConfigError, HypothesisViolation, ImpulsiveError
from .integrate import (
    bounded_solution,
    integral_equation_residual,
    integrate,
    read_csv,
    tail_for_tolerance,
    write_csv,
)
from .signals import find_witnesses
from .svgplot import PlotOptions, render_svg, series_from_table
from .system import assemble_constants, check_hypotheses, compute_derived_constants

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_HYPOTHESIS = 2
RESIDUAL_SAMPLES = 20
RESIDUAL_SEED = 2024

log = logging.getLogger("impulsive_chaos")


class Context:
    """Lazily built objects shared by the subcommands of one invocation."""

    def __init__(self, cfg: RunConfig, args):
        self.cfg = cfg
        self.args = args
        self.out = Path(args.out)
        self._sys = None
        self._consts = None
        self._witnesses = None

    @property
    def sys(self):
        if self._sys is None:
            self._sys = build_system(self.cfg)
        return self._sys

    @property
    def consts(self):
        if self._consts is None:
            self._consts = assemble_constants(self.sys, self.cfg.overrides())
        return self._consts

    @property
    def step(self):
        if self.args.step is not None:
            return self.args.step
        return self.cfg.integration.get("step")

    @property
    def tol(self) -> float:
        return float(self.cfg.integration.get("tol") or 1e-6)

    def interval(self) -> tuple[float, float]:
        t0 = self.args.t0 if self.args.t0 is not None else self.cfg.integration.get("t0", 0.0)
        t1 = self.args.t1 if self.args.t1 is not None else self.cfg.integration.get("t1")
        if t1 is None:
            t1 = t0 + 20 * self.sys.schedule.omega
        return float(t0), float(t1)

    def x0(self) -> np.ndarray:
        if self.args.x0 is not None:
            try:
                vals = [float(v) for v in self.args.x0.split(",")]
            except ValueError:
                raise ConfigError(f"--x0: cannot parse {self.args.x0!r}") from None
        else:
            vals = self.cfg.integration.get("x0") or [0.0] * self.sys.m
        if len(vals) != self.sys.m:
            raise ConfigError(f"x0 must have {self.sys.m} components")
        return np.array(vals, dtype=float)

    def write_json(self, name: str, payload) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        path = self.out / name
        path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")
        return path

    def hypotheses(self):
        report = check_hypotheses(self.sys, self.consts)
        self.write_json("check.json", report.to_dict())
        return report

    def require_hypotheses(self):
        report = self.hypotheses()
        failed = [c.name for c in report.checks if c.verdict is not True]
        if failed:
            raise HypothesisViolation("hypotheses not satisfied: " + ", ".join(failed))
        return report

    def compact(self) -> tuple[float, float]:
        a, b = self.cfg.diagnostics["compact"]
        return float(a), float(b)

    def witnesses(self):
        if self._witnesses is None:
            d = self.cfg.diagnostics
            lo, hi = dg.score_window_for(self.sys, self.compact(), int(d["warmup"]))
            if d.get("window_len"):
                hi = lo + int(d["window_len"])
            self._witnesses = find_witnesses(self.sys.perturbation, hi - lo, int(d["num"]),
                                             float(d["delta0_floor"]), window_start=lo)
            self.write_json("witnesses.json", self._witnesses.to_dict())
        return self._witnesses

    def derived(self):
        delta0 = self.cfg.constants.get("delta0")
        source = "config"
        if delta0 is None:
            delta0 = self.witnesses().delta0_est
            source = "witness search"
            if delta0 is None:
                raise ImpulsiveError("no witness found; set constants.delta0 explicitly")
        derived = compute_derived_constants(self.consts, self.sys, delta0)
        self.write_json("constants.json", {
            "system_constants": self.consts.to_dict(),
            "derived": derived.to_dict(),
            "delta0_source": source,
        })
        return derived


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, set):
        return sorted(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _plot_trajectory(csv_path: Path, svg_path: Path, title: str) -> None:
    table = read_csv(csv_path)
    svg = render_svg(series_from_table(table), PlotOptions(title=title))
    svg_path.write_text(svg)


def cmd_check(ctx: Context) -> int:
    report = ctx.hypotheses()
    for c in report.checks:
        lhs = "" if c.lhs is None else f" {c.lhs:.6g} vs {c.rhs:.6g}"
        print(f"{c.name}: {'pass' if c.verdict else 'FAIL'}{lhs} {c.detail}".rstrip())
    return EXIT_OK if report.all_pass else EXIT_HYPOTHESIS


def cmd_constants(ctx: Context) -> int:
    ctx.require_hypotheses()
    derived = ctx.derived()
    for k, v in derived.to_dict().items():
        print(f"{k} = {v:.6g}")
    return EXIT_OK


def cmd_simulate(ctx: Context) -> int:
    t0, t1 = ctx.interval()
    traj = integrate(ctx.sys, t0, ctx.x0(), t1, ctx.step)
    ctx.out.mkdir(parents=True, exist_ok=True)
    path = ctx.out / "trajectory.csv"
    write_csv(traj, path)
    print(f"wrote {path} ({len(traj.times)} samples, {len(traj.jumps)} jumps)")
    if ctx.args.plot:
        _plot_trajectory(path, ctx.out / "trajectory.svg", "Time series of the solution")
        print(f"wrote {ctx.out / 'trajectory.svg'}")
    return EXIT_OK


def run_bounded(ctx: Context, t0: float, t1: float) -> dict:
    sys_, consts = ctx.sys, ctx.consts
    traj = bounded_solution(sys_, consts, t0, t1, ctx.tol, ctx.step)
    ctx.out.mkdir(parents=True, exist_ok=True)
    write_csv(traj, ctx.out / "bounded.csv")
    T_tail = tail_for_tolerance(consts, sys_, ctx.tol)
    result = {"t_start": t0, "t_end": t1, "tol": ctx.tol, "T_tail": T_tail,
              "transient": traj.meta["transient"], "sup_norm": traj.sup_norm(),
              "max_slope": traj.max_slope()}
    if t1 - t0 > T_tail:
        rng = np.random.default_rng(RESIDUAL_SEED)
        times = np.sort(rng.uniform(t0 + T_tail, t1, RESIDUAL_SAMPLES))
        result["sample_times"] = times.tolist()
        result["residual"] = integral_equation_residual(traj, sys_, consts, times, T_tail)
    else:
        result["residual"] = None
        result["note"] = "interval shorter than the truncation tail; residual skipped"
    ctx.write_json("residual.json", result)
    return result


def cmd_bounded(ctx: Context) -> int:
    ctx.require_hypotheses()
    t0, t1 = ctx.interval()
    result = run_bounded(ctx, t0, t1)
    print(f"wrote {ctx.out / 'bounded.csv'}; sup norm {result['sup_norm']:.6g}, residual {result['residual']}")
    return EXIT_OK


def run_diagnostics(ctx: Context) -> dict:
    sys_, consts = ctx.sys, ctx.consts
    witnesses = ctx.witnesses()
    derived = ctx.derived()
    compact = ctx.compact()
    J = int(ctx.cfg.diagnostics["warmup"])
    run = dg.prepare_run(sys_, consts, derived, witnesses, compact, ctx.tol, ctx.step)
    conv = dg.shift_convergence(sys_, consts, derived, witnesses, compact, J, run=run)
    scan = ctx.cfg.diagnostics.get("scan_range")
    sep = dg.separation_scan(sys_, derived, witnesses, run, scan_range=tuple(scan) if scan else None)
    ctx.write_json("convergence.json", conv.to_dict())
    ctx.write_json("separation.json", sep.to_dict())
    lo, hi = run.span
    for n, w in enumerate(witnesses.witnesses):
        ts, ds = dg.difference_series(run, sys_.schedule.omega * w.zeta, lo, hi)
        with open(ctx.out / f"difference_{n}.csv", "w") as fh:
            fh.write("t,difference\n")
            for t, d in zip(ts, ds):
                fh.write("%.17g,%.17g\n" % (t, d))
    return {"convergence": conv, "separation": sep, "derived": derived}


def cmd_diagnose(ctx: Context) -> int:
    ctx.require_hypotheses()
    res = run_diagnostics(ctx)
    conv, sep = res["convergence"], res["separation"]
    for e in conv.entries:
        print(f"zeta={e.zeta}: score={e.score:.4g} sup={e.sup_difference:.4g} cap={e.cap:.4g}"
              f" {'ok' if e.within_cap else 'EXCEEDS CAP'}")
    for e in sep.entries:
        if e.found:
            print(f"zeta={e.zeta} eta={e.eta}: window at tau={e.tau:.6f}, inf={e.inf_difference:.4g}")
        else:
            print(f"zeta={e.zeta} eta={e.eta}: no window with inf >= {e.threshold:.4g}")
    return EXIT_OK


def cmd_reproduce(ctx: Context) -> int:
    ctx.require_hypotheses()
    sys_ = ctx.sys
    t0, t1 = ctx.interval()
    traj = integrate(sys_, t0, ctx.x0(), t1, ctx.step)
    ctx.out.mkdir(parents=True, exist_ok=True)
    write_csv(traj, ctx.out / "trajectory.csv")
    _plot_trajectory(ctx.out / "trajectory.csv", ctx.out / "trajectory.svg",
                     "Time series of x1 and x2 under logistic forcing")
    omega = sys_.schedule.omega
    a, b = 10.0, 60.0
    defect = None
    if traj.t0 <= a and traj.t1 >= b:
        defect = dg.periodicity_defect(traj, omega, (a, b - omega))
    bounded = run_bounded(ctx, t0, t1)
    res = run_diagnostics(ctx)
    derived = res["derived"]
    summary = {
        "interval": [t0, t1],
        "x0": ctx.x0().tolist(),
        "sup_norm": traj.sup_norm(),
        "M_phi": derived.M_phi,
        "periodicity_defect": defect,
        "periodicity_window": [a, b],
        "bounded_residual": bounded["residual"],
        "all_within_caps": res["convergence"].all_within_caps,
        "all_windows_found": res["separation"].all_found,
    }
    ctx.write_json("summary.json", summary)
    print(json.dumps(summary, indent=2, default=_json_default))
    return EXIT_OK


def cmd_plot(ctx: Context) -> int:
    src = Path(ctx.args.csv)
    ctx.out.mkdir(parents=True, exist_ok=True)
    dest = ctx.out / (src.stem + ".svg")
    _plot_trajectory(src, dest, src.stem)
    print(f"wrote {dest}")
    return EXIT_OK


COMMANDS = {
    "check": cmd_check,
    "constants": cmd_constants,
    "simulate": cmd_simulate,
    "bounded": cmd_bounded,
    "diagnose": cmd_diagnose,
    "reproduce-example": cmd_reproduce,
    "plot": cmd_plot,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="impulsive-chaos",
        description="Quasilinear impulsive systems with unpredictable forcing.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration (default: the built-in example)")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--t0", type=float)
    common.add_argument("--t1", type=float)
    common.add_argument("--x0", help='initial state as "v1,...,vm"')
    common.add_argument("--step", type=float, help="RK4 step size")
    common.add_argument("--plot", action="store_true", help="also write an SVG plot")
    common.add_argument("--seed-z0", type=float, dest="seed_z0", help="initial value of the logistic orbit")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "plot":
            p.add_argument("csv", help="trajectory CSV to plot")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "reproduce-example":
            cfg = example_config()
        else:
            cfg = load_config(args.config) if args.config else example_config()
        if args.seed_z0 is not None:
            cfg = cfg.with_seed(args.seed_z0)
        return COMMANDS[args.command](Context(cfg, args))
    except HypothesisViolation as exc:
        print(f"hypothesis failure: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except (ImpulsiveError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
