"""Command line: ``harvest-mcam {solve,simulate,verify,sweep} --config run.toml``.

Exit codes: 0 success, 1 usage or configuration error, 2 solver did not
converge, 3 a verification check failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .chain import Grid, build_grid, build_kernel, local_consistency_report, write_kernel_csv
from .config import RunConfig, load_config
from .errors import ConfigurationError, DegenerateStateError, DomainError, NonConvergenceError, PolicyError
from .model import HarvestModel, validate_model
from .plotting import plot_policy, plot_sweep, plot_value
from .simulator import THREADS_ENV, SimConfig, estimate_payoff, simulate_path
from .solver import (
    PolicyField,
    extract_thresholds,
    liquidation_policy,
    read_solution_csv,
    solve,
    write_solution_csv,
)
from .verify import (
    CheckResult,
    NoiseSweepSpec,
    VerifyReport,
    check_linearity_above,
    check_slopes,
    check_supersolution,
    mc_cross_check,
    noise_sweep,
    refinement_check,
    refinement_spacings,
    supersolution_constant,
)

EXIT_OK, EXIT_CONFIG, EXIT_NONCONV, EXIT_VERIFY = 0, 1, 2, 3
SUITES = ("supersolution", "slopes", "linearity", "monotone", "consistency", "sweep", "refinement", "mc-cross")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _g(v) -> str:
    return "" if v is None else f"{v:.12g}"


class Run:
    """Resolved configuration plus the objects every command needs."""

    def __init__(self, args):
        cfg = load_config(args.config)
        if getattr(args, "h", None) is not None:
            cfg.grid.h = args.h
        if getattr(args, "tol", None) is not None:
            cfg.solver.tol = args.tol
        if getattr(args, "seed", None) is not None:
            cfg.simulate.seed = args.seed
        if getattr(args, "paths", None) is not None:
            cfg.simulate.n_paths = args.paths
        if getattr(args, "out", None) is not None:
            cfg.output.directory = args.out
        self.cfg: RunConfig = cfg
        self.model: HarvestModel = cfg.build_model()
        self.upper = cfg.resolved_upper(self.model)
        cfg.grid.U = self.upper
        problems = validate_model(self.model, self.upper)
        if problems:
            raise ConfigurationError("invalid model: " + "; ".join(problems))
        self.grid: Grid = build_grid(self.model.lam, self.upper, cfg.grid.h)
        self.zeta = cfg.resolved_zeta()
        self.out = Path(cfg.output.directory)
        self.out.mkdir(parents=True, exist_ok=True)
        threads = getattr(args, "threads", None)
        self.threads = threads
        if threads is not None:
            os.environ[THREADS_ENV] = str(threads)

    def kernel(self):
        return build_kernel(self.model, self.grid, self.zeta)

    def solve(self, kernel=None):
        s = self.cfg.solver
        return solve(self.model, self.grid, kernel or self.kernel(), tol=s.tol, max_iter=s.max_iter,
                     method=s.method, sweep_mode=s.sweep_mode)

    def manifest(self, command: str, **extra) -> None:
        snap = {k: float(v) for k, v in self.grid.snap.items()}
        data = {
            "command": command,
            "version": __version__,
            "config": self.cfg.to_dict(),
            "grid": {**snap, "h": self.grid.h, "n_live": int(self.grid.n_live)},
            "seed": self.cfg.simulate.seed,
            **extra,
        }
        with open(self.out / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(data, fh, indent=2, sort_keys=True)
            fh.write("\n")


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def write_thresholds_csv(path, policy: PolicyField) -> list:
    ths = extract_thresholds(policy)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["alpha", "L1", "L2", "L3", "ordered", "violations"])
        for t in ths:
            w.writerow([t.regime, _g(t.L1), _g(t.L2), _g(t.L3), int(t.ordered), " | ".join(t.violations)])
    return ths


def cmd_solve(args) -> int:
    run = Run(args)
    kernel = run.kernel()
    V, policy, rep = run.solve(kernel)
    out = run.out
    write_solution_csv(out / "value.csv", V, None, columns=("V",))
    write_solution_csv(out / "policy.csv", None, policy, columns=("step_type", "c"))
    if args.kernel_csv:
        write_kernel_csv(out / "kernel.csv", kernel, run.grid)
    report = {
        "iterations": rep.iterations,
        "final_increment": rep.final_increment,
        "residual": rep.residual,
        "wall_time": rep.wall_time,
        "method": rep.method,
        "min_step": rep.min_step,
        "monotone": rep.monotone,
    }
    with open(out / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    ths = write_thresholds_csv(out / "thresholds.csv", policy)
    plot_value(out / "value.csv", out / "value.svg")
    plot_policy(out / "policy.csv", out / "policy.svg")
    run.manifest("solve", zeta=float(kernel.zeta))
    print(f"converged in {rep.iterations} iterations, increment {rep.final_increment:.3g}, "
          f"residual {rep.residual:.3g}, {rep.wall_time:.2f}s")
    for t in ths:
        print(f"regime {t.regime}: L1={_g(t.L1) or '-'} L2={_g(t.L2) or '-'} L3={_g(t.L3) or '-'}")
    return EXIT_OK


def _load_policy(run: Run, path: str | None) -> PolicyField:
    if path == "liquidation":
        return liquidation_policy(run.grid, run.model)
    p = Path(path) if path else run.out / "policy.csv"
    try:
        return read_solution_csv(p, run.grid)[1]
    except (OSError, KeyError) as exc:
        raise ConfigurationError(f"cannot read policy {p}: {exc}") from exc
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from exc


def cmd_simulate(args) -> int:
    run = Run(args)
    policy = _load_policy(run, args.policy)
    s = run.cfg.simulate
    rows = []
    for k, (x0, a0) in enumerate(s.starts):
        cfg = SimConfig(dt=s.dt, horizon=s.horizon, n_paths=s.n_paths, seed=s.seed,
                        start=(float(x0), int(a0)), exact_clock=s.exact_clock)
        est = estimate_payoff(run.model, policy, run.grid, cfg, run.threads)
        rows.append([_g(float(x0)), int(a0), _g(est.mean), _g(est.std_error), est.n_paths,
                     _g(est.censored_fraction), _g(est.tail_bound)])
        print(f"start ({x0:g}, {a0}): mean {est.mean:.6g} +- {est.std_error:.3g} "
              f"(censored {est.censored_fraction:.3g})")
        for j in range(s.path_log):
            cap = int(np.ceil(s.horizon / s.dt / 1000)) + 1000
            _, log = simulate_path(run.model, policy, run.grid, cfg, seed=s.seed + j, log_rows=cap)
            with open(run.out / f"path_{k}_{j}.csv", "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh)
                w.writerow(["t", "x", "alpha", "c", "dY", "dZ", "discounted_payoff_so_far"])
                for r in log:
                    w.writerow([_g(r[0]), _g(r[1]), int(r[2]), _g(r[3]), _g(r[4]), _g(r[5]), _g(r[6])])
    with open(run.out / "payoff_estimate.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["x0", "alpha0", "mean", "se", "n_paths", "censored_fraction", "tail_bound"])
        w.writerows(rows)
    run.manifest("simulate", policy=str(args.policy or run.out / "policy.csv"))
    return EXIT_OK


def _sweep_modes(mode: str) -> list[str]:
    if mode == "both":
        return ["multiplicative", "additive"]
    if mode not in ("multiplicative", "additive"):
        raise ConfigurationError(f"sweep.mode must be multiplicative, additive or both, got {mode!r}")
    return [mode]


def _sweep_checks(run: Run, mode: str | None = None) -> list[CheckResult]:
    sw = run.cfg.sweep
    window = tuple(sw.window) if sw.window else None
    out = []
    for m in _sweep_modes(mode or sw.mode):
        spec = NoiseSweepSpec(mode=m, intensities=tuple(sw.intensities), window=window, eps=sw.eps)
        out.append(noise_sweep(run.model, spec, h=sw.h, upper=run.upper, tol=run.cfg.solver.tol))
    return out


def cmd_verify(args) -> int:
    run = Run(args)
    suites = SUITES if args.suite == "all" else tuple(s.strip() for s in args.suite.split(","))
    unknown = [s for s in suites if s not in SUITES]
    if unknown:
        raise ConfigurationError(f"unknown suite(s) {unknown}; choose from {', '.join(SUITES)} or all")
    kernel = run.kernel()
    V = policy = rep = None
    needs_solution = {"supersolution", "slopes", "linearity", "monotone", "mc-cross"} & set(suites)
    if needs_solution:
        if args.value:
            try:
                V = read_solution_csv(args.value, run.grid)[0]
            except (OSError, KeyError, ValueError) as exc:
                raise ConfigurationError(f"cannot read {args.value}: {exc}") from exc
        if args.policy:
            policy = _load_policy(run, args.policy)
        if V is None or policy is None or "monotone" in suites:
            V1, P1, rep = run.solve(kernel)
            V = V if V is not None else V1
            policy = policy if policy is not None else P1
    report = VerifyReport()
    for name in suites:
        if name == "supersolution":
            M = supersolution_constant(run.model, run.grid, kernel)
            phi = run.model.q * run.grid.live[:, None] + M + np.zeros((1, run.model.num_regimes))
            chk = check_supersolution(phi, run.model, run.grid, kernel, V=V, tol=1e-9)
            chk.detail = f"Phi = q x + {M:.6g}; " + chk.detail
            report.add(chk)
        elif name == "slopes":
            report.add(check_slopes(V, run.model))
        elif name == "linearity":
            report.add(check_linearity_above(V, policy, run.model))
        elif name == "monotone":
            report.add(CheckResult("monotone", rep.monotone, rep.min_step, 0.0, 1e-10,
                                   "successive iterates never decrease", f"{rep.iterations} iterations"))
        elif name == "consistency":
            cr = local_consistency_report(run.model, kernel, run.grid)
            ok = cr.max_mean_error <= 1e-12 and cr.bound_holds and cr.max_row_error <= 1e-12 and cr.min_prob >= 0
            report.add(CheckResult("consistency", ok, cr.max_mean_error, 0.0, 1e-12,
                                   "kernel rows are stochastic and locally consistent",
                                   f"variance discrepancy {cr.max_var_discrepancy:.3g} <= bound; "
                                   f"row error {cr.max_row_error:.3g}; min prob {cr.min_prob:.3g}"))
        elif name == "sweep":
            for chk in _sweep_checks(run):
                report.add(chk)
        elif name == "refinement":
            hs = refinement_spacings(run.model, run.grid.h, run.upper)
            report.add(refinement_check(run.model, hs, run.upper))
        elif name == "mc-cross":
            s = run.cfg.simulate
            cfg = SimConfig(dt=s.dt, horizon=s.horizon, n_paths=s.n_paths, seed=s.seed, exact_clock=s.exact_clock)
            starts = [(float(x), int(a)) for x, a in s.starts]
            report.add(mc_cross_check(run.model, run.grid, V, policy, starts, cfg, s.eps_disc, run.threads))
    text = report.to_text()
    (run.out / "verify_report.txt").write_text(text + "\n", encoding="utf-8")
    report.write_csv(run.out / "verify_report.csv")
    run.manifest("verify", suites=list(suites))
    print(text)
    return EXIT_OK if report.passed else EXIT_VERIFY


def cmd_sweep(args) -> int:
    run = Run(args)
    checks = _sweep_checks(run, args.mode)
    with open(run.out / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["mode", "N", "distance"])
        for chk in checks:
            mode = chk.name.split("-", 1)[1]
            for n, d in zip(chk.data.get("intensities", []), chk.data.get("distance", [])):
                w.writerow([mode, _g(float(n)), _g(d)])
    plot_sweep(run.out / "sweep.csv", run.out / "sweep.svg")
    run.manifest("sweep")
    for chk in checks:
        print(("PASS " if chk.passed else "FAIL ") + chk.name + ": " + chk.detail)
    return EXIT_OK if all(c.passed for c in checks) else EXIT_VERIFY


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="harvest-mcam", description="Markov chain approximation for optimal harvesting and renewing.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", required=True, help="TOML run configuration (or a manifest.json)")
        sp.add_argument("--out", help="output directory (overrides output.directory)")
        sp.add_argument("--h", type=float, help="grid spacing")
        sp.add_argument("--tol", type=float, help="solver tolerance")
        sp.add_argument("--threads", type=int, help=f"worker threads (also {THREADS_ENV})")
        return sp

    sp = common(sub.add_parser("solve", help="solve the dynamic programming equation"))
    sp.add_argument("--kernel-csv", action="store_true", help="also dump every transition row")
    sp.set_defaults(func=cmd_solve)

    sp = common(sub.add_parser("simulate", help="Monte Carlo payoff of a stored policy"))
    sp.add_argument("--policy", help="policy.csv to simulate, or 'liquidation' (default: <out>/policy.csv)")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--paths", type=int)
    sp.set_defaults(func=cmd_simulate)

    sp = common(sub.add_parser("verify", help="run structural checks"))
    sp.add_argument("--suite", default="all", help=f"comma list of {', '.join(SUITES)}, or all")
    sp.add_argument("--value", help="check this value.csv instead of a fresh solve")
    sp.add_argument("--policy", help="check this policy.csv instead of a fresh solve")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--paths", type=int)
    sp.set_defaults(func=cmd_verify)

    sp = common(sub.add_parser("sweep", help="large-noise sweep of the value function"))
    sp.add_argument("--mode", help="multiplicative, additive or both (overrides sweep.mode)")
    sp.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NonConvergenceError as exc:
        print(f"error: {exc} (last increment {exc.last_increment:.3g} after {exc.iterations} iterations)",
              file=sys.stderr)
        return EXIT_NONCONV
    except (ConfigurationError, DomainError, DegenerateStateError, PolicyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
