"""Executable checks derived from structural properties of the value function.

Each check returns a :class:`CheckResult`; a :class:`VerifyReport` collects
them and renders text or CSV.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .chain import Grid, StepType, TransitionKernel, build_grid
from .errors import ConfigurationError, TruncationError
from .model import Constant, HarvestModel, ScaledLinear, compute_truncation, truncation_condition
from .simulator import SimConfig, estimate_payoff
from .solver import PolicyField, ValueField, _branch_table, solve


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: float
    bound: float
    tolerance: float
    statement: str
    detail: str = ""
    skipped: bool = False
    data: dict = field(default_factory=dict, repr=False)


@dataclass
class VerifyReport:
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, check: CheckResult) -> CheckResult:
        self.checks.append(check)
        return check

    def to_text(self) -> str:
        lines = []
        for c in self.checks:
            status = "SKIP" if c.skipped else ("PASS" if c.passed else "FAIL")
            lines.append(
                f"[{status}] {c.name}: measured={c.measured:.6g} bound={c.bound:.6g} tol={c.tolerance:.3g}"
                f" | {c.statement}" + (f" | {c.detail}" if c.detail else "")
            )
        return "\n".join(lines)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["name", "status", "measured", "bound", "tolerance", "statement", "detail"])
            for c in self.checks:
                status = "skip" if c.skipped else ("pass" if c.passed else "fail")
                w.writerow([c.name, status, f"{c.measured:.12g}", f"{c.bound:.12g}", f"{c.tolerance:.12g}",
                            c.statement, c.detail])


# --------------------------------------------------------------------------
# supersolution comparison
# --------------------------------------------------------------------------


def check_supersolution(phi: np.ndarray, model: HarvestModel, grid: Grid, kernel: TransitionKernel,
                        V: ValueField | None = None, tol: float = 1e-10) -> CheckResult:
    """phi on the live nodes, shape (n_live, m); values off the grid count as 0."""
    phi = np.asarray(phi, dtype=float)
    statement = "a nonnegative function dominating its own Bellman update dominates V^h"
    if np.any(phi < 0):
        return CheckResult("supersolution", False, float(-phi.min()), 0.0, tol, statement, "phi has negative values")
    tbl = _branch_table(phi, kernel, model.q, model.r, grid.h)
    excess = tbl.max(axis=2) - phi
    worst = float(excess.max())
    slack = float(-worst)
    ok = worst <= tol
    detail = f"min slack {slack:.6g}"
    if not ok:
        i, a = np.unravel_index(np.argmax(excess), excess.shape)
        detail += f"; first violation at x={grid.live[i]:.6g}, regime {a + 1}"
    measured = worst
    if ok and V is not None:
        dom = float((V.live - phi).max())
        detail += f"; max(V - phi) = {dom:.6g}"
        ok = dom <= tol
        measured = max(worst, dom)
    return CheckResult("supersolution", ok, measured, 0.0, tol, statement, detail)


def supersolution_constant(model: HarvestModel, grid: Grid, kernel: TransitionKernel) -> float:
    """Smallest M with q*x + M a discrete supersolution on the live nodes.

    Each diffusion branch of q*x + M is affine in M with slope below one,
    harvest is an equality and renew is strict, so the minimum is explicit.
    """
    xs = grid.live
    q = model.q
    n = xs.size
    base = np.repeat((q * xs)[:, None], model.num_regimes, axis=1)
    ones = np.ones_like(base)
    # branch values for Phi = q x and the M-coefficient (Phi = 1 on live nodes)
    b0 = _branch_table(base, kernel, q, model.r, grid.h)[:-1, :, : kernel.controls.size]
    silent = replace(kernel, reward=np.zeros_like(kernel.reward))
    kern0 = _branch_table(ones, silent, 0.0, 0.0, grid.h)[:-1, :, : kernel.controls.size]
    need = (b0 - base[: n - 1, :, None]) / (1.0 - kern0)
    return float(max(need.max(), 0.0))


def drift_bound_constant(model: HarvestModel, grid: Grid) -> float:
    """Tightest K with b(x, a) <= delta * x + K on the grid."""
    xs = grid.live
    return float((model.drift_table(xs) - model.econ.delta * xs[:, None]).max())


# --------------------------------------------------------------------------
# slope, linearity
# --------------------------------------------------------------------------


def check_slopes(V: ValueField, model: HarvestModel, tol: float = 1e-9) -> CheckResult:
    h = V.grid.h
    d = np.diff(V.live, axis=0)
    low = model.q * h - d
    high = d - model.r * h
    worst = float(max(low.max(), high.max()))
    detail = f"slope range [{d.min() / h:.6g}, {d.max() / h:.6g}] per unit"
    if worst > tol:
        bad = np.argwhere((low > tol) | (high > tol))
        i, a = bad[0]
        detail += f"; {len(bad)} violations, first between x={V.grid.live[i]:.6g} and {V.grid.live[i + 1]:.6g}, regime {a + 1}"
    return CheckResult("slopes", worst <= tol, worst, 0.0, tol,
                       "q h <= V(x+h) - V(x) <= r h for adjacent live nodes", detail)


def check_linearity_above(V: ValueField, policy: PolicyField, model: HarvestModel, tol: float = 1e-9) -> CheckResult:
    grid = V.grid
    statement = "V grows with slope exactly q inside the impulse-harvest region; U is always harvested"
    try:
        level = compute_truncation(model)
    except TruncationError as exc:
        return CheckResult("linearity", True, 0.0, 0.0, tol, statement, f"skipped: {exc}", skipped=True)
    xs = grid.live
    above = xs > level
    if not above.any() or not np.all(truncation_condition(model, xs[above], level) < 0):
        return CheckResult("linearity", True, 0.0, 0.0, tol, statement,
                           "skipped: drift condition does not hold on the grid", skipped=True)
    h = grid.h
    step = policy.live_step
    L = V.live
    worst = 0.0
    notes = []
    for a in range(L.shape[1]):
        imp = step[:, a] == StepType.HARVEST
        if not imp[-1]:
            notes.append(f"regime {a + 1}: U not harvested")
            worst = max(worst, np.inf)
        if imp.any():
            start = int(np.argmax(imp))
            if not imp[start:].all():
                notes.append(f"regime {a + 1}: impulse region is not an up-set")
                worst = max(worst, np.inf)
            idx = np.nonzero(imp)[0]
            idx = idx[idx > 0]
            if idx.size:
                dev = np.abs(L[idx, a] - L[idx - 1, a] - model.q * h)
                worst = max(worst, float(dev.max()))
    return CheckResult("linearity", worst <= tol, worst, 0.0, tol, statement,
                       f"truncation level {level:.6g}" + ("; " + "; ".join(notes) if notes else ""))


# --------------------------------------------------------------------------
# large-noise limit
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class NoiseSweepSpec:
    mode: str = "multiplicative"  # or "additive"
    intensities: tuple[float, ...] = (1.0, 2.0, 4.0, 8.0, 16.0)
    window: tuple[float, float] | None = None  # defaults to (lambda, 1.5)
    eps: float = 0.05

    def __post_init__(self):
        if self.mode not in ("multiplicative", "additive"):
            raise ValueError(f"unknown sweep mode {self.mode!r}")
        ns = np.asarray(self.intensities, dtype=float)
        if ns.size == 0 or np.any(ns <= 0) or np.any(np.diff(ns) <= 0):
            raise ValueError("intensities must be positive and ascending")


def scaled_diffusion(spec: NoiseSweepSpec, n: float, m: int):
    if spec.mode == "multiplicative":
        return ScaledLinear(scale=float(n), base=(1.0,) * m)
    return Constant(value=(float(n),) * m)


def liquidation_distance(V: ValueField, model: HarvestModel, window: tuple[float, float]) -> float:
    xs = V.grid.live
    w = (xs >= window[0] - 1e-12) & (xs <= window[1] + 1e-12)
    return float(np.abs(V.live[w] - model.q * (xs[w, None] - V.grid.lambda_floor)).max())


def noise_drift_constants(model: HarvestModel, grid: Grid, beta: float = 0.5) -> dict:
    """Sampled constants for the growth hypotheses behind the large-noise limit."""
    xs = grid.live
    b = model.drift_table(xs)
    q, d, lam = model.q, model.econ.delta, grid.lambda_floor
    lin = b * q - d * q * (xs[:, None] - lam)
    return {
        "K_growth": float((xs[:, None] * b / (1 + xs[:, None] ** 2)).max()),
        "K_mult": float((lin / (xs[:, None] ** beta + 1)).max()),
        "K_add": float(lin.max()),
        "floor_ok": bool(lam > 0 or model.drift_table([0.0]).max() <= 0),
    }


def noise_sweep(base: HarvestModel, spec: NoiseSweepSpec, h: float = 0.01, upper: float = 2.0,
                tol: float = 1e-6) -> CheckResult:
    window = spec.window or (base.lam, 1.5)
    statement = f"{spec.mode} noise: sup over the window of |V^h - q(x - lambda)| shrinks to 0"
    grid = build_grid(base.lam, upper, h)
    consts = noise_drift_constants(base, grid)
    dists = []
    for n in spec.intensities:
        model = base.with_diffusion(scaled_diffusion(spec, n, base.num_regimes))
        try:
            V, _, _ = solve(model, grid, tol=tol)
        except Exception as exc:  # noqa: BLE001
            return CheckResult(f"sweep-{spec.mode}", False, np.inf, spec.eps, 0.0, statement,
                               f"sweep aborted at N={n}: {exc}")
        dists.append(liquidation_distance(V, model, window))
    d = np.array(dists)
    mono = bool(np.all(np.diff(d) <= 1e-12))
    ok = mono and d[-1] < spec.eps
    detail = "d(N) = " + ", ".join(f"{n:g}:{v:.6g}" for n, v in zip(spec.intensities, d))
    detail += f"; nonincreasing={mono}; floor condition={consts['floor_ok']}"
    return CheckResult(f"sweep-{spec.mode}", ok, float(d[-1]), spec.eps, 0.0, statement, detail,
                       data={"intensities": list(spec.intensities), "distance": d.tolist(), **consts})


# --------------------------------------------------------------------------
# grid refinement and Monte Carlo
# --------------------------------------------------------------------------


def _divides(h: float, value: float) -> bool:
    k = round(value / h)
    return abs(k * h - value) <= 1e-9 * max(1.0, abs(value))


def refinement_spacings(model: HarvestModel, h: float, upper: float) -> tuple[float, float, float]:
    """(4h, 2h, h) when every spacing divides lambda and U, else (h, h/2, h/4)."""
    coarse = (4 * h, 2 * h, h)
    if all(_divides(s, model.lam) and _divides(s, upper) for s in coarse):
        return coarse
    return (h, h / 2, h / 4)


def refinement_errors(model: HarvestModel, hs: Sequence[float], upper: float = 2.0, tol: float = 1e-8):
    """Successive sup-norm differences on the coarsest live grid."""
    hs = list(hs)
    bad = [h for h in hs if not (_divides(h, model.lam) and _divides(h, upper))]
    if bad:
        raise ConfigurationError(f"refinement spacings {bad} do not divide lambda={model.lam} and U={upper}")
    coarse = build_grid(model.lam, upper, hs[0])
    vals = []
    for h in hs:
        grid = build_grid(model.lam, upper, h)
        V, _, _ = solve(model, grid, tol=tol)
        idx = [grid.index_of(x) for x in coarse.live]
        vals.append(V.values[idx])
    return [float(np.abs(a - b).max()) for a, b in zip(vals, vals[1:])]


def refinement_check(model: HarvestModel, hs: Sequence[float] = (0.02, 0.01, 0.005), upper: float = 2.0) -> CheckResult:
    errs = refinement_errors(model, hs, upper)
    ok = all(b < a for a, b in zip(errs, errs[1:]))
    detail = "e(h) = " + ", ".join(f"{h:g}:{e:.6g}" for h, e in zip(hs, errs))
    return CheckResult("refinement", ok, errs[-1], errs[0], 0.0,
                       "sup |V^h - V^(h/2)| decreases as the grid is refined", detail,
                       data={"h": list(hs), "errors": errs})


def mc_cross_check(model: HarvestModel, grid: Grid, V: ValueField, policy: PolicyField,
                   starts: Sequence[tuple[float, int]], cfg: SimConfig, eps_disc: float = 0.05,
                   threads: int | None = None) -> CheckResult:
    rows = []
    worst = -np.inf
    ok = True
    for x0, a0 in starts:
        c = SimConfig(dt=cfg.dt, horizon=cfg.horizon, n_paths=cfg.n_paths, seed=cfg.seed,
                      start=(float(x0), int(a0)), exact_clock=cfg.exact_clock)
        est = estimate_payoff(model, policy, grid, c, threads)
        target = V.at(x0, a0)
        gap = abs(est.mean - target)
        allow = 3 * est.std_error + eps_disc
        ok &= gap <= allow
        worst = max(worst, gap - allow)
        rows.append({"x0": x0, "alpha0": a0, "mean": est.mean, "se": est.std_error, "V": target,
                     "gap": gap, "allowed": allow, "censored": est.censored_fraction})
    detail = "; ".join(f"({r['x0']:g},{r['alpha0']}): MC={r['mean']:.6g}+-{r['se']:.3g} V={r['V']:.6g}" for r in rows)
    return CheckResult("mc-cross", bool(ok), float(worst), 0.0, eps_disc,
                       "simulated payoff of the grid policy matches V^h within 3 SE + eps", detail,
                       data={"rows": rows})
