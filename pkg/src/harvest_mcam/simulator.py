"""Monte Carlo evaluation of a grid policy on the continuous dynamics.

The state follows an Euler-Maruyama scheme between policy lookups. A grid
policy is lifted to continuous states by snapping to the nearest node:

* impulse Harvest/Renew nodes project the state onto the nearest node
  (below/above) that does not prescribe the same impulse; the jump is
  booked into Y or Z;
* diffusion nodes apply their regular control.

A path exits when the state is at or below the floor and the floor does not
prescribe Renew for the current regime. When the floor renews, an Euler
overshoot below the floor is reflected by the same projection.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from .chain import Grid, StepType
from .model import HarvestModel
from .solver import PolicyField

THREADS_ENV = "HARVEST_MCAM_THREADS"


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    horizon: float = 200.0
    n_paths: int = 10_000
    seed: int = 0
    start: tuple[float, int] = (1.0, 1)
    exact_clock: bool = False

    def __post_init__(self):
        if not self.dt > 0 or not self.horizon > 0:
            raise ValueError("dt and horizon must be positive")
        if self.n_paths < 1:
            raise ValueError("n_paths must be positive")


@dataclass(frozen=True)
class PathRecord:
    discounted_payoff: float
    exit_time: float  # horizon when censored
    censored: bool
    total_harvest: float
    total_renew: float
    running_part: float
    harvest_part: float
    renew_part: float


@dataclass(frozen=True)
class PayoffEstimate:
    mean: float
    std_error: float
    n_paths: int
    censored_fraction: float
    tail_bound: float


# --------------------------------------------------------------------------
# elementary steps (pure Python, mirrored inside the compiled kernel)
# --------------------------------------------------------------------------


def step_euler(model: HarvestModel, x: float, alpha: int, c: float, dt: float, xi: float) -> float:
    a = alpha - 1
    b = model.drift_table([x])[0, a]
    s = model.diffusion_table([x])[0, a]
    f = float(model.control.rate(x, c))
    return float(x + (b - f) * dt + s * math.sqrt(dt) * xi)


def sample_switch(model: HarvestModel, alpha: int, dt: float, u: float) -> int:
    """First-order regime switch: jump to l != alpha with probability G[alpha, l] * dt."""
    gamma = model.gamma
    a = alpha - 1
    rates = np.where(np.arange(gamma.shape[0]) == a, 0.0, gamma[a])
    if dt * rates.sum() >= 1.0:
        raise ValueError("dt too large for first-order switching: dt * total rate >= 1")
    acc = 0.0
    for ell, rate in enumerate(rates):
        if rate <= 0:
            continue
        acc += rate * dt
        if u < acc:
            return ell + 1
    return alpha


@dataclass(frozen=True)
class LiftedPolicy:
    """Grid policy arrays over live nodes, with impulse projection targets."""

    x0: float
    h: float
    step: np.ndarray
    control: np.ndarray
    harvest_to: np.ndarray
    renew_to: np.ndarray


def lift_policy(policy: PolicyField) -> LiftedPolicy:
    grid = policy.grid
    step = np.ascontiguousarray(policy.live_step, dtype=np.int64)
    ctrl = np.ascontiguousarray(policy.live_control, dtype=float)
    n, m = step.shape
    hto = np.full((n, m), -1, dtype=np.int64)
    rto = np.full((n, m), -1, dtype=np.int64)
    for a in range(m):
        last = -1
        for i in range(n):
            if step[i, a] != StepType.HARVEST:
                last = i
            hto[i, a] = last
        nxt = -1
        for i in range(n - 1, -1, -1):
            if step[i, a] != StepType.RENEW:
                nxt = i
            rto[i, a] = nxt
    return LiftedPolicy(float(grid.live[0]), grid.h, step, ctrl, hto, rto)


def apply_policy(x: float, alpha: int, lifted: LiftedPolicy) -> tuple[float, float]:
    """(regular control, signed impulse) prescribed at a continuous state."""
    n = lifted.step.shape[0]
    a = alpha - 1
    i = min(max(int(round((x - lifted.x0) / lifted.h)), 0), n - 1)
    s = lifted.step[i, a]
    if s == StepType.HARVEST:
        j = lifted.harvest_to[i, a]
        return 0.0, (lifted.x0 + j * lifted.h) - x
    if s == StepType.RENEW:
        j = lifted.renew_to[i, a]
        return 0.0, (lifted.x0 + j * lifted.h) - x
    return float(lifted.control[i, a]), 0.0


# --------------------------------------------------------------------------
# compiled path loop
# --------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _run_path(rng, x, a, dt, horizon, lam, x0, h, drift, diff, gamma, rate_code, cost_code,
              cost_scale, cost_denom, a1, q, r, delta, step, ctrl, hto, rto, exact_clock, log, log_stride):
    n = step.shape[0]
    m = gamma.shape[0]
    sq = math.sqrt(dt)
    shrink = math.exp(-delta * dt)
    disc = 1.0
    t = 0.0
    run = 0.0
    hv = 0.0
    rv = 0.0
    Y = 0.0
    Z = 0.0
    exited = False
    n_log = 0
    nsteps = int(math.ceil(horizon / dt - 1e-9))
    clock = 0.0
    if exact_clock:
        clock = rng.standard_exponential() / max(-gamma[a, a], 1e-300)
    k = 0
    while True:
        # impulse projection
        i = int(math.floor((x - x0) / h + 0.5))
        if i < 0:
            i = 0
        elif i > n - 1:
            i = n - 1
        s = step[i, a]
        dY = 0.0
        dZ = 0.0
        if s == 1:
            tgt = x0 + hto[i, a] * h
            if tgt < x:
                dY = x - tgt
                x = tgt
                i = hto[i, a]
        elif s == -1:
            tgt = x0 + rto[i, a] * h
            if tgt > x:
                dZ = tgt - x
                x = tgt
                i = rto[i, a]
        Y += dY
        Z += dZ
        hv += disc * q * dY
        rv += disc * r * dZ
        if x <= lam and step[0, a] != -1:
            exited = True
        if log.shape[0] > 0 and n_log < log.shape[0] and (k % log_stride == 0 or exited or dY > 0 or dZ > 0):
            log[n_log, 0] = t
            log[n_log, 1] = x
            log[n_log, 2] = a + 1
            log[n_log, 3] = ctrl[i, a] if step[i, a] == 0 else 0.0
            log[n_log, 4] = dY
            log[n_log, 5] = dZ
            log[n_log, 6] = run + hv - rv
            n_log += 1
        if exited or k >= nsteps:
            break
        # regular control and running payoff
        c = ctrl[i, a] if step[i, a] == 0 else 0.0
        f = c * x if rate_code == 1 else c
        g = 0.0
        if cost_code == 1:
            g = cost_scale[a] * c * c / (cost_denom * (1.0 + x))
        run += disc * (a1 * f - g) * dt
        b = drift[a, 0] + x * (drift[a, 1] + drift[a, 2] * x)
        sig = diff[a, 0] + x * (diff[a, 1] + diff[a, 2] * x)
        x = x + (b - f) * dt + sig * sq * rng.standard_normal()
        # regime
        if exact_clock:
            clock -= dt
            if clock <= 0.0:
                u = rng.random() * (-gamma[a, a])
                acc = 0.0
                for ell in range(m):
                    if ell != a:
                        acc += gamma[a, ell]
                        if u < acc:
                            a = ell
                            break
                clock = rng.standard_exponential() / max(-gamma[a, a], 1e-300)
        else:
            u = rng.random()
            acc = 0.0
            for ell in range(m):
                if ell != a:
                    acc += gamma[a, ell] * dt
                    if u < acc:
                        a = ell
                        break
        t += dt
        disc *= shrink
        k += 1
    return run + hv - rv, t, exited, Y, Z, run, hv, rv, n_log


def _model_arrays(model: HarvestModel):
    ctl = model.control
    return dict(
        drift=np.ascontiguousarray(model.drift.coefficients()),
        diff=np.ascontiguousarray(model.diffusion.coefficients()),
        gamma=np.ascontiguousarray(model.gamma),
        rate_code=1 if ctl.rate_family == "proportional" else 0,
        cost_code=1 if ctl.cost_family == "quadratic" else 0,
        cost_scale=np.asarray(ctl.cost_scale if ctl.cost_scale else (0.0,) * model.num_regimes, dtype=float),
        cost_denom=float(ctl.cost_denom),
        a1=model.econ.a1, q=model.q, r=model.r, delta=model.econ.delta,
    )


def path_rngs(seed: int, n_paths: int) -> list[np.random.Generator]:
    """Independent per-path generators spawned from the master seed."""
    return [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(seed).spawn(n_paths)]


def _check_config(model: HarvestModel, cfg: SimConfig):
    rate = float(np.max(-np.diag(model.gamma)))
    if rate * cfg.dt >= 1.0:
        raise ValueError("dt * max switching rate >= 1; reduce dt")
    if rate * cfg.dt > 0.05:
        warnings.warn("dt is not small against the switching rates", stacklevel=3)


def simulate_path(model: HarvestModel, policy: PolicyField, grid: Grid, cfg: SimConfig,
                  seed: int | None = None, log_rows: int = 0, log_stride: int = 1000):
    """One path from cfg.start. With ``log_rows`` > 0 also returns a (k, 7) log array
    with columns t, x, alpha, c, dY, dZ, discounted_payoff_so_far."""
    _check_config(model, cfg)
    lifted = lift_policy(policy)
    arr = _model_arrays(model)
    log = np.zeros((log_rows, 7))
    rng = path_rngs(cfg.seed if seed is None else int(seed), 1)[0]
    x_start, alpha = cfg.start
    out = _run_path(rng, float(x_start), int(alpha) - 1, cfg.dt, cfg.horizon, grid.lambda_floor, lifted.x0, lifted.h,
                    arr["drift"], arr["diff"], arr["gamma"], arr["rate_code"], arr["cost_code"],
                    arr["cost_scale"], arr["cost_denom"], arr["a1"], arr["q"], arr["r"], arr["delta"],
                    lifted.step, lifted.control, lifted.harvest_to, lifted.renew_to, cfg.exact_clock,
                    log, max(int(log_stride), 1))
    payoff, t, exited, Y, Z, run, hv, rv, n_log = out
    rec = PathRecord(payoff, t, not exited, Y, Z, run, hv, rv)
    if log_rows:
        return rec, log[:n_log]
    return rec


def tail_bound(model: HarvestModel, grid: Grid, horizon: float) -> float:
    """Bound on the discounted payoff left after the horizon."""
    p = model.price_cost_table(grid.live)
    return float(math.exp(-model.econ.delta * horizon) * (model.q * grid.upper + np.abs(p).max() / model.econ.delta))


def default_threads() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(int(env), 1)
    return max(os.cpu_count() or 1, 1)


def simulate_many(model: HarvestModel, policy: PolicyField, grid: Grid, cfg: SimConfig,
                  threads: int | None = None) -> list[PathRecord]:
    _check_config(model, cfg)
    lifted = lift_policy(policy)
    arr = _model_arrays(model)
    rngs = path_rngs(cfg.seed, cfg.n_paths)
    x_start, alpha = cfg.start
    empty = np.zeros((0, 7))

    def one(s):
        res = _run_path(s, float(x_start), int(alpha) - 1, cfg.dt, cfg.horizon, grid.lambda_floor, lifted.x0,
                        lifted.h, arr["drift"], arr["diff"], arr["gamma"], arr["rate_code"], arr["cost_code"],
                        arr["cost_scale"], arr["cost_denom"], arr["a1"], arr["q"], arr["r"], arr["delta"],
                        lifted.step, lifted.control, lifted.harvest_to, lifted.renew_to, cfg.exact_clock, empty, 1)
        payoff, t, exited, Y, Z, run, hv, rv, _ = res
        return PathRecord(payoff, t, not exited, Y, Z, run, hv, rv)

    threads = threads or default_threads()
    if threads <= 1:
        return [one(s) for s in rngs]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(one, rngs))


def estimate_payoff(model: HarvestModel, policy: PolicyField, grid: Grid, cfg: SimConfig,
                    threads: int | None = None) -> PayoffEstimate:
    if cfg.n_paths < 2:
        raise ValueError("need at least two paths for a standard error")
    recs = simulate_many(model, policy, grid, cfg, threads)
    pay = np.array([r.discounted_payoff for r in recs])
    cens = np.array([r.censored for r in recs])
    if np.all(pay == pay[0]):
        mean, se = float(pay[0]), 0.0
    else:
        mean, se = float(pay.mean()), float(pay.std(ddof=1) / math.sqrt(pay.size))
    return PayoffEstimate(
        mean=mean,
        std_error=se,
        n_paths=pay.size,
        censored_fraction=float(cens.mean()),
        tail_bound=tail_bound(model, grid, cfg.horizon),
    )
