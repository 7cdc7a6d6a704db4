"""Dynamic programming for the controlled chain.

Two drivers share the same Bellman operator:

* ``method="value"``: plain value iteration, Gauss-Seidel (default) or Jacobi.
* ``method="policy"``: policy iteration; each step takes one greedy Jacobi
  sweep and then evaluates the greedy policy exactly with a sparse solve.

Both start from the liquidation payoff q(x - lambda), which is a
subsolution, so iterates never decrease.
"""

from __future__ import annotations

import csv
import time
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from numba import njit
from scipy.sparse.linalg import spsolve

from .chain import Grid, StepType, TransitionKernel, build_kernel
from .errors import NonConvergenceError, PolicyError
from .model import HarvestModel

DIVERGENCE_STREAK = 10
MONOTONE_SLACK = 1e-10


@dataclass
class ValueField:
    grid: Grid
    values: np.ndarray  # (n_nodes, m); killed node pinned to 0

    @property
    def live(self) -> np.ndarray:
        return self.values[self.grid.first_live:]

    def at(self, x: float, alpha: int) -> float:
        return float(self.values[self.grid.index_of(x), alpha - 1])


@dataclass
class PolicyField:
    grid: Grid
    step: np.ndarray  # (n_nodes, m) int, values in {-1, 0, 1}
    control: np.ndarray  # (n_nodes, m) float

    @property
    def live_step(self) -> np.ndarray:
        return self.step[self.grid.first_live:]

    @property
    def live_control(self) -> np.ndarray:
        return self.control[self.grid.first_live:]


@dataclass
class SolveReport:
    iterations: int
    final_increment: float
    residual: float
    wall_time: float
    method: str
    min_step: float = np.inf  # smallest pointwise change between consecutive iterates
    increments: list = field(default_factory=list, repr=False)

    @property
    def monotone(self) -> bool:
        return self.min_step >= -MONOTONE_SLACK


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------


def _branch_order(controls: np.ndarray) -> np.ndarray:
    # diffusion controls by |c| then c; ties resolve to the earliest candidate
    return np.lexsort((controls, np.abs(controls)))


def _full(grid: Grid, live: np.ndarray) -> np.ndarray:
    out = np.zeros((grid.nodes.size, live.shape[1]))
    out[grid.first_live:] = live
    return out


def initialize(grid: Grid, model: HarvestModel) -> ValueField:
    live = model.q * (grid.live - grid.lambda_floor)
    vals = np.repeat(live[:, None], model.num_regimes, axis=1)
    return ValueField(grid, _full(grid, vals))


def _branch_table(L: np.ndarray, kernel: TransitionKernel, q: float, r: float, h: float):
    """All candidate values at the live nodes.

    Returns an array (n_live, m, nc + 2) ordered as [diffusion per control
    in tie-break order..., harvest, renew]; unavailable branches are -inf.
    """
    n, m = L.shape
    nc = kernel.controls.size
    order = _branch_order(kernel.controls)
    out = np.full((n, m, nc + 2), -np.inf)
    below = np.vstack([np.zeros((1, m)), L[:-2]])  # value one cell down for diffusion nodes
    above = L[1:]
    here = L[:-1]
    cont = (
        kernel.up * above[:, :, None]
        + kernel.down * below[:, :, None]
        + kernel.stay * here[:, :, None]
        + np.einsum("iakc,ik->iac", kernel.switch, here)
    )
    diff = kernel.discount * cont + kernel.reward[:-1] * kernel.dt
    out[:-1, :, :nc] = diff[:, :, order]
    out[1:, :, nc] = L[:-1] + q * h
    out[:-1, :, nc + 1] = L[1:] - r * h
    return out


def _decode(idx: np.ndarray, controls: np.ndarray):
    nc = controls.size
    order = _branch_order(controls)
    step = np.where(idx < nc, StepType.DIFFUSION, np.where(idx == nc, StepType.HARVEST, StepType.RENEW))
    ctrl = np.where(idx < nc, controls[order][np.minimum(idx, nc - 1)], 0.0)
    return step.astype(np.int64), ctrl


def branch_values(V: ValueField, x: float, alpha: int, grid: Grid, kernel: TransitionKernel, model: HarvestModel):
    """Harvest, renew and per-control diffusion values at one live node.

    Unavailable branches are returned as None.
    """
    i = grid.index_of(x) - grid.first_live
    if i < 0:
        raise PolicyError("the killed node has no branches")
    tbl = _branch_table(V.live, kernel, model.q, model.r, grid.h)[i, alpha - 1]
    nc = kernel.controls.size
    order = _branch_order(kernel.controls)
    diff = {}
    if np.isfinite(tbl[0]):
        diff = {float(kernel.controls[order[j]]): float(tbl[j]) for j in range(nc)}
    harvest = float(tbl[nc]) if np.isfinite(tbl[nc]) else None
    renew = float(tbl[nc + 1]) if np.isfinite(tbl[nc + 1]) else None
    return harvest, renew, diff


def bellman_sweep(V: ValueField, model: HarvestModel, kernel: TransitionKernel):
    """One Jacobi application of the Bellman operator."""
    grid = V.grid
    L = V.live
    tbl = _branch_table(L, kernel, model.q, model.r, grid.h)
    idx = np.argmax(tbl, axis=2)
    newL = np.take_along_axis(tbl, idx[:, :, None], axis=2)[:, :, 0]
    if not np.all(np.isfinite(newL)):
        raise RuntimeError("no branch available at some node")
    step, ctrl = _decode(idx, kernel.controls)
    pol = PolicyField(grid, _full(grid, step).astype(np.int64), _full(grid, ctrl))
    inc = float(np.max(np.abs(newL - L)))
    return ValueField(grid, _full(grid, newL)), pol, inc


@njit(cache=True)
def _gs_sweep(L, up, down, stay, switch, disc, rdt, order, qh, rh, step, ctrl, controls):
    n, m = L.shape
    nc = order.size
    inc = 0.0
    min_step = np.inf
    for i in range(n):
        for a in range(m):
            best = -np.inf
            bstep = 0
            bc = 0.0
            if i < n - 1:
                lo = L[i - 1, a] if i > 0 else 0.0
                for j in range(nc):
                    k = order[j]
                    s = up[i, a, k] * L[i + 1, a] + down[i, a, k] * lo + stay[i, a, k] * L[i, a]
                    for ell in range(m):
                        if ell != a:
                            s += switch[i, a, ell, k] * L[i, ell]
                    v = disc[i, a, k] * s + rdt[i, a, k]
                    if v > best:
                        best = v
                        bstep = 0
                        bc = controls[k]
            if i > 0:
                v = L[i - 1, a] + qh
                if v > best:
                    best = v
                    bstep = 1
                    bc = 0.0
            if i < n - 1:
                v = L[i + 1, a] - rh
                if v > best:
                    best = v
                    bstep = -1
                    bc = 0.0
            d = best - L[i, a]
            if abs(d) > inc:
                inc = abs(d)
            if d < min_step:
                min_step = d
            L[i, a] = best
            step[i, a] = bstep
            ctrl[i, a] = bc
    return inc, min_step


def gauss_seidel_sweep(V: ValueField, model: HarvestModel, kernel: TransitionKernel):
    """In-place-style sweep in ascending state, then regime, on a copy of V."""
    grid = V.grid
    L = V.live.copy()
    n, m = L.shape
    step = np.zeros((n, m), dtype=np.int64)
    ctrl = np.zeros((n, m))
    inc, min_step = _gs_sweep(
        L, kernel.up, kernel.down, kernel.stay, kernel.switch, kernel.discount,
        kernel.reward[:-1] * kernel.dt, _branch_order(kernel.controls).astype(np.int64),
        model.q * grid.h, model.r * grid.h, step, ctrl, kernel.controls,
    )
    pol = PolicyField(grid, _full(grid, step).astype(np.int64), _full(grid, ctrl))
    return ValueField(grid, _full(grid, L)), pol, float(inc), float(min_step)


# --------------------------------------------------------------------------
# policy evaluation
# --------------------------------------------------------------------------


def _check_policy(step: np.ndarray):
    n = step.shape[0]
    if np.any(step[0] == StepType.HARVEST):
        raise PolicyError("harvest prescribed at the floor")
    if np.any(step[n - 1] == StepType.RENEW):
        raise PolicyError("renew prescribed at U")
    cyc = (step[1:] == StepType.HARVEST) & (step[:-1] == StepType.RENEW)
    if np.any(cyc):
        i, a = np.argwhere(cyc)[0]
        raise PolicyError(f"zero-time impulse cycle between live nodes {i} and {i + 1} in regime {a + 1}")
    if np.any((step[n - 1] == StepType.DIFFUSION)):
        raise PolicyError("diffusion prescribed at U, where no diffusion row exists")


def policy_evaluate(policy: PolicyField, model: HarvestModel, grid: Grid, kernel: TransitionKernel) -> ValueField:
    """Exact payoff of a stationary policy, by one sparse linear solve."""
    step = policy.live_step
    ctrl = policy.live_control
    _check_policy(step)
    n, m = step.shape
    N = n * m
    h = grid.h
    controls = kernel.controls
    idx = lambda i, a: i * m + a  # noqa: E731
    rows, cols, vals = [], [], []
    rhs = np.zeros(N)
    disc = kernel.discount
    for i in range(n):
        for a in range(m):
            r0 = idx(i, a)
            s = step[i, a]
            if s == StepType.HARVEST:
                rows += [r0, r0]
                cols += [r0, idx(i - 1, a)]
                vals += [1.0, -1.0]
                rhs[r0] = model.q * h
            elif s == StepType.RENEW:
                rows += [r0, r0]
                cols += [r0, idx(i + 1, a)]
                vals += [1.0, -1.0]
                rhs[r0] = -model.r * h
            else:
                hits = np.nonzero(np.isclose(controls, ctrl[i, a], rtol=0, atol=1e-12))[0]
                if hits.size == 0:
                    raise PolicyError(f"control {ctrl[i, a]} not in the control set")
                k = int(hits[0])
                d = disc[i, a, k]
                diag = 1.0 - d * kernel.stay[i, a, k]
                rows.append(r0); cols.append(r0); vals.append(diag)  # noqa: E702
                rows.append(r0); cols.append(idx(i + 1, a)); vals.append(-d * kernel.up[i, a, k])  # noqa: E702
                if i > 0:
                    rows.append(r0); cols.append(idx(i - 1, a)); vals.append(-d * kernel.down[i, a, k])  # noqa: E702
                for ell in range(m):
                    if ell != a:
                        rows.append(r0); cols.append(idx(i, ell)); vals.append(-d * kernel.switch[i, a, ell, k])  # noqa: E702
                rhs[r0] = kernel.reward[i, a, k] * kernel.dt[i, a, k]
    A = sp.csr_matrix((vals, (rows, cols)), shape=(N, N))
    W = spsolve(A.tocsc(), rhs).reshape(n, m)
    if not np.all(np.isfinite(W)):
        raise PolicyError("policy evaluation produced non-finite values")
    return ValueField(grid, _full(grid, W))


def policy_from_arrays(grid: Grid, step_live: np.ndarray, control_live: np.ndarray) -> PolicyField:
    return PolicyField(grid, _full(grid, np.asarray(step_live)).astype(np.int64), _full(grid, np.asarray(control_live, float)))


def liquidation_policy(grid: Grid, model: HarvestModel) -> PolicyField:
    """Harvest everywhere above the floor, idle diffusion at the floor."""
    n, m = grid.n_live, model.num_regimes
    step = np.full((n, m), int(StepType.HARVEST))
    step[0] = StepType.DIFFUSION
    return policy_from_arrays(grid, step, np.zeros((n, m)))


# --------------------------------------------------------------------------
# drivers
# --------------------------------------------------------------------------


def dpe_residual(V: ValueField, policy: PolicyField | None, model: HarvestModel, grid: Grid,
                 kernel: TransitionKernel, check_policy: bool = True, policy_tol: float = 1e-8) -> float:
    """max |V - TV| over live nodes; optionally require the policy to attain the max."""
    tbl = _branch_table(V.live, kernel, model.q, model.r, grid.h)
    best = tbl.max(axis=2)
    res = float(np.max(np.abs(best - V.live)))
    if policy is not None and check_policy:
        step, ctrl = policy.live_step, policy.live_control
        nc = kernel.controls.size
        order = _branch_order(kernel.controls)
        pos = np.empty(step.shape, dtype=np.int64)
        for (i, a), s in np.ndenumerate(step):
            if s == StepType.HARVEST:
                pos[i, a] = nc
            elif s == StepType.RENEW:
                pos[i, a] = nc + 1
            else:
                k = int(np.argmin(np.abs(kernel.controls - ctrl[i, a])))
                pos[i, a] = int(np.nonzero(order == k)[0][0])
        chosen = np.take_along_axis(tbl, pos[:, :, None], axis=2)[:, :, 0]
        gap = best - chosen
        if np.any(~np.isfinite(chosen)) or gap.max() > policy_tol * (1 + np.abs(best).max()):
            raise PolicyError(f"recorded policy misses the Bellman max by {float(np.nanmax(gap)):.3g}")
    return res


def solve(
    model: HarvestModel,
    grid: Grid,
    kernel: TransitionKernel | None = None,
    tol: float = 1e-6,
    max_iter: int = 10**6,
    method: str = "policy",
    sweep_mode: str = "gauss-seidel",
    V0: ValueField | None = None,
    keep_history: bool = False,
):
    """Iterate until the sup-norm increment drops below ``tol``."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    if method not in ("policy", "value"):
        raise ValueError(f"unknown method {method!r}")
    if sweep_mode not in ("gauss-seidel", "jacobi"):
        raise ValueError(f"unknown sweep mode {sweep_mode!r}")
    if kernel is None:
        kernel = build_kernel(model, grid)
    t0 = time.perf_counter()
    V = V0 if V0 is not None else initialize(grid, model)
    min_step = np.inf
    incs: list[float] = []
    streak = 0
    inc = np.inf
    policy = None
    it = 0
    while it < max_iter:
        it += 1
        if method == "value" and sweep_mode == "gauss-seidel":
            V1, policy, inc, ms = gauss_seidel_sweep(V, model, kernel)
            min_step = min(min_step, ms)
        else:
            V1, policy, inc = bellman_sweep(V, model, kernel)
            min_step = min(min_step, float(np.min(V1.live - V.live)))
            if method == "policy":
                W = policy_evaluate(policy, model, grid, kernel)
                min_step = min(min_step, float(np.min(W.live - V1.live)))
                inc = float(np.max(np.abs(W.live - V.live)))
                V1 = W
        if keep_history or len(incs) < 2:
            incs.append(inc)
        else:
            incs[-2:] = [incs[-1], inc]
        if len(incs) >= 2 and inc > incs[-2]:
            streak += 1
        else:
            streak = 0
        V = V1
        if not np.all(np.isfinite(V.values)):
            raise NonConvergenceError("iterates became non-finite", inc, it)
        if streak >= DIVERGENCE_STREAK and inc > 1e3 * max(incs[0], 1.0):
            raise NonConvergenceError(f"increment grew for {streak} sweeps", inc, it)
        if inc < tol:
            break
    else:
        raise NonConvergenceError(f"no convergence in {max_iter} iterations (last increment {inc:.3g})", inc, it)
    residual = dpe_residual(V, policy, model, grid, kernel, check_policy=False)
    report = SolveReport(
        iterations=it, final_increment=float(inc), residual=residual,
        wall_time=time.perf_counter() - t0, method=f"{method}/{sweep_mode}" if method == "value" else method,
        min_step=float(min_step), increments=incs,
    )
    return V, policy, report


# --------------------------------------------------------------------------
# threshold structure
# --------------------------------------------------------------------------


class StructureWarning(UserWarning):
    pass


@dataclass
class Thresholds:
    regime: int
    L1: float | None  # top of the renew region (impulse or negative rate)
    L2: float | None  # bottom of the positive harvest-rate region
    L3: float | None  # bottom of the impulse-harvest region
    violations: list = field(default_factory=list)

    @property
    def ordered(self) -> bool:
        present = [v for v in (self.L1, self.L2, self.L3) if v is not None]
        return all(a <= b for a, b in zip(present, present[1:]))


def _gaps(mask: np.ndarray) -> np.ndarray:
    if not mask.any():
        return np.array([], dtype=int)
    ids = np.nonzero(mask)[0]
    hull = np.arange(ids[0], ids[-1] + 1)
    return hull[~mask[hull]]


def extract_thresholds(policy: PolicyField) -> list[Thresholds]:
    grid = policy.grid
    xs = grid.live
    out = []
    for a in range(policy.step.shape[1]):
        s = policy.live_step[:, a]
        c = policy.live_control[:, a]
        renew = (s == StepType.RENEW) | ((s == StepType.DIFFUSION) & (c < 0))
        rate = (s == StepType.DIFFUSION) & (c > 0)
        imp = s == StepType.HARVEST
        th = Thresholds(
            regime=a + 1,
            L1=float(xs[renew].max()) if renew.any() else None,
            L2=float(xs[rate].min()) if rate.any() else None,
            L3=float(xs[imp].min()) if imp.any() else None,
        )
        for name, mask in (("renew", renew), ("harvest-rate", rate), ("impulse-harvest", imp)):
            g = _gaps(mask)
            if g.size:
                th.violations.append(f"regime {a + 1}: {name} region not an interval, gaps at x={xs[g].round(10).tolist()}")
        if imp.any() and not imp[np.argmax(imp):].all():
            th.violations.append(f"regime {a + 1}: impulse-harvest region is not an up-set")
        if not th.ordered:
            th.violations.append(f"regime {a + 1}: levels out of order L1={th.L1}, L2={th.L2}, L3={th.L3}")
        if th.violations:
            warnings.warn("; ".join(th.violations), StructureWarning, stacklevel=2)
        out.append(th)
    return out


# --------------------------------------------------------------------------
# CSV round trip
# --------------------------------------------------------------------------


SOLUTION_COLUMNS = ("V", "step_type", "c")


def write_solution_csv(path, V: ValueField | None, policy: PolicyField | None,
                       columns: Sequence[str] = SOLUTION_COLUMNS) -> None:
    """Write x, alpha and the requested columns for every live node."""
    grid = (V or policy).grid
    m = (V.values if V is not None else policy.step).shape[1]
    cols = {
        "V": lambda i, a: f"{V.values[i, a]:.12g}",
        "step_type": lambda i, a: int(policy.step[i, a]),
        "c": lambda i, a: f"{policy.control[i, a]:.12g}",
    }
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "alpha", *columns])
        for i in range(grid.first_live, grid.nodes.size):
            for a in range(m):
                w.writerow([f"{grid.nodes[i]:.12g}", a + 1, *(cols[c](i, a) for c in columns)])


def read_solution_csv(path, grid: Grid) -> tuple[ValueField, PolicyField]:
    """Read a value and/or policy dump back onto ``grid``.

    Missing columns read as zero (Diffusion with c = 0 for the policy).
    Raises ValueError when the nodes do not match the grid.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path} is empty")
    if "x" not in rows[0] or "alpha" not in rows[0]:
        raise ValueError(f"{path} lacks x/alpha columns")
    m = max(int(r["alpha"]) for r in rows)
    xs = sorted({float(r["x"]) for r in rows})
    if len(xs) != grid.n_live or not np.allclose(xs, grid.live, rtol=0, atol=1e-9):
        raise ValueError(f"{path} does not match the configured grid")
    if len(rows) != grid.n_live * m:
        raise ValueError(f"{path} has {len(rows)} rows, expected {grid.n_live * m}")
    vals = np.zeros((grid.nodes.size, m))
    step = np.zeros((grid.nodes.size, m), dtype=np.int64)
    ctrl = np.zeros((grid.nodes.size, m))
    for r in rows:
        i = grid.index_of(float(r["x"]))
        a = int(r["alpha"]) - 1
        if "V" in r:
            vals[i, a] = float(r["V"])
        if "step_type" in r:
            step[i, a] = int(r["step_type"])
        if "c" in r:
            ctrl[i, a] = float(r["c"])
    return ValueField(grid, vals), PolicyField(grid, step, ctrl)
