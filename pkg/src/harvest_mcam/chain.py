"""Grid and locally consistent controlled Markov chain.

Diffusion steps move one grid cell up or down, switch regime in place, or
stay; harvest/renew steps move one cell down/up in zero time. Rows are kept
as dense arrays indexed by (diffusion node, regime, control).
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConfigurationError, DegenerateStateError, DomainError, PreconditionError
from .model import HarvestModel

PROB_TOL = 1e-12


class StepType(enum.IntEnum):
    RENEW = -1
    DIFFUSION = 0
    HARVEST = 1


@dataclass(frozen=True)
class Grid:
    h: float
    lambda_floor: float
    upper: float
    nodes: np.ndarray = field(repr=False)
    killed_index: int | None
    snap: dict = field(default_factory=dict, repr=False)

    @property
    def first_live(self) -> int:
        return 0 if self.killed_index is None else 1

    @property
    def live(self) -> np.ndarray:
        return self.nodes[self.first_live:]

    @property
    def n_live(self) -> int:
        return self.nodes.size - self.first_live

    def index_of(self, x: float) -> int:
        k = int(round((x - self.nodes[0]) / self.h))
        if k < 0 or k >= self.nodes.size or abs(self.nodes[k] - x) > 1e-9 * max(1.0, abs(x)):
            raise DomainError(f"{x} is not a grid node")
        return k

    def same_as(self, other: "Grid") -> bool:
        return (
            self.nodes.size == other.nodes.size
            and self.killed_index == other.killed_index
            and np.allclose(self.nodes, other.nodes, rtol=0, atol=1e-9)
        )


def _snap(value: float, h: float, name: str) -> tuple[int, float]:
    k = int(round(value / h))
    disp = abs(k * h - value)
    if disp > 0.5 * h + 1e-12:
        raise ConfigurationError(f"{name}={value} is more than h/2 from the lattice")
    return k, disp


def build_grid(lam: float, upper: float, h: float) -> Grid:
    """Lattice {lam - h, lam, ..., upper} intersected with [0, upper]."""
    if h <= 0:
        raise DomainError("h must be positive")
    if lam < 0 or lam >= upper:
        raise DomainError(f"need 0 <= lambda < U, got lambda={lam}, U={upper}")
    k_lam, d_lam = _snap(lam, h, "lambda")
    k_up, d_up = _snap(upper, h, "U")
    if k_lam >= k_up:
        raise ConfigurationError("lambda and U collapse to the same node at this h")
    k0 = max(k_lam - 1, 0)
    nodes = h * np.arange(k0, k_up + 1, dtype=float)
    killed = 0 if k_lam >= 1 else None
    snap = {"lambda_in": lam, "lambda": k_lam * h, "lambda_shift": d_lam,
            "U_in": upper, "U": k_up * h, "U_shift": d_up}
    return Grid(h=h, lambda_floor=k_lam * h, upper=k_up * h, nodes=nodes, killed_index=killed, snap=snap)


# --------------------------------------------------------------------------
# single rows (reference path, also used in tests)
# --------------------------------------------------------------------------


class KernelRow(NamedTuple):
    targets: list  # [(x, alpha, prob)]
    dt: float


def q_normalizer(model: HarvestModel, x: float, alpha: int, c: float, h: float, zeta: float) -> float:
    a = alpha - 1
    sig = model.diffusion_table([x])[0, a]
    drift = model.drift_table([x])[0, a] - float(model.control.rate(x, c))
    val = sig**2 + h * abs(drift) - h**2 * model.gamma[a, a] + zeta
    if val <= 0:
        raise DegenerateStateError(f"Q_h = 0 at x={x}, regime {alpha}, c={c}")
    return float(val)


def diffusion_transitions(model: HarvestModel, x: float, alpha: int, c: float, grid: Grid, zeta: float) -> KernelRow:
    if not grid.lambda_floor - 1e-12 <= x < grid.upper - 1e-12:
        raise PreconditionError("diffusion rows exist only for lambda <= x < U")
    h = grid.h
    a = alpha - 1
    qn = q_normalizer(model, x, alpha, c, h, zeta)
    s2 = model.diffusion_table([x])[0, a] ** 2
    drift = model.drift_table([x])[0, a] - float(model.control.rate(x, c))
    gamma = model.gamma
    targets = [
        (x + h, alpha, (0.5 * s2 + max(drift, 0.0) * h) / qn),
        (x - h, alpha, (0.5 * s2 + max(-drift, 0.0) * h) / qn),
    ]
    for ell in range(model.num_regimes):
        if ell != a:
            targets.append((x, ell + 1, h**2 * gamma[a, ell] / qn))
    targets.append((x, alpha, zeta / qn))
    return KernelRow(targets, h**2 / qn)


def impulse_transitions(x: float, alpha: int, step: StepType, grid: Grid) -> KernelRow:
    step = StepType(step)
    eps = 1e-9 * grid.h
    if step == StepType.DIFFUSION:
        raise PreconditionError("impulse_transitions needs HARVEST or RENEW")
    if step == StepType.HARVEST:
        if x <= grid.lambda_floor + eps:
            raise PreconditionError("harvest is not allowed at the floor")
        return KernelRow([(x - grid.h, alpha, 1.0)], 0.0)
    if x >= grid.upper - eps:
        raise PreconditionError("renew is not allowed at U")
    return KernelRow([(x + grid.h, alpha, 1.0)], 0.0)


# --------------------------------------------------------------------------
# full kernel
# --------------------------------------------------------------------------


def choose_zeta(model: HarvestModel, grid: Grid) -> float:
    """0 when the diffusion is nondegenerate on every diffusion node, else h."""
    xs = grid.live[:-1]
    sig2 = model.diffusion_table(xs) ** 2
    return 0.0 if np.all(sig2 > 0) else grid.h


@dataclass(frozen=True)
class TransitionKernel:
    """Diffusion rows for the live nodes below U.

    Arrays have shape (nd, m, nc) with nd = n_live - 1; ``switch`` has
    shape (nd, m, m, nc) with a zero diagonal. ``reward`` holds p(x, a, c)
    for every live node, shape (n_live, m, nc).
    """

    h: float
    zeta: float
    delta: float
    controls: np.ndarray
    x: np.ndarray
    up: np.ndarray
    down: np.ndarray
    stay: np.ndarray
    switch: np.ndarray
    dt: np.ndarray
    qnorm: np.ndarray
    drift: np.ndarray  # b - f on the diffusion nodes
    sigma2: np.ndarray  # sigma^2, shape (nd, m)
    reward: np.ndarray

    @property
    def discount(self) -> np.ndarray:
        return np.exp(-self.delta * self.dt)

    def row(self, i: int, a: int, k: int) -> KernelRow:
        """Materialize one diffusion row (0-based node/regime/control indices)."""
        h = self.h
        x = self.x[i]
        targets = [(x + h, a + 1, self.up[i, a, k]), (x - h, a + 1, self.down[i, a, k])]
        for ell in range(self.switch.shape[2]):
            if ell != a:
                targets.append((x, ell + 1, self.switch[i, a, ell, k]))
        targets.append((x, a + 1, self.stay[i, a, k]))
        return KernelRow(targets, self.dt[i, a, k])


def build_kernel(model: HarvestModel, grid: Grid, zeta: float | None = None) -> TransitionKernel:
    if zeta is None:
        zeta = choose_zeta(model, grid)
    if zeta < 0:
        raise DomainError("zeta must be nonnegative")
    h = grid.h
    xs = grid.live[:-1]
    gamma = model.gamma
    m = model.num_regimes
    ctrl = model.control.controls
    b = model.drift_table(xs)[:, :, None]
    f = model.rate_table(xs)[:, None, :]
    s2 = model.diffusion_table(xs) ** 2
    drift = b - f
    diag = np.diag(gamma)[None, :, None]
    qn = s2[:, :, None] + h * np.abs(drift) - h**2 * diag + zeta
    if np.any(qn <= 0):
        i, a, k = np.argwhere(qn <= 0)[0]
        raise DegenerateStateError(f"Q_h = 0 at x={xs[i]}, regime {a + 1}, c={ctrl[k]}")
    up = (0.5 * s2[:, :, None] + np.maximum(drift, 0.0) * h) / qn
    down = (0.5 * s2[:, :, None] + np.maximum(-drift, 0.0) * h) / qn
    off = gamma * (1.0 - np.eye(m))
    switch = h**2 * off[None, :, :, None] / qn[:, :, None, :]
    stay = zeta / qn
    dt = h**2 / qn
    reward = model.price_cost_table(grid.live)
    return TransitionKernel(
        h=h, zeta=float(zeta), delta=model.econ.delta, controls=ctrl.copy(), x=xs.copy(),
        up=up, down=down, stay=stay + 0.0 * up, switch=switch, dt=dt, qnorm=qn,
        drift=drift, sigma2=s2, reward=reward,
    )


# --------------------------------------------------------------------------
# diagnostics
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ConsistencyReport:
    max_mean_error: float
    max_var_discrepancy: float
    max_var_bound: float
    bound_holds: bool
    max_switch_error: float
    max_row_error: float
    min_prob: float
    max_jump: float


def local_consistency_report(model: HarvestModel, kernel: TransitionKernel, grid: Grid) -> ConsistencyReport:
    h = kernel.h
    dt = kernel.dt
    mean = (kernel.up - kernel.down) * h
    second = (kernel.up + kernel.down) * h**2
    var = second - mean**2
    drift = kernel.drift
    s2 = kernel.sigma2[:, :, None]
    mean_err = np.abs(mean - drift * dt)
    var_disc = np.abs(var - s2 * dt)
    diag = np.abs(np.diag(model.gamma))[None, :, None]
    bound = (h * np.abs(drift) + h**2 * diag + kernel.zeta + dt * drift**2) * dt
    m = model.num_regimes
    off = model.gamma * (1.0 - np.eye(m))
    sw_err = np.abs(kernel.switch - off[None, :, :, None] * dt[:, :, None, :])
    total = kernel.up + kernel.down + kernel.stay + kernel.switch.sum(axis=2)
    probs = np.concatenate([kernel.up.ravel(), kernel.down.ravel(), kernel.stay.ravel(), kernel.switch.ravel()])
    return ConsistencyReport(
        max_mean_error=float(mean_err.max()),
        max_var_discrepancy=float(var_disc.max()),
        max_var_bound=float(bound.max()),
        bound_holds=bool(np.all(var_disc <= bound * (1 + 1e-9) + 1e-18)),
        max_switch_error=float(sw_err.max()),
        max_row_error=float(np.abs(total - 1.0).max()),
        min_prob=float(probs.min()) + 0.0,
        max_jump=h,
    )


def _g(v: float) -> str:
    return f"{v:.12g}"


def write_kernel_csv(path, kernel: TransitionKernel, grid: Grid) -> None:
    """Dump every row: diffusion rows per control, impulse rows with c = 0."""
    live = grid.live
    nd, m, nc = kernel.up.shape
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "alpha", "step", "c", "target_x", "target_alpha", "prob", "dt"])
        for i in range(live.size):
            x = live[i]
            for a in range(m):
                if i < nd:
                    for k in range(nc):
                        row = kernel.row(i, a, k)
                        for tx, ta, p in row.targets:
                            w.writerow([_g(x), a + 1, 0, _g(kernel.controls[k]), _g(tx), ta, _g(p), _g(row.dt)])
                if i > 0:
                    w.writerow([_g(x), a + 1, 1, "0", _g(live[i - 1]), a + 1, "1", "0"])
                if i < live.size - 1:
                    w.writerow([_g(x), a + 1, -1, "0", _g(live[i + 1]), a + 1, "1", "0"])
