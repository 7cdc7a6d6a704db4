"""Problem instance: regime-switching population dynamics, controls and economics.

Every coefficient family used here reduces to a per-regime quadratic
``c0 + c1*x + c2*x**2``, which keeps evaluation vectorized and lets the
compiled simulator consume the same numbers as the solver.

Regimes are numbered 1..m in the public API and 0..m-1 in arrays.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, DomainError, TruncationError

ROW_SUM_TOL = 1e-12
BISECTION_TOL = 1e-10


# --------------------------------------------------------------------------
# coefficient families
# --------------------------------------------------------------------------


def _tuple(values) -> tuple[float, ...]:
    return tuple(float(v) for v in np.atleast_1d(values))


@dataclass(frozen=True)
class LogisticDrift:
    """x * (growth[a] - competition * x)."""

    growth: tuple[float, ...]
    competition: float

    def coefficients(self) -> np.ndarray:
        g = np.asarray(self.growth, dtype=float)
        return np.column_stack([np.zeros_like(g), g, np.full_like(g, -self.competition)])


@dataclass(frozen=True)
class LinearCoef:
    """slope[a] * x."""

    slope: tuple[float, ...]

    def coefficients(self) -> np.ndarray:
        s = np.asarray(self.slope, dtype=float)
        return np.column_stack([np.zeros_like(s), s, np.zeros_like(s)])


@dataclass(frozen=True)
class Constant:
    """value[a], independent of x."""

    value: tuple[float, ...]

    def coefficients(self) -> np.ndarray:
        v = np.asarray(self.value, dtype=float)
        return np.column_stack([v, np.zeros_like(v), np.zeros_like(v)])


@dataclass(frozen=True)
class ScaledLinear:
    """scale * base[a] * x; used for multiplicative noise sweeps."""

    scale: float
    base: tuple[float, ...]

    def coefficients(self) -> np.ndarray:
        s = self.scale * np.asarray(self.base, dtype=float)
        return np.column_stack([np.zeros_like(s), s, np.zeros_like(s)])


ScalarField = LogisticDrift | LinearCoef | Constant | ScaledLinear


def _num_regimes(fld: ScalarField) -> int:
    return fld.coefficients().shape[0]


def eval_field(fld: ScalarField, x, alpha: int):
    coef = fld.coefficients()
    if not 1 <= alpha <= coef.shape[0]:
        raise DomainError(f"regime {alpha} outside 1..{coef.shape[0]}")
    c0, c1, c2 = coef[alpha - 1]
    x = np.asarray(x, dtype=float)
    return c0 + x * (c1 + c2 * x)


def _poly_table(coef: np.ndarray, x: np.ndarray) -> np.ndarray:
    # (n,) x (m, 3) -> (n, m)
    x = np.asarray(x, dtype=float)[:, None]
    return coef[None, :, 0] + x * (coef[None, :, 1] + coef[None, :, 2] * x)


# --------------------------------------------------------------------------
# controls and economics
# --------------------------------------------------------------------------

RATE_FAMILIES = ("identity", "proportional")
COST_FAMILIES = ("quadratic", "zero")


@dataclass(frozen=True)
class ControlLaw:
    """Finite control set with rate f(x, c) and running cost g(x, a, c).

    ``identity``: f = c. ``proportional``: f = c*x.
    ``quadratic``: g = cost_scale[a] * c**2 / (cost_denom * (1 + x)). ``zero``: g = 0.
    """

    control_set: tuple[float, ...]
    rate_family: str = "identity"
    cost_family: str = "zero"
    cost_scale: tuple[float, ...] = ()
    cost_denom: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "control_set", tuple(sorted(_tuple(self.control_set))))
        object.__setattr__(self, "cost_scale", _tuple(self.cost_scale) if len(self.cost_scale) else ())
        if self.rate_family not in RATE_FAMILIES:
            raise ConfigurationError(f"unknown rate family {self.rate_family!r}")
        if self.cost_family not in COST_FAMILIES:
            raise ConfigurationError(f"unknown cost family {self.cost_family!r}")

    @property
    def controls(self) -> np.ndarray:
        return np.asarray(self.control_set, dtype=float)

    def rate(self, x, c):
        x = np.asarray(x, dtype=float)
        c = np.asarray(c, dtype=float)
        if self.rate_family == "identity":
            return c + 0.0 * x
        return c * x

    def cost(self, x, alpha: int, c):
        x = np.asarray(x, dtype=float)
        c = np.asarray(c, dtype=float)
        if self.cost_family == "zero":
            return 0.0 * x * c
        return self.cost_scale[alpha - 1] * c**2 / (self.cost_denom * (1.0 + x))


@dataclass(frozen=True)
class Economics:
    a1: float
    a2: float
    a3: float
    delta: float
    lambda_floor: float = 0.0

    @property
    def q(self) -> float:
        return self.a1 - self.a2

    @property
    def r(self) -> float:
        return self.a1 + self.a3


@dataclass(frozen=True)
class HarvestModel:
    drift: ScalarField
    diffusion: ScalarField
    generator: tuple[tuple[float, ...], ...]
    control: ControlLaw
    econ: Economics
    num_regimes: int = field(default=0)

    def __post_init__(self):
        gen = tuple(tuple(float(v) for v in row) for row in np.atleast_2d(self.generator))
        object.__setattr__(self, "generator", gen)
        m = len(gen)
        if self.num_regimes == 0:
            object.__setattr__(self, "num_regimes", m)
        if self.num_regimes != m:
            raise ConfigurationError(f"generator has {m} rows, num_regimes={self.num_regimes}")
        for name, fld in (("drift", self.drift), ("diffusion", self.diffusion)):
            if _num_regimes(fld) != m:
                raise ConfigurationError(f"{name} defines {_num_regimes(fld)} regimes, expected {m}")
        if self.control.cost_family == "quadratic" and len(self.control.cost_scale) != m:
            raise ConfigurationError("quadratic cost needs one scale per regime")

    @property
    def gamma(self) -> np.ndarray:
        return np.array(self.generator, dtype=float)

    @property
    def q(self) -> float:
        return self.econ.q

    @property
    def r(self) -> float:
        return self.econ.r

    @property
    def lam(self) -> float:
        return self.econ.lambda_floor

    # vectorized tables used by the kernel and the verifier
    def drift_table(self, x) -> np.ndarray:
        return _poly_table(self.drift.coefficients(), x)

    def diffusion_table(self, x) -> np.ndarray:
        return _poly_table(self.diffusion.coefficients(), x)

    def rate_table(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.control.rate(x[:, None], self.control.controls[None, :])

    def price_cost_table(self, x) -> np.ndarray:
        """p(x, a, c) with shape (len(x), m, len(controls))."""
        x = np.asarray(x, dtype=float)
        f = self.rate_table(x)
        out = np.empty((x.size, self.num_regimes, f.shape[1]))
        for a in range(self.num_regimes):
            g = self.control.cost(x[:, None], a + 1, self.control.controls[None, :])
            out[:, a, :] = self.econ.a1 * f - g
        return out

    def with_diffusion(self, diffusion: ScalarField) -> "HarvestModel":
        return HarvestModel(self.drift, diffusion, self.generator, self.control, self.econ)


# --------------------------------------------------------------------------
# operations
# --------------------------------------------------------------------------


def _check_regime(model: HarvestModel, alpha: int):
    if not 1 <= alpha <= model.num_regimes:
        raise DomainError(f"regime {alpha} outside 1..{model.num_regimes}")


def eval_price_cost(model: HarvestModel, x: float, alpha: int, c: float) -> float:
    _check_regime(model, alpha)
    if not np.any(np.isclose(model.control.controls, c, rtol=0, atol=1e-12)):
        raise DomainError(f"control {c} not in control set {model.control.control_set}")
    if x < 0:
        raise DomainError("state must be nonnegative")
    f = model.control.rate(x, c)
    return float(model.econ.a1 * f - model.control.cost(x, alpha, c))


def derived_prices(model: HarvestModel | Economics) -> tuple[float, float]:
    econ = model.econ if isinstance(model, HarvestModel) else model
    q, r = econ.a1 - econ.a2, econ.a1 + econ.a3
    if q <= 0:
        warnings.warn(f"net harvest price q = {q} <= 0; value function degenerates", stacklevel=2)
    return q, r


def _harvest_bound(model: HarvestModel) -> float:
    # sup over the control set of a2 * c (identity rate family)
    return float(np.max(model.econ.a2 * model.control.controls))


def compute_truncation(model: HarvestModel, x_max: float = 1e6) -> float:
    """Largest x where some regime still has b(x, a) >= -sup(a2 c) / q.

    Above the returned level it is optimal to harvest down instantly, so the
    state space may be truncated there. The caller rounds it up to a usable
    grid level.
    """
    if model.control.rate_family != "identity":
        raise TruncationError("automatic truncation needs the identity rate family; set U by hand")
    q = model.q
    if q <= 0:
        raise TruncationError("q <= 0: no truncation level exists; set U by hand")
    target = -_harvest_bound(model) / q
    lam = model.lam
    best = lam
    for a in range(1, model.num_regimes + 1):
        def excess(x, a=a):
            return float(eval_field(model.drift, x, a)) - target

        hi = max(2.0 * lam, 1.0)
        while excess(hi) >= 0 or excess(2 * hi) >= 0:
            hi *= 2.0
            if hi > x_max:
                raise TruncationError(
                    f"drift condition fails up to x={x_max} in regime {a}; set U by hand"
                )
        # last sign change on a coarse scan, then bisection
        xs = np.linspace(lam, hi, 4097)
        ok = np.asarray(eval_field(model.drift, xs, a)) - target >= 0
        if not ok.any():
            continue
        k = int(np.nonzero(ok)[0][-1])
        lo_x, hi_x = xs[k], xs[min(k + 1, xs.size - 1)]
        while hi_x - lo_x > BISECTION_TOL:
            mid = 0.5 * (lo_x + hi_x)
            if excess(mid) >= 0:
                lo_x = mid
            else:
                hi_x = mid
        best = max(best, 0.5 * (lo_x + hi_x))
    return best


def auto_upper(model: HarvestModel) -> float:
    """Truncation level rounded up to an integer, as for the worked examples."""
    return float(max(math.ceil(compute_truncation(model) - 1e-9), math.floor(model.lam) + 1))


def truncation_condition(model: HarvestModel, x, upper: float) -> np.ndarray:
    """Left side of the truncation inequality on x (shape (n, m)); negative where it holds."""
    x = np.asarray(x, dtype=float)
    b = model.drift_table(x)
    f = model.rate_table(x)
    sup_term = np.empty_like(b)
    for a in range(model.num_regimes):
        g = model.control.cost(x[:, None], a + 1, model.control.controls[None, :])
        sup_term[:, a] = np.max(model.econ.a2 * f - g, axis=1)
    return model.q * (b - model.econ.delta * (x[:, None] - upper)) + sup_term


def validate_model(model: HarvestModel, upper: float | None = None) -> list[str]:
    out: list[str] = []
    gamma = model.gamma
    m = gamma.shape[0]
    if gamma.shape != (m, m):
        out.append("generator is not square")
    else:
        off = gamma[~np.eye(m, dtype=bool)]
        if np.any(off < 0):
            out.append("generator has negative off-diagonal rate")
        for i, s in enumerate(gamma.sum(axis=1)):
            if abs(s) > ROW_SUM_TOL:
                out.append(f"generator row {i + 1}: row sum != 0 ({s:g})")
    e = model.econ
    for name in ("a1", "a2", "a3", "delta"):
        if not getattr(e, name) > 0:
            out.append(f"{name} must be positive")
    if e.lambda_floor < 0:
        out.append("lambda_floor must be nonnegative")
    ctrl = model.control.controls
    if not np.any(ctrl == 0.0):
        out.append("0 not in control set")
    if upper is None:
        try:
            upper = compute_truncation(model)
        except TruncationError:
            upper = max(10.0, 2 * e.lambda_floor)
    xs = np.linspace(0.0, 2.0 * max(upper, e.lambda_floor, 1e-3), 401)
    f = model.rate_table(xs)
    zero = ctrl == 0.0
    if zero.any() and np.any(np.abs(f[:, zero]) > 0):
        out.append("f(x, 0) != 0")
    if not np.all(np.isfinite(f)):
        out.append("rate f is not finite on the sampled domain")
    for a in range(m):
        g = model.control.cost(xs[:, None], a + 1, ctrl[None, :])
        if not np.all(np.isfinite(g)):
            out.append(f"cost g not finite in regime {a + 1}")
        elif np.any(g < 0):
            out.append(f"cost g negative in regime {a + 1}")
    for name, tbl in (("drift", model.drift_table(xs)), ("diffusion", model.diffusion_table(xs))):
        if not np.all(np.isfinite(tbl)):
            out.append(f"{name} not finite on the sampled domain")
    return out


# --------------------------------------------------------------------------
# worked examples
# --------------------------------------------------------------------------

EXAMPLE_CONTROLS = {1: (0.0,), 2: tuple(float(k) for k in range(-2, 4)), 3: tuple(float(k) for k in range(-2, 4))}
EXAMPLE_FLOOR = {1: 0.2, 2: 0.2, 3: 0.4}


def example_model(
    number: int = 2,
    *,
    controls: Sequence[float] | None = None,
    lambda_floor: float | None = None,
    diffusion: ScalarField | None = None,
) -> HarvestModel:
    """Two-regime logistic population with b = x(a - 1.5x), sigma = a x / 2.

    ``number`` selects the floor and control set of worked example 1, 2 or 3.
    """
    if number not in EXAMPLE_CONTROLS:
        raise DomainError("worked examples are numbered 1..3")
    return HarvestModel(
        drift=LogisticDrift(growth=(1.0, 2.0), competition=1.5),
        diffusion=diffusion if diffusion is not None else LinearCoef(slope=(0.5, 1.0)),
        generator=((-1.0, 1.0), (1.5, -1.5)),
        control=ControlLaw(
            control_set=EXAMPLE_CONTROLS[number] if controls is None else tuple(controls),
            rate_family="identity",
            cost_family="quadratic",
            cost_scale=(1.0, 2.0),
            cost_denom=8.0,
        ),
        econ=Economics(
            a1=1.5,
            a2=0.5,
            a3=0.75,
            delta=0.05,
            lambda_floor=EXAMPLE_FLOOR[number] if lambda_floor is None else lambda_floor,
        ),
    )
