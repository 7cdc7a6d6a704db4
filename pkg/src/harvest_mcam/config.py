"""Run configuration: TOML file with fixed sections and field names."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .errors import ConfigurationError
from .model import (
    Constant,
    ControlLaw,
    Economics,
    HarvestModel,
    LinearCoef,
    LogisticDrift,
    ScaledLinear,
    auto_upper,
)


@dataclass
class FieldSpec:
    family: str = "linear"
    growth: list = field(default_factory=list)
    competition: float = 0.0
    slope: list = field(default_factory=list)
    value: list = field(default_factory=list)
    scale: float = 1.0
    base: list = field(default_factory=list)

    def build(self):
        if self.family == "logistic":
            return LogisticDrift(tuple(self.growth), float(self.competition))
        if self.family == "linear":
            return LinearCoef(tuple(self.slope))
        if self.family == "constant":
            return Constant(tuple(self.value))
        if self.family == "scaled_linear":
            return ScaledLinear(float(self.scale), tuple(self.base))
        raise ConfigurationError(f"unknown coefficient family {self.family!r}")


@dataclass
class ModelSection:
    regimes: int = 2
    generator: list = field(default_factory=list)
    drift: FieldSpec = field(default_factory=lambda: FieldSpec(family="logistic"))
    diffusion: FieldSpec = field(default_factory=FieldSpec)


@dataclass
class EconomicsSection:
    a1: float = 1.5
    a2: float = 0.5
    a3: float = 0.75
    delta: float = 0.05
    # "lambda" in the file
    lambda_floor: float = 0.2


@dataclass
class ControlsSection:
    set: list = field(default_factory=lambda: [0.0])
    rate_family: str = "identity"
    cost_family: str = "zero"
    cost_scale: list = field(default_factory=list)
    cost_denom: float = 1.0


@dataclass
class GridSection:
    h: float = 0.005
    U: float | str = "auto"
    zeta: float | str = "auto"


@dataclass
class SolverSection:
    tol: float = 1e-6
    max_iter: int = 1_000_000
    method: str = "policy"
    sweep_mode: str = "gauss-seidel"


@dataclass
class SimulateSection:
    dt: float = 1e-3
    horizon: float = 200.0
    n_paths: int = 10_000
    seed: int = 0
    starts: list = field(default_factory=lambda: [[1.0, 1]])
    exact_clock: bool = False
    eps_disc: float = 0.05
    path_log: int = 0


@dataclass
class SweepSection:
    mode: str = "multiplicative"
    intensities: list = field(default_factory=lambda: [1.0, 2.0, 4.0, 8.0, 16.0])
    window: list = field(default_factory=list)
    eps: float = 0.05
    h: float = 0.01


@dataclass
class OutputSection:
    directory: str = "out"


@dataclass
class RunConfig:
    model: ModelSection = field(default_factory=ModelSection)
    economics: EconomicsSection = field(default_factory=EconomicsSection)
    controls: ControlsSection = field(default_factory=ControlsSection)
    grid: GridSection = field(default_factory=GridSection)
    solver: SolverSection = field(default_factory=SolverSection)
    simulate: SimulateSection = field(default_factory=SimulateSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    output: OutputSection = field(default_factory=OutputSection)

    def build_model(self) -> HarvestModel:
        m = self.model
        c = self.controls
        e = self.economics
        return HarvestModel(
            drift=m.drift.build(),
            diffusion=m.diffusion.build(),
            generator=tuple(tuple(r) for r in m.generator),
            control=ControlLaw(tuple(c.set), c.rate_family, c.cost_family, tuple(c.cost_scale), c.cost_denom),
            econ=Economics(e.a1, e.a2, e.a3, e.delta, e.lambda_floor),
            num_regimes=m.regimes,
        )

    def resolved_upper(self, model: HarvestModel | None = None) -> float:
        if isinstance(self.grid.U, str):
            if self.grid.U != "auto":
                raise ConfigurationError(f"grid.U must be a number or 'auto', got {self.grid.U!r}")
            return auto_upper(model or self.build_model())
        return float(self.grid.U)

    def resolved_zeta(self) -> float | None:
        z = self.grid.zeta
        if isinstance(z, str):
            if z != "auto":
                raise ConfigurationError("grid.zeta must be a number or 'auto'")
            return None
        return float(z)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["economics"]["lambda"] = d["economics"].pop("lambda_floor")
        return d


_RENAMES = {("economics", "lambda"): "lambda_floor"}


def _fill(cls, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigurationError(f"[{path}] must be a table")
    names = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, val in data.items():
        name = _RENAMES.get((path, key), key)
        if name not in names:
            raise ConfigurationError(f"unknown key {path + '.' if path else ''}{key}")
        f = names[name]
        sub = f.default_factory() if f.default_factory is not dataclasses.MISSING else None
        if dataclasses.is_dataclass(sub):
            kwargs[name] = _fill(type(sub), val, f"{path}.{key}" if path else key)
        else:
            kwargs[name] = val
    return cls(**kwargs)


def parse_config(data: dict) -> RunConfig:
    cfg = _fill(RunConfig, data, "")
    if not cfg.model.generator:
        raise ConfigurationError("model.generator is required")
    return cfg


def load_config(path) -> RunConfig:
    """Read a TOML run file, or the ``config`` block of a run manifest (.json)."""
    p = Path(path)
    if p.suffix == ".json":
        try:
            data = json.loads(p.read_text(encoding="utf-8"))["config"]
        except (OSError, KeyError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read manifest {p}: {exc}") from exc
        return parse_config(data)
    try:
        with p.open("rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read {p}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{p}: {exc}") from exc
    return parse_config(data)
