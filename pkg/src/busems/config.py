"""Flat ``section.key = value`` configuration.

Keys mirror the dataclass field names, e.g. ``battery.capacity_cell = 60``.
Tuple fields take comma-separated values (``battery.soc_window = 0.1, 0.9``).
Lines starting with ``#`` are comments.  Unknown keys are errors.
"""

from __future__ import annotations

import dataclasses
import datetime as dt
from dataclasses import dataclass, field
from pathlib import Path

from .control import EmsConfig
from .dp import CostParams, Grid
from .hess import AgingParams, BatteryParams, HessParams, HessState, SupercapParams, read_curve_csv
from .vehicle import VehicleParams


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GridSettings:
    bat_range: tuple = (0.08, 0.92)
    bat_step: float = 0.005
    sc_range: tuple = (0.45, 1.00)
    sc_step: float = 0.01
    n_controls: int = 101
    control_limit: float = 0.0      # W; 0 means the supercap pack limit

    def __post_init__(self):
        for name in ("bat_range", "sc_range"):
            lo, hi = getattr(self, name)
            if not 0.0 <= lo < hi <= 1.0:
                raise ValueError(f"grid.{name} must satisfy 0 <= low < high <= 1")
        if self.bat_step <= 0 or self.sc_step <= 0:
            raise ValueError("grid steps must be positive")
        if self.n_controls < 2:
            raise ValueError("grid.n_controls must be at least 2")
        if self.control_limit < 0:
            raise ValueError("grid.control_limit must be non-negative")

    def build(self, hess: HessParams) -> Grid:
        return Grid.build(hess, self.bat_range, self.bat_step, self.sc_range, self.sc_step,
                          self.n_controls, self.control_limit or None)


@dataclass(frozen=True)
class PredictSettings:
    tree_depth: int = 8
    tree_min_leaf: int = 5
    tree_min_impurity_decrease: float = 1e-4
    gbdt_trees: int = 100
    gbdt_learning_rate: float = 0.1
    gbdt_depth: int = 4
    gbdt_min_leaf: int = 5
    nn_epochs: int = 200
    nn_learning_rate: float = 0.01
    nn_hidden: tuple = (32, 16)
    holdout_days: int = 7

    def __post_init__(self):
        if self.tree_depth < 0 or self.gbdt_depth < 0 or self.tree_min_leaf < 1 or self.gbdt_min_leaf < 1:
            raise ValueError("tree depths must be >= 0 and leaf sizes >= 1")
        if self.gbdt_trees < 0 or self.nn_epochs < 0:
            raise ValueError("gbdt_trees and nn_epochs must be non-negative")
        if not 0.0 < self.gbdt_learning_rate <= 1.0:
            raise ValueError("predict.gbdt_learning_rate must be in (0, 1]")
        if self.nn_learning_rate <= 0:
            raise ValueError("predict.nn_learning_rate must be positive")
        if self.holdout_days < 1:
            raise ValueError("predict.holdout_days must be positive")
        object.__setattr__(self, "nn_hidden", tuple(int(h) for h in self.nn_hidden))


@dataclass(frozen=True)
class ScenarioSettings:
    """Where the drive cycle and ridership come from, and the evaluated hours.

    Empty file paths select the seeded synthetic generators.
    """

    cycle_file: str = ""
    cycle_seed: int = 11
    cycle_duration: int = 1200
    passenger_file: str = ""
    weather_file: str = ""
    data_seed: int = 7
    data_start: str = "2014-08-01"
    data_end: str = "2014-12-21"
    eval_date: str = "2014-12-15"
    peak_hour: int = 8
    offpeak_hour: int = 12
    init_soc_bat: float = 0.6
    init_soc_sc: float = 0.9
    init_q_loss: float = 1e-3
    rule_load_factor: float = 0.5

    def __post_init__(self):
        for name in ("data_start", "data_end", "eval_date"):
            try:
                dt.date.fromisoformat(getattr(self, name))
            except ValueError:
                raise ValueError(f"scenario.{name} must be an ISO date") from None
        if not (0 <= self.peak_hour <= 23 and 0 <= self.offpeak_hour <= 23):
            raise ValueError("scenario hours must be in 0..23")
        for name in ("init_soc_bat", "init_soc_sc"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"scenario.{name} must lie in [0, 1]")
        if self.init_q_loss < 0:
            raise ValueError("scenario.init_q_loss must be non-negative")
        if not 0.0 <= self.rule_load_factor <= 1.2:
            raise ValueError("scenario.rule_load_factor must lie in [0, 1.2]")
        if self.cycle_duration < 60:
            raise ValueError("scenario.cycle_duration must be at least 60 s")

    def date(self, name: str) -> dt.date:
        return dt.date.fromisoformat(getattr(self, name))

    @property
    def init_state(self) -> HessState:
        return HessState(self.init_soc_bat, self.init_soc_sc, self.init_q_loss)


@dataclass(frozen=True)
class Config:
    seed: int = 0
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    battery: BatteryParams = field(default_factory=BatteryParams)
    supercap: SupercapParams = field(default_factory=SupercapParams)
    aging: AgingParams = field(default_factory=AgingParams)
    cost: CostParams = field(default_factory=CostParams)
    grid: GridSettings = field(default_factory=GridSettings)
    predict: PredictSettings = field(default_factory=PredictSettings)
    ems: EmsConfig = field(default_factory=EmsConfig)
    scenario: ScenarioSettings = field(default_factory=ScenarioSettings)
    battery_curve_file: str = ""

    @property
    def hess(self) -> HessParams:
        return HessParams(self.battery, self.supercap, self.aging)


_SECTIONS = ("vehicle", "battery", "supercap", "aging", "cost", "grid", "predict", "ems", "scenario")
_TOP_LEVEL = ("seed", "battery_curve_file")
# curve tables come from battery_curve_file, not inline keys
_HIDDEN = {("battery", "curve_soc"), ("battery", "curve_ocv"), ("battery", "curve_r")}


def _convert(raw: str, default, key: str):
    try:
        if isinstance(default, bool):
            if raw.lower() not in ("true", "false", "1", "0"):
                raise ValueError
            return raw.lower() in ("true", "1")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            kind = type(default[0]) if default else float
            return tuple(kind(v.strip()) for v in raw.split(",") if v.strip())
        return raw
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {type(default).__name__}") from None


def parse_config(text: str, base_dir: Path | None = None) -> Config:
    """Build a :class:`Config` from ``key = value`` text, applying defaults."""
    cfg = Config()
    overrides: dict[str, dict] = {s: {} for s in _SECTIONS}
    top: dict = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value'")
        key, raw = (p.strip() for p in line.split("=", 1))
        if key in _TOP_LEVEL:
            top[key] = _convert(raw, getattr(cfg, key), key)
            continue
        section, _, name = key.partition(".")
        if section not in overrides or not name:
            raise ConfigError(f"line {n}: unknown key {key!r}")
        current = getattr(cfg, section)
        names = {f.name for f in dataclasses.fields(current)}
        if name not in names or (section, name) in _HIDDEN:
            raise ConfigError(f"line {n}: unknown key {key!r}")
        overrides[section][name] = _convert(raw, getattr(current, name), key)

    parts = {}
    for section, values in overrides.items():
        try:
            parts[section] = dataclasses.replace(getattr(cfg, section), **values)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"[{section}] {exc}") from None
    cfg = Config(**top, **parts)
    if cfg.battery_curve_file:
        path = Path(cfg.battery_curve_file)
        if not path.is_absolute() and base_dir is not None:
            path = base_dir / path
        try:
            soc, ocv, r = read_curve_csv(path)
            cfg = dataclasses.replace(cfg, battery=cfg.battery.with_curves(soc, ocv, r))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"battery_curve_file: {exc}") from None
    return cfg


def load_config(path) -> Config:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, path.parent)


def _fmt(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_config(cfg: Config) -> str:
    """Every key with its current value; parses back to an equal config."""
    lines = ["# busems configuration", f"seed = {cfg.seed}",
             f"battery_curve_file = {cfg.battery_curve_file}"]
    for section in _SECTIONS:
        obj = getattr(cfg, section)
        lines.append("")
        for f in dataclasses.fields(obj):
            if (section, f.name) in _HIDDEN:
                continue
            lines.append(f"{section}.{f.name} = {_fmt(getattr(obj, f.name))}")
    return "\n".join(lines) + "\n"
