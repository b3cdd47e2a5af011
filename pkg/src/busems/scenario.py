"""Turn a :class:`Config` into concrete experiment inputs and runs."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import Config
from .control import (ComparisonReport, ConstantPredictor, EmsConfig, LinearRule, ModelSetup,
                      StrategyResult, compare_strategies, extract_rule, run_cloud, run_dp_oracle,
                      run_pure_rule)
from .predict import (FeatureVector, LoadDataset, LoadRecord, Predictor, RmseRow, WeatherDay,
                      evaluate_by_day, feature_vector, normalize, read_passenger_csv,
                      read_weather_csv, split_final_days, train_average, train_gbdt, train_nn,
                      train_regression_tree)
from .synth import synth_cycle, synth_passengers
from .vehicle import DriveCycle, read_cycle_csv

RULE_SWEEP = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)


def _resolve(path: str, base: Path | None) -> Path:
    p = Path(path)
    return p if p.is_absolute() or base is None else base / p


def load_cycle(cfg: Config, base: Path | None = None) -> DriveCycle:
    sc = cfg.scenario
    if sc.cycle_file:
        return read_cycle_csv(_resolve(sc.cycle_file, base))
    return synth_cycle(sc.cycle_seed, sc.cycle_duration)


def load_ridership(cfg: Config, base: Path | None = None
                   ) -> tuple[list[LoadRecord], dict[dt.date, WeatherDay]]:
    sc = cfg.scenario
    if sc.passenger_file:
        if not sc.weather_file:
            raise ValueError("scenario.passenger_file needs scenario.weather_file")
        return (read_passenger_csv(_resolve(sc.passenger_file, base)),
                read_weather_csv(_resolve(sc.weather_file, base)))
    records, weather = synth_passengers(sc.data_seed, sc.date("data_start"), sc.date("data_end"))
    return records, {w.date: w for w in weather}


@dataclass(frozen=True)
class RidershipSplit:
    train: LoadDataset
    test: LoadDataset
    test_records: tuple
    weather: dict

    def true_load(self, day: dt.date, hour: int) -> float:
        """Observed load factor for one held-out hour, scaled by the training maximum."""
        for r in self.test_records:
            if r.date == day and r.hour == hour:
                return r.passenger_count / self.train.normalization_max
        raise ValueError(f"no held-out record for {day.isoformat()} {hour:02d}:00")

    def features(self, day: dt.date, hour: int) -> FeatureVector:
        if day not in self.weather:
            raise ValueError(f"no weather row for {day.isoformat()}")
        return feature_vector(day, hour, self.weather[day])


def split_ridership(cfg: Config, base: Path | None = None) -> RidershipSplit:
    records, weather = load_ridership(cfg, base)
    train_recs, test_recs = split_final_days(records, cfg.predict.holdout_days)
    train = normalize(train_recs, weather)
    test = normalize(test_recs, weather, train.normalization_max)
    return RidershipSplit(train, test, tuple(test_recs), weather)


def train_predictors(cfg: Config, train: LoadDataset) -> dict[str, Predictor]:
    p = cfg.predict
    return {
        "average": train_average(train),
        "tree": train_regression_tree(train, p.tree_depth, p.tree_min_leaf, p.tree_min_impurity_decrease),
        "gbdt": train_gbdt(train, p.gbdt_trees, p.gbdt_learning_rate, p.gbdt_depth, p.gbdt_min_leaf),
        "nn": train_nn(train, p.nn_epochs, p.nn_learning_rate, cfg.seed, p.nn_hidden),
    }


def prediction_table(models: dict[str, Predictor], test: LoadDataset) -> list[RmseRow]:
    """Per-day and weekly RMSE in percent of load factor."""
    return [evaluate_by_day(m, name, test, scale=100.0) for name, m in models.items()]


def build_setup(cfg: Config) -> ModelSetup:
    hess = cfg.hess
    return ModelSetup(cfg.vehicle, hess, cfg.cost, cfg.grid.build(hess))


def ems_config(cfg: Config, strategy: str = "cloud", horizon: int | None = None,
               replan: int | None = None) -> EmsConfig:
    e = cfg.ems
    h = e.horizon if horizon is None else horizon
    r = e.replan_period if replan is None else replan
    frac = e.apply_fraction if horizon is None and replan is None else r / h
    return EmsConfig(strategy, h, r, frac, e.sc_buffer)


def rule_sweep(cycle: DriveCycle, cfg: Config, setup: ModelSetup,
               loads=RULE_SWEEP) -> list[LinearRule]:
    init = cfg.scenario.init_state
    return [extract_rule(run_dp_oracle(cycle, lf, init, setup).trajectory, lf) for lf in loads]


def fixed_rule(cycle: DriveCycle, cfg: Config, setup: ModelSetup) -> LinearRule:
    lf = cfg.scenario.rule_load_factor
    return extract_rule(run_dp_oracle(cycle, lf, cfg.scenario.init_state, setup).trajectory, lf)


@dataclass
class HourScenario:
    """One evaluated hour: the cycle, the true load and the prediction inputs."""

    cycle: DriveCycle
    hour: int
    true_load: float
    features: FeatureVector
    predictor: Predictor


def hour_scenario(cfg: Config, hour: int, base: Path | None = None, split: RidershipSplit | None = None,
                  predictor: Predictor | None = None) -> HourScenario:
    split = split or split_ridership(cfg, base)
    day = cfg.scenario.date("eval_date")
    if predictor is None:
        p = cfg.predict
        predictor = train_gbdt(split.train, p.gbdt_trees, p.gbdt_learning_rate, p.gbdt_depth, p.gbdt_min_leaf)
    return HourScenario(load_cycle(cfg, base), hour, split.true_load(day, hour),
                        split.features(day, hour), predictor)


def simulate(cfg: Config, scen: HourScenario, strategy: str, setup: ModelSetup | None = None,
             ems: EmsConfig | None = None, rule: LinearRule | None = None) -> StrategyResult:
    setup = setup or build_setup(cfg)
    init = cfg.scenario.init_state
    if strategy == "dp_oracle":
        return run_dp_oracle(scen.cycle, scen.true_load, init, setup)
    ems = ems or ems_config(cfg, strategy)
    if strategy == "pure_rule":
        rule = rule or fixed_rule(scen.cycle, cfg, setup)
        return run_pure_rule(scen.cycle, scen.true_load, rule, init, setup, ems)
    if strategy == "cloud":
        return run_cloud(scen.cycle, scen.true_load, scen.predictor, scen.features, init, setup, ems)
    raise ValueError(f"unknown strategy {strategy!r}")


def compare(cfg: Config, scen: HourScenario, setup: ModelSetup | None = None,
            ems: EmsConfig | None = None, rule: LinearRule | None = None) -> ComparisonReport:
    setup = setup or build_setup(cfg)
    ems = ems or ems_config(cfg)
    rule = rule or fixed_rule(scen.cycle, cfg, setup)
    return compare_strategies(scen.cycle, scen.true_load, scen.predictor, scen.features, rule,
                              cfg.scenario.init_state, setup, ems)


def oracle_predictor(scen: HourScenario) -> ConstantPredictor:
    return ConstantPredictor(scen.true_load)


def rules_csv(rules: list[LinearRule]) -> str:
    lines = ["load_factor,slope,intercept_w,r2"]
    lines += [f"{r.source_load_factor:.2f},{r.slope:.4f},{r.intercept:.1f},{r.fit_r2:.4f}" for r in rules]
    return "\n".join(lines) + "\n"


def monotone_non_increasing(values) -> bool:
    v = np.asarray(values, dtype=float)
    return bool(np.all(np.diff(v) <= 0))


# ---------------------------------------------------------------------------
# bundled demo scenario

DEMO_DIR = Path(__file__).parent / "data"
DEMO_CONFIG = DEMO_DIR / "demo.conf"

_DEMO_CONF = """\
# Bundled demo scenario: committed synthetic cycle and ridership.
# Regenerate with busems.scenario.write_demo_data().
scenario.cycle_file = demo_cycle.csv
scenario.passenger_file = demo_passengers.csv
scenario.weather_file = demo_weather.csv
scenario.eval_date = 2014-12-15
scenario.peak_hour = 8
scenario.offpeak_hour = 12
"""


def write_demo_data(directory) -> None:
    """Regenerate the demo bundle from the default seeds."""
    from .predict import write_passenger_csv, write_weather_csv
    from .vehicle import write_cycle_csv

    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    s = Config().scenario
    write_cycle_csv(synth_cycle(s.cycle_seed, s.cycle_duration), out / "demo_cycle.csv")
    records, weather = synth_passengers(s.data_seed, s.date("data_start"), s.date("data_end"))
    write_passenger_csv(records, out / "demo_passengers.csv")
    write_weather_csv(weather, out / "demo_weather.csv")
    (out / "demo.conf").write_text(_DEMO_CONF)
