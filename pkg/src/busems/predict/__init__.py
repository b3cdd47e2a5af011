"""Passenger load-factor prediction."""

from .data import (FEATURE_NAMES, LOAD_FACTOR_CAP, WEATHER_CARDINALITY, FeatureVector, LoadDataset,
                   LoadRecord, WeatherDay, check_features, feature_vector, normalize,
                   read_passenger_csv, read_weather_csv, split_final_days, write_passenger_csv,
                   write_weather_csv)
from .metrics import RmseRow, evaluate_by_day, format_rmse_table, rmse, rmse_variance
from .models import (MODEL_KINDS, AverageModel, GbdtModel, NnModel, Predictor, TrainingDivergedError,
                     TreeModel, clamp_load_factor, encode_features, fit_tree, init_nn, mse_loss,
                     nn_gradients, predict, train_average, train_gbdt, train_nn, train_regression_tree)
from .serialize import dumps_model, load_model, loads_model, save_model

__all__ = [
    "FEATURE_NAMES", "LOAD_FACTOR_CAP", "WEATHER_CARDINALITY", "FeatureVector", "LoadDataset",
    "LoadRecord", "WeatherDay", "check_features", "feature_vector", "normalize",
    "read_passenger_csv", "read_weather_csv", "split_final_days", "write_passenger_csv",
    "write_weather_csv", "RmseRow", "evaluate_by_day", "format_rmse_table", "rmse", "rmse_variance",
    "MODEL_KINDS", "AverageModel", "GbdtModel", "NnModel", "Predictor", "TrainingDivergedError",
    "TreeModel", "clamp_load_factor", "encode_features", "fit_tree", "init_nn", "mse_loss",
    "nn_gradients", "predict", "train_average", "train_gbdt", "train_nn", "train_regression_tree",
    "dumps_model", "load_model", "loads_model", "save_model",
]
