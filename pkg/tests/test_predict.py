import datetime as dt
import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from busems.predict import (AverageModel, FeatureVector, GbdtModel, LoadDataset, LoadRecord, NnModel,
                            TrainingDivergedError, TreeModel, WeatherDay, clamp_load_factor,
                            dumps_model, encode_features, evaluate_by_day, feature_vector, fit_tree,
                            format_rmse_table, init_nn, load_model, loads_model, mse_loss,
                            nn_gradients, normalize, predict, read_passenger_csv, read_weather_csv,
                            rmse, rmse_variance, save_model, split_final_days, train_average,
                            train_gbdt, train_nn, train_regression_tree, write_passenger_csv,
                            write_weather_csv)

MON = dt.date(2014, 12, 15)


def fv(dow=0, hour=8, weather=0, hi=20.0, lo=10.0, wind=1, holiday=False):
    return FeatureVector(dow, hour, weather, hi, lo, wind, holiday)


def random_dataset(seed, n=120):
    rng = np.random.default_rng(seed)
    X = np.column_stack([rng.integers(0, 7, n), rng.integers(0, 24, n), rng.integers(0, 4, n),
                         np.full(n, 25.0), np.full(n, 15.0), rng.integers(0, 5, n), rng.integers(0, 2, n)])
    y = np.clip(0.3 + 0.4 * np.sin(X[:, 1] / 4.0) + 0.05 * X[:, 2] + rng.normal(0, 0.05, n), 0, 1)
    return LoadDataset(X.astype(float), y, 1.0)


def records(counts, hours=None):
    hours = hours or list(range(len(counts)))
    return [LoadRecord(MON, h, c) for h, c in zip(hours, counts)]


# -- data ---------------------------------------------------------------------

@pytest.mark.parametrize("counts, expected", [
    ([50, 100], [0.5, 1.0]),
    ([40, 40, 40], [1.0, 1.0, 1.0]),
    ([30, 90, 60], [1 / 3, 1.0, 2 / 3]),
])
def test_normalize(counts, expected):
    ds = normalize(records(counts))
    assert ds.targets.tolist() == pytest.approx(expected, rel=1e-15)
    assert ds.normalization_max == max(counts)


def test_normalize_errors():
    with pytest.raises(ValueError):
        normalize([])
    with pytest.raises(ValueError):
        normalize(records([0, 0]))
    with pytest.raises(ValueError, match="weather"):
        normalize(records([1]), weather={})


def test_normalize_with_training_max():
    ds = normalize(records([55, 110]), normalization_max=100.0)
    assert ds.targets.tolist() == [0.55, 1.1]


def test_record_validation():
    with pytest.raises(ValueError):
        LoadRecord(MON, 24, 1)
    with pytest.raises(ValueError):
        LoadRecord(MON, 3, -1)


@pytest.mark.parametrize("kwargs", [dict(dow=7), dict(hour=24), dict(weather=4), dict(hi=5.0, lo=10.0),
                                    dict(wind=13)])
def test_feature_ranges(kwargs):
    with pytest.raises(ValueError):
        fv(**kwargs)


def test_feature_vector_from_weather():
    w = WeatherDay(MON, 2, 18.5, 9.0, 3, True)
    x = feature_vector(MON, 17, w)
    assert (x.day_of_week, x.hour, x.weather_code, x.wind_level, x.is_holiday) == (0, 17, 2, 3, True)
    assert FeatureVector.from_array(x.as_array()) == x


def test_split_final_days():
    recs = [LoadRecord(MON + dt.timedelta(days=d), 8, 10) for d in range(10)]
    train, test = split_final_days(recs, 7)
    assert len(train) == 3 and len(test) == 7
    assert max(r.date for r in train) < min(r.date for r in test)
    with pytest.raises(ValueError):
        split_final_days(recs[:7], 7)


def test_csv_round_trip(tmp_path):
    recs = [LoadRecord(MON + dt.timedelta(days=d), h, 3 * d + h) for d in range(3) for h in range(24)]
    weather = [WeatherDay(MON + dt.timedelta(days=d), d % 4, 20.0 + 0.1 * d, 10.5, d, d == 1)
               for d in range(3)]
    write_passenger_csv(recs, tmp_path / "p.csv")
    write_weather_csv(weather, tmp_path / "w.csv")
    assert read_passenger_csv(tmp_path / "p.csv") == recs
    assert list(read_weather_csv(tmp_path / "w.csv").values()) == weather


def test_csv_errors(tmp_path):
    p = tmp_path / "p.csv"
    p.write_text("date,hour,count\n")
    with pytest.raises(ValueError, match="header"):
        read_passenger_csv(p)
    p.write_text("date,hour,passenger_count\n2014-12-15,8,12\n2014-12-15,x,3\n")
    with pytest.raises(ValueError, match=":3:"):
        read_passenger_csv(p)
    w = tmp_path / "w.csv"
    w.write_text("date,weather_code,temp_high_c,temp_low_c,wind_level,is_holiday\n2014-12-15,0,5,9,1,0\n")
    with pytest.raises(ValueError, match="temp_high_c"):
        read_weather_csv(w)


# -- average ------------------------------------------------------------------

def test_average_examples():
    m = train_average(LoadDataset.from_rows([(fv(0, 8), 0.7)]))
    assert m.table[0, 8] == pytest.approx(0.7)
    assert predict(m, fv(0, 8)) == pytest.approx(0.7)
    m = train_average(LoadDataset.from_rows([(fv(0, 8), 0.6), (fv(0, 8), 0.8)]))
    assert predict(m, fv(0, 8)) == pytest.approx(0.7)


def test_average_falls_back_to_global_mean():
    m = train_average(LoadDataset.from_rows([(fv(0, 8), 0.6), (fv(1, 9), 0.2)]))
    assert predict(m, fv(3, 3)) == pytest.approx(0.4)


@pytest.mark.parametrize("seed", range(5))
def test_average_matches_filtered_mean(seed):
    data = random_dataset(seed, 300)
    m = train_average(data)
    for d, h in itertools.product(range(7), range(24)):
        rows = (data.features[:, 0] == d) & (data.features[:, 1] == h)
        if rows.any():
            assert m.table[d, h] == pytest.approx(np.mean(data.targets[rows]), rel=1e-12)


# -- regression tree ----------------------------------------------------------

def hour_split_data():
    return LoadDataset.from_rows([(fv(hour=h), y) for h, y in [(1, 0.1), (2, 0.1), (9, 0.9), (10, 0.9)]])


def test_tree_hour_split():
    data = hour_split_data()
    m = train_regression_tree(data, max_depth=1, min_leaf=1, min_impurity_decrease=0.0)
    assert m.feature[0] == 1 and m.threshold[0] == 5.5
    assert sorted(m.value[m.feature == -1].tolist()) == pytest.approx([0.1, 0.9])
    assert predict(m, fv(hour=2)) == pytest.approx(0.1)
    assert predict(m, fv(hour=5)) == pytest.approx(0.1)
    assert predict(m, fv(hour=6)) == pytest.approx(0.9)


def test_tree_constant_target():
    rows = [(fv(hour=h), 0.42) for h in range(10)]
    m = train_regression_tree(LoadDataset.from_rows(rows), min_leaf=1)
    assert m.n_leaves == 1 and m.value[0] == pytest.approx(0.42)


def brute_best_sse(X, y, min_leaf):
    """Lowest child SSE over every feature and midpoint threshold."""
    best = np.inf
    for k in range(X.shape[1]):
        vals = np.unique(X[:, k])
        for t in (vals[:-1] + vals[1:]) / 2:
            left = X[:, k] <= t
            if left.sum() < min_leaf or (~left).sum() < min_leaf:
                continue
            sse = ((y[left] - y[left].mean()) ** 2).sum() + ((y[~left] - y[~left].mean()) ** 2).sum()
            best = min(best, sse)
    return best


@pytest.mark.parametrize("seed", range(8))
def test_stump_is_exhaustive_optimum(seed):
    data = random_dataset(seed, 40)
    m = fit_tree(data.features, data.targets, max_depth=1, min_leaf=2, min_impurity_decrease=0.0)
    leaves = m.apply(data.features)
    sse = sum(((data.targets[leaves == l] - m.value[l]) ** 2).sum() for l in np.unique(leaves))
    assert sse == pytest.approx(brute_best_sse(data.features, data.targets, 2), rel=1e-9, abs=1e-15)


def test_split_tie_break_lowest_feature_then_threshold():
    # features 0 and 1 separate the targets equally well
    X = np.array([[0, 0, 0, 20, 10, 1, 0], [1, 1, 0, 20, 10, 1, 0],
                  [5, 20, 0, 20, 10, 1, 0], [6, 21, 0, 20, 10, 1, 0]], dtype=float)
    m = fit_tree(X, np.array([0.0, 0.0, 1.0, 1.0]), max_depth=1, min_leaf=1, min_impurity_decrease=0.0)
    assert (m.feature[0], m.threshold[0]) == (0, 3.0)


@pytest.mark.parametrize("seed", range(5))
def test_tree_leaves_are_routed_means(seed):
    data = random_dataset(seed)
    m = train_regression_tree(data, max_depth=5, min_leaf=3)
    leaves = m.apply(data.features)
    for leaf in np.unique(leaves):
        assert m.value[leaf] == pytest.approx(data.targets[leaves == leaf].mean(), rel=1e-12)
    pred = m.predict_many(data.features)
    assert pred.min() >= data.targets.min() and pred.max() <= data.targets.max()
    assert np.all(np.isfinite(m.threshold[m.feature != -1]))


def test_tree_depth_and_leaf_limits():
    data = random_dataset(3, 200)
    m = train_regression_tree(data, max_depth=2, min_leaf=30, min_impurity_decrease=0.0)
    assert m.n_leaves <= 4
    assert np.bincount(m.apply(data.features)).max() >= 30
    assert all(c >= 30 for c in np.bincount(m.apply(data.features)) if c)


def test_min_impurity_decrease_stops_growth():
    data = random_dataset(4, 200)
    loose = train_regression_tree(data, max_depth=8, min_leaf=2, min_impurity_decrease=0.0)
    tight = train_regression_tree(data, max_depth=8, min_leaf=2, min_impurity_decrease=0.2)
    assert tight.n_leaves < loose.n_leaves


# -- gradient boosting --------------------------------------------------------

def stump(value):
    return TreeModel(np.array([-1]), np.array([0.0]), np.array([-1]), np.array([-1]), np.array([value]))


def test_gbdt_arithmetic():
    m = GbdtModel(0.5, 0.1, (stump(0.2),))
    assert predict(m, fv()) == pytest.approx(0.52)


def test_gbdt_zero_trees_returns_baseline():
    data = random_dataset(1)
    m = train_gbdt(data, n_trees=0)
    assert np.all(m.predict_many(data.features) == pytest.approx(data.targets.mean()))


def test_gbdt_exact_fit():
    rows = [(fv(hour=h), y) for h, y in [(1, 0.2), (5, 0.9), (9, 0.4), (13, 0.6)]]
    data = LoadDataset.from_rows(rows)
    m = train_gbdt(data, n_trees=1, learning_rate=1.0, max_depth=3, min_leaf=1)
    assert np.allclose(m.predict_many(data.features), data.targets, atol=1e-12)


@pytest.mark.parametrize("lr", [0.1, 0.5, 1.0])
def test_gbdt_training_mse_non_increasing(lr):
    data = random_dataset(2)
    m = train_gbdt(data, n_trees=30, learning_rate=lr, max_depth=3)
    mses = [np.mean((m.truncated(n).predict_many(data.features) - data.targets) ** 2) for n in range(31)]
    assert all(b <= a + 1e-15 for a, b in zip(mses, mses[1:]))


def test_gbdt_validation():
    data = random_dataset(0, 20)
    with pytest.raises(ValueError):
        train_gbdt(data, n_trees=-1)
    with pytest.raises(ValueError):
        train_gbdt(data, learning_rate=0.0)


# -- neural network -----------------------------------------------------------

def test_encoding_width_and_values():
    A = encode_features(fv(dow=2, hour=23, weather=3, hi=40.0, lo=20.0, wind=5, holiday=True).as_array())
    assert A.shape == (1, 16)
    assert A[0, 2] == 1 and A[0, :7].sum() == 1
    assert A[0, 7] == 1.0
    assert A[0, 8 + 3] == 1 and A[0, 8:12].sum() == 1
    assert A[0, 12:].tolist() == [1.0, 0.5, 0.5, 1.0]


def test_nn_zero_epochs_is_seeded_init():
    data = random_dataset(0, 30)
    a = train_nn(data, epochs=0, seed=5)
    b = train_nn(data, epochs=0, seed=5)
    init = init_nn(16, seed=5)
    assert all(np.array_equal(x, y) for x, y in zip(a.weights, init.weights))
    assert np.array_equal(a.predict_many(data.features), b.predict_many(data.features))


def test_nn_single_row_fit():
    data = LoadDataset.from_rows([(fv(), 0.6)])
    m = train_nn(data, epochs=200, learning_rate=0.01, seed=0)
    assert mse_loss(m, encode_features(data.features), data.targets) < 1e-4


def test_nn_bit_reproducible():
    data = random_dataset(1, 50)
    a = train_nn(data, epochs=20, seed=3)
    b = train_nn(data, epochs=20, seed=3)
    assert all(x.tobytes() == y.tobytes() for x, y in zip(a.weights + a.biases, b.weights + b.biases))


def test_nn_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    model = init_nn(5, hidden=(4, 3), seed=1)
    # shift biases so no unit sits at the ReLU kink
    model = NnModel(model.weights, tuple(b + 0.1 for b in model.biases), model.activations)
    A = rng.normal(size=(6, 5))
    y = rng.uniform(size=6)
    gw, gb = nn_gradients(model, A, y)
    h = 1e-6
    for params, grads in ((model.weights, gw), (model.biases, gb)):
        for p, g in zip(params, grads):
            for idx in np.ndindex(p.shape):
                old = p[idx]
                p[idx] = old + h
                up = mse_loss(model, A, y)
                p[idx] = old - h
                down = mse_loss(model, A, y)
                p[idx] = old
                fd = (up - down) / (2 * h)
                assert g[idx] == pytest.approx(fd, rel=1e-5, abs=1e-9)


def test_nn_divergence_reported():
    data = random_dataset(0, 40)
    with pytest.raises(TrainingDivergedError):
        train_nn(data, epochs=200, learning_rate=1e3, seed=0)


def test_nn_layer_chain_validated():
    with pytest.raises(ValueError):
        NnModel((np.zeros((3, 4)), np.zeros((5, 1))), (np.zeros(4), np.zeros(1)), ("relu", "linear"))


@pytest.mark.parametrize("seed", range(3))
def test_predictors_finite_on_all_inputs(seed):
    data = random_dataset(seed)
    grid = np.array([[d, h, w, 25, 15, 2, hol] for d in range(7) for h in range(24) for w in range(4)
                     for hol in (0, 1)], dtype=float)
    for m in (train_average(data), train_regression_tree(data), train_gbdt(data, 10),
              train_nn(data, epochs=10, seed=seed)):
        assert np.all(np.isfinite(m.predict_many(grid)))


def test_predict_rejects_out_of_range():
    m = train_average(random_dataset(0))
    with pytest.raises(ValueError):
        m.predict_many(np.array([[7, 8, 0, 20, 10, 1, 0]], dtype=float))


def test_clamp():
    assert clamp_load_factor(np.array([-0.2, 0.5, 1.5])).tolist() == [0.0, 0.5, 1.2]


# -- metrics ------------------------------------------------------------------

def test_rmse_examples():
    assert rmse([0.3, 0.4], [0.3, 0.4]) == 0.0
    assert rmse([0, 0], [3, 4]) == pytest.approx(np.sqrt(12.5))
    assert rmse([1], [3]) == 2.0
    with pytest.raises(ValueError):
        rmse([1, 2], [1])
    with pytest.raises(ValueError):
        rmse([], [])


@given(arrays(float, st.integers(1, 30), elements=st.floats(-10, 10)), st.randoms())
def test_rmse_properties(y, rnd):
    assert rmse(y, y) == 0.0
    pred = y + 1.0
    perm = list(range(y.size))
    rnd.shuffle(perm)
    assert rmse(y[perm], pred[perm]) == pytest.approx(rmse(y, pred))


def test_variance_examples():
    assert rmse_variance([2.5] * 7) == 0.0
    assert rmse_variance([1, 3]) == 2.0
    assert rmse_variance([0, 0, 0, 0, 0, 0, 7]) == pytest.approx(7.0)
    with pytest.raises(ValueError):
        rmse_variance([1.0])


def test_evaluate_and_table():
    days = [MON + dt.timedelta(days=d) for d in range(2)]
    recs = [LoadRecord(day, h, c) for day in days for h, c in ((8, 50), (9, 100))]
    data = normalize(recs)
    row = evaluate_by_day(stump_model := AverageModel(np.full((7, 24), 0.5), 0.5), "flat", data, scale=100)
    assert stump_model.kind == "average"
    assert [r for _, r in row.days] == pytest.approx([np.sqrt(12.5) * 10] * 2)
    assert row.variance == 0.0
    table = format_rmse_table([row])
    assert table.splitlines()[0] == "model,2014-12-15,2014-12-16,total,variance"
    assert table.splitlines()[1].startswith("flat,35.3553,35.3553,35.3553,0.0000")


# -- serialization ------------------------------------------------------------

@pytest.mark.parametrize("kind", ["average", "tree", "gbdt", "nn"])
def test_model_round_trip(kind, tmp_path):
    data = random_dataset(7)
    m = {"average": lambda: train_average(data),
         "tree": lambda: train_regression_tree(data),
         "gbdt": lambda: train_gbdt(data, 15),
         "nn": lambda: train_nn(data, 15, seed=2)}[kind]()
    text = dumps_model(m)
    assert text.startswith("busems-model 1\n")
    back = loads_model(text)
    assert type(back) is type(m)
    assert np.array_equal(back.predict_many(data.features), m.predict_many(data.features))
    assert dumps_model(back) == text
    save_model(m, tmp_path / "m.txt")
    assert dumps_model(load_model(tmp_path / "m.txt")) == text


def test_model_load_rejects_garbage():
    with pytest.raises(ValueError):
        loads_model("not a model\n")
    with pytest.raises(ValueError):
        loads_model("busems-model 99\nkind tree\n")
