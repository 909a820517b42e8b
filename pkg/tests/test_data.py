import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gpnd.data import (
    Dataset,
    Standardization,
    load_csv,
    metrics,
    shuffle_negatives,
    split_standardize,
    write_csv,
)
from gpnd.errors import (
    EmptyDatasetError,
    GenerationError,
    InvalidInputError,
    MissingColumnError,
    MissingFileError,
)
from gpnd.exact_gp import PredictiveDistribution


def wine_like(n=1599, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 11))
    y = rng.integers(3, 9, size=n).astype(float)
    return Dataset(X, y)


def test_load_three_rows(tmp_path):
    f = tmp_path / "t.csv"
    f.write_text("a,b,c,target\n1,2,3,4\n5,6,7,8\n9,10,11,12\n")
    ds = load_csv(f)
    assert len(ds) == 3 and ds.d == 3
    assert ds.feature_names == ("a", "b", "c") and ds.target_name == "target"
    np.testing.assert_array_equal(ds.y, [4, 8, 12])


def test_load_drops_malformed_row(tmp_path):
    f = tmp_path / "t.csv"
    f.write_text("a,b\n1,2\n3,oops\n5,6\n7\n")
    ds = load_csv(f)
    assert len(ds) == 2
    assert ds.dropped_rows == 2


def test_load_by_name_and_headerless(tmp_path):
    f = tmp_path / "t.csv"
    f.write_text("y,x\n1,10\n2,20\n")
    ds = load_csv(f, target_column="y")
    np.testing.assert_array_equal(ds.y, [1, 2])
    np.testing.assert_array_equal(ds.X[:, 0], [10, 20])
    g = tmp_path / "h.csv"
    g.write_text("1,10\n2,20\n")
    assert len(load_csv(g, has_header=False)) == 2


def test_roundtrip_exact(tmp_path, rng):
    ds = Dataset(rng.normal(size=(25, 3)) * 1e3, rng.normal(size=25), ("p", "q", "r"), "t")
    write_csv(ds, tmp_path / "r.csv")
    back = load_csv(tmp_path / "r.csv")
    np.testing.assert_allclose(back.X, ds.X, atol=1e-12, rtol=0)
    np.testing.assert_allclose(back.y, ds.y, atol=1e-12, rtol=0)


def test_ingestion_errors(tmp_path):
    with pytest.raises(MissingFileError):
        load_csv(tmp_path / "absent.csv")
    f = tmp_path / "t.csv"
    f.write_text("a,b\n1,2\n")
    with pytest.raises(MissingColumnError):
        load_csv(f, target_column="nope")
    with pytest.raises(MissingColumnError):
        load_csv(f, target_column=5)
    g = tmp_path / "bad.csv"
    g.write_text("a,b\nx,y\n")
    with pytest.raises(EmptyDatasetError):
        load_csv(g)
    e = tmp_path / "empty.csv"
    e.write_text("")
    with pytest.raises(EmptyDatasetError):
        load_csv(e)


def test_split_sizes_and_determinism():
    ds = Dataset(np.arange(20.0).reshape(10, 2), np.arange(10.0))
    a = split_standardize(ds, 0.8, 0.1, seed=4)
    b = split_standardize(ds, 0.8, 0.1, seed=4)
    assert [len(p) for p in a] == [8, 1, 1]
    for p, q in zip(a, b):
        np.testing.assert_array_equal(p.X, q.X)
        np.testing.assert_array_equal(p.y, q.y)


def test_split_is_standardized_partition(rng):
    ds = Dataset(rng.normal(3, 2, size=(50, 3)), rng.normal(-1, 4, 50))
    parts = split_standardize(ds, seed=1)
    tr = parts[0]
    assert abs(tr.y.mean()) < 1e-10 and abs(tr.y.std() - 1) < 1e-10
    np.testing.assert_allclose(tr.X.mean(axis=0), 0, atol=1e-10)
    rows = np.concatenate([p.destandardize().y for p in parts])
    np.testing.assert_allclose(np.sort(rows), np.sort(ds.y), atol=1e-10)
    with pytest.raises(InvalidInputError):
        split_standardize(Dataset(np.zeros((3, 1)), np.arange(3.0)), 0.8, 0.1)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_standardize_inverse_identity(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(rng.normal(0, 50), rng.uniform(0.1, 30), size=(20, 2))
    y = rng.normal(rng.normal(0, 50), rng.uniform(0.1, 30), size=20)
    s = Standardization.fit(X, y)
    np.testing.assert_allclose(s.inverse_X(s.transform_X(X)), X, atol=1e-10)
    np.testing.assert_allclose(s.inverse_y(s.transform_y(y)), y, atol=1e-10)
    assert Standardization.from_dict(s.as_dict()).y_std == s.y_std


def test_constant_column_keeps_unit_scale():
    s = Standardization.fit(np.ones((4, 1)), np.arange(4.0))
    assert s.x_std[0] == 1.0


def test_shuffle_two_labels_forced():
    ds = Dataset([[0.0], [1.0]], [0.0, 1.0])
    neg = shuffle_negatives(ds, 2, seed=0)
    truth = {0.0: 0.0, 1.0: 1.0}
    for x, yb in zip(neg.X[:, 0], neg.y):
        assert yb == 1.0 - truth[x]


def test_shuffle_m_zero_and_bounds():
    ds = wine_like(20)
    assert len(shuffle_negatives(ds, 0)) == 0
    with pytest.raises(InvalidInputError):
        shuffle_negatives(ds, 21)
    with pytest.raises(InvalidInputError):
        shuffle_negatives(Dataset(np.zeros((4, 1)), np.ones(4)), 2)


def test_shuffle_on_wine_shape():
    ds = wine_like()
    neg = shuffle_negatives(ds, 200, seed=5, sigma_neg=0.3)
    assert len(neg) == 200 and neg.sigma_neg == 0.3
    lookup = {tuple(x): y for x, y in zip(ds.X, ds.y)}
    assert all(lookup[tuple(x)] != yb for x, yb in zip(neg.X, neg.y))
    assert set(np.unique(neg.y)) <= set(np.unique(ds.y))


def test_shuffle_resample_cap():
    # one row carries the only distinct label, so most draws collide
    y = np.zeros(100_000)
    y[0] = 1.0
    ds = Dataset(np.arange(100_000.0)[:, None], y)
    with pytest.raises(GenerationError):
        shuffle_negatives(ds, 50, seed=0)


def test_metrics_examples():
    truth = np.array([0.5, -1.0, 2.0])
    nll, rmse = metrics(PredictiveDistribution(truth, np.full(3, 0.75)), truth, 0.25)
    assert rmse == 0.0
    assert nll == pytest.approx(0.5 * np.log(2 * np.pi), abs=1e-15)
    nll, rmse = metrics(PredictiveDistribution(truth + 1, np.ones(3)), truth)
    assert rmse == pytest.approx(1.0, abs=1e-15)
    assert nll == pytest.approx(0.5 * (1 + np.log(2 * np.pi)), abs=1e-15)


def test_metrics_density_oracle(rng):
    from scipy.stats import norm
    mu, var, y = rng.normal(size=20), rng.uniform(0.1, 2, 20), rng.normal(size=20)
    nll, rmse = metrics(PredictiveDistribution(mu, var), y, 0.05)
    oracle = -np.mean([norm.logpdf(y[i], mu[i], np.sqrt(var[i] + 0.05)) for i in range(20)])
    assert nll == pytest.approx(oracle, abs=1e-12)
    assert rmse == pytest.approx(np.sqrt(np.mean((y - mu) ** 2)), abs=1e-12)


def test_metrics_original_units(rng):
    s = Standardization(np.zeros(1), np.ones(1), 10.0, 3.0)
    mu, y = rng.normal(size=5), rng.normal(size=5)
    pred = PredictiveDistribution(mu, np.ones(5))
    _, rmse_std = metrics(pred, y)
    _, rmse_raw = metrics(pred, y, original_units=True, standardization=s)
    assert rmse_raw == pytest.approx(3 * rmse_std, rel=1e-12)
    with pytest.raises(InvalidInputError):
        metrics(pred, y[:4])
    with pytest.raises(InvalidInputError):
        metrics(pred, y, original_units=True)
