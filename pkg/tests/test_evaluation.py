import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grbfnn.data import generate
from grbfnn.evaluation import (
    CvPlan,
    accuracy,
    cross_validate,
    expand_grid,
    grid_search,
    kfold_split,
    n_workers,
    rmse,
)
from grbfnn.training import TrainConfig


class TestMetrics:
    def test_rmse(self):
        assert rmse([1, 2, 3], [1, 2, 3]) == 0.0
        assert rmse([0, 0], [3, 4]) == pytest.approx(np.sqrt(12.5))

    def test_accuracy(self):
        assert accuracy([0, 1, 1, 0], [0, 1, 0, 0]) == 0.75

    def test_errors(self):
        with pytest.raises(ValueError):
            rmse([1, 2], [1])
        with pytest.raises(ValueError):
            accuracy([], [])


class TestFolds:
    @given(st.integers(5, 200), st.integers(2, 5), st.integers(0, 100))
    @settings(max_examples=40, deadline=None)
    def test_partition(self, n, k, seed):
        folds = kfold_split(n, k, seed)
        tests = np.concatenate([te for _, te in folds])
        np.testing.assert_array_equal(np.sort(tests), np.arange(n))
        for tr, te in folds:
            assert not set(tr) & set(te)
            assert len(tr) + len(te) == n

    def test_stratified(self):
        labels = np.r_[np.zeros(60, int), np.ones(40, int)]
        for tr, te in kfold_split(100, 5, 0, labels):
            assert np.sum(labels[te] == 0) == 12
            assert np.sum(labels[te] == 1) == 8

    def test_small_class(self):
        labels = np.r_[np.zeros(20, int), np.ones(3, int)]
        with pytest.raises(ValueError, match="fewer than 5 folds"):
            kfold_split(23, 5, 0, labels)

    def test_deterministic(self):
        a = kfold_split(30, 5, 7)
        b = kfold_split(30, 5, 7)
        for (t1, e1), (t2, e2) in zip(a, b):
            np.testing.assert_array_equal(e1, e2)

    def test_seeds_list(self):
        assert CvPlan(n_seeds=3).seeds == (0, 1, 2)
        assert CvPlan(seeds=[5, 9]).n_seeds == 2
        with pytest.raises(ValueError):
            CvPlan(n_folds=1)


class TestGrid:
    def test_expand(self):
        cfgs = expand_grid({"lambda_u": [0.1, 1.0], "n_centers": [4, 8, 16]}, TrainConfig())
        assert len(cfgs) == 6
        assert {(c.reg.lambda_u, c.n_centers) for c in cfgs} == {(u, m) for u in (0.1, 1.0) for m in (4, 8, 16)}
        with pytest.raises(ValueError):
            expand_grid({"bogus": [1]}, TrainConfig())
        with pytest.raises(ValueError):
            expand_grid({"lambda_w": []}, TrainConfig())

    def test_small_search(self):
        ds = generate("sine_ridge", 40, seed=0)
        base = TrainConfig(n_centers=4, learning_rate=1e-2, max_epochs=100)
        res = grid_search(ds, {"lambda_u": [0.01, 1.0], "lambda_w": [0.0, 0.1]}, CvPlan(3, seeds=[0]), base)
        assert len(res.rows) == 4 * 3
        assert [r["config"] for r in res.rows] == sorted(r["config"] for r in res.rows)
        summ = res.summary()
        assert len(summ) == 4
        best = res.best_index
        assert summ[best]["test_mean"] == min(s["test_mean"] for s in summ)
        lw, lu, table, cell = res.heatmap()
        assert table.shape == (2, 2) and table[cell] == summ[best]["test_mean"]
        assert res.heatmap_csv().count("*") == 1
        header = res.rows_csv().splitlines()[0]
        assert header == "lambda_w,lambda_u,lambda_c,M,lr,mode,seed,fold,train_metric,test_metric"

    def test_parallel_matches_serial(self):
        ds = generate("two_gaussians", 40, seed=1)
        base = TrainConfig(n_centers=2, learning_rate=1e-2, max_epochs=50)
        plan = CvPlan(2, seeds=[0, 1])
        a = cross_validate(ds, base, plan, workers=1)
        b = cross_validate(ds, base, plan, workers=2)
        assert a.rows == b.rows

    def test_workers_env(self, monkeypatch):
        monkeypatch.setenv("GRBFNN_THREADS", "3")
        assert n_workers() == 3
        monkeypatch.setenv("GRBFNN_THREADS", "x")
        assert n_workers() == 1
