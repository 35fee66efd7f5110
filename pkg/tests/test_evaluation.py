import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import RANK_TABLE_EXPECTED, RANK_TABLE_MODELS, rank_table
from series2vec.errors import DomainError
from series2vec.evaluation import (
    average_rank,
    curve_csv,
    fit_logistic,
    format_table,
    linear_probe,
    low_label_curve,
    stratified_subsample,
)


def clusters(n_per_class, n_classes=3, dim=8, spread=0.3, seed=0):
    rng = np.random.default_rng(seed)
    centers = rng.normal(scale=5.0, size=(n_classes, dim))
    y = np.repeat(np.arange(n_classes), n_per_class)
    x = centers[y] + spread * rng.normal(size=(y.size, dim))
    return x, y


class TestLinearProbe:
    def test_separable_clusters(self):
        x, y = clusters(40)
        xt, yt = clusters(20, seed=0)
        res = linear_probe(x, y, xt, yt)
        assert res.accuracy == 1.0
        assert res.per_class_accuracy == [1.0, 1.0, 1.0]

    def test_random_labels_near_chance(self):
        rng = np.random.default_rng(1)
        x, y = rng.normal(size=(300, 16)), rng.integers(0, 3, 300)
        xt, yt = rng.normal(size=(150, 16)), rng.integers(0, 3, 150)
        assert 0.13 <= linear_probe(x, y, xt, yt).accuracy <= 0.53

    def test_train_equals_test_separable(self):
        x, y = clusters(15, n_classes=4)
        assert linear_probe(x, y, x, y).accuracy == 1.0

    def test_confusion_invariants(self):
        rng = np.random.default_rng(2)
        x, y = rng.normal(size=(60, 4)), rng.integers(0, 3, 60)
        xt, yt = rng.normal(size=(45, 4)), rng.integers(0, 3, 45)
        res = linear_probe(x, y, xt, yt)
        conf = np.array(res.confusion)
        np.testing.assert_array_equal(conf.sum(axis=1), np.bincount(yt, minlength=3))
        assert res.accuracy == np.trace(conf) / conf.sum()
        assert res.labels_per_class == np.bincount(y).tolist()
        json.dumps(res.to_json())

    def test_deterministic_and_inputs_untouched(self):
        x, y = clusters(10)
        before = x.copy()
        a = linear_probe(x, y, x, y)
        b = linear_probe(x, y, x, y)
        assert a == b
        np.testing.assert_array_equal(x, before)

    def test_absent_class(self):
        x, y = clusters(5)
        yt = y.copy()
        with pytest.raises(DomainError, match="class 1"):
            linear_probe(x[y != 1], y[y != 1], x, yt)

    def test_bad_labels(self):
        with pytest.raises(DomainError):
            linear_probe(np.zeros((2, 2)), np.array([0, -1]), np.zeros((1, 2)), np.array([0]))

    def test_gradient_descent_converges(self):
        x, y = clusters(20, spread=3.0)
        m = fit_logistic(x, y, 3)
        assert m.iterations <= 5000
        # objective gradient is (near) zero at the fitted point
        xs = (x - m.mean) / m.scale
        z = xs @ m.weight + m.bias
        p = np.exp(z - z.max(1, keepdims=True))
        p /= p.sum(1, keepdims=True)
        g = xs.T @ (p - np.eye(3)[y]) / len(y) + 1e-4 * m.weight
        assert np.linalg.norm(g) < 1e-3


class TestLowLabel:
    def setup_method(self):
        self.x, self.y = clusters(100, spread=4.0, seed=3)
        self.xt, self.yt = clusters(30, spread=4.0, seed=3)

    def test_full_grid_point_equals_full_probe(self):
        curve = low_label_curve(self.x, self.y, self.xt, self.yt, grid=[100], repeats=2)
        full = linear_probe(self.x, self.y, self.xt, self.yt).accuracy
        assert curve == [(100, full, 0.0)]

    def test_reproducible(self):
        a = low_label_curve(self.x, self.y, self.xt, self.yt, grid=[5, 20], repeats=1, seed=4)
        b = low_label_curve(self.x, self.y, self.xt, self.yt, grid=[5, 20], repeats=1, seed=4)
        assert a == b

    def test_trend_within_one_std(self):
        curve = low_label_curve(self.x, self.y, self.xt, self.yt, grid=[5, 10, 20, 50, 100], repeats=5)
        for (_, m0, s0), (_, m1, s1) in zip(curve, curve[1:]):
            assert m1 >= m0 - max(s0, s1) - 1e-12

    def test_grid_larger_than_class(self):
        x, y = self.x[:250], self.y[:250]  # class 2 keeps only 50
        with pytest.raises(DomainError, match="class 2 has only 50"):
            low_label_curve(x, y, self.xt, self.yt, grid=[60])

    def test_subsample_exact_counts(self):
        idx = stratified_subsample(self.y, 7, np.random.default_rng(0))
        np.testing.assert_array_equal(np.bincount(self.y[idx]), [7, 7, 7])
        assert len(set(idx.tolist())) == 21

    def test_csv(self):
        text = curve_csv([(5, 0.5, 0.1), (10, 0.75, 0.0)])
        assert text.splitlines() == ["n_per_class,mean,std", "5,0.5,0.1", "10,0.75,0.0"]


class TestAverageRank:
    def test_strict_winner(self):
        t = {"a": {"x": 0.9, "y": 0.8}, "b": {"x": 0.5, "y": 0.7}, "c": {"x": 0.1, "y": 0.2}}
        assert average_rank(t) == {"a": 1.0, "b": 2.0, "c": 3.0}

    def test_tie_shares_mean(self):
        t = {"a": {"x": 0.9, "y": 0.6}, "b": {"x": 0.9, "y": 0.6}, "c": {"x": 0.1, "y": 0.2}}
        assert average_rank(t) == {"a": 1.5, "b": 1.5, "c": 3.0}

    def test_seven_model_table(self):
        ranks = average_rank(rank_table())
        got = [round(ranks[m], 2) for m in RANK_TABLE_MODELS]
        assert got == list(RANK_TABLE_EXPECTED)

    def test_missing_entry(self):
        with pytest.raises(DomainError, match="'b'"):
            average_rank({"a": {"x": 0.9, "y": 0.1}, "b": {"x": 0.2}})

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 6), st.integers(1, 5), st.data())
    def test_bounds_and_column_sums(self, n_models, n_sets, data):
        vals = data.draw(st.lists(st.sampled_from([0.1, 0.5, 0.5, 0.9]), min_size=n_models * n_sets, max_size=n_models * n_sets))
        t = {f"m{i}": {f"d{j}": vals[i * n_sets + j] for j in range(n_sets)} for i in range(n_models)}
        ranks = average_rank(t)
        assert all(1 <= r <= n_models for r in ranks.values())
        assert sum(ranks.values()) == pytest.approx(n_models * (n_models + 1) / 2)


def test_format_table():
    out = format_table(["model", "acc"], [["full", 0.5], ["x", 1.0]])
    lines = out.splitlines()
    assert lines[0].startswith("model") and lines[2] == "full   0.5000"
