import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dbtune import estimator as est
from dbtune.monitor import MetricsSnapshot
from dbtune.sim import DEFAULT_BUFFER_LADDER, DEFAULT_POOL_LADDER

CACHE = list(DEFAULT_BUFFER_LADDER)
POOL = list(DEFAULT_POOL_LADDER)
TABLE_ONE_BOUNDS = [(1000, 2500), (0.875, 0.9895), (7.5, 8.5)]


def snapshot(rows, miss, users):
    return MetricsSnapshot(1, 50, miss, users, rows, 1.0, 10)


class TestNormalize:
    def test_minima_map_to_zero(self):
        np.testing.assert_array_equal(est.normalize([1000, 0.875, 7.5], TABLE_ONE_BOUNDS), [0, 0, 0])

    def test_table_rows_2000(self):
        assert est.normalize([2000, 0.9, 8], TABLE_ONE_BOUNDS)[0] == pytest.approx(2 / 3)
        assert est.normalize([2000, 0.9, 8], TABLE_ONE_BOUNDS)[0] == pytest.approx(0.6667, abs=1e-4)

    def test_clamps(self):
        x = est.normalize([9000, 2.0, -3], TABLE_ONE_BOUNDS)
        np.testing.assert_array_equal(x, [1, 1, 0])


class TestForward:
    def test_zero_weights_give_half(self):
        m = est.init_model(est.NetConfig(n_hidden=7))
        for arr in (m.W1, m.b1, m.W2, m.b2):
            arr[...] = 0
        np.testing.assert_array_equal(est.forward(m, [0.3, 0.9, 0.1]), [0.5, 0.5])

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**32), x=st.lists(st.floats(0, 1), min_size=3, max_size=3))
    def test_output_in_open_unit_interval(self, seed, x):
        m = est.init_model(est.NetConfig(n_hidden=10, seed=seed, init_half_range=3.0))
        y = est.forward(m, x)
        assert np.all((y > 0) & (y < 1))

    def test_deterministic(self):
        a = est.forward(est.init_model(est.NetConfig(seed=5)), [0.1, 0.2, 0.3])
        b = est.forward(est.init_model(est.NetConfig(seed=5)), [0.1, 0.2, 0.3])
        np.testing.assert_array_equal(a, b)

    def test_batch_matches_rows(self, rng):
        m = est.init_model(est.NetConfig(n_hidden=12))
        X = rng.random((6, 3))
        np.testing.assert_allclose(est.forward(m, X), np.array([est.forward(m, x) for x in X]), rtol=1e-15)


def numeric_grad(model, x, t, h=1e-6):
    """Independent central-difference gradient with its own forward pass."""
    def f():
        hid = 1 / (1 + np.exp(-(model.W1 @ x + model.b1)))
        y = 1 / (1 + np.exp(-(model.W2 @ hid + model.b2)))
        return 0.5 * np.sum((y - t) ** 2)

    grads = []
    for p in (model.W1, model.b1, model.W2, model.b2):
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            orig = p[i]
            p[i] = orig + h
            up = f()
            p[i] = orig - h
            down = f()
            p[i] = orig
            g[i] = (up - down) / (2 * h)
        grads.append(g)
    return grads


class TestGradients:
    def test_backprop_matches_independent_differences(self, rng):
        m = est.init_model(est.NetConfig(n_inputs=4, n_hidden=6, n_outputs=3, seed=3))
        x, t = rng.random(4), rng.random(3)
        _, *analytic = est.backprop(m, x, t)
        for a, n in zip(analytic, numeric_grad(m, x, t)):
            np.testing.assert_allclose(a, n, rtol=1e-5, atol=1e-9)

    def test_random_3_5_2(self, rng):
        m = est.init_model(est.NetConfig(n_hidden=5, seed=9))
        assert est.gradient_check(m, rng.random(3), rng.random(2)) <= 1e-4

    @settings(max_examples=20, deadline=None)
    @given(p=st.integers(1, 5), h=st.integers(1, 20), o=st.integers(1, 3), seed=st.integers(0, 2**32))
    def test_gradient_check_property(self, p, h, o, seed):
        r = np.random.default_rng(seed)
        m = est.init_model(est.NetConfig(n_inputs=p, n_hidden=h, n_outputs=o, seed=seed, init_half_range=2.0))
        assert est.gradient_check(m, r.random(p), r.random(o)) <= 1e-4

    def test_exact_fit_has_zero_gradient(self, rng):
        m = est.init_model(est.NetConfig(n_hidden=8))
        x = rng.random(3)
        loss, *grads = est.backprop(m, x, est.forward(m, x))
        assert loss == 0.0
        for g in grads:
            np.testing.assert_allclose(g, 0.0, atol=1e-15)

    def test_check_is_deterministic(self, rng):
        m = est.init_model(est.NetConfig(n_hidden=5, seed=2))
        x, t = rng.random(3), rng.random(2)
        assert est.gradient_check(m, x, t) == est.gradient_check(m, x, t)


class TestTrain:
    def test_zero_rate_leaves_weights(self):
        cfg = est.NetConfig(learning_rate=0.0, epochs=5, n_hidden=10)
        m0 = est.init_model(cfg)
        m, trace = est.train(m0, est.table_one(), cfg)
        for a, b in ((m.W1, m0.W1), (m.b1, m0.b1), (m.W2, m0.W2), (m.b2, m0.b2)):
            np.testing.assert_array_equal(a, b)
        assert len(set(trace)) == 1

    def test_single_row_descends(self):
        cfg = est.NetConfig(epochs=10, n_hidden=20, seed=4)
        tset = est.TrainingSet([[1000, 0.9, 8]], [[40, 16]])
        _, trace = est.train(est.init_model(cfg), tset, cfg)
        assert all(b < a for a, b in zip(trace, trace[1:]))

    def test_table_one_fits(self, table_one_model):
        model, trace = table_one_model
        assert len(trace) == 100
        assert trace[-1] <= 0.05
        assert np.all(np.isfinite(trace))

    def test_input_model_untouched(self):
        cfg = est.NetConfig(epochs=3, n_hidden=4)
        m0 = est.init_model(cfg)
        w = m0.W1.copy()
        est.train(m0, est.table_one(), cfg)
        np.testing.assert_array_equal(m0.W1, w)
        assert not m0.trained

    def test_deterministic(self):
        cfg = est.NetConfig(epochs=20, seed=8)
        a, ta = est.train(est.init_model(cfg), est.table_one(), cfg)
        b, tb = est.train(est.init_model(cfg), est.table_one(), cfg)
        assert ta == tb
        np.testing.assert_array_equal(a.W2, b.W2)

    def test_bounds_from_columns(self, table_one_model):
        model, _ = table_one_model
        np.testing.assert_array_equal(model.feature_bounds, TABLE_ONE_BOUNDS)
        np.testing.assert_array_equal(model.target_bounds, [(32, 40), (4, 16)])

    def test_strict_rejects_constant_column(self):
        cfg = est.NetConfig(epochs=1)
        with pytest.raises(est.DegenerateTrainingSet, match="users"):
            est.train(est.init_model(cfg), est.table_one(), cfg, strict=True)

    def test_arity_mismatch(self):
        cfg = est.NetConfig(n_inputs=2, epochs=1)
        with pytest.raises(est.TrainingDataError):
            est.train(est.init_model(cfg), est.table_one(), cfg)


class TestEstimateSizes:
    def test_round_up(self):
        assert est.round_up_to_rung(9.3, CACHE) == 16
        assert est.round_up_to_rung(8.0, CACHE) == 8

    def test_clamps_to_top(self):
        assert est.round_up_to_rung(10_000, CACHE) == 256

    def test_slack_keeps_bottom_rung_reachable(self):
        assert est.round_up_to_rung(4.1, CACHE) == 4
        assert est.round_up_to_rung(4.3, CACHE) == 8

    def test_untrained_rejected(self):
        with pytest.raises(est.UntrainedModelError):
            est.estimate_sizes(est.init_model(est.NetConfig()), snapshot(1000, 0.98, 8), CACHE, POOL)

    def test_table_one_rows_within_a_rung(self, table_one_model):
        model, _ = table_one_model
        tset = est.table_one()
        for (rows, miss, users), (pool, cache) in zip(tset.features, tset.targets):
            p, c = est.estimate_sizes(model, snapshot(rows, miss, users), CACHE, POOL)
            assert abs(CACHE.index(c) - CACHE.index(int(cache))) <= 1
            assert abs(POOL.index(p) - POOL.index(int(pool))) <= 1

    @settings(max_examples=50, deadline=None)
    @given(rows=st.integers(0, 10**6), miss=st.floats(0, 1), users=st.integers(1, 64))
    def test_always_on_ladder(self, table_one_model, rows, miss, users):
        p, c = est.estimate_sizes(table_one_model[0], snapshot(rows, miss, users), CACHE, POOL)
        assert c in CACHE and p in POOL


class TestPersistence:
    def test_round_trip_bit_exact(self, tmp_path, table_one_model, rng):
        model, _ = table_one_model
        path = tmp_path / "m.json"
        est.save_model(model, path)
        loaded = est.load_model(path)
        X = rng.random((100, 3))
        np.testing.assert_array_equal(est.forward(model, X), est.forward(loaded, X))
        assert loaded.seed == model.seed

    def test_fields(self, tmp_path, table_one_model):
        path = tmp_path / "m.json"
        est.save_model(table_one_model[0], path)
        doc = json.loads(path.read_text())
        assert set(doc) == {"dims", "W1", "b1", "W2", "b2", "feature_bounds", "target_bounds", "seed"}
        assert doc["dims"] == [3, 100, 2]

    def test_truncated_file(self, tmp_path, table_one_model):
        path = tmp_path / "m.json"
        est.save_model(table_one_model[0], path)
        text = path.read_text()
        path.write_text(text[: len(text) // 2])
        with pytest.raises(est.ModelFormatError, match=r"m\.json:\d+:\d+"):
            est.load_model(path)

    def test_missing_bounds(self, tmp_path, table_one_model):
        doc = est.model_to_dict(table_one_model[0])
        del doc["target_bounds"]
        path = tmp_path / "m.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(est.UntrainedModelError):
            est.load_model(path)

    def test_bad_shape_names_field(self, tmp_path, table_one_model):
        doc = est.model_to_dict(table_one_model[0])
        doc["W2"] = doc["W2"][:1]
        path = tmp_path / "m.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(est.ModelFormatError, match="W2"):
            est.load_model(path)


class TestTrainingCsv:
    def test_table_one_users_filled(self):
        tset = est.table_one()
        assert len(tset) == 8
        assert set(tset.features[:, 2]) == {8.0}
        assert set(est.table_one(default_users=12).features[:, 2]) == {12.0}

    def test_bad_cell_reports_line(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("table_rows,miss_ratio,users,pool_mb,cache_mb\n1000,0.9,8,32,4\n1000,oops,8,32,4\n")
        with pytest.raises(est.TrainingDataError, match=r"d\.csv:3: field 'miss_ratio'"):
            est.read_training_csv(path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(est.TrainingDataError, match=":1:"):
            est.read_training_csv(path)

    def test_write_read_round_trip(self, tmp_path):
        rows = [(1000, 0.25, 4, 32, 4), (2000, 0.125, 16, 40, 8)]
        est.write_training_csv(rows, tmp_path / "d.csv")
        tset = est.read_training_csv(tmp_path / "d.csv")
        np.testing.assert_array_equal(tset.features, [r[:3] for r in rows])
        np.testing.assert_array_equal(tset.targets, [r[3:] for r in rows])
