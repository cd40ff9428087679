"""Tests for the MLP, Adam, the loss menu, post-correction, and the training
and evaluation loops."""

import math

import numpy as np
import pytest

from hopolar import bench, geometry as geo, learning
from hopolar.autodiff import Tape, backward, gradcheck, mean
from hopolar.mapping import MapConfig

UNIT_SQUARE = geo.HalfspaceIntersection(
    A=np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]),
    b=np.ones(4))


def square_instance(label=None):
    return bench.ProblemInstance(
        family="polygon", index=0, x=np.array([0.3, -0.1]),
        objective=bench.QP(Q=np.eye(2), p=np.array([0.0, 0.0])),
        set=UNIT_SQUARE, y0=np.zeros(2), label=label)


class TestMlp:
    def test_init_deterministic(self):
        a = learning.mlp_init((4, 8, 8, 3), seed=5)
        b = learning.mlp_init((4, 8, 8, 3), seed=5)
        for wa, wb in zip(a.weights, b.weights):
            np.testing.assert_array_equal(wa, wb)

    def test_different_seeds_differ(self):
        a = learning.mlp_init((4, 8, 8, 3), seed=5)
        b = learning.mlp_init((4, 8, 8, 3), seed=6)
        assert not np.array_equal(a.weights[0], b.weights[0])

    def test_layer_shapes(self):
        p = learning.mlp_init((4, 64, 64, 3), seed=0)
        assert [w.shape for w in p.weights] == [(64, 4), (64, 64), (3, 64)]
        assert [b.shape for b in p.biases] == [(64,), (64,), (3,)]

    def test_init_bounds(self):
        p = learning.mlp_init((4, 64, 64, 3), seed=0)
        for w, fan_in in zip(p.weights, (4, 64, 64)):
            assert np.abs(w).max() <= 1.0 / math.sqrt(fan_in)

    def test_batch_rows_independent(self):
        p = learning.mlp_init((3, 8, 8, 2), seed=1)
        X = np.random.default_rng(0).standard_normal((5, 3))
        batch_out = learning.mlp_apply(p, X)
        for i in range(5):
            np.testing.assert_allclose(batch_out[i],
                                       learning.mlp_apply(p, X[i]),
                                       atol=1e-12)

    def test_forward_matches_apply(self):
        p = learning.mlp_init((3, 8, 8, 2), seed=1)
        x = np.array([0.2, -0.5, 1.0])
        tape = Tape()
        out, _ = learning.mlp_forward(tape, p, x)
        np.testing.assert_allclose(out.value, learning.mlp_apply(p, x),
                                   atol=1e-14)

    def test_gradcheck_through_forward(self):
        p = learning.mlp_init((3, 6, 6, 2), seed=2)

        from hopolar.autodiff import matmul, relu

        def f(x):
            # same layers rebuilt on x's tape so the check differentiates w.r.t. x
            tape = x.tape
            h = x
            for i in range(3):
                z = matmul(tape.leaf(p.weights[i]), h) + tape.leaf(p.biases[i])
                h = relu(z) if i < 2 else z
            return mean(h * h)

        rng = np.random.default_rng(3)
        worst = max(gradcheck(f, rng.standard_normal(3) + 2.0)
                    for _ in range(20))
        assert worst <= 1e-6

    def test_zero_params_give_degenerate_direction(self):
        p = learning.mlp_init((2, 4, 4, 3), seed=0)
        p.weights = [np.zeros_like(w) for w in p.weights]
        p.biases = [np.zeros_like(b) for b in p.biases]
        inst = square_instance()
        with pytest.raises(ValueError):
            learning.hop_predict(p, inst)

    def test_bad_dims_rejected(self):
        with pytest.raises(ValueError):
            learning.mlp_init((4, 0, 8, 3), seed=0)


class TestAdam:
    def test_zero_gradient_no_move(self):
        state = learning.AdamState(lr=0.1)
        t = [np.array([1.0, 2.0])]
        learning.adam_step(state, t, [np.zeros(2)])
        np.testing.assert_array_equal(t[0], [1.0, 2.0])

    def test_first_step_formula(self):
        state = learning.AdamState(lr=0.01)
        g = np.array([3.0, -0.5])
        t = [np.array([1.0, 1.0])]
        learning.adam_step(state, t, [g.copy()])
        expect = 1.0 - 0.01 * g / (np.abs(g) + 1e-8)
        np.testing.assert_allclose(t[0], expect, rtol=1e-12)

    def test_step_size_bounded(self):
        state = learning.AdamState(lr=0.05)
        t = [np.array([0.0])]
        prev = 0.0
        for _ in range(50):
            learning.adam_step(state, t, [np.array([1.0])])
            assert abs(t[0][0] - prev) <= 0.05 * (1 + 1e-6)
            prev = float(t[0][0])


class TestLosses:
    def test_penalty_zero_for_feasible(self):
        inst = square_instance()
        tape = Tape()
        y = tape.leaf(np.array([0.3, 0.2]))
        ssl = learning.loss_node(learning.LossSpec("ssl"), inst, y,
                                 bench.loss_value)
        ssl_sc = learning.loss_node(learning.LossSpec("ssl_sc", 10.0), inst, y,
                                    bench.loss_value)
        assert float(ssl.value) == float(ssl_sc.value)

    def test_penalty_magnitude(self):
        inst = square_instance()
        tape = Tape()
        y = tape.leaf(np.array([1.5, 0.0]))
        ssl = learning.loss_node(learning.LossSpec("ssl"), inst, y,
                                 bench.loss_value)
        ssl_sc = learning.loss_node(learning.LossSpec("ssl_sc", 10.0), inst, y,
                                    bench.loss_value)
        assert float(ssl_sc.value) - float(ssl.value) == pytest.approx(5.0)

    def test_sl_zero_at_label(self):
        inst = square_instance(label=np.array([0.1, 0.2]))
        tape = Tape()
        y = tape.leaf(np.array([0.1, 0.2]))
        sl = learning.loss_node(learning.LossSpec("sl"), inst, y,
                                bench.loss_value)
        assert float(sl.value) == 0.0

    def test_sl_requires_label(self):
        inst = square_instance()
        tape = Tape()
        y = tape.leaf(np.zeros(2))
        with pytest.raises(ValueError):
            learning.loss_node(learning.LossSpec("sl"), inst, y,
                               bench.loss_value)

    def test_sc_with_zero_lambda_matches_pure(self):
        inst = square_instance()
        tape = Tape()
        y = tape.leaf(np.array([1.7, 0.4]))
        a = learning.loss_node(learning.LossSpec("ssl"), inst, y,
                               bench.loss_value)
        b = learning.loss_node(learning.LossSpec("ssl_sc", 0.0), inst, y,
                               bench.loss_value)
        assert float(a.value) == float(b.value)

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            learning.LossSpec("ssl", 1.0)
        with pytest.raises(ValueError):
            learning.LossSpec("bogus")
        with pytest.raises(ValueError):
            learning.LossSpec("ssl_sc", -1.0)

    def test_violation_node_matches_geometry(self):
        rng = np.random.default_rng(8)
        ball = geo.LpBall(p=0.5, bound=1.0, center=np.zeros(2))
        quad = geo.QuadraticFormSet(geq_forms=((np.diag([1.0, -1.0]), 0.5),),
                                    leq_forms=((np.eye(2), 4.0),))
        for cs in (UNIT_SQUARE, ball, quad):
            for _ in range(50):
                y_val = rng.uniform(-2.0, 2.0, size=2)
                tape = Tape()
                node = learning.violation_node(cs, tape.leaf(y_val))
                assert float(node.value) == pytest.approx(
                    float(geo.violation(cs, y_val).sum()), abs=1e-6)


class TestPostCorrect:
    def test_feasible_unchanged(self):
        y0 = np.array([0.5, 0.5])
        y, steps, vio = learning.post_correct(y0, UNIT_SQUARE)
        np.testing.assert_array_equal(y, y0)
        assert steps == 0
        assert vio == 0.0

    def test_square_overshoot_corrected(self):
        y, steps, vio = learning.post_correct(np.array([1.5, 0.0]),
                                              UNIT_SQUARE, max_steps=500)
        assert y[0] <= 1.0 + 1e-6
        assert vio <= 1e-6

    def test_never_increases_squared_violation(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            y = rng.uniform(-3.0, 3.0, size=2)
            prev = float(np.sum(geo.violation(UNIT_SQUARE, y) ** 2))
            out, _, _ = learning.post_correct(y, UNIT_SQUARE, max_steps=50)
            cur = float(np.sum(geo.violation(UNIT_SQUARE, out) ** 2))
            assert cur <= prev + 1e-15


class TestTraining:
    def test_loss_decreases_on_single_instance(self):
        inst = bench.ProblemInstance(
            family="polygon", index=0, x=np.array([0.5, 0.5]),
            objective=bench.QP(Q=np.eye(2), p=np.array([-0.4, -0.3])),
            set=UNIT_SQUARE, y0=np.zeros(2))
        params = learning.mlp_init((2, 8, 8, 3), seed=0)
        cfg = learning.TrainConfig(epochs=50, batch_size=1, lr=1e-2, seed=0)
        _, history = learning.train_hop([inst], params, bench.loss_value, cfg)
        assert history[-1] < history[0]

    def test_zero_epochs_leave_params(self):
        inst = square_instance()
        params = learning.mlp_init((2, 4, 4, 3), seed=0)
        before = [w.copy() for w in params.weights]
        cfg = learning.TrainConfig(epochs=0, batch_size=1, seed=0)
        learning.train_hop([inst], params, bench.loss_value, cfg)
        for w0, w1 in zip(before, params.weights):
            np.testing.assert_array_equal(w0, w1)

    def test_seed_determinism(self):
        data = bench.gen_lp_dataset(10, seed=4)
        cfg = learning.TrainConfig(epochs=3, batch_size=4, seed=7)
        histories, finals = [], []
        for _ in range(2):
            params = learning.mlp_init((2, 6, 6, 3), seed=1)
            params, h = learning.train_hop(data, params, bench.loss_value, cfg)
            histories.append(h)
            finals.append([w.copy() for w in params.weights])
        assert histories[0] == histories[1]
        for a, b in zip(*finals):
            np.testing.assert_array_equal(a, b)


class TestEvaluate:
    def test_all_feasible(self):
        insts = [square_instance() for _ in range(4)]
        rep = learning.evaluate(insts, lambda i: np.zeros(2),
                                bench.objective_value)
        assert rep.vio_rate == 0.0
        assert rep.max_cons == 0.0

    def test_mixed_violations(self):
        insts = [square_instance() for _ in range(4)]
        outs = iter([np.zeros(2), np.zeros(2),
                     np.array([1.2, 0.0]), np.array([1.1, 0.0])])
        rep = learning.evaluate(insts, lambda i: next(outs),
                                bench.objective_value)
        assert rep.vio_rate == pytest.approx(0.5)
        assert rep.max_cons == pytest.approx(0.2)

    def test_hop_predictor_zero_violation(self):
        data = bench.gen_lp_dataset(20, seed=2)
        params = learning.mlp_init((2, 8, 8, 3), seed=0)
        rep = learning.evaluate(data, learning.make_hop_predictor(params),
                                bench.objective_value)
        assert rep.vio_rate == 0.0


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        params = learning.mlp_init((3, 5, 5, 4), seed=9)
        path = tmp_path / "ck.json"
        learning.save_checkpoint(path, params, extra={"method": "hop"})
        loaded, doc = learning.load_checkpoint(path)
        assert loaded.dims == params.dims
        assert doc["method"] == "hop"
        for a, b in zip(params.weights, loaded.weights):
            np.testing.assert_array_equal(a, b)
        for a, b in zip(params.biases, loaded.biases):
            np.testing.assert_array_equal(a, b)

    def test_config_hash_stable(self):
        a = learning.config_hash({"x": 1, "y": [1, 2]})
        b = learning.config_hash({"y": [1, 2], "x": 1})
        assert a == b
        assert len(a) == 12
