"""Tests for the benchmark objectives, the MISO reformulation pipeline,
dataset generation, and the reference oracles."""

import math

import numpy as np
import pytest

from hopolar import bench, geometry as geo

UNIT_SQUARE = geo.HalfspaceIntersection(
    A=np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]),
    b=np.ones(4))


def random_miso(seed, users=2, antennas=3):
    rng = np.random.default_rng(seed)
    h = rng.standard_normal((users, antennas)) \
        + 1j * rng.standard_normal((users, antennas))
    alphas = rng.uniform(0.2, 1.0, size=users)
    alphas /= alphas.sum()
    deltas = rng.uniform(0.0, 1.0 / 3.0, size=users)
    return bench.MisoRaw(h, alphas, deltas)


class TestObjectives:
    def test_sinusoidal_at_zero(self):
        assert bench.sinusoidal_qp(np.eye(2), np.ones(2), 1.0,
                                   np.zeros(2)) == 0.0

    def test_sinusoidal_hand_value(self):
        # 1/2 y^T y + sum sin(pi/2 * y) at y = (1, 1): 1 + 2 = 3
        val = bench.sinusoidal_qp(np.eye(2), np.ones(2), math.pi / 2,
                                  np.ones(2))
        assert val == pytest.approx(3.0, rel=1e-12)

    def test_sinusoidal_zero_coeffs_is_quadratic(self):
        rng = np.random.default_rng(1)
        Q = rng.standard_normal((2, 2))
        Q = Q.T @ Q
        y = rng.standard_normal(2)
        assert bench.sinusoidal_qp(Q, np.zeros(2), 3.0, y) == \
            pytest.approx(0.5 * y @ Q @ y, rel=1e-12)

    def test_qp_values(self):
        assert bench.qp_objective(np.eye(2), np.zeros(2), np.zeros(2)) == 0.0
        assert bench.qp_objective(np.eye(2), np.array([-1.0, 0.0]),
                                  np.array([1.0, 0.0])) == pytest.approx(-0.5)

    def test_qp_gradient(self):
        from hopolar.autodiff import gradcheck
        rng = np.random.default_rng(2)
        Q = bench._psd_matrix(rng, 3)
        p = rng.standard_normal(3)
        err = gradcheck(lambda y: bench.qp_objective(Q, p, y),
                        rng.standard_normal(3))
        assert err <= 1e-6


class TestSinrAndWsr:
    def test_single_user_closed_form(self):
        # matched beamformer w = sqrt(P) h / ||h||: SINR = ||h||^2 P / sigma^2
        h = np.array([[0.6 + 0.0j, 0.0 + 0.8j]])  # ||h|| = 1
        raw = bench.MisoRaw(h, np.array([1.0]), np.array([0.1]), sigma2=0.01)
        w = h[0] / np.linalg.norm(h[0])
        wbar = bench.splice_beamformer(w[None, :])
        sinr, wsr = bench.sinr_and_wsr(raw, wbar)
        assert sinr[0] == pytest.approx(100.0, rel=1e-10)
        assert wsr == pytest.approx(math.log2(101.0), rel=1e-10)

    def test_zero_beamformer(self):
        raw = random_miso(3)
        sinr, wsr = bench.sinr_and_wsr(raw, np.zeros(2 * 3 * 2))
        np.testing.assert_array_equal(sinr, 0.0)
        assert wsr == 0.0

    def test_splice_matches_complex_arithmetic(self):
        rng = np.random.default_rng(4)
        for trial in range(20):
            raw = random_miso(100 + trial, users=2, antennas=1)
            w = rng.standard_normal((2, 1)) + 1j * rng.standard_normal((2, 1))
            wbar = bench.splice_beamformer(w)
            sinr, wsr = bench.sinr_and_wsr(raw, wbar)
            # independent complex-number computation
            sig = np.array([abs(np.vdot(raw.h[k], w[k])) ** 2
                            for k in range(2)])
            interf = np.array([sum(abs(np.vdot(raw.h[k], w[j])) ** 2
                                   for j in range(2) if j != k) + raw.sigma2
                               for k in range(2)])
            np.testing.assert_allclose(sinr, sig / interf, rtol=1e-10)
            assert wsr == pytest.approx(
                float(np.sum(raw.alphas * np.log2(1.0 + sig / interf))),
                rel=1e-9)


class TestReformulation:
    def test_omega_for_unit_rate(self):
        h = np.ones((1, 1)) + 0j
        raw = bench.MisoRaw(h, np.array([1.0]), np.array([1.0]))
        cs, _ = bench.miso_reformulate(raw)
        # omega = 2^1 - 1 = 1, threshold = omega * sigma^2
        assert cs.geq_forms[0][1] == pytest.approx(1.0 * raw.sigma2)

    def test_power_budget_conversion(self):
        raw = random_miso(5)
        cs, _ = bench.miso_reformulate(raw)
        p_lin = 10.0 ** 3.3 - 10.0 ** 3.0
        assert cs.leq_forms[0][1] == pytest.approx(p_lin, rel=1e-12)
        assert p_lin == pytest.approx(995.26, abs=0.01)

    def test_nonpositive_budget_rejected(self):
        rng = np.random.default_rng(0)
        h = rng.standard_normal((1, 2)) + 1j * rng.standard_normal((1, 2))
        raw = bench.MisoRaw(h, np.array([1.0]), np.array([0.1]),
                            p_max_dbm=30.0, p_c_dbm=30.0)
        with pytest.raises(ValueError):
            bench.miso_reformulate(raw)

    def test_qos_slack_equivalent_to_sinr_threshold(self):
        raw = random_miso(6, users=3, antennas=2)
        cs, _ = bench.miso_reformulate(raw)
        omegas = 2.0 ** raw.deltas - 1.0
        rng = np.random.default_rng(7)
        for _ in range(100):
            wbar = rng.standard_normal(2 * 2 * 3) * rng.uniform(0.1, 10.0)
            sinr, _ = bench.sinr_and_wsr(raw, wbar)
            for k, (H, c) in enumerate(cs.geq_forms):
                slack = wbar @ H @ wbar - c
                # slack >= 0 iff SINR_k >= omega_k, up to rounding
                if abs(sinr[k] - omegas[k]) > 1e-9:
                    assert (slack >= 0) == (sinr[k] >= omegas[k])

    def test_wsr_from_forms_matches_complex(self):
        raw = random_miso(8, users=3, antennas=4)
        cs, obj = bench.miso_reformulate(raw)
        rng = np.random.default_rng(9)
        for _ in range(20):
            wbar = rng.standard_normal(2 * 4 * 3)
            _, wsr = bench.sinr_and_wsr(raw, wbar)
            assert float(bench.wsr_objective(obj, wbar)) == \
                pytest.approx(wsr, rel=1e-9)

    def test_alpha_validation(self):
        h = np.ones((2, 1)) + 0j
        with pytest.raises(ValueError):
            bench.MisoRaw(h, np.array([0.7, 0.7]), np.array([0.1, 0.1]))


class TestInteriorPoint:
    def test_returned_point_strictly_feasible(self):
        for seed in range(5):
            raw = random_miso(50 + seed, users=3, antennas=4)
            cs, _ = bench.miso_reformulate(raw)
            y0 = bench.miso_interior_point(cs, raw, seed=seed)
            if y0 is None:
                continue
            assert geo.contains(cs, y0, tol=0.0)
            assert geo.constraint_values(cs, y0).max() < 0.0

    def test_rejection_rate_reasonable(self):
        data, rejections = bench.gen_miso_dataset(40, 3, 4, seed=0)
        assert len(data) == 40
        assert rejections / (40 + rejections) < 0.2


class TestGeneration:
    def test_regular_octagon_center(self):
        A = bench.regular_polygon_directions(8)
        y0, r = geo.chebyshev_center(A, np.ones(8))
        np.testing.assert_allclose(y0, [0.0, 0.0], atol=1e-9)
        assert r == pytest.approx(1.0, abs=1e-9)

    def test_polygon_instances_valid(self):
        data = bench.gen_polygon_dataset(10, seed=3)
        for inst in data:
            assert geo.contains(inst.set, inst.y0, tol=0.0)
            np.testing.assert_array_equal(inst.x, inst.set.b)
            rep = geo.star_convexity_probe(inst.set, inst.y0, 64, 32, seed=0)
            assert rep["violating_ray_count"] == 0

    def test_highdim_origin_feasible(self):
        data = bench.gen_highdim_dataset(5, d=20, seed=1)
        for inst in data:
            assert geo.contains(inst.set, inst.y0, tol=0.0)
            assert inst.objective.beta == 30.0

    def test_lp_instances_probe(self):
        data = bench.gen_lp_dataset(5, seed=2)
        for inst in data:
            rep = geo.star_convexity_probe(inst.set, inst.y0, 64, 32, seed=0)
            assert rep["violating_ray_count"] == 0

    def test_miso_instances_probe(self):
        data, _ = bench.gen_miso_dataset(2, 2, 2, seed=5)
        for inst in data:
            rep = geo.star_convexity_probe(inst.set, inst.y0, 64, 32, seed=0)
            assert rep["violating_ray_count"] == 0

    def test_fixed_seed_byte_identical_files(self, tmp_path):
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        for p in (p1, p2):
            data = bench.gen_polygon_dataset(8, seed=11)
            bench.save_dataset(p, data, {"seed": 11})
        assert p1.read_bytes() == p2.read_bytes()

    def test_dataset_roundtrip(self, tmp_path):
        path = tmp_path / "d.jsonl"
        data = bench.gen_lp_dataset(6, seed=9)
        bench.save_dataset(path, data, {"family": "lp", "seed": 9})
        loaded, meta = bench.load_dataset(path)
        assert meta == {"family": "lp", "seed": 9}
        assert len(loaded) == 6
        for a, b in zip(data, loaded):
            np.testing.assert_array_equal(a.x, b.x)
            np.testing.assert_array_equal(a.y0, b.y0)
            assert a.maximize == b.maximize

    def test_split_fractions(self):
        data = bench.gen_lp_dataset(10, seed=0)
        train, test = bench.split(data)
        assert len(train) == 7
        assert len(test) == 3


class TestOracles:
    def test_grid_oracle_pure_quadratic(self):
        inst = bench.ProblemInstance(
            family="polygon", index=0, x=np.zeros(2),
            objective=bench.SinusoidalQP(np.eye(2), np.zeros(2), 1.0),
            set=UNIT_SQUARE, y0=np.array([0.3, 0.2]))
        y_star, f_star = bench.grid_oracle_2d(inst)
        assert f_star == pytest.approx(0.0, abs=1e-4)
        assert np.linalg.norm(y_star) <= 2e-2

    def test_grid_oracle_boundary_optimum(self):
        # unconstrained minimum (1, 1) clamps to the corner of the unit square
        inst = bench.ProblemInstance(
            family="polygon", index=0, x=np.zeros(2),
            objective=bench.QP(np.eye(2), np.array([-1.0, -1.0])),
            set=UNIT_SQUARE, y0=np.zeros(2))
        _, f_star = bench.grid_oracle_2d(inst)
        f_clamped = bench.qp_objective(np.eye(2), np.array([-1.0, -1.0]),
                                       np.array([1.0, 1.0]))
        assert abs(f_star - f_clamped) <= 1e-3 * abs(f_clamped) + 1e-3

    def test_multistart_zero_steps_sanity(self):
        inst = bench.gen_lp_dataset(1, seed=1)[0]
        y, f = bench.polar_multistart_reference(inst, n_starts=1, steps=0,
                                                seed=0)
        assert geo.contains(inst.set, y, tol=1e-12)
        assert f == pytest.approx(float(bench.loss_value(inst, y)))

    def test_multistart_monotone_in_starts(self):
        inst = bench.gen_lp_dataset(1, seed=2)[0]
        prev = math.inf
        for n_starts in (1, 2, 4):
            _, f = bench.polar_multistart_reference(inst, n_starts=n_starts,
                                                    steps=40, seed=0)
            assert f <= prev + 1e-12
            prev = f

    def test_multistart_agrees_with_grid_on_2d(self):
        data = bench.gen_polygon_dataset(5, seed=13)
        for inst in data:
            _, f_grid = bench.grid_oracle_2d(inst)
            _, f_ms = bench.polar_multistart_reference(inst, seed=0)
            assert abs(f_ms - f_grid) <= 1e-3 * max(1.0, abs(f_grid))

    def test_add_labels(self):
        data = bench.gen_lp_dataset(3, seed=3)
        bench.add_labels(data, lambda i: bench.polar_multistart_reference(
            i, n_starts=2, steps=30, seed=0))
        for inst in data:
            assert inst.label is not None
            assert geo.contains(inst.set, inst.label, tol=1e-12)
