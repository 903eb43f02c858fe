import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.stats import special_ortho_group

from onebit.empirical import (FitConfig, bias_norm, correlation, fit, generate_instance,
                              load_instance, objective, run_replicates, save_instance,
                              separating_direction, subgradient_gap)
from onebit.errors import DomainError
from onebit.losses import make_loss

from oracles import brute_force_polyhedral, ls_correlation


class TestInstance:
    def test_noiseless_labels(self):
        inst = generate_instance(4, 2.0, 0.0, seed=7)
        assert inst.m == 8
        np.testing.assert_array_equal(inst.y, np.sign(inst.A[:, 0]))
        assert_allclose(inst.x0, [1, 0, 0, 0])

    def test_flip_rate(self):
        inst = generate_instance(128, 4.0, 0.25, seed=1)
        assert abs(inst.flip_rate() - 0.25) <= 4 * math.sqrt(0.25 * 0.75 / inst.m)
        assert set(np.unique(inst.y)) <= {-1.0, 1.0}

    def test_information_free_labels(self):
        inst = generate_instance(200, 5.0, 0.5, seed=3)
        assert abs(np.mean(inst.y * np.sign(inst.A[:, 0]))) < 4 / math.sqrt(inst.m)

    def test_gaussian_entries(self):
        A = generate_instance(100, 10.0, 0.1, seed=2).A
        assert abs(A.mean()) < 4 / math.sqrt(A.size)
        assert abs(A.var() - 1) < 4 * math.sqrt(2 / A.size)

    def test_deterministic(self):
        a = generate_instance(16, 3.0, 0.2, seed=42)
        b = generate_instance(16, 3.0, 0.2, seed=42)
        np.testing.assert_array_equal(a.A, b.A)
        np.testing.assert_array_equal(a.y, b.y)
        assert not np.array_equal(a.A, generate_instance(16, 3.0, 0.2, seed=43).A)

    def test_link_labels(self):
        inst = generate_instance(8, 50.0, seed=5, link=lambda t: 1.0 / (1.0 + np.exp(-4.0 * t)))
        assert math.isnan(inst.epsilon)
        agree = np.mean(inst.y == np.sign(inst.A[:, 0]))
        assert 0.6 < agree < 1.0

    def test_bad_parameters(self):
        with pytest.raises(DomainError):
            generate_instance(1, 2.0)
        with pytest.raises(DomainError):
            generate_instance(4, 0.0)
        with pytest.raises(DomainError):
            generate_instance(4, 2.0, 0.7)

    @pytest.mark.parametrize("fmt", ["csv", "binary"])
    def test_io_round_trip(self, tmp_path, fmt):
        inst = generate_instance(5, 2.4, 0.1, seed=11)
        path = tmp_path / f"inst.{fmt}"
        save_instance(inst, path, fmt=fmt)
        back = load_instance(path)
        np.testing.assert_array_equal(back.A, inst.A)
        np.testing.assert_array_equal(back.y, inst.y)
        assert (back.n, back.m, back.epsilon, back.seed) == (5, 12, 0.1, 11)


class TestFit:
    def test_least_squares_matches_lstsq(self):
        inst = generate_instance(64, 4.0, 0.1, seed=0)
        res = fit(inst, "ls")
        direct, *_ = np.linalg.lstsq(inst.A, inst.y, rcond=None)
        assert res.converged and res.solver == "agd"
        assert_allclose(res.x_hat, direct, rtol=1e-6, atol=1e-8)

    def test_ridge_least_squares(self):
        inst = generate_instance(20, 3.0, 0.0, seed=4)
        r = 0.3
        res = fit(inst, "ls", r=r)
        m = inst.m
        direct = np.linalg.solve(inst.A.T @ inst.A / m + r * np.eye(inst.n), inst.A.T @ inst.y / m)
        assert_allclose(res.x_hat, direct, rtol=1e-6)

    def test_noiseless_hinge_is_separable(self):
        inst = generate_instance(32, 6.0, 0.0, seed=3)
        res = fit(inst, "hinge")
        assert res.status == "unbounded_separable"
        assert np.min(inst.B @ res.witness) >= 1 - 1e-9

    def test_separating_iterate_without_lp_check(self):
        inst = generate_instance(8, 3.0, 0.0, seed=1)
        res = fit(inst, "logistic", cfg=FitConfig(separability_check=False, blowup=50.0))
        assert res.status == "unbounded_separable"
        assert res.witness is not None and np.min(inst.B @ res.witness) > 0

    def test_no_witness_for_noisy_overdetermined(self):
        inst = generate_instance(8, 20.0, 0.3, seed=0)
        assert separating_direction(inst.B) is None

    def test_tiny_lad_instance_beats_reference_points(self):
        inst = generate_instance(2, 2.0, 0.1, seed=9)
        loss = make_loss("lad")
        res = fit(inst, loss)
        f = res.objective
        assert f <= objective(inst, loss, inst.x0) + 1e-12
        assert f <= objective(inst, loss, np.zeros(2)) + 1e-12

    @pytest.mark.parametrize("name", ["lad", "hinge"])
    @pytest.mark.parametrize("seed", range(6))
    def test_brute_force_equivalence(self, name, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 4))
        eps = 0.0 if name == "lad" else 0.35
        # draw until the hinge data are not separable, so a minimiser exists
        for s in range(1000 * seed, 1000 * seed + 50):
            inst = generate_instance(n, 12 / n, eps, seed=s)
            if name == "lad" or separating_direction(inst.B) is None:
                break
        loss = make_loss(name)
        best, _ = brute_force_polyhedral(inst.B, loss.value)
        res = fit(inst, loss)
        assert res.converged
        assert abs(res.objective - best) <= 1e-4

    @pytest.mark.parametrize("name", ["lad", "hinge"])
    def test_nonsmooth_optimality_certificate(self, name):
        inst = generate_instance(32, 8.0, 0.1, seed=2)
        loss = make_loss(name)
        res = fit(inst, loss)
        assert res.converged
        assert res.optimality < 1e-8 * (1 + np.linalg.norm(res.x_hat))
        kink = loss.minimizer
        assert subgradient_gap(inst.B, loss, res.x_hat, kink, atol=1e-9) == pytest.approx(res.optimality)

    @pytest.mark.parametrize("name", ["ls", "logistic", "exponential"])
    def test_smooth_objective_is_monotone(self, name):
        inst = generate_instance(24, 6.0, 0.2, seed=8)
        res = fit(inst, name, r=0.01, cfg=FitConfig(record_history=True))
        h = np.asarray(res.history)
        assert res.converged and len(h) > 2
        assert np.all(np.diff(h) <= 1e-12)

    def test_ridge_hinge(self):
        inst = generate_instance(16, 2.0, 0.0, seed=6)
        res = fit(inst, "hinge", r=0.05)
        assert res.converged
        # a bounded ridge solution beats nearby perturbations
        rng = np.random.default_rng(0)
        loss = make_loss("hinge")
        for d in rng.normal(size=(20, inst.n)):
            assert res.objective <= objective(inst, loss, res.x_hat + 1e-3 * d, 0.05) + 1e-9

    @pytest.mark.parametrize("name", ["ls", "hinge"])
    def test_rotation_invariance(self, name):
        Q = special_ortho_group.rvs(16, random_state=0)
        a, b = [], []
        for seed in range(25):
            inst = generate_instance(16, 6.0, 0.1, seed=seed)
            ra, rb = fit(inst, name), fit(inst.rotated(Q), name)
            if ra.converged and rb.converged:
                a.append(correlation(ra.x_hat, inst.x0))
                b.append(correlation(rb.x_hat, Q @ inst.x0))
        assert len(a) >= 20
        assert_allclose(a, b, atol=1e-6)

    def test_rejects_negative_ridge(self):
        with pytest.raises(DomainError):
            fit(generate_instance(4, 2.0), "ls", r=-1.0)


class TestMetrics:
    def test_correlation_examples(self):
        x0 = np.array([1.0, 0.0, 0.0])
        assert correlation(x0, x0) == 1.0
        assert correlation(np.array([0.0, 2.0, 0.0]), x0) == 0.0
        assert correlation(-3 * x0, x0) == 1.0
        assert correlation(np.zeros(3), x0, return_flag=True) == (0.0, True)

    def test_bias_norm_examples(self):
        x0 = np.array([0.0, 2.0])
        assert bias_norm(0.7 * x0 / 2, x0, 0.7) == 0.0
        assert bias_norm(np.zeros(2), np.array([1.0, 0.0]), 1.0) == 1.0
        with pytest.raises(DomainError):
            bias_norm(np.ones(2), np.zeros(2), 1.0)


class TestReplicates:
    def test_least_squares_matches_theory(self):
        s = run_replicates("ls", 128, 4.0, 0.0, trials=25, base_seed=0)
        assert abs(s.corr_mean - 0.91630) <= 0.02
        assert s.seeds == list(range(25))

    def test_hinge_below_threshold_is_mostly_separable(self):
        s = run_replicates("hinge", 128, 2.0, 0.1, trials=9, base_seed=100)
        assert s.unbounded_count > s.trials / 2
        assert s.status_counts["unbounded_separable"] == s.unbounded_count

    def test_single_trial(self):
        s = run_replicates("ls", 32, 3.0, 0.1, trials=1, base_seed=5)
        assert s.corr_std == 0.0 and not s.std_available

    def test_deterministic_and_worker_independent(self):
        a = run_replicates("lad", 32, 4.0, 0.1, trials=4, base_seed=7)
        b = run_replicates("lad", 32, 4.0, 0.1, trials=4, base_seed=7, workers=2)
        assert a.correlations == b.correlations
        assert a.bias_norms == b.bias_norms

    def test_error_shrinks_with_dimension(self):
        theory = ls_correlation(4.0)
        errs = [np.mean(np.abs(np.array(run_replicates("ls", n, 4.0, trials=25, base_seed=1).correlations)
                               - theory)) for n in (64, 128, 256)]
        assert errs[0] > errs[1] > errs[2]

    def test_rejects_zero_trials(self):
        with pytest.raises(DomainError):
            run_replicates("ls", 8, 2.0, trials=0)
