import math

import numpy as np
import pytest
import scipy.sparse as sp

from ecqsgd.problems import (
    Dataset,
    QuadraticProblem,
    Task,
    gen_classification,
    gen_quadratic,
    gen_regression,
    gradient,
    load_libsvm,
    loss,
    make_shards,
    optimum,
    save_libsvm,
)


class TestQuadraticHandCase:
    def test_identity_halves(self):
        # two samples of A_i = I/2 and b_i = [-1/2, 0] aggregate to A = I,
        # b = [-1, 0], optimum [1, 0]
        prob = QuadraticProblem.from_samples(
            [np.eye(2) / 2, np.eye(2) / 2],
            [np.array([-0.5, 0.0]), np.array([-0.5, 0.0])],
            p_workers=2,
        )
        np.testing.assert_allclose(prob.A, np.eye(2))
        np.testing.assert_allclose(prob.b, [-1.0, 0.0])
        np.testing.assert_allclose(prob.w_star, [1.0, 0.0])
        assert prob.a1 == pytest.approx(1.0)
        assert prob.a2 == pytest.approx(1.0)

    def test_loss_at_optimum_closed_form(self):
        prob = gen_quadratic(d=8, n=64, p_workers=2, seed=0, conditioning=(1.0, 5.0))
        expected = -0.5 * prob.b @ np.linalg.solve(prob.A, prob.b)
        assert loss(prob.w_star, prob) == pytest.approx(expected, rel=1e-10)

    def test_non_psd_sample_rejected(self):
        with pytest.raises(ValueError, match="positive semidefinite"):
            QuadraticProblem.from_samples([np.diag([1.0, -1.0])], [np.zeros(2)])


class TestGenQuadratic:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_optimality_residual(self, seed):
        prob = gen_quadratic(d=32, n=256, p_workers=4, seed=seed)
        residual = np.linalg.norm(prob.A @ prob.w_star + prob.b)
        assert residual <= 1e-8 * np.linalg.norm(prob.b)

    def test_spectrum_within_conditioning(self):
        prob = gen_quadratic(d=64, n=512, p_workers=1, seed=3, conditioning=(2.0, 40.0))
        eigs = np.linalg.eigvalsh(prob.A)
        assert eigs[0] >= 2.0 * 0.95
        assert eigs[-1] <= 40.0 * 1.05
        assert prob.a1 == pytest.approx(eigs[0])
        assert prob.a2 == pytest.approx(eigs[-1])

    def test_aggregates_match_sample_sums(self):
        prob = gen_quadratic(d=16, n=128, p_workers=2, seed=5)
        a_sum = np.einsum("ndk,nek->de", prob.factors, prob.factors)
        a_sum += prob.ridges.sum() * np.eye(16)
        np.testing.assert_allclose(a_sum, prob.A, rtol=1e-10)
        np.testing.assert_allclose(prob.b_samples.sum(axis=0), prob.b, rtol=1e-10)

    def test_hessian_psd(self):
        prob = gen_quadratic(d=24, n=200, p_workers=1, seed=9)
        assert np.linalg.eigvalsh(prob.A)[0] > 0

    def test_full_batch_gradient_exact(self):
        prob = gen_quadratic(d=16, n=100, p_workers=1, seed=2)
        w = np.random.default_rng(0).normal(size=16)
        full = gradient(w, np.arange(100), prob)
        np.testing.assert_allclose(full, prob.A @ w + prob.b, rtol=1e-10)

    def test_epoch_mean_equals_full_gradient(self):
        prob = gen_quadratic(d=8, n=60, p_workers=3, seed=7)
        w = np.random.default_rng(1).normal(size=8)
        per_sample = np.stack(
            [gradient(w, np.array([i]), prob) for i in range(60)]
        )
        np.testing.assert_allclose(
            per_sample.mean(axis=0), prob.full_gradient(w), rtol=1e-10
        )


class TestShards:
    def test_balance(self):
        for n, p in [(10, 3), (100, 7), (5, 5), (8, 1)]:
            sizes = [len(s) for s in make_shards(n, p)]
            assert max(sizes) - min(sizes) <= 1
            assert sum(sizes) == n

    def test_rejects_bad_p(self):
        with pytest.raises(ValueError):
            make_shards(3, 4)
        with pytest.raises(ValueError):
            make_shards(3, 0)


class TestRegression:
    def test_noiseless_identifiable(self):
        ds, w_true = gen_regression(d=4, n=100, noise_sigma=0.0, seed=0)
        w_hat = optimum(ds)
        np.testing.assert_allclose(w_hat, w_true, atol=1e-8)
        assert loss(w_hat, ds) == pytest.approx(0.0, abs=1e-16)

    def test_sample_counts(self):
        ds, _ = gen_regression(d=256, n=10_000, noise_sigma=0.5, seed=1, p_workers=4)
        assert ds.n_samples == 10_000
        assert ds.dim == 256
        assert len(ds.shards) == 4

    def test_residual_variance_matches_noise(self):
        ds, w_true = gen_regression(d=8, n=100_000, noise_sigma=0.3, seed=2)
        resid = ds.features @ w_true - ds.targets
        assert np.var(resid) == pytest.approx(0.09, rel=0.1)

    def test_gradient_zero_at_noiseless_optimum(self):
        ds, w_true = gen_regression(d=6, n=64, noise_sigma=0.0, seed=3)
        g = gradient(w_true, np.arange(64), ds)
        np.testing.assert_allclose(g, np.zeros(6), atol=1e-12)

    def test_gradient_optimality_residual(self):
        ds, _ = gen_regression(d=12, n=500, noise_sigma=0.4, seed=4)
        w_hat = optimum(ds)
        g = ds.full_gradient(w_hat)
        assert np.linalg.norm(g) <= 1e-6

    def test_batch_mean_matches_full(self):
        ds, _ = gen_regression(d=5, n=40, noise_sigma=0.2, seed=5)
        w = np.random.default_rng(2).normal(size=5)
        per_sample = np.stack([ds.batch_gradient(w, np.array([i])) for i in range(40)])
        np.testing.assert_allclose(per_sample.mean(axis=0), ds.full_gradient(w), rtol=1e-10)


class TestLogistic:
    def test_loss_at_zero_balanced(self):
        x = np.random.default_rng(0).normal(size=(10, 3))
        y = np.array([0.0, 1.0] * 5)
        ds = Dataset(features=x, targets=y, task=Task.LOG_LOSS, shards=make_shards(10, 1))
        assert loss(np.zeros(3), ds) == pytest.approx(math.log(2.0))

    def test_reference_matches_long_sgd(self):
        # two independent solvers agree on a small non-separable problem
        gen = np.random.default_rng(6)
        x = gen.normal(size=(200, 5))
        z = x @ np.array([1.0, -0.5, 0.2, 0.0, 0.3])
        y = (gen.random(200) < 1.0 / (1.0 + np.exp(-z))).astype(float)
        ds = Dataset(features=x, targets=y, task=Task.LOG_LOSS, shards=make_shards(200, 1))
        w_ref = optimum(ds, gd_iterations=100_000)
        loss_ref = loss(w_ref, ds)

        rng = np.random.default_rng(7)
        w = np.zeros(5)
        for t in range(200_000):
            idx = rng.integers(0, 200, size=8)
            w = w - 0.5 / (1.0 + t / 1000.0) * ds.batch_gradient(w, idx)
        assert loss(w, ds) == pytest.approx(loss_ref, abs=1e-4)

    def test_gradient_at_reference_near_zero(self):
        gen = np.random.default_rng(8)
        x = gen.normal(size=(150, 4))
        y = (gen.random(150) < 0.5).astype(float)
        ds = Dataset(features=x, targets=y, task=Task.LOG_LOSS, shards=make_shards(150, 1))
        w_ref = optimum(ds, gd_iterations=50_000)
        assert np.linalg.norm(ds.full_gradient(w_ref)) < 1e-6


class TestClassificationGenerator:
    def test_shapes_and_labels(self):
        ds, _ = gen_classification(d=200, n=300, seed=0, n_test=50, p_workers=2)
        assert ds.dim == 200
        assert ds.n_samples == 300
        assert ds.test_features.shape == (50, 200)
        assert set(np.unique(ds.targets)) <= {0.0, 1.0}
        # both classes present and roughly balanced
        assert 0.2 < ds.targets.mean() < 0.8

    def test_deterministic(self):
        a, _ = gen_classification(d=50, n=100, seed=3)
        b, _ = gen_classification(d=50, n=100, seed=3)
        assert (a.features != b.features).nnz == 0
        np.testing.assert_array_equal(a.targets, b.targets)


class TestLibsvm:
    def test_single_feature_parse(self, tmp_path):
        path = tmp_path / "tiny.svm"
        path.write_text("1 3:0.5\n")
        ds = load_libsvm(path, n_features=4)
        assert ds.task is Task.LOG_LOSS
        np.testing.assert_array_equal(ds.features.toarray(), [[0, 0, 0.5, 0]])
        np.testing.assert_array_equal(ds.targets, [1.0])

    def test_negative_label_mapping(self, tmp_path):
        path = tmp_path / "pair.svm"
        path.write_text("-1 1:2.0\n+1 2:1.0\n")
        ds = load_libsvm(path)
        np.testing.assert_array_equal(ds.targets, [0.0, 1.0])

    def test_regression_labels_passthrough(self, tmp_path):
        path = tmp_path / "reg.svm"
        path.write_text("3.25 1:1.0\n-7.5 2:0.25\n")
        ds = load_libsvm(path)
        assert ds.task is Task.SQUARED_LOSS
        np.testing.assert_array_equal(ds.targets, [3.25, -7.5])

    def test_malformed_line_reports_number(self, tmp_path):
        path = tmp_path / "bad.svm"
        path.write_text("1 1:0.5\n1 oops\n")
        with pytest.raises(ValueError, match=r"bad\.svm:2"):
            load_libsvm(path)

    def test_non_monotone_indices_tolerated(self, tmp_path):
        path = tmp_path / "swap.svm"
        path.write_text("1 3:1.0 1:2.0\n")
        ds = load_libsvm(path)
        np.testing.assert_array_equal(ds.features.toarray(), [[2.0, 0.0, 1.0]])

    def test_write_load_roundtrip_exact(self, tmp_path):
        ds, _ = gen_classification(d=40, n=60, seed=1)
        path = tmp_path / "rt.svm"
        save_libsvm(ds, path)
        back = load_libsvm(path, n_features=40)
        assert (sp.csr_matrix(ds.features) != back.features).nnz == 0
        np.testing.assert_array_equal(ds.targets, back.targets)

    def test_regression_roundtrip_exact(self, tmp_path):
        ds, _ = gen_regression(d=6, n=20, noise_sigma=0.7, seed=9)
        path = tmp_path / "reg_rt.svm"
        save_libsvm(ds, path)
        back = load_libsvm(path, n_features=6)
        np.testing.assert_array_equal(np.asarray(back.features.toarray()), ds.features)
        np.testing.assert_array_equal(back.targets, ds.targets)

    def test_cache_roundtrip(self, tmp_path):
        ds, _ = gen_classification(d=30, n=40, seed=2)
        path = tmp_path / "cached.svm"
        save_libsvm(ds, path)
        first = load_libsvm(path, cache=True)
        assert (tmp_path / "cached.svm.npz").exists()
        second = load_libsvm(path, cache=True)
        assert (first.features != second.features).nnz == 0
        np.testing.assert_array_equal(first.targets, second.targets)
