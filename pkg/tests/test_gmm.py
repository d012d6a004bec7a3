import numpy as np
import pytest
from scipy.stats import multivariate_normal

from oodkit.core import FeatureMatrix, LabelVector
from oodkit.errors import ConfigError, SingularModelError
from oodkit.gmm import EmConfig, GaussianMixture, fit_em


def _two_blob_data(n_per=150, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n_per, 2)) * 0.5 + np.array([4.0, 0.0])
    b = rng.standard_normal((n_per, 2)) * 0.8 + np.array([-4.0, 1.0])
    x = np.concatenate([a, b])
    y = np.repeat([0, 1], n_per)
    perm = rng.permutation(2 * n_per)
    return FeatureMatrix(x[perm]), LabelVector(y[perm], k=2)


class TestConfig:
    def test_validation(self):
        with pytest.raises(ConfigError):
            EmConfig(max_iter=0)
        with pytest.raises(ConfigError):
            EmConfig(rel_tol=0.0)
        with pytest.raises(ConfigError):
            EmConfig(reg=-1.0)
        with pytest.raises(ConfigError):
            EmConfig(init="random")


class TestGaussianMixtureModel:
    def test_log_density_matches_scipy(self):
        rng = np.random.default_rng(1)
        means = rng.standard_normal((2, 3))
        a = rng.standard_normal((2, 3, 3))
        covs = a @ a.transpose(0, 2, 1) + np.eye(3)
        gmm = GaussianMixture([0.3, 0.7], means, covs)
        z = rng.standard_normal(3)
        expected = np.log(
            0.3 * multivariate_normal(means[0], covs[0]).pdf(z)
            + 0.7 * multivariate_normal(means[1], covs[1]).pdf(z))
        assert gmm.log_density(z) == pytest.approx(expected, rel=1e-10)

    def test_mahalanobis_matches_explicit_inverse(self):
        rng = np.random.default_rng(2)
        a = rng.standard_normal((1, 2, 2))
        cov = a @ a.transpose(0, 2, 1) + np.eye(2)
        mean = np.array([[1.0, -2.0]])
        gmm = GaussianMixture([1.0], mean, cov)
        z = rng.standard_normal((5, 2))
        d = z - mean[0]
        expected = np.einsum("ni,ij,nj->n", d, np.linalg.inv(cov[0]), d)
        np.testing.assert_allclose(gmm.mahalanobis_sq(z)[:, 0], expected, rtol=1e-10)

    def test_spherical_radial_monotonicity(self):
        gmm = GaussianMixture([0.5, 0.5], [[3.0, 0.0], [-3.0, 0.0]],
                              [np.eye(2), np.eye(2)])
        radii = [0.0, 1.0, 3.0, 8.0, 20.0]
        scores = [-gmm.log_density(np.array([0.0, r])) for r in radii]
        assert np.all(np.diff(scores) > 0)

    def test_weight_validation(self):
        with pytest.raises(ConfigError):
            GaussianMixture([0.5, 0.6], np.zeros((2, 1)), np.ones((2, 1, 1)))
        with pytest.raises(ConfigError):
            GaussianMixture([1.2, -0.2], np.zeros((2, 1)), np.ones((2, 1, 1)))

    def test_not_positive_definite_rejected(self):
        with pytest.raises(SingularModelError):
            GaussianMixture([1.0], [[0.0, 0.0]],
                            [np.array([[1.0, 2.0], [2.0, 1.0]])])

    def test_asymmetric_rejected(self):
        with pytest.raises(SingularModelError):
            GaussianMixture([1.0], [[0.0, 0.0]],
                            [np.array([[1.0, 0.5], [0.0, 1.0]])])

    def test_json_roundtrip_exact(self, tmp_path):
        rng = np.random.default_rng(3)
        a = rng.standard_normal((2, 2, 2))
        covs = a @ a.transpose(0, 2, 1) + np.eye(2)
        gmm = GaussianMixture([0.4, 0.6], rng.standard_normal((2, 2)), covs,
                              reg=1e-5, log_transform=False)
        p = tmp_path / "gmm.json"
        gmm.save(p)
        gmm2 = GaussianMixture.load(p)
        np.testing.assert_array_equal(gmm2.weights, gmm.weights)
        np.testing.assert_array_equal(gmm2.means, gmm.means)
        np.testing.assert_array_equal(gmm2.covariances, gmm.covariances)
        assert gmm2.reg == gmm.reg

    def test_unknown_version_rejected(self):
        with pytest.raises(ConfigError):
            GaussianMixture.from_dict({"format_version": 99})


class TestFitEm:
    def test_recovers_separated_blobs(self):
        fm, lv = _two_blob_data()
        gmm = fit_em(fm, labels=lv)
        assert gmm.k_components == 2
        order = np.argsort(gmm.means[:, 0])
        np.testing.assert_allclose(gmm.means[order[1]], [4.0, 0.0], atol=0.2)
        np.testing.assert_allclose(gmm.means[order[0]], [-4.0, 1.0], atol=0.2)
        np.testing.assert_allclose(gmm.weights, [0.5, 0.5], atol=0.05)

    def test_loglikelihood_monotone(self):
        fm, lv = _two_blob_data(seed=4)
        _, history = fit_em(fm, labels=lv, return_history=True)
        assert len(history) >= 2
        assert np.all(np.diff(history) > -1e-9)

    def test_monotone_over_random_datasets(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            n, h, k = int(rng.integers(40, 90)), 2, int(rng.integers(1, 4))
            x = rng.standard_normal((n, h)) + rng.integers(-3, 4, size=(n, h))
            cfg = EmConfig(seed=int(rng.integers(1000)), init="kmeans_pp",
                           max_iter=40)
            _, history = fit_em(FeatureMatrix(x), k_components=k, cfg=cfg,
                                return_history=True)
            assert np.all(np.diff(history) > -1e-9)

    def test_deterministic_for_seed(self):
        fm, _ = _two_blob_data(seed=6)
        cfg = EmConfig(seed=9, init="kmeans_pp")
        g1 = fit_em(fm, k_components=2, cfg=cfg)
        g2 = fit_em(fm, k_components=2, cfg=cfg)
        np.testing.assert_array_equal(g1.means, g2.means)
        np.testing.assert_array_equal(g1.covariances, g2.covariances)
        np.testing.assert_array_equal(g1.weights, g2.weights)

    def test_label_init_used_when_components_match(self):
        fm, lv = _two_blob_data(seed=7)
        gmm = fit_em(fm, labels=lv, cfg=EmConfig(max_iter=1))
        # single E-step from label moment-matching: means already near blobs
        assert abs(gmm.means[:, 0]).max() > 3.0

    def test_defaults_components_to_label_count(self):
        fm, lv = _two_blob_data(seed=8)
        assert fit_em(fm, labels=lv).k_components == lv.k

    def test_regularization_keeps_degenerate_data_fittable(self):
        x = np.zeros((30, 2))
        x[:, 0] = np.arange(30)  # second coordinate constant
        gmm = fit_em(FeatureMatrix(x), k_components=1, cfg=EmConfig(reg=1e-5))
        assert gmm.covariances[0, 1, 1] == pytest.approx(1e-5)

    def test_duplicate_points_without_reg_fails(self):
        x = np.ones((20, 2))
        with pytest.raises(SingularModelError):
            fit_em(FeatureMatrix(x), k_components=1, cfg=EmConfig(reg=0.0))

    def test_few_samples_warns(self):
        rng = np.random.default_rng(10)
        fm = FeatureMatrix(rng.standard_normal((5, 3)))
        with pytest.warns(UserWarning):
            fit_em(fm, k_components=2, cfg=EmConfig(init="kmeans_pp"))

    def test_log_transform_requires_positive(self):
        fm = FeatureMatrix(np.array([[1.0, -1.0]]))
        with pytest.raises(ConfigError):
            fit_em(fm, k_components=1, cfg=EmConfig(log_transform=True))

    def test_log_transform_fits_in_log_space(self):
        rng = np.random.default_rng(11)
        x = np.exp(rng.standard_normal((200, 2)) * 0.3 + 1.0)
        gmm = fit_em(FeatureMatrix(x), k_components=1,
                     cfg=EmConfig(log_transform=True, reg=1e-3))
        np.testing.assert_allclose(gmm.means[0], [1.0, 1.0], atol=0.1)
        # density is evaluated through the same transform
        assert np.isfinite(gmm.log_density(np.array([2.0, 2.0])))

    def test_log_transform_gradient_chain_rule(self):
        rng = np.random.default_rng(12)
        x = np.exp(rng.standard_normal((200, 2)) * 0.3)
        gmm = fit_em(FeatureMatrix(x), k_components=1,
                     cfg=EmConfig(log_transform=True, reg=1e-3))
        z = np.array([1.5, 0.7])
        g = gmm.neg_log_density_grad(z)
        eps = 1e-6
        for i in range(2):
            zp, zm = z.copy(), z.copy()
            zp[i] += eps
            zm[i] -= eps
            fd = (-gmm.log_density(zp) + gmm.log_density(zm)) / (2 * eps)
            assert g[i] == pytest.approx(fd, rel=1e-5, abs=1e-8)
