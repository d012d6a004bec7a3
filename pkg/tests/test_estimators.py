import numpy as np
import pytest

from oodkit.core import FeatureMatrix, SoftmaxHead, softmax
from oodkit.errors import ArgmaxTieError, ConfigError
from oodkit.estimators import (
    COOL_TEMPERATURE,
    grad_u_density,
    grad_u_entropy,
    grad_u_max,
    score_batch,
    u_cool,
    u_density,
    u_entropy,
    u_max,
    u_mental,
)
from oodkit.gmm import GaussianMixture
from oodkit.structure import OptimalStructureSpec, gen_counterfactual_head, gen_optimal_head


def _random_head(rng, k=None, h=None):
    k = k or int(rng.integers(2, 6))
    h = h or int(rng.integers(2, 6))
    return SoftmaxHead(w=rng.standard_normal((h, k)), b=rng.standard_normal(k))


class TestPointEstimators:
    def test_u_max_is_negative_max_softmax(self):
        rng = np.random.default_rng(0)
        head = _random_head(rng)
        z = rng.standard_normal(head.h)
        assert u_max(head, z).value == pytest.approx(-softmax(head, z).max())
        assert u_max(head, z).estimator_id == "max"

    def test_uniform_entropy_is_log_k(self):
        head = SoftmaxHead(w=np.zeros((2, 4)) + 1e-300, b=np.zeros(4))
        # zero activation -> uniform softmax
        assert u_entropy(head, np.zeros(2)).value == pytest.approx(np.log(4))

    def test_u_max_at_origin_zero_bias(self):
        head = _random_head(np.random.default_rng(1), k=5)
        head = SoftmaxHead(w=head.w, b=np.zeros(5))
        assert u_max(head, np.zeros(head.h)).value == pytest.approx(-1.0 / 5)

    def test_cool_is_entropy_of_cooled_logits(self):
        rng = np.random.default_rng(2)
        head = _random_head(rng)
        z = 3.0 * rng.standard_normal(head.h)
        ell = COOL_TEMPERATURE * (head.w.T @ z + head.b)
        p = np.exp(ell - ell.max())
        p /= p.sum()
        expected = -(p * np.log(p)).sum()
        assert u_cool(head, z).value == pytest.approx(expected, rel=1e-12)

    def test_cool_bias_scaling_modes_agree_without_bias(self):
        rng = np.random.default_rng(3)
        head = SoftmaxHead(w=rng.standard_normal((3, 4)), b=np.zeros(4))
        z = rng.standard_normal(3)
        assert u_cool(head, z, scale_bias=True).value == pytest.approx(
            u_cool(head, z, scale_bias=False).value)

    def test_cool_raises_entropy_when_confident(self):
        head = SoftmaxHead(w=np.eye(2) * 5.0, b=np.zeros(2))
        z = np.array([3.0, 0.0])
        assert u_cool(head, z).value > u_entropy(head, z).value

    def test_mental_model_closed_form(self):
        # K=3, ||z||=2, max_cos=1: -1 / (1 + 2 exp(-2 * 1.5))
        got = u_mental(3, 2.0, 1.0).value
        assert got == pytest.approx(-1.0 / (1.0 + 2.0 * np.exp(-3.0)))

    def test_mental_model_monotone_in_norm_and_cos(self):
        assert u_mental(3, 5.0, 0.9).value < u_mental(3, 1.0, 0.9).value
        assert u_mental(3, 2.0, 0.9).value < u_mental(3, 2.0, 0.1).value

    def test_mental_model_validation(self):
        with pytest.raises(ConfigError):
            u_mental(1, 1.0, 0.0)
        with pytest.raises(ConfigError):
            u_mental(3, -1.0, 0.0)
        with pytest.raises(ConfigError):
            u_mental(3, 1.0, 1.5)

    def test_u_density_is_negative_log_density(self):
        gmm = GaussianMixture([1.0], [[0.0, 0.0]], [np.eye(2)])
        z = np.array([0.0, 0.0])
        assert u_density(gmm, z).value == pytest.approx(np.log(2 * np.pi))


class TestNormMonotonicity:
    def test_shrinking_norm_never_reduces_uncertainty(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            head = _random_head(rng)
            head = SoftmaxHead(w=head.w, b=np.zeros(head.k))
            z = rng.standard_normal(head.h) * rng.uniform(0.5, 5.0)
            ell = head.w.T @ z
            if np.ptp(ell) < 1e-9:
                continue
            s = rng.uniform(0.01, 0.99)
            assert u_max(head, s * z).value > u_max(head, z).value


class TestCosMonotonicity:
    def test_k2_planar_grid(self):
        head = gen_optimal_head(OptimalStructureSpec(k=2, h=2), seed=0)
        r = 2.0
        w1 = head.w[:, 0] / np.linalg.norm(head.w[:, 0])
        perp = np.array([-w1[1], w1[0]])
        # theta in [0, pi/2): angle from w1; max cos decreases with theta
        thetas = np.linspace(0.0, np.pi / 2 - 1e-3, 500)
        vals = [u_max(head, r * (np.cos(t) * w1 + np.sin(t) * perp)).value
                for t in thetas]
        assert np.all(np.diff(vals) > 0)

    def test_k3_planar_parameterization(self):
        head = gen_optimal_head(OptimalStructureSpec(k=3, h=2), seed=0)
        w1 = head.w[:, 0] / np.linalg.norm(head.w[:, 0])
        perp = np.array([-w1[1], w1[0]])
        thetas = np.linspace(0.0, np.pi / 3, 400)
        vals = [u_max(head, 2.0 * (np.cos(t) * w1 + np.sin(t) * perp)).value
                for t in thetas]
        # rotating away from the nearest weight decreases max cos; u_max rises
        assert np.all(np.diff(vals) > 0)

    def test_large_k_movement_patterns(self):
        k = 100
        head = gen_optimal_head(OptimalStructureSpec(k=k, h=k - 1), seed=0)
        rng = np.random.default_rng(11)
        w = head.w / np.linalg.norm(head.w, axis=0)
        for _ in range(1000):
            i = int(rng.integers(k))
            r = rng.uniform(1.0, 4.0)
            # pattern 1: rotate toward a single weight vector
            j = int(rng.integers(k))
            if j == i:
                continue
            mid = w[:, i] + w[:, j]
            mid /= np.linalg.norm(mid)
            u_between = u_max(head, r * mid).value
            u_at = u_max(head, r * w[:, j]).value
            assert u_at < u_between
            # pattern 2: moving toward the mean of several weights is
            # more uncertain than aligning with any single one
            idx = rng.choice(k, size=5, replace=False)
            mean_dir = w[:, idx].sum(axis=1)
            mean_dir /= np.linalg.norm(mean_dir)
            assert u_max(head, r * w[:, idx[0]]).value < u_max(head, r * mean_dir).value

    def test_sandwich_violates_cos_monotonicity(self):
        head = gen_counterfactual_head("sandwich", k=3, h=2)
        z1 = np.array([1.0, 0.0])
        z2 = np.array([0.9, -0.44])
        from oodkit.core import decompose
        assert decompose(head, z1).cos_theta.max() > decompose(head, z2).cos_theta.max()
        assert u_max(head, z1).value > u_max(head, z2).value


def _central_diff(f, z, eps=1e-6):
    g = np.zeros_like(z)
    for i in range(z.size):
        zp, zm = z.copy(), z.copy()
        zp[i] += eps
        zm[i] -= eps
        g[i] = (f(zp) - f(zm)) / (2 * eps)
    return g


class TestGradients:
    def test_grad_u_max_matches_finite_differences(self):
        rng = np.random.default_rng(21)
        for _ in range(200):
            head = _random_head(rng)
            z = rng.standard_normal(head.h)
            try:
                g = grad_u_max(head, z)
            except ArgmaxTieError:
                continue
            fd = _central_diff(lambda zz: u_max(head, zz).value, z)
            np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-8)

    def test_grad_u_entropy_matches_finite_differences(self):
        rng = np.random.default_rng(22)
        for _ in range(200):
            head = _random_head(rng)
            z = rng.standard_normal(head.h)
            g = grad_u_entropy(head, z)
            fd = _central_diff(lambda zz: u_entropy(head, zz).value, z)
            np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-8)

    def test_grad_u_density_matches_finite_differences(self):
        rng = np.random.default_rng(23)
        for _ in range(50):
            k, h = int(rng.integers(1, 4)), int(rng.integers(2, 5))
            a = rng.standard_normal((k, h, h))
            covs = a @ a.transpose(0, 2, 1) + 0.5 * np.eye(h)
            wts = rng.random(k) + 0.1
            gmm = GaussianMixture(wts / wts.sum(), rng.standard_normal((k, h)), covs)
            z = rng.standard_normal(h)
            g = grad_u_density(gmm, z)
            fd = _central_diff(lambda zz: u_density(gmm, zz).value, z)
            np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-8)

    def test_grad_u_max_tie_raises(self):
        head = SoftmaxHead(w=np.eye(2), b=np.zeros(2))
        with pytest.raises(ArgmaxTieError):
            grad_u_max(head, np.array([1.0, 1.0]))

    def test_gradient_points_toward_boundary(self):
        # following -grad(u_max) increases confidence
        head = gen_optimal_head(OptimalStructureSpec(k=3, h=2), seed=0)
        z = 1.5 * head.w[:, 0] + 0.3 * np.array([head.w[1, 0], -head.w[0, 0]])
        g = grad_u_max(head, z)
        step = z - 0.05 * g
        assert u_max(head, step).value < u_max(head, z).value


class TestScoreBatch:
    def test_columns_and_partition_invariance(self):
        rng = np.random.default_rng(31)
        head = _random_head(rng, k=3, h=4)
        fm = FeatureMatrix(rng.standard_normal((12, 4)))
        cols = score_batch(head, fm)
        assert set(cols) == {"sample_index", "u_max", "u_entropy", "u_cool",
                             "u_density", "z_norm", "max_cos", "argmax_class"}
        assert np.all(np.isnan(cols["u_density"]))
        top = score_batch(head, FeatureMatrix(fm.data[:5]))
        np.testing.assert_array_equal(cols["u_max"][:5], top["u_max"])

    def test_density_column_with_mixture(self):
        rng = np.random.default_rng(32)
        head = _random_head(rng, k=3, h=2)
        fm = FeatureMatrix(rng.standard_normal((6, 2)))
        gmm = GaussianMixture([1.0], [[0.0, 0.0]], [np.eye(2)])
        cols = score_batch(head, fm, gmm=gmm)
        for i in range(6):
            assert cols["u_density"][i] == pytest.approx(
                u_density(gmm, fm.data[i]).value)
