import numpy as np
import pytest

from sigregime.mmd import (NullDistribution, bootstrap_null, gamma_threshold,
                           mmd_between, mmd_biased, mmd_unbiased, permutation_null,
                           two_sample_test)
from sigregime.models import simulate_gbm
from sigregime.sigkernel import KernelSpec, gram
from sigregime.streams import apply_transformer_tensor, compose

SPEC = KernelSpec(lift="rbf", sigma=0.05, dyadic_order=1)
MESH = 1.0 / 1764.0
PHI = compose(["state-normalise"])


def gbm_subpaths(sigma, n_paths, length=7, seed=0):
    paths = simulate_gbm((0.0, sigma), 1, MESH, length - 1, n_paths, seed=seed)
    _, vals = apply_transformer_tensor(MESH * np.arange(length), paths, PHI)
    return vals


class TestEstimators:
    def test_biased_zero_on_identical_samples(self):
        rng = np.random.default_rng(0)
        g = rng.uniform(0.5, 1.5, size=(4, 4))
        g = 0.5 * (g + g.T)
        assert mmd_biased(g, g, g) == 0.0

    def test_biased_single_sample_formula(self):
        c = 0.3
        assert mmd_biased([[1.0]], [[c]], [[1.0]]) == pytest.approx(2 * (1 - c))

    def test_biased_hand_expansion(self):
        rng = np.random.default_rng(1)
        gxx = rng.uniform(size=(2, 2))
        gxy = rng.uniform(size=(2, 2))
        gyy = rng.uniform(size=(2, 2))
        manual = gxx.mean() - 2 * gxy.mean() + gyy.mean()
        assert mmd_biased(gxx, gxy, gyy) == pytest.approx(max(manual, 0.0), abs=1e-12)

    def test_unbiased_constant_gram_is_zero(self):
        g = np.full((3, 3), 0.7)
        assert mmd_unbiased(g, g, g) == pytest.approx(0.0, abs=1e-15)

    def test_unbiased_identity_blocks(self):
        eye = np.eye(3)
        zeros = np.zeros((3, 3))
        assert mmd_unbiased(eye, zeros, eye) == pytest.approx(0.0, abs=1e-15)

    def test_unbiased_needs_two_samples(self):
        with pytest.raises(ValueError):
            mmd_unbiased([[1.0]], [[0.5]], [[1.0]])

    def test_unbiased_mean_zero_under_null(self):
        # resample disjoint ensembles from one bank; the unbiased statistic
        # should average to zero within Monte Carlo error
        bank = gbm_subpaths(0.2, 160, seed=3)
        K = gram(bank, spec=SPEC).values
        rng = np.random.default_rng(4)
        vals = []
        for _ in range(500):
            idx = rng.permutation(160)[:20]
            a, b = idx[:10], idx[10:]
            vals.append(mmd_unbiased(K[np.ix_(a, a)], K[np.ix_(a, b)], K[np.ix_(b, b)]))
        vals = np.array(vals)
        se = vals.std(ddof=1) / np.sqrt(len(vals))
        assert abs(vals.mean()) < 3 * se

    def test_biased_nonnegative_and_limits_to_unbiased(self):
        # the diagonal correction separating the estimators shrinks like 1/n
        x = gbm_subpaths(0.2, 240, seed=5)
        y = gbm_subpaths(0.3, 240, seed=6)
        gaps = []
        for n in (60, 240):
            gxx = gram(x[:n], spec=SPEC).values
            gyy = gram(y[:n], spec=SPEC).values
            gxy = gram(x[:n], y[:n], SPEC).values
            b = mmd_biased(gxx, gxy, gyy)
            u = mmd_unbiased(gxx, gxy, gyy)
            assert b >= 0.0
            gaps.append(abs(b - u))
        assert gaps[1] < gaps[0]
        assert gaps[1] < 2.5 * gaps[0] * 60 / 240


class TestBootstrapNull:
    def test_identical_bank_degenerates(self):
        bank = np.ones((30, 6, 2))
        null = bootstrap_null(bank, 5, 50, KernelSpec(), seed=0)
        assert np.allclose(null.samples, 0.0)
        assert null.critical_value == 0.0

    def test_critical_value_is_order_statistic(self):
        bank = gbm_subpaths(0.2, 80, seed=7)
        null = bootstrap_null(bank, 8, 101, SPEC, seed=1, alpha=0.05)
        samples = np.sort(null.samples)
        assert null.critical_value in samples
        assert np.mean(null.samples <= null.critical_value) >= 0.95

    def test_deterministic_under_seed(self):
        bank = gbm_subpaths(0.2, 60, seed=8)
        a = bootstrap_null(bank, 6, 40, SPEC, seed=9)
        b = bootstrap_null(bank, 6, 40, SPEC, seed=9)
        assert np.array_equal(a.samples, b.samples)
        assert a.critical_value == b.critical_value

    def test_bank_too_small(self):
        with pytest.raises(ValueError):
            bootstrap_null(np.ones((8, 5, 1)), 5, 10, KernelSpec())


class TestGammaThreshold:
    def test_moment_matching_hand_values(self):
        null = gamma_threshold(moments=(2.0, 1.0), n=10, alpha=0.05)
        assert null.shape == pytest.approx(4.0)
        assert null.scale == pytest.approx(5.0)

    def test_consistency_identity(self):
        null = gamma_threshold(moments=(1.7, 0.4), n=25, alpha=0.1)
        assert null.shape * null.scale == pytest.approx(25 * 1.7)

    def test_close_to_bootstrap_on_h0_suite(self):
        bank = gbm_subpaths(0.2, 150, seed=10)
        boot = bootstrap_null(bank, 10, 400, SPEC, seed=11, alpha=0.05, biased=True)
        gam = gamma_threshold(samples=boot.samples, n=10, alpha=0.05)
        assert gam.critical_value == pytest.approx(boot.critical_value, rel=0.15)

    def test_degenerate_rejected(self):
        with pytest.raises(ValueError):
            gamma_threshold(moments=(1.0, 0.0), n=5, alpha=0.05)
        with pytest.raises(ValueError):
            gamma_threshold(moments=(-1.0, 0.5), n=5, alpha=0.05)

    def test_cdf_quantile_round_trip(self):
        null = gamma_threshold(moments=(2.0, 1.0), n=10, alpha=0.05)
        assert null.cdf(null.quantile(0.7)) == pytest.approx(0.7, abs=1e-9)


class TestTwoSampleTest:
    def test_identical_ensembles_not_rejected(self):
        bank = gbm_subpaths(0.2, 60, seed=12)
        null = bootstrap_null(bank, 10, 120, SPEC, seed=13, alpha=0.05)
        ens = bank[:10]
        verdict = two_sample_test(ens, ens, SPEC, null)
        assert not verdict.reject
        assert verdict.statistic <= 0.0 < verdict.critical_value

    def test_statistic_vs_mmd_between(self):
        x = gbm_subpaths(0.2, 10, seed=14)
        y = gbm_subpaths(0.3, 10, seed=15)
        null = NullDistribution("bootstrap", 0.05, 0.1, samples=np.zeros(5))
        verdict = two_sample_test(x, y, SPEC, null)
        assert verdict.statistic == pytest.approx(mmd_between(x, y, SPEC))


class TestConsistency:
    def test_error_decays_with_sample_size(self):
        # median |sample - reference| must decrease over n in {4, 16, 64}
        ref_x = gbm_subpaths(0.2, 256, seed=16)
        ref_y = gbm_subpaths(0.3, 256, seed=17)
        Kxx = gram(ref_x, spec=SPEC).values
        Kyy = gram(ref_y, spec=SPEC).values
        Kxy = gram(ref_x, ref_y, SPEC).values
        population = mmd_biased(Kxx, Kxy, Kyy)
        rng = np.random.default_rng(18)
        medians = []
        for n in (4, 16, 64):
            errs = []
            for _ in range(40):
                a = rng.choice(256, n, replace=False)
                b = rng.choice(256, n, replace=False)
                est = mmd_biased(Kxx[np.ix_(a, a)], Kxy[np.ix_(a, b)], Kyy[np.ix_(b, b)])
                errs.append(abs(est - population))
            medians.append(np.median(errs))
        assert medians[0] > medians[1] > medians[2]


class TestPermutationNull:
    def test_shares_law_with_bootstrap_scale(self):
        x = gbm_subpaths(0.2, 12, seed=19)
        y = gbm_subpaths(0.2, 12, seed=20)
        null = permutation_null(x, y, SPEC, n_permutations=60, seed=21, alpha=0.1)
        stat = mmd_between(x, y, SPEC)
        assert null.cdf(stat) < 0.99  # an H0 statistic is not extreme

    def test_deterministic(self):
        x = gbm_subpaths(0.2, 10, seed=22)
        y = gbm_subpaths(0.2, 10, seed=23)
        a = permutation_null(x, y, SPEC, 30, seed=5)
        b = permutation_null(x, y, SPEC, 30, seed=5)
        assert np.array_equal(a.samples, b.samples)
