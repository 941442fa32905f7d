import numpy as np
import pytest

from sigregime.detect import (Beliefs, auto_evaluate, build_beliefs, detect_online,
                              exceedance_fractions, pathwise_detect, rolling_threshold,
                              score_vector)
from sigregime.errors import ConfigError
from sigregime.mmd import NullDistribution, bootstrap_null, mmd_unbiased
from sigregime.models import ModelPair, RegimeSwitchSpec, simulate_regime_switching
from sigregime.sigkernel import KernelSpec, gram
from sigregime.streams import compose, extract_subpaths, subpath_tensor

MESH = 1.0 / 1764.0
PHI = compose(["increment", "time-normalise", "state-normalise"])
SPEC = KernelSpec(lift="rbf", sigma=0.05, dyadic_order=1)


def toy_path(seed=5, horizon=1.0, entry=0.08, exit_=0.3):
    spec = RegimeSwitchSpec(models=(ModelPair("gbm", (0.0, 0.2)), ModelPair("gbm", (0.0, 0.3))),
                            window_len=7, horizon=horizon, mesh=MESH,
                            entry_intensity=entry, exit_intensity=exit_, seed=seed)
    return simulate_regime_switching(spec)


@pytest.fixture(scope="module")
def toy_setup():
    sim = toy_path()
    X = subpath_tensor(sim.stream, 7, PHI, include_time=False)
    beliefs = build_beliefs([ModelPair("gbm", (0.0, 0.2))], 600, 7, MESH, PHI,
                            include_time=False, seed=99)
    null = bootstrap_null(beliefs.banks[0], 10, 150, SPEC, seed=1, alpha=0.05)
    return sim, X, beliefs, null


class TestScoreVector:
    def test_bank_equal_to_ensemble_scores_zero(self):
        rng = np.random.default_rng(0)
        ens = rng.normal(0, 0.1, size=(6, 7, 2)).cumsum(axis=1)
        beliefs = Beliefs((ens,), ("self",))
        out = score_vector(ens, beliefs, SPEC, n_evals=1, seed=3, biased=True)
        # the draw is a permutation of the ensemble itself
        assert out[0] == pytest.approx(0.0, abs=1e-12)

    def test_single_belief_reduces_to_direct_mmd(self, toy_setup):
        _, X, beliefs, _ = toy_setup
        ens = X[:10]
        out = score_vector(ens, beliefs, SPEC, n_evals=1, seed=7, draw_key=4)
        rng = np.random.default_rng([7, 0, 4, 0])
        idx = rng.choice(len(beliefs.banks[0]), size=10, replace=False)
        draw = beliefs.banks[0][idx]
        gxx = gram(ens, spec=SPEC).values
        gyy = gram(draw, spec=SPEC).values
        gxy = gram(ens, draw, SPEC).values
        assert out[0] == pytest.approx(mmd_unbiased(gxx, gxy, gyy), abs=1e-10)


class TestDetectOnline:
    def test_constant_inputs_never_flag(self):
        X = np.ones((30, 6, 2))
        beliefs = Beliefs((np.ones((50, 6, 2)),), ("const",))
        null = NullDistribution("bootstrap", 0.05, 0.0, samples=np.zeros(10))
        rep = detect_online(X, 5, beliefs, [null], KernelSpec(), seed=0)
        assert not rep.anomalous.any()

    def test_exceedance_fraction_range_and_counting(self):
        flags = np.array([True, True, False, True])
        frac = exceedance_fractions(flags, 7, 3)
        assert np.isnan(frac[-1])
        valid = frac[np.isfinite(frac)]
        assert np.all((valid >= 0) & (valid <= 1))
        assert frac[0] == 1.0  # only ensemble 0 covers sub-path 0, and it is flagged

    def test_matches_score_vector_columns(self, toy_setup):
        _, X, beliefs, null = toy_setup
        rep = detect_online(X[:30], 10, beliefs, [null], SPEC, n_evals=1, seed=11)
        for k in (0, 5, 17):
            sv = score_vector(X[k:k + 10], beliefs, SPEC, n_evals=1, seed=11, draw_key=k)
            assert rep.score_matrix[0, k] == pytest.approx(sv[0], abs=1e-10)

    def test_causality(self, toy_setup):
        _, X, beliefs, null = toy_setup
        full = detect_online(X[:40], 10, beliefs, [null], SPEC, seed=13)
        prefix = detect_online(X[:30], 10, beliefs, [null], SPEC, seed=13)
        assert np.allclose(full.score_matrix[:, :20], prefix.score_matrix)
        assert np.array_equal(full.anomalous[:20], prefix.anomalous)

    def test_monotone_flags_in_alpha(self, toy_setup):
        _, X, beliefs, _ = toy_setup
        lo = bootstrap_null(beliefs.banks[0], 10, 150, SPEC, seed=1, alpha=0.05)
        hi = bootstrap_null(beliefs.banks[0], 10, 150, SPEC, seed=1, alpha=0.25)
        rep_lo = detect_online(X[:40], 10, beliefs, [lo], SPEC, seed=17)
        rep_hi = detect_online(X[:40], 10, beliefs, [hi], SPEC, seed=17)
        assert rep_hi.anomalous.sum() >= rep_lo.anomalous.sum()

    def test_reproducible(self, toy_setup):
        _, X, beliefs, null = toy_setup
        a = detect_online(X[:30], 10, beliefs, [null], SPEC, seed=19)
        b = detect_online(X[:30], 10, beliefs, [null], SPEC, seed=19)
        assert np.array_equal(a.score_matrix, b.score_matrix)
        assert np.array_equal(a.exceedance, b.exceedance, equal_nan=True)
        assert np.array_equal(a.quantiles, b.quantiles)

    def test_quantiles_in_unit_interval(self, toy_setup):
        _, X, beliefs, null = toy_setup
        rep = detect_online(X[:30], 10, beliefs, [null], SPEC, seed=23)
        assert np.all((rep.quantiles >= 0) & (rep.quantiles <= 1))

    def test_one_null_per_belief_required(self, toy_setup):
        _, X, beliefs, null = toy_setup
        with pytest.raises(ValueError):
            detect_online(X[:30], 10, beliefs, [null, null], SPEC)


class TestAutoEvaluate:
    def test_constant_stream_scores_zero(self):
        X = np.ones((30, 6, 2))
        scores = auto_evaluate(X, 5, [1], spec=KernelSpec())
        defined = scores[np.isfinite(scores)]
        assert np.allclose(defined, 0.0)

    def test_single_lag_matches_direct_mmd(self, toy_setup):
        _, X, _, _ = toy_setup
        scores = auto_evaluate(X[:30], 10, [1], spec=SPEC)
        assert np.isnan(scores[0])
        i = 7
        a = X[i - 1:i - 1 + 10]
        b = X[i:i + 10]
        gxx = gram(a, spec=SPEC).values
        gyy = gram(b, spec=SPEC).values
        gxy = gram(a, b, SPEC).values
        assert scores[i] == pytest.approx(mmd_unbiased(gxx, gxy, gyy), abs=1e-12)

    def test_five_lags_smoother_on_distance_scale(self):
        sim = toy_path(seed=6, horizon=2.0, entry=0.04)
        X = subpath_tensor(sim.stream, 7, PHI, include_time=False)
        one = auto_evaluate(X, 10, [1], spec=SPEC, biased=True, distance=True)
        five = auto_evaluate(X, 10, [1, 2, 3, 4, 5], spec=SPEC, biased=True, distance=True)

        def tv(s):
            s = s[np.isfinite(s)]
            return np.abs(np.diff(s)).sum()

        assert tv(five) < tv(one)

    def test_weights_must_align(self, toy_setup):
        _, X, _, _ = toy_setup
        with pytest.raises(ValueError):
            auto_evaluate(X[:30], 10, [1, 2], weights=[1.0], spec=SPEC)

    def test_empty_lags_rejected(self, toy_setup):
        _, X, _, _ = toy_setup
        with pytest.raises(ValueError):
            auto_evaluate(X[:30], 10, [], spec=SPEC)


class TestRollingThreshold:
    def test_level_shift_flags_quickly(self):
        rng = np.random.default_rng(0)
        scores = np.concatenate([rng.uniform(0.9, 1.1, 120), rng.uniform(2.4, 2.6, 20)])
        rolling, flags = rolling_threshold(scores, window=50, alpha=0.05)
        assert flags[120]  # first shifted point immediately exceeds
        assert not flags[:50].any()

    def test_burn_in_emits_no_flags(self):
        scores = np.linspace(1, 2, 80)
        rolling, flags = rolling_threshold(scores, window=40, alpha=0.05)
        assert rolling.burn_in == 40
        assert not flags[:40].any()
        assert np.all(np.isnan(rolling.thresholds[:40]))

    def test_wider_window_gives_smoother_thresholds(self):
        rng = np.random.default_rng(1)
        scores = rng.gamma(4.0, 0.25, size=600)
        _, _ = rolling_threshold(scores, window=50)
        roll_a, _ = rolling_threshold(scores, window=50)
        roll_b, _ = rolling_threshold(scores, window=200)

        def tv(x):
            x = x[np.isfinite(x)]
            return np.abs(np.diff(x)).sum()

        assert tv(roll_b.thresholds) < tv(roll_a.thresholds)

    def test_h0_flag_rate_near_alpha(self):
        rng = np.random.default_rng(2)
        scores = rng.gamma(4.0, 0.25, size=700)
        rolling, flags = rolling_threshold(scores, window=150, alpha=0.05)
        rate = flags[rolling.burn_in:].mean()
        assert abs(rate - 0.05) < 0.05

    def test_degenerate_window_falls_back(self):
        scores = np.concatenate([np.full(60, 1.0), [1.5, 0.9, 1.0]])
        rolling, flags = rolling_threshold(scores, window=50, alpha=0.05)
        assert rolling.fallback[50:60].all()
        assert flags[60]  # 1.5 exceeds the degenerate empirical quantile 1.0


class TestPathwiseDetect:
    def make_beliefs(self, conditional=False):
        models = (ModelPair("gbm", (0.0, 0.2)), ModelPair("gbm", (0.0, 0.4)))
        return build_beliefs(models, 200, 7, MESH, PHI, include_time=False, seed=41)

    def test_pair_entries_are_negations(self):
        sim = toy_path(seed=8, horizon=0.25)
        raw = extract_subpaths(sim.stream, 7)
        beliefs = self.make_beliefs()
        rep = pathwise_detect(raw, beliefs, 24, SPEC, seed=3, transformer=PHI,
                              include_time=False)
        assert np.allclose(rep.matrices[:, 0, 0], -rep.matrices[:, 1, 0], atol=1e-12)

    def test_deterministic(self):
        sim = toy_path(seed=9, horizon=0.2)
        raw = extract_subpaths(sim.stream, 7)
        beliefs = self.make_beliefs()
        a = pathwise_detect(raw, beliefs, 16, SPEC, seed=5, transformer=PHI,
                            include_time=False)
        b = pathwise_detect(raw, beliefs, 16, SPEC, seed=5, transformer=PHI,
                            include_time=False)
        assert np.array_equal(a.matrices, b.matrices)

    def test_conditional_needs_models(self):
        sim = toy_path(seed=10, horizon=0.2)
        raw = extract_subpaths(sim.stream, 7)
        banks = self.make_beliefs()
        static_only = Beliefs(banks.banks, banks.names)  # models dropped
        with pytest.raises(ConfigError):
            pathwise_detect(raw, static_only, 16, SPEC, seed=0, conditional=True,
                            transformer=PHI, include_time=False)

    def test_rank2_rejected(self):
        sim = toy_path(seed=11, horizon=0.2)
        raw = extract_subpaths(sim.stream, 7)
        beliefs = self.make_beliefs()
        with pytest.raises(ConfigError):
            pathwise_detect(raw, beliefs, 8, KernelSpec(rank=2, sigma=(0.5, 1.0)),
                            transformer=PHI, include_time=False)

    def test_conditional_mode_runs(self):
        sim = toy_path(seed=12, horizon=0.2)
        raw = extract_subpaths(sim.stream, 7)
        beliefs = self.make_beliefs()
        rep = pathwise_detect(raw, beliefs, 12, SPEC, seed=7, conditional=True,
                              transformer=PHI, include_time=False)
        assert rep.matrices.shape == (len(raw), 2, 1)
        assert np.all(np.isfinite(rep.matrices))
