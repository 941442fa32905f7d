import numpy as np
import pytest

from sigregime.models import (ModelPair, RegimeSwitchSpec, simulate_gbm,
                              simulate_merton, simulate_rbergomi,
                              simulate_regime_switching)

MESH = 1.0 / 252.0


class TestGbm:
    def test_degenerate_is_constant(self):
        p = simulate_gbm((0.0, 0.0), 1, MESH, 30, 4, x0=2.0, seed=0)
        assert np.allclose(p, 2.0)

    def test_zero_vol_is_exponential_drift(self):
        p = simulate_gbm((0.05, 0.0), 1, MESH, 100, 3, seed=0)
        expected = np.exp(0.05 * 100 * MESH)
        assert np.allclose(p[:, -1, 0], expected, atol=1e-12)

    def test_log_return_variance(self):
        p = simulate_gbm((0.0, 0.2), 1, MESH, 40, 10_000, seed=7)
        lr = np.diff(np.log(p[:, :, 0]), axis=1)
        assert lr.var() == pytest.approx(0.2**2 * MESH, rel=0.05)

    def test_path_prefix_stable_in_batch_size(self):
        small = simulate_gbm((0.0, 0.2), 1, MESH, 20, 5, seed=11)
        large = simulate_gbm((0.0, 0.2), 1, MESH, 20, 9, seed=11)
        assert np.array_equal(small, large[:5])


class TestMerton:
    def test_no_jumps_matches_gbm_bitwise(self):
        pm = simulate_merton((0.0, 0.2, 0.0, 0.0, 0.0), 1, MESH, 50, 64, seed=3)
        pg = simulate_gbm((0.0, 0.2), 1, MESH, 50, 64, seed=3)
        assert np.array_equal(pm, pg)

    def test_degenerate_jumps_are_unity(self):
        pm = simulate_merton((0.0, 0.2, 50.0, 0.0, 0.0), 1, MESH, 50, 64, seed=3)
        pg = simulate_gbm((0.0, 0.2), 1, MESH, 50, 64, seed=3)
        assert np.allclose(pm, pg)

    def test_excess_kurtosis_above_gbm(self):
        pm = simulate_merton((0.0, 0.05, 100.0, 0.0, 0.025), 1, MESH, 252, 120, seed=5)
        pg = simulate_gbm((0.0, 0.2), 1, MESH, 252, 120, seed=5)

        def kurt(p):
            r = np.diff(np.log(p[:, :, 0]), axis=1).ravel()
            return ((r - r.mean()) ** 4).mean() / r.var() ** 2 - 3.0

        assert kurt(pm) > kurt(pg) + 1.0


class TestRoughBergomi:
    def test_volterra_variance_scaling(self):
        xi0, eta, rho, hurst = 0.04, 1.0, -0.7, 0.3
        _, var = simulate_rbergomi((xi0, eta, rho, hurst), 1, MESH, 50, 10_000, seed=1)
        t = MESH * np.arange(1, 51)
        y = (np.log(var[:, 1:, 0] / xi0) + 0.5 * eta**2 * t ** (2 * hurst)) / eta
        ratio = y.var(axis=0) / t ** (2 * hurst)
        assert np.all(np.abs(ratio - 1.0) < 0.05)

    def test_negative_leverage_correlation(self):
        prices, var = simulate_rbergomi((0.04, 1.0, -0.7, 0.3), 1, MESH, 60, 4000, seed=2)
        dx = np.diff(np.log(prices[:, :, 0]), axis=1)
        dv = np.diff(np.log(var[:, :, 0]), axis=1)
        corr = np.corrcoef(dx.ravel(), dv.ravel())[0, 1]
        assert corr < -0.3

    def test_flat_vol_reduces_to_black_scholes(self):
        prices, var = simulate_rbergomi((0.04, 0.0, -0.7, 0.3), 1, MESH, 50, 5000, seed=3)
        assert np.allclose(var, 0.04)
        lr = np.diff(np.log(prices[:, :, 0]), axis=1)
        assert lr.var() == pytest.approx(0.04 * MESH, rel=0.05)

    def test_v0_restart_overrides_forward_variance(self):
        _, var = simulate_rbergomi((0.04, 0.5, -0.5, 0.4), 1, MESH, 10, 3, v0=0.09, seed=4)
        assert np.allclose(var[:, 0, :], 0.09)

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            ModelPair("rbergomi", (0.04, 1.0, -2.0, 0.3))
        with pytest.raises(ValueError):
            ModelPair("rbergomi", (0.04, 1.0, 0.0, 1.5))


class TestRegimeSwitching:
    def spec(self, **kw):
        base = dict(models=(ModelPair("gbm", (0.0, 0.2)), ModelPair("gbm", (0.0, 0.3))),
                    window_len=7, horizon=1.0, mesh=1.0 / 1764.0,
                    entry_intensity=0.1, exit_intensity=0.3, seed=5)
        base.update(kw)
        return RegimeSwitchSpec(**base)

    def test_no_entries_when_intensity_zero(self):
        res = simulate_regime_switching(self.spec(entry_intensity=0.0))
        assert res.switch_times == ()
        assert res.labels.sum() == 0

    def test_entries_on_window_lattice(self):
        res = simulate_regime_switching(self.spec(entry_intensity=0.5, seed=9))
        assert len(res.switch_times) > 0
        assert all(t % 7 == 0 for t in res.switch_times)

    def test_deterministic_under_seed(self):
        a = simulate_regime_switching(self.spec(seed=13))
        b = simulate_regime_switching(self.spec(seed=13))
        assert np.array_equal(a.stream.values, b.stream.values)
        assert np.array_equal(a.labels, b.labels)
        assert a.switch_times == b.switch_times

    def test_stitching_continuity(self):
        res = simulate_regime_switching(self.spec(entry_intensity=0.5, seed=21))
        steps = np.abs(np.diff(res.stream.values[:, 0]))
        assert np.all(np.isfinite(res.stream.values))
        assert steps.max() < 0.2  # no artificial jumps at switch indices

    def test_label_purity_when_lattice_aligned(self):
        res = simulate_regime_switching(self.spec(entry_intensity=0.5, seed=31,
                                                  lattice_aligned=True))
        n1 = len(res.labels[:-1]) // 7
        windows = res.labels[:n1 * 7].reshape(n1, 7)
        assert np.all((windows.min(axis=1) == windows.max(axis=1)))

    def test_literal_exit_offsets_one_observation(self):
        lit = simulate_regime_switching(self.spec(entry_intensity=0.5, seed=31))
        lat = simulate_regime_switching(self.spec(entry_intensity=0.5, seed=31,
                                                  lattice_aligned=True))
        # same switch schedule, exits shifted by exactly one observation
        diff = np.flatnonzero(lit.labels != lat.labels)
        assert len(diff) > 0
        assert np.all(diff % 7 == 0)

    def test_midpoint_mode(self):
        res = simulate_regime_switching(self.spec(mode="midpoint", seed=1))
        n = len(res.labels) - 1
        flip = np.flatnonzero(np.diff(res.labels))
        assert len(flip) == 1
        assert abs(flip[0] - n // 2) <= 7

    def test_fixed_duration_mode(self):
        res = simulate_regime_switching(self.spec(mode="fixed-duration",
                                                  fixed_duration=0.05, n_episodes=2, seed=3))
        assert len(res.switch_times) == 2
        assert all(t % 7 == 0 for t in res.switch_times)

    def test_volatility_emission(self):
        models = (ModelPair("rbergomi", (0.04, 0.5, -0.7, 0.4), emit_volatility=True),
                  ModelPair("gbm", (0.0, 0.25), emit_volatility=True))
        res = simulate_regime_switching(self.spec(models=models, mode="midpoint",
                                                  window_len=16, mesh=1.0 / 882.0))
        assert res.stream.dimension == 2
        n = len(res.labels) - 1
        second_half = res.stream.values[n // 2 + 16:, 1]
        assert np.allclose(second_half, 0.25**2)
