import numpy as np
import pytest

from sigregime.baselines import (build_variance_norm, conformance, shuffle_product,
                                 sigcon_detect, variance_norm)
from sigregime.errors import CapacityError
from sigregime.models import simulate_gbm
from sigregime.signature import signatures_flat
from sigregime.streams import apply_transformer_tensor, compose

MESH = 1.0 / 1764.0


def gbm_subpaths(sigma, n_paths, length=7, seed=0, d=1):
    paths = simulate_gbm((0.0, sigma), d, MESH, length - 1, n_paths, seed=seed)
    _, vals = apply_transformer_tensor(MESH * np.arange(length), paths,
                                       compose(["state-normalise"]))
    return vals


class TestShuffleProduct:
    def test_single_letters(self):
        assert shuffle_product((1,), (2,)) == {(1, 2): 1, (2, 1): 1}

    def test_empty_word_is_unit(self):
        assert shuffle_product((1, 2), ()) == {(1, 2): 1}
        assert shuffle_product((), (3,)) == {(3,): 1}

    def test_three_letter_enumeration(self):
        out = shuffle_product((1, 2), (3,))
        assert out == {(1, 2, 3): 1, (1, 3, 2): 1, (3, 1, 2): 1}

    def test_multiplicities(self):
        assert shuffle_product((1,), (1,)) == {(1, 1): 2}

    def test_commutative(self):
        a = shuffle_product((1, 2), (2,))
        b = shuffle_product((2,), (1, 2))
        assert a == b


class TestVarianceNorm:
    def test_identity_matrix_gives_euclidean_norm(self):
        from sigregime.baselines import VarianceNormModel
        model = VarianceNormModel(1, 1, np.eye(2), np.eye(2), False)
        w = np.array([0.3, -0.4])
        assert variance_norm(w, model) == pytest.approx(0.25)

    def test_zero_vector(self):
        corpus = gbm_subpaths(0.2, 100, seed=1)
        model = build_variance_norm(corpus, 1)
        assert variance_norm(np.zeros(model.matrix.shape[0]), model) == 0.0

    def test_one_dimensional_hand_built_pairing(self):
        corpus = gbm_subpaths(0.2, 150, seed=2)
        model = build_variance_norm(corpus, 1)
        es = signatures_flat(corpus, 2, include_scalar=True).mean(axis=0)
        hand = np.array([[es[0], es[1]], [es[1], 2 * es[2]]])
        assert np.allclose(model.matrix, hand)
        w = np.array([0.7, 0.1])
        assert variance_norm(w, model) == pytest.approx(
            max(float(w @ np.linalg.pinv(hand) @ w), 0.0), rel=1e-6)

    def test_pairing_matrix_symmetry(self):
        corpus = gbm_subpaths(0.2, 80, seed=3, d=2)
        model = build_variance_norm(corpus, 2)
        assert np.allclose(model.matrix, model.matrix.T, atol=1e-12)

    def test_capacity_guard(self):
        corpus = np.random.default_rng(4).normal(size=(10, 5, 8)).cumsum(axis=1)
        with pytest.raises(CapacityError):
            build_variance_norm(corpus, 4)


class TestConformance:
    def test_corpus_member_scores_zero(self):
        corpus = gbm_subpaths(0.2, 120, seed=5)
        model = build_variance_norm(corpus, 1)
        sigs = signatures_flat(corpus, 1, include_scalar=True)
        assert conformance(sigs[7], sigs, model) == pytest.approx(0.0, abs=1e-6)

    def test_singleton_corpus(self):
        corpus = gbm_subpaths(0.2, 100, seed=6)
        model = build_variance_norm(corpus, 1)
        sigs = signatures_flat(corpus, 1, include_scalar=True)
        x = sigs[0] + 0.05
        direct = np.sqrt(max((x - sigs[3]) @ model.inverse @ (x - sigs[3]), 0.0))
        assert conformance(x, sigs[3:4], model) == pytest.approx(direct)

    def test_monotone_under_corpus_growth(self):
        corpus = gbm_subpaths(0.2, 100, seed=7)
        model = build_variance_norm(corpus, 1)
        sigs = signatures_flat(corpus, 1, include_scalar=True)
        x = sigs.mean(axis=0) * 1.1
        small = conformance(x, sigs[:20], model)
        large = conformance(x, sigs, model)
        assert large <= small + 1e-12


class TestSigConDetect:
    def test_h0_flag_rate_near_alpha(self):
        corpus = gbm_subpaths(0.2, 800, seed=8, d=2)
        observed = gbm_subpaths(0.2, 400, seed=9, d=2)
        res = sigcon_detect(observed, corpus, 2, alpha=0.1, seed=1)
        assert abs(res.flags.mean() - 0.1) < 0.05

    def test_shifted_law_flags_more(self):
        corpus = gbm_subpaths(0.2, 600, seed=10)
        anomalous = gbm_subpaths(0.6, 300, seed=11)
        res = sigcon_detect(anomalous, corpus, 2, alpha=0.05, seed=2)
        assert res.flags.mean() > 0.4

    def test_duplicate_support_gives_zero_threshold(self):
        # corpus of many copies of a few paths: both halves share the same
        # support, so every null conformance is zero and c_alpha collapses
        base = gbm_subpaths(0.2, 8, seed=12)
        corpus = np.tile(base, (25, 1, 1))
        observed = gbm_subpaths(0.35, 60, seed=13)
        res = sigcon_detect(observed, corpus, 1, alpha=0.05, seed=0)
        assert res.threshold == pytest.approx(0.0, abs=1e-6)
        assert res.flags.mean() > 0.95

    def test_deterministic(self):
        corpus = gbm_subpaths(0.2, 200, seed=14)
        observed = gbm_subpaths(0.25, 50, seed=15)
        a = sigcon_detect(observed, corpus, 2, seed=3)
        b = sigcon_detect(observed, corpus, 2, seed=3)
        assert np.array_equal(a.scores, b.scores)
        assert a.threshold == b.threshold

    def test_small_corpus_rejected(self):
        with pytest.raises(ValueError):
            sigcon_detect(np.ones((5, 4, 1)), np.ones((3, 4, 1)), 1)
