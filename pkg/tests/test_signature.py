import math

import numpy as np
import pytest

from sigregime.signature import (chen_product, expected_signature, factorial_decay_bound,
                                 signature_dot, signature_lift, signatures_flat,
                                 tensor_exp, truncated_signature, unit_series)
from sigregime.streams import TimeAugmentedStream


class TestTensorExp:
    def test_zero_increment(self):
        s = tensor_exp(np.zeros(3), 4)
        assert s.level(0) == pytest.approx(1.0)
        for k in range(1, 5):
            assert np.allclose(s.level(k), 0.0)

    def test_scalar_hand_values(self):
        s = tensor_exp([2.0], 3)
        flat = [float(s.level(k).ravel()[0]) for k in range(4)]
        assert flat == pytest.approx([1.0, 2.0, 2.0, 4.0 / 3.0])

    def test_outer_product_level_two(self):
        s = tensor_exp([1.0, 0.0], 2)
        assert np.allclose(s.level(2), [[0.5, 0.0], [0.0, 0.0]])


class TestChenProduct:
    def test_unit_identity(self):
        rng = np.random.default_rng(0)
        x = tensor_exp(rng.normal(size=2), 3)
        unit = unit_series(2, 3)
        prod = chen_product(x, unit)
        for k in range(4):
            assert np.allclose(prod.level(k), x.level(k))

    def test_two_axis_segments_hand_expansion(self):
        a = tensor_exp([1.0, 0.0], 2)
        b = tensor_exp([0.0, 1.0], 2)
        lvl2 = chen_product(a, b).level(2)
        expected = np.array([[0.5, 1.0], [0.0, 0.5]])
        assert np.allclose(lvl2, expected)

    def test_associativity(self):
        rng = np.random.default_rng(1)
        a, b, c = (tensor_exp(rng.normal(size=2), 3) for _ in range(3))
        left = chen_product(chen_product(a, b), c)
        right = chen_product(a, chen_product(b, c))
        for k in range(4):
            assert np.allclose(left.level(k), right.level(k), atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            chen_product(tensor_exp([1.0], 2), tensor_exp([1.0, 2.0], 2))


class TestTruncatedSignature:
    def test_constant_path(self):
        s = truncated_signature(np.ones((5, 2)), 3)
        assert s.level(0) == pytest.approx(1.0)
        for k in range(1, 4):
            assert np.allclose(s.level(k), 0.0)

    def test_axis_path_hand_values(self):
        path = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]])
        s = truncated_signature(path, 2)
        assert np.allclose(s.level(1), [1.0, 1.0])
        assert np.allclose(s.level(2), [[0.5, 1.0], [0.0, 0.5]])

    def test_level_one_is_total_increment(self):
        rng = np.random.default_rng(2)
        path = rng.normal(size=(9, 3)).cumsum(axis=0)
        s = truncated_signature(path, 3)
        assert np.allclose(s.level(1), path[-1] - path[0])

    def test_straight_line_sampling_invariance(self):
        coarse = np.linspace(0.0, 1.0, 2)[:, None]
        fine = np.linspace(0.0, 1.0, 50)[:, None]
        a = truncated_signature(coarse, 5)
        b = truncated_signature(fine, 5)
        for k in range(6):
            assert np.allclose(a.level(k), b.level(k), atol=1e-12)

    def test_chen_identity_for_concatenation(self):
        rng = np.random.default_rng(3)
        x = rng.normal(0, 0.4, size=(6, 2)).cumsum(axis=0)
        y = rng.normal(0, 0.4, size=(5, 2)).cumsum(axis=0) + x[-1]
        y[0] = x[-1]
        whole = np.vstack([x, y[1:]])
        combined = chen_product(truncated_signature(x, 4), truncated_signature(y, 4))
        direct = truncated_signature(whole, 4)
        for k in range(5):
            assert np.allclose(combined.level(k), direct.level(k), atol=1e-10)

    def test_reparameterisation_invariance(self):
        rng = np.random.default_rng(4)
        path = rng.normal(0, 0.5, size=(7, 2)).cumsum(axis=0)
        with_knot = np.insert(path, 3, 0.5 * (path[2] + path[3]), axis=0)
        a = truncated_signature(path, 4)
        b = truncated_signature(with_knot, 4)
        for k in range(5):
            assert np.allclose(a.level(k), b.level(k), atol=1e-12)

    def test_factorial_decay(self):
        rng = np.random.default_rng(5)
        path = rng.normal(0, 0.6, size=(8, 2)).cumsum(axis=0)
        one_var = np.linalg.norm(np.diff(path, axis=0), axis=1).sum()
        s = truncated_signature(path, 6)
        bounds = factorial_decay_bound(one_var, 6)
        assert np.all(s.level_norms() <= bounds + 1e-12)

    def test_include_time_channel(self):
        stream = TimeAugmentedStream(np.arange(4.0), np.ones((4, 1)))
        s = truncated_signature(stream, 2, include_time=True)
        assert s.dimension == 2
        assert np.allclose(s.level(1), [3.0, 0.0])


class TestExpectedSignature:
    def test_singleton(self):
        rng = np.random.default_rng(6)
        path = rng.normal(size=(5, 2)).cumsum(axis=0)
        es = expected_signature([path], 3)
        ts = truncated_signature(path, 3)
        for k in range(4):
            assert np.allclose(es.level(k), ts.level(k))

    def test_identical_paths(self):
        path = np.random.default_rng(7).normal(size=(5, 1)).cumsum(axis=0)
        es = expected_signature([path, path, path], 2)
        ts = truncated_signature(path, 2)
        for k in range(3):
            assert np.allclose(es.level(k), ts.level(k))

    def test_mirrored_paths(self):
        up = np.array([[0.0], [1.0]])
        down = np.array([[0.0], [-1.0]])
        es = expected_signature([up, down], 2)
        assert np.allclose(es.level(1), 0.0)
        assert es.level(2).ravel()[0] == pytest.approx(0.5)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            expected_signature([], 2)


class TestSignatureLift:
    def test_constant_input(self):
        stream = TimeAugmentedStream(np.arange(5.0), np.full((5, 2), 3.0))
        lifted = signature_lift(stream, 2)
        assert np.allclose(lifted.values, 0.0)

    def test_level_one_coordinates_are_increments(self):
        rng = np.random.default_rng(8)
        path = rng.normal(size=(6, 2)).cumsum(axis=0)
        stream = TimeAugmentedStream(np.arange(6.0), path)
        lifted = signature_lift(stream, 3)
        assert np.allclose(lifted.values[:, :2], path - path[0])

    def test_final_value_is_full_signature(self):
        rng = np.random.default_rng(9)
        path = rng.normal(size=(6, 2)).cumsum(axis=0)
        lifted = signature_lift(path, 3)
        full = truncated_signature(path, 3).flatten()
        assert np.allclose(lifted[-1], full, atol=1e-12)


class TestBatchedSignatures:
    def test_flat_matches_single(self):
        rng = np.random.default_rng(10)
        paths = rng.normal(0, 0.4, size=(4, 6, 2)).cumsum(axis=1)
        flat = signatures_flat(paths, 3)
        for b in range(4):
            assert np.allclose(flat[b], truncated_signature(paths[b], 3).flatten())

    def test_dot_via_flat(self):
        rng = np.random.default_rng(11)
        x = rng.normal(0, 0.3, size=(5, 2)).cumsum(axis=0)
        y = rng.normal(0, 0.3, size=(5, 2)).cumsum(axis=0)
        sx, sy = truncated_signature(x, 4), truncated_signature(y, 4)
        manual = 1.0 + signatures_flat(x[None], 4)[0] @ signatures_flat(y[None], 4)[0]
        assert signature_dot(sx, sy) == pytest.approx(manual)
