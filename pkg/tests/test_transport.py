import math

import numpy as np
import pytest

from wstyle import distances, transport
from wstyle.transport import CloudDimensionError, CloudSizeError, exact_w1, sliced_w1, w1_1d

from oracles import brute_force_w1


class TestExactW1:
    @pytest.mark.parametrize("n", [1, 4, 16])
    def test_negated_unit_clouds(self, n):
        X = np.ones((4, n))
        Y = -np.ones((4, n))
        assert exact_w1(X, Y) == pytest.approx(2 * math.sqrt(n), rel=1e-9)

    def test_identity(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(10, 3))
        assert exact_w1(X, X) == pytest.approx(0.0, abs=1e-12)

    def test_single_pair_1d(self):
        assert exact_w1([[0.0]], [[3.0]]) == pytest.approx(3.0)

    def test_matches_brute_force_enumeration(self):
        rng = np.random.default_rng(1)
        for _ in range(25):
            n = rng.integers(2, 8)
            X = rng.normal(size=(n, 2))
            Y = rng.normal(size=(n, 2))
            assert exact_w1(X, Y) == pytest.approx(brute_force_w1(X, Y), abs=1e-9)

    def test_unbalanced_matches_replicated_balanced(self):
        # n=2 vs m=3 coupling LP == assignment on LCM-replicated clouds
        rng = np.random.default_rng(2)
        X = rng.normal(size=(2, 2))
        Y = rng.normal(size=(3, 2))
        lp = exact_w1(X, Y)
        balanced = exact_w1(np.repeat(X, 3, axis=0), np.repeat(Y, 2, axis=0))
        assert lp == pytest.approx(balanced, abs=1e-9)

    def test_dimension_mismatch(self):
        with pytest.raises(CloudDimensionError):
            exact_w1(np.ones((3, 2)), np.ones((3, 3)))

    def test_size_cap_refusal(self):
        big = np.zeros((transport.SIZE_CAP + 1, 1))
        with pytest.raises(CloudSizeError, match="sliced_w1"):
            exact_w1(big, big)

    def test_metric_axioms_on_random_triples(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            X, Y, Z = (rng.uniform(size=(5, 2)) for _ in range(3))
            assert exact_w1(X, Y) == pytest.approx(exact_w1(Y, X), abs=1e-9)
            assert exact_w1(X, X) <= 1e-9
            assert exact_w1(X, Z) <= exact_w1(X, Y) + exact_w1(Y, Z) + 1e-9

    def test_positive_on_disjoint_supports(self):
        rng = np.random.default_rng(4)
        X = rng.uniform(0.0, 1.0, size=(6, 2))
        Y = rng.uniform(5.0, 6.0, size=(6, 2))
        assert exact_w1(X, Y) > 0

    def test_negation_contrast_with_mmd(self):
        # W1 separates X from -X while MMD-quad cannot
        rng = np.random.default_rng(5)
        for _ in range(10):
            X = rng.normal(size=(6, 3)) + 1.0
            w1 = exact_w1(X, -X)
            mmd2 = float(distances.mmd2_quad(X.T, -X.T))
            assert w1 > 1e-3
            assert abs(mmd2) <= 1e-9 * max(1.0, np.abs(X).max() ** 4)

    def test_scaling(self):
        rng = np.random.default_rng(6)
        X, Y = rng.normal(size=(5, 2)), rng.normal(size=(5, 2))
        base = exact_w1(X, Y)
        for a in (-2.0, 0.5, 3.0):
            assert exact_w1(a * X, a * Y) == pytest.approx(abs(a) * base, rel=1e-9)


class TestW11d:
    def test_identity(self):
        x = np.array([0.3, -1.0, 2.0])
        assert w1_1d(x, x) == 0.0

    def test_shifted_pair(self):
        assert w1_1d([0.0, 1.0], [1.0, 2.0]) == pytest.approx(1.0)

    def test_matches_assignment_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            n = rng.integers(2, 9)
            x, y = rng.normal(size=n), rng.normal(size=n)
            assert w1_1d(x, y) == pytest.approx(exact_w1(x[:, None], y[:, None]), abs=1e-9)

    def test_unequal_counts_rejected(self):
        with pytest.raises(ValueError):
            w1_1d([1.0, 2.0], [1.0])


class TestSlicedW1:
    def test_identity(self):
        rng = np.random.default_rng(8)
        X = rng.normal(size=(20, 3))
        assert sliced_w1(X, X, 16, rng=0) == pytest.approx(0.0, abs=1e-12)

    def test_1d_projection_equals_w1_1d(self):
        rng = np.random.default_rng(9)
        x, y = rng.normal(size=12), rng.normal(size=12)
        got = sliced_w1(x[:, None], y[:, None], 8, rng=0)
        assert got == pytest.approx(w1_1d(x, y), abs=1e-12)

    def test_translation_limit(self):
        # sliced W1 of a translated cloud -> ||v|| * E|<u, v/||v||>|
        rng = np.random.default_rng(10)
        X = rng.normal(size=(64, 2))
        v = np.array([0.6, -0.8])
        got = sliced_w1(X, X + v, 20000, rng=11)
        # independent Monte-Carlo oracle for the direction average
        dirs = np.random.default_rng(12).standard_normal((20000, 2))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        expected = np.linalg.norm(v) * np.mean(np.abs(dirs @ (v / np.linalg.norm(v))))
        assert got == pytest.approx(expected, rel=0.03)

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(13)
        X, Y = rng.normal(size=(15, 3)), rng.normal(size=(9, 3))
        assert sliced_w1(X, Y, 32, rng=5) == sliced_w1(X, Y, 32, rng=5)

    def test_dimension_mismatch(self):
        with pytest.raises(CloudDimensionError):
            sliced_w1(np.ones((3, 2)), np.ones((3, 3)), 4, rng=0)
