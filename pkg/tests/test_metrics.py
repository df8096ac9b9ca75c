import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdr.metrics import UndefinedMetricError, acc, auc, video_level


def brute_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    credit = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return credit / (len(pos) * len(neg))


def test_perfect():
    assert auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0


def test_all_tied():
    assert auc([0.3] * 6, [0, 1] * 3) == 0.5


def test_single_class():
    with pytest.raises(UndefinedMetricError):
        auc([0.1, 0.2], [1, 1])


def test_brute_force_oracle(rng):
    for _ in range(100):
        n = int(rng.integers(2, 201))
        labels = rng.integers(0, 2, n)
        labels[:2] = [0, 1]
        # coarse rounding forces ties
        scores = np.round(rng.uniform(0, 1, n), int(rng.integers(1, 4)))
        assert abs(auc(scores, labels) - brute_auc(scores, labels)) <= 1e-12


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(-1000, 1000), min_size=4, max_size=40, unique=True), st.randoms())
def test_monotone_and_negation(scores, r):
    labels = [i % 2 for i in range(len(scores))]
    r.shuffle(labels)
    base = auc(scores, labels)
    # integer cube plus shift is strictly increasing and exact in float64
    assert auc([s ** 3 + 7 for s in scores], labels) == base
    assert abs(base + auc([-s for s in scores], labels) - 1.0) <= 1e-12


class TestAcc:
    def test_perfect_and_inverted(self):
        assert acc([0.1, 0.9], [0, 1]) == 1.0
        assert acc([0.9, 0.1], [0, 1]) == 0.0

    def test_half_maps_to_fake(self):
        assert acc([0.5] * 4, [0, 1, 0, 1]) == 0.5
        assert acc([0.5], [1]) == 1.0

    def test_empty(self):
        with pytest.raises(UndefinedMetricError):
            acc([], [])


def test_video_level_averages():
    s, y = video_level([0.2, 0.4, 0.9], [0, 0, 1], [7, 7, 3])
    np.testing.assert_allclose(s, [0.9, 0.3])
    np.testing.assert_array_equal(y, [1, 0])


def test_video_level_mixed_labels():
    with pytest.raises(ValueError):
        video_level([0.2, 0.4], [0, 1], [1, 1])
