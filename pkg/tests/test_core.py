import math

import numpy as np
import pytest

from sata_lab.core import InvalidInputError, cosine, log_sum_exp, make_rng, normalize, RNG_ALGORITHM


def test_cosine_examples():
    assert cosine([1, 0], [0, 1]) == 0.0
    assert cosine([1, 1], [1, 0]) == pytest.approx(1 / math.sqrt(2), abs=1e-15)
    v = np.random.default_rng(0).standard_normal(17)
    assert cosine(v, v) == pytest.approx(1.0, abs=1e-15)


def test_cosine_clamped_and_symmetric():
    rng = np.random.default_rng(1)
    for _ in range(200):
        a, b = rng.standard_normal(5), rng.standard_normal(5)
        c = cosine(a, b)
        assert -1.0 <= c <= 1.0
        assert c == pytest.approx(cosine(b, a), abs=1e-15)
        assert cosine(3.5 * a, 0.01 * b) == pytest.approx(c, abs=1e-12)
    v = np.array([1e-3, 7.0, -2.0])
    assert cosine(v, v * 1e150) <= 1.0


@pytest.mark.parametrize("a,b", [([0, 0], [1, 0]), ([1, 0], [0, 0])])
def test_cosine_zero_norm_raises(a, b):
    with pytest.raises(InvalidInputError):
        cosine(a, b)


def test_cosine_shape_mismatch():
    with pytest.raises(InvalidInputError):
        cosine([1, 0], [1, 0, 0])


def test_normalize_zero():
    with pytest.raises(InvalidInputError):
        normalize([0.0, 0.0])


def test_log_sum_exp_examples():
    assert log_sum_exp([0, 0]) == pytest.approx(math.log(2), abs=1e-15)
    assert log_sum_exp([1000, 1000]) == pytest.approx(1000 + math.log(2), abs=1e-12)
    assert log_sum_exp([-3.25]) == -3.25
    assert math.isfinite(log_sum_exp([1e4, -1e4, 9999.0]))


def test_log_sum_exp_shift():
    xs = np.random.default_rng(2).standard_normal(11)
    for c in (-500.0, 0.3, 7000.0):
        assert log_sum_exp(xs + c) == pytest.approx(log_sum_exp(xs) + c, rel=1e-13, abs=1e-10)


def test_log_sum_exp_rejects_empty_and_nonfinite():
    with pytest.raises(InvalidInputError):
        log_sum_exp([])
    with pytest.raises(InvalidInputError):
        log_sum_exp([0.0, np.inf])


def test_rng_reproducible_million_draws():
    assert RNG_ALGORITHM == "PCG64"
    a = make_rng(12345).random(10**6)
    b = make_rng(12345).random(10**6)
    assert np.array_equal(a, b)


def test_rng_streams_independent():
    root = make_rng(5).random(8)
    s1 = make_rng(5, "shuffle").random(8)
    s2 = make_rng(5, "suffixes").random(8)
    s3 = make_rng(5, "target", 2).random(8)
    assert not np.array_equal(root, s1)
    assert not np.array_equal(s1, s2)
    assert not np.array_equal(s3, make_rng(5, "target", 3).random(8))
    assert np.array_equal(s1, make_rng(5, "shuffle").random(8))


def test_rng_known_value():
    # pins the stream derivation so artifacts stay stable across releases
    assert make_rng(0).integers(0, 2**32) == np.random.Generator(np.random.PCG64(np.random.SeedSequence(0))).integers(0, 2**32)


@pytest.mark.parametrize("seed", [-1, 2**64, 1.5, True])
def test_rng_bad_seed(seed):
    with pytest.raises(InvalidInputError):
        make_rng(seed)
