import pytest

from bandfuse.rng import Xorshift64Star


def test_determinism_same_seed():
    a = Xorshift64Star(123)
    b = Xorshift64Star(123)
    assert [a.next_u64() for _ in range(20)] == [b.next_u64() for _ in range(20)]


def test_different_seeds_diverge():
    a = Xorshift64Star(1)
    b = Xorshift64Star(2)
    assert [a.next_u64() for _ in range(5)] != [b.next_u64() for _ in range(5)]


def test_zero_seed_is_valid():
    rng = Xorshift64Star(0)
    assert rng.next_u64() != 0


def test_negative_seed_rejected():
    with pytest.raises(ValueError):
        Xorshift64Star(-1)


def test_floats_in_unit_interval():
    rng = Xorshift64Star(7)
    vals = [rng.next_float() for _ in range(1000)]
    assert all(0.0 <= v < 1.0 for v in vals)
    # crude uniformity sanity check
    assert 0.4 < sum(vals) / len(vals) < 0.6


def test_gauss_moments():
    rng = Xorshift64Star(11)
    vals = [rng.gauss() for _ in range(20000)]
    mean = sum(vals) / len(vals)
    var = sum((v - mean) ** 2 for v in vals) / len(vals)
    assert abs(mean) < 0.03
    assert abs(var - 1.0) < 0.05


def test_shuffle_is_permutation_and_deterministic():
    items1 = list(range(50))
    items2 = list(range(50))
    Xorshift64Star(5).shuffle(items1)
    Xorshift64Star(5).shuffle(items2)
    assert items1 == items2
    assert sorted(items1) == list(range(50))


def test_randbelow_bounds():
    rng = Xorshift64Star(3)
    assert all(0 <= rng.randbelow(7) < 7 for _ in range(200))
    with pytest.raises(ValueError):
        rng.randbelow(0)
