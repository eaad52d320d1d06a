import math

import numpy as np
import pytest

from nodallab.lattice import (
    in_S,
    r2,
    search_by_angular_target,
    search_csv,
    spectral_measure_mu_n,
    sum_two_squares_reps,
)
from nodallab.measures import (
    MeasureError,
    cilleruelo,
    is_symmetric,
    tilted_cilleruelo,
    uniform_circle,
    weak_star_distance,
)


def naive_r2(n):
    c = math.isqrt(n) + 1
    return sum(1 for a in range(-c, c + 1) for b in range(-c, c + 1) if a * a + b * b == n)


def test_small_examples():
    assert set(sum_two_squares_reps(1).points) == {(1, 0), (-1, 0), (0, 1), (0, -1)}
    assert sum_two_squares_reps(3).points == ()
    pts25 = set(sum_two_squares_reps(25).points)
    expect = {(5, 0), (-5, 0), (0, 5), (0, -5)}
    expect |= {(sa * a, sb * b) for a, b in ((3, 4), (4, 3)) for sa in (1, -1) for sb in (1, -1)}
    assert pts25 == expect
    assert (r2(5), r2(2), r2(7)) == (8, 4, 0)
    assert (in_S(5), in_S(3), in_S(25)) == (True, False, True)
    assert (r2(25), r2(5), r2(65)) == (12, 8, 16)


def test_r2_matches_naive_double_loop():
    for n in range(1, 2001):
        k = r2(n)
        assert k == naive_r2(n), n
        assert k % 4 == 0


def test_solution_set_invariants():
    for n in range(1, 2001):
        pts = set(sum_two_squares_reps(n).points)
        for a, b in pts:
            assert a * a + b * b == n
            assert {(-a, b), (a, -b), (b, a)} <= pts


def test_mu_n_examples():
    assert weak_star_distance(spectral_measure_mu_n(1), cilleruelo(), 16) == 0
    assert weak_star_distance(spectral_measure_mu_n(2), tilted_cilleruelo(), 16) < 1e-14
    mu5 = spectral_measure_mu_n(5)
    assert len(mu5) == 8
    assert np.allclose(mu5.weights, 1 / 8)
    ang = np.sort(np.mod(mu5.angles, np.pi / 2))
    assert np.allclose(ang, np.repeat(np.sort([math.atan(0.5), math.atan(2)]), 4))


def test_mu_n_symmetric_for_all_small_n():
    for n in range(1, 2001):
        if in_S(n):
            assert is_symmetric(spectral_measure_mu_n(n), 1e-9)


def test_mu_n_empty_eigenspace():
    with pytest.raises(MeasureError, match="empty eigenspace"):
        spectral_measure_mu_n(3)


def test_search_examples():
    res = search_by_angular_target(cilleruelo(), 10, 4, 3)
    assert res[0] == (1, 0.0)
    res = search_by_angular_target(tilted_cilleruelo(), 10, 4, 3)
    assert res[0][0] == 2 and res[0][1] < 1e-14


def test_search_sorted_and_csv():
    res = search_by_angular_target(uniform_circle(64), 10000, 8, 20)
    d = [x for _, x in res]
    assert d == sorted(d)
    text = search_csv(res[:3])
    lines = text.strip().split("\n")
    assert lines[0] == "n,r2,distance"
    n, k, dist = lines[1].split(",")
    assert int(k) == r2(int(n)) and float(dist) == d[0]


def test_search_ties_break_on_n():
    res = search_by_angular_target(cilleruelo(), 50, 4, 5)
    zero = [n for n, d in res if d == 0]
    assert zero == sorted(zero) and zero[0] == 1
