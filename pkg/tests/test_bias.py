import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from _support import brute_force_bias
from skewsearch.bias import (closed_form_bias, expected_interval_length, expected_length_slope,
                             side_probabilities, solve_bias, uses_closed_form)

GRID = [round(0.05 * i, 2) for i in range(1, 20)]


def test_midpoint_needs_no_bias():
    for sigma in (1e-4, 1e-2, 1.0, 100.0):
        assert solve_bias(0.5, sigma) == 0.0


def test_small_sigma_example_matches_closed_form_and_brute_force():
    eps = solve_bias(0.1, 0.001)
    assert uses_closed_form(0.1, 0.001)
    assert eps == pytest.approx(0.001 * math.sqrt(2 * math.log(0.8 / (0.001 * math.sqrt(2 * math.pi)))))
    assert eps == pytest.approx(0.003396, abs=5e-6)
    assert eps == pytest.approx(brute_force_bias(0.1, 0.001, 1e-6), rel=0.05)


def test_huge_sigma_tests_the_midpoint():
    assert abs(0.1 + solve_bias(0.1, 100.0) - 0.5) <= 0.01


@given(st.floats(1e-3, 1 - 1e-3))
def test_midpoint_limit_for_large_sigma(u):
    assert abs(u + solve_bias(u, 100.0) - 0.5) <= 0.01


@given(st.floats(1e-3, 1 - 1e-3), st.floats(1e-5, 1e3))
def test_symmetry(u, sigma):
    assert solve_bias(u, sigma) == pytest.approx(-solve_bias(1 - u, sigma), abs=1e-9)


@given(st.floats(1e-3, 1 - 1e-3), st.floats(1e-5, 1e3))
def test_biased_point_stays_inside(u, sigma):
    t = u + solve_bias(u, sigma)
    assert 1e-6 - 1e-15 <= t <= 1 - 1e-6 + 1e-15


@pytest.mark.parametrize("sigma", [1e-4, 1e-3, 1e-2])
def test_bias_never_worse_than_unbiased(sigma):
    for u in GRID:
        eps = solve_bias(u, sigma)
        assert expected_interval_length(u, eps, sigma) <= expected_interval_length(u, 0.0, sigma) + 1e-12


def test_closed_form_branch_agrees_with_brute_force():
    hits = 0
    for sigma in (1e-4, 1e-3, 1e-2):
        for u in GRID:
            if not uses_closed_form(u, sigma):
                continue
            hits += 1
            ref = brute_force_bias(u, sigma, 1e-6)
            got = closed_form_bias(u, sigma)
            assert abs(got - ref) <= max(0.05 * abs(ref), 1e-4), (u, sigma)
    assert hits > 20


def test_closed_form_undefined_region():
    with pytest.raises(ValueError):
        closed_form_bias(0.45, 0.1)


def test_expected_length_examples():
    assert expected_interval_length(0.5, 0.0, 0.001) == pytest.approx(0.5, abs=1e-9)
    p1, p2 = side_probabilities(0.5, 0.0, 0.001)
    assert p1 == pytest.approx(0.5) and p2 == pytest.approx(0.5)
    # un-normalised truncation: mass escapes the window as sigma grows
    assert expected_interval_length(0.5, 0.0, 1e6) < 1e-6
    eps = solve_bias(0.1, 0.001)
    best = expected_interval_length(0.1, eps, 0.001)
    assert best < expected_interval_length(0.1, 0.0, 0.001)
    assert best < expected_interval_length(0.1, 0.4, 0.001)


@given(st.floats(0.02, 0.98), st.floats(1e-3, 10.0), st.floats(-0.5, 0.5))
def test_slope_formula_is_the_derivative(u, sigma, frac):
    eps = frac * min(u, 1 - u)
    h = 1e-6 * max(sigma, 1e-3)
    fd = (expected_interval_length(u, eps + h, sigma) - expected_interval_length(u, eps - h, sigma)) / (2 * h)
    assert expected_length_slope(u, eps, sigma) == pytest.approx(fd, rel=1e-4, abs=1e-6)


def test_slope_vanishes_at_the_optimum():
    for u, sigma in [(0.1, 0.05), (0.3, 0.2), (0.2, 1.0)]:
        eps = solve_bias(u, sigma)
        assert abs(expected_length_slope(u, eps, sigma)) < 1e-5


def test_fig5_sweep_is_monotone():
    pts = [0.1 + solve_bias(0.1, 0.001 * 5 ** n) for n in range(8)]
    assert all(b >= a - 1e-12 for a, b in zip(pts, pts[1:]))
    assert abs(pts[-1] - 0.5) <= 0.01


def test_invalid_arguments():
    for u in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            solve_bias(u, 0.1)
    with pytest.raises(ValueError):
        solve_bias(0.3, 0.0)


def test_vectorised_length():
    eps = np.linspace(-0.1, 0.5, 7)
    v = expected_interval_length(0.1, eps, 0.01)
    assert v.shape == (7,)
    assert np.allclose(v, [expected_interval_length(0.1, e, 0.01) for e in eps])
