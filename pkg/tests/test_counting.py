import math

import numpy as np
import pytest

from superefimov.counting import (CountingScan, InsufficientData, closed_form_count,
                                  count_above, double_log, double_log_fit, count_sandwich,
                                  singular_count, weyl_property_suite)
from superefimov.numerics import InvalidArgument


def test_count_above_examples():
    assert count_above([], 1.0) == 0
    assert count_above([2.0, 1.0, 0.5], 1.0) == 1
    xi = 10.0
    lam = xi / (0.5 * math.pi + math.pi * np.arange(10))
    assert lam[2] == pytest.approx(1.2732, abs=1e-4) and lam[3] == pytest.approx(0.9095, abs=1e-4)
    assert count_above(lam, 1.0) == 3


def test_count_above_rejects_nonpositive_threshold():
    with pytest.raises(InvalidArgument):
        count_above([1.0], 0.0)
    with pytest.raises(InvalidArgument):
        singular_count(np.eye(2), -1.0)


def test_count_right_continuity():
    ev = np.array([3.0, 2.0, 1.0, 0.5])
    for a in (0.7, 1.5, 2.5):
        base = count_above(ev, a)
        assert count_above(ev, a + 1e-9) == base and count_above(ev, a - 1e-9) == base


def test_closed_form_count_matches_formula():
    rng = np.random.default_rng(5)
    for _ in range(200):
        xi = rng.uniform(0.01, 50.0)
        a = rng.uniform(0.05, 5.0)
        lam = xi / (0.5 * math.pi + math.pi * np.arange(2000))
        assert closed_form_count(xi, a) == count_above(lam, a)


def test_scaling_covariance():
    rng = np.random.default_rng(1)
    ev = rng.standard_normal(50)
    for c in (0.3, 2.0, 7.5):
        for a in (0.1, 0.5, 1.0):
            assert count_above(c * ev, c * a) == count_above(ev, a)


def test_singular_count_examples():
    assert singular_count(np.diag([3.0, -2.0, 0.1]), 1.0) == 2


def test_singular_count_transpose_and_hs_bound():
    rng = np.random.default_rng(2)
    for _ in range(100):
        a = rng.standard_normal((rng.integers(3, 15), rng.integers(3, 15)))
        t = rng.uniform(0.1, 3.0)
        n = singular_count(a, t)
        assert n == singular_count(a.T, t)
        assert n <= np.sum(a * a) / t**2


def test_weyl_examples():
    a1, a2 = np.diag([3.0, 0.0]), np.diag([0.0, 3.0])
    assert count_above(np.linalg.eigvalsh(a1 + a2), 2.0) == 2
    assert count_above(np.linalg.eigvalsh(a1), 1.0) + count_above(np.linalg.eigvalsh(a2), 1.0) == 2
    rng = np.random.default_rng(4)
    a = rng.standard_normal((8, 8))
    for t in (0.5, 1.0, 2.0):
        assert singular_count(a @ (2 * np.eye(8)), t) == singular_count(a, t / 2)


def test_weyl_suite_passes_and_is_deterministic():
    r1 = weyl_property_suite(200, 20, seed=7)
    r2 = weyl_property_suite(200, 20, seed=7)
    assert r1["passed"] and r1["total_violations"] == 0
    assert r1 == r2


def test_weyl_suite_rejects_zero_trials():
    with pytest.raises(InvalidArgument):
        weyl_property_suite(0)


def test_double_log():
    assert double_log(1e-10) == pytest.approx(math.log(2 * 10 * math.log(10)))
    assert double_log(log_z=-1e5) == pytest.approx(math.log(2e5))
    with pytest.raises(InvalidArgument):
        double_log(2.0)


def _scan_from_L(L, counts, a=1.0, target=None):
    return CountingScan([-0.5 * math.exp(x) for x in L], a, list(counts), target=target)


def test_fit_synthetic_recovery():
    L = np.linspace(3, 8, 60)
    scan = _scan_from_L(L, np.round(0.8488 * L).astype(int), target=0.8488)
    fit = double_log_fit(scan)
    assert fit["slope"] == pytest.approx(0.8488, abs=0.1)
    assert fit["method"] == "staircase"
    raw = double_log_fit(scan, "raw")
    assert raw["slope"] == pytest.approx(0.8488, abs=0.1)


def test_fit_insufficient_data():
    with pytest.raises(InsufficientData):
        double_log_fit(_scan_from_L([3, 4, 5, 6], [1, 2, 3, 4]))
    with pytest.raises(InsufficientData):
        double_log_fit(_scan_from_L([3, 4, 5, 6, 7], [1, 1, 1, 2, 2]), "staircase")


def test_fit_falls_back_to_raw_with_one_step():
    fit = double_log_fit(_scan_from_L(np.linspace(3, 6, 10), [0] * 5 + [2] * 5))
    assert fit["method"] == "raw"


def test_scan_invariants():
    scan = _scan_from_L(np.linspace(3, 8, 12), [0, 0, 1, 1, 1, 2, 2, 3, 3, 3, 4, 4])
    assert scan.monotone()
    assert np.all(np.diff(scan.L_values) > 0)


def test_closed_form_slope(c0_squared):
    """Counts of the model spectrum with xi = (delta/2)(L - L_r) have slope 2/(pi^2 c0^2 a)."""
    d = 4 / (math.pi * c0_squared)
    L = np.linspace(4, 28, 120)
    lr = math.log(-math.log(0.04))
    counts = [closed_form_count(0.5 * d * (x - lr), 1.0) for x in L]
    fit = double_log_fit(_scan_from_L(L, counts))
    assert fit["slope"] == pytest.approx(2 / (math.pi**2 * c0_squared), rel=0.10)


def test_count_sandwich_trivial_and_perturbed():
    rng = np.random.default_rng(9)
    xi = 12.0
    ref = np.concatenate([xi / (0.5 * math.pi + math.pi * np.arange(300))])
    ref = np.concatenate([ref, -ref])
    assert count_sandwich(ref, ref, 1.0, 0.01, 0)["passed"]
    q, _ = np.linalg.qr(rng.standard_normal((600, 600)))
    base = q @ np.diag(ref) @ q.T
    noise = rng.standard_normal((600, 600))
    noise = noise + noise.T
    noise /= np.linalg.norm(noise, 2)
    spike = rng.standard_normal((600, 2))
    k = base + 0.01 * noise + 3.0 * spike @ spike.T / 600
    ev = np.linalg.eigvalsh(k)
    rep = count_sandwich(ref, ev, 1.0, 0.01, 2)
    assert rep["passed"]
    assert abs(count_above(ev, 1.0) - count_above(ref, 1.0)) <= 2


def test_count_sandwich_rejects_large_epsilon():
    with pytest.raises(InvalidArgument):
        count_sandwich([1.0], [1.0], 1.0, 0.6, 0)
