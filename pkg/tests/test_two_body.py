import math

import numpy as np
import pytest

from superefimov.numerics import InvalidArgument, LogScalar
from superefimov.potential import PotentialModel
from superefimov.two_body import (MAX_ABS_LOG_Z, MuModel, NoResonance, WeightSpec,
                                  bs_radial_matrix, fit_mu_slope, load_solution,
                                  make_weight_spec, mu_of_z, one_minus_mu, save_solution,
                                  tune_resonance, two_body_grid, weight_g, xi, xi_between)


# --------------------------------------------------------------------------
# BS matrices
# --------------------------------------------------------------------------

def test_bs_matrix_symmetric_and_positive(potential):
    g = two_body_grid(potential, 200)
    for z in (0.0, 0.1, 2.0):
        m = bs_radial_matrix(potential, 1, z, g)
        assert np.array_equal(m, m.T)
        assert np.linalg.eigvalsh(m).min() >= -1e-12


def test_bs_matrix_rejects_l0(potential):
    with pytest.raises(InvalidArgument):
        bs_radial_matrix(potential, 0, 0.1, two_body_grid(potential, 64))


def test_mu_decreasing_between_005_and_01(solution):
    assert mu_of_z(solution, 0.1) < mu_of_z(solution, 0.05) < 1.0


def test_diagonal_correction_converges_faster(potential):
    """The corrected rule reaches the n=1600 value far sooner than plain Nystrom."""
    def top(n, corrected):
        g = two_body_grid(potential, n)
        return np.linalg.eigvalsh(bs_radial_matrix(potential, 1, 0.0, g, corrected))[-1]
    ref = top(1600, True)
    assert abs(top(400, True) - ref) < 0.1 * abs(top(400, False) - ref)


# --------------------------------------------------------------------------
# tuning
# --------------------------------------------------------------------------

def test_tuning_normalizes_top_eigenvalue(solution):
    assert solution.mu0 == pytest.approx(1.0, abs=1e-10)
    m = solution.tuned_matrix(0.0)
    assert np.linalg.eigvalsh(m)[-1] == pytest.approx(1.0, abs=1e-10)


def test_eta0_normalization_and_sign(solution):
    g = solution.grid
    assert 2 * math.pi * np.dot(g.weights, solution.eta0**2) == pytest.approx(1.0, rel=1e-12)
    assert solution.eta0.sum() > 0


def test_c0_definition(solution):
    g = solution.grid
    c0 = np.dot(g.weights * g.nodes, solution.sqrt_v * solution.eta0)
    assert solution.c0_squared == pytest.approx(c0**2, rel=1e-13)
    assert solution.c0_squared > 0


def test_coupling_scaling(potential):
    g = two_body_grid(potential, 400)
    base = tune_resonance(potential, g).lambda_star
    scaled = tune_resonance(potential.with_coupling(2.5), g).lambda_star
    assert scaled == pytest.approx(base / 2.5, rel=1e-12)


def test_grid_refinement(potential):
    a = tune_resonance(potential, two_body_grid(potential, 800)).lambda_star
    b = tune_resonance(potential, two_body_grid(potential, 1600)).lambda_star
    assert abs(a - b) / b < 1e-6


def test_no_resonance_for_vanishing_potential():
    pot = PotentialModel("tabulated", table_r=(0.0, 1.0), table_v=(0.0, 0.0))
    with pytest.raises(NoResonance):
        tune_resonance(pot, two_body_grid(pot, 64))


def test_top_eigenvalue_nondegenerate(solution):
    for z in (0.0, 1e-3, 0.1):
        top2 = np.linalg.eigvalsh(solution.tuned_matrix(z))[-2:]
        assert top2[1] - top2[0] > 0.1


# --------------------------------------------------------------------------
# mu(z)
# --------------------------------------------------------------------------

def test_mu_zero(solution):
    assert 1.0 - one_minus_mu(solution, 0.0) == pytest.approx(1.0, abs=1e-10)


def test_mu_negative_z(solution):
    with pytest.raises(InvalidArgument):
        mu_of_z(solution, -1.0)


def test_mu_table_strictly_decreasing(solution):
    mus = [row[1] for row in solution.mu_table]
    oms = [row[2] for row in solution.mu_table]
    assert np.all(np.diff(oms) > 0)
    assert np.all(np.diff(mus) <= 0)


def test_mu_slope_matches_c0(solution):
    a = solution.slope_fit
    assert a / (0.5 * math.pi * solution.c0_squared) == pytest.approx(1.0, abs=0.03)


def test_slope_fit_recovers_synthetic_coefficients(solution, monkeypatch):
    import superefimov.two_body as tb
    monkeypatch.setattr(tb, "one_minus_mu",
                        lambda sol, z: -(2.0 * z**2 * math.log(z) - 0.7 * z**2))
    saved, solution.mu0 = solution.mu0, 1.0
    try:
        a, b = fit_mu_slope(solution)
    finally:
        solution.mu0 = saved
    assert a == pytest.approx(2.0, rel=1e-9) and b == pytest.approx(-0.7, rel=1e-6)


def test_eta_rate(solution):
    """||eta(z) - eta(0)|| <= C z^2 |ln z| with one C across two decades."""
    v0 = np.linalg.eigh(solution.tuned_matrix(0.0))[1][:, -1]
    ratios = []
    for z in (1e-4, 1e-3, 1e-2):
        v = np.linalg.eigh(solution.tuned_matrix(z))[1][:, -1]
        v *= np.sign(v @ v0)
        ratios.append(np.linalg.norm(v - v0) / (z * z * abs(math.log(z))))
    assert max(ratios) / min(ratios) < 3.0


# --------------------------------------------------------------------------
# weight and xi
# --------------------------------------------------------------------------

def test_weight_vanishes_above_cutoff(solution):
    spec = make_weight_spec(solution, 1e-4, 0.2)
    assert weight_g(spec, 0.4).sign == 0
    assert weight_g(spec, 0.19).sign == 1


def test_weight_mode_cross_check(solution):
    num = make_weight_spec(solution, 1e-4, 0.2, "numeric")
    asy = make_weight_spec(solution, 1e-4, 0.2, "asymptotic")
    a = weight_g(num, 1e-4).to_float()
    b = weight_g(asy, 1e-4).to_float()
    assert abs(a - b) / b < 0.05


def test_weight_spec_validation(solution):
    with pytest.raises(InvalidArgument):
        make_weight_spec(solution, 1e-4, 0.3)
    with pytest.raises(InvalidArgument):
        make_weight_spec(solution, 0.21, 0.2)
    with pytest.raises(InvalidArgument):
        make_weight_spec(solution, LogScalar.from_log(-2 * MAX_ABS_LOG_Z), 0.2)


def test_auto_mode_switch(solution):
    assert make_weight_spec(solution, 1e-5, 0.2).mode == "numeric"
    assert make_weight_spec(solution, 1e-7, 0.2).mode == "asymptotic"


@pytest.mark.parametrize("mode,z", [("numeric", 1e-4), ("numeric", 1e-2),
                                    ("asymptotic", 1e-8), ("asymptotic", 1e-150)])
def test_envelope_sandwich(solution, mode, z):
    spec = make_weight_spec(solution, z, 0.2, mode)
    for s in np.geomspace(z * 1e-2, 0.2, 60):
        w2 = s * s + z * z
        g2 = weight_g(spec, s).to_float() ** 2
        h = g2 * w2 * abs(math.log(w2))
        assert spec.delta_prime * (1 - 1e-9) <= h <= spec.delta * (1 + 1e-9)


def test_envelope_constants_approach_limit(solution):
    lim = 4 / (math.pi * solution.c0_squared)
    gaps = []
    for r in (0.2, 0.05, 0.0125):
        spec = make_weight_spec(solution, 1e-5, r, "numeric")
        gaps.append(max(spec.delta - lim, lim - spec.delta_prime))
    assert gaps[0] > gaps[1] > gaps[2] > 0


def test_mu_model_range_and_monotone(solution):
    model = MuModel(solution.mu_table)
    x = np.linspace(model.ln_w[0], model.ln_w[-1], 500)
    assert np.all(np.diff(model.log_one_minus_mu(x)) > 0)
    with pytest.raises(InvalidArgument):
        model.log_one_minus_mu(model.ln_w[-1] + 1.0)


def test_mu_model_interpolation_accuracy(solution):
    model = MuModel(solution.mu_table)
    for w in (3e-6, 4e-4, 0.013, 0.11, 0.33):
        exact = math.log(one_minus_mu(solution, w))
        assert float(model.log_one_minus_mu(math.log(w))) == pytest.approx(exact, abs=1e-3)


def test_xi_unit_weight():
    spec = WeightSpec("unit", 0.2, math.log(1e-6), 1.0, 1.0, 1.0)
    for s in (1e-3, 0.05, 0.2):
        assert xi(spec, s) == pytest.approx(0.5 * s * s, rel=1e-12)


def test_xi_rejects_above_cutoff(solution):
    spec = make_weight_spec(solution, 1e-8, 0.2)
    with pytest.raises(InvalidArgument):
        xi(spec, 0.25)


def test_xi_monotone_and_additive(solution):
    for z in (1e-4, 1e-30):
        spec = make_weight_spec(solution, z, 0.2)
        ss = [z * 0.5, z * 3, 1e-3 if z < 1e-3 else 2e-3, 0.05, 0.2]
        vals = [xi(spec, s) for s in ss]
        assert np.all(np.diff(vals) > 0)
        for s1, s2 in ((ss[1], ss[3]), (ss[2], ss[4])):
            diff = xi(spec, s2) - xi(spec, s1)
            assert xi_between(spec, s1, s2) == pytest.approx(diff, rel=1e-10)


def test_xi_closed_form_primitive(solution):
    """Asymptotic mode at z = 1e-100 against (delta/2) ln|ln(t^2+z^2)| evaluated at the ends."""
    lz = -100 * math.log(10)
    spec = make_weight_spec(solution, LogScalar.from_log(lz), 0.2, "asymptotic")
    d = 0.5 * (spec.delta + spec.delta_prime)
    ref = 0.5 * d * (math.log(2 * abs(lz)) - math.log(-math.log(0.04 + math.exp(2 * lz))))
    assert xi(spec, 0.2) == pytest.approx(ref, rel=0.02)


def test_xi_grows_with_decreasing_z(solution):
    vals = [xi(make_weight_spec(solution, LogScalar.from_log(lz), 0.2), 0.2)
            for lz in (-10.0, -100.0, -1000.0, -1e5)]
    assert np.all(np.diff(vals) > 0)


# --------------------------------------------------------------------------
# persistence
# --------------------------------------------------------------------------

def test_solution_roundtrip(solution, tmp_path):
    path = tmp_path / "sol.json"
    save_solution(solution, path)
    back = load_solution(path)
    assert back.lambda_star == solution.lambda_star
    assert back.c0_squared == solution.c0_squared
    assert back.mu0 == solution.mu0
    assert np.array_equal(back.eta0, solution.eta0)
    assert np.array_equal(back.grid.nodes, solution.grid.nodes)
    assert [tuple(r) for r in back.mu_table] == [tuple(r) for r in solution.mu_table]
    assert back.fingerprint == solution.fingerprint
    assert all(float(f"{x:.17g}") == x for x in back.eta0)
