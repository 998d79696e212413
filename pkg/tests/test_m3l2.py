import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from localtensor.instances import Instance, gen_max3lin2, gen_maxklin2
from localtensor.m3l2 import (
    LOOP_PREFACTOR, calibrate_loop_prefactor, clamp_fraction, cubic_bound, cubic_term,
    default_c0, exact_expected_objective, exact_expected_objective_by_outcomes,
    expansion_coefficients, expansion_report, linear_term, loop_sum, run_m3l2,
    scaling_experiment,
)

RING = Instance.from_terms(3, 6, [((0, 1, 2), 1), ((0, 3, 4), 1), ((1, 4, 5), 1), ((2, 3, 5), -1)])


def small_fixtures():
    out = [RING, Instance.from_terms(3, 3, [((0, 1, 2), 1.0)])]
    for seed in range(4):
        out.append(gen_max3lin2(6, 3, seed=seed))
        out.append(gen_max3lin2(6, 2, seed=seed))
        out.append(gen_max3lin2(8, 3, seed=seed, sign_mode="all_plus"))
    return out


def test_linear_term_reference_value():
    inst = gen_max3lin2(6, 3, seed=0)
    # D N / 16 per unit c0 for +-1/2 initial spins
    assert linear_term(inst, 0.1) == pytest.approx(0.1 * 3 * 6 / 16, abs=1e-15)


def test_linear_term_single_term():
    inst = Instance.from_terms(3, 3, [((0, 1, 2), 1.0)])
    coeffs = expansion_coefficients(inst)
    assert coeffs[1] == 3 / 16
    assert linear_term(inst, 1.0) == 3 / 16


@pytest.mark.parametrize("inst", small_fixtures())
def test_linear_and_quadratic_coefficients(inst):
    coeffs = expansion_coefficients(inst)
    assert coeffs[0] == pytest.approx(0.0, abs=1e-12)
    assert coeffs[1] == pytest.approx(linear_term(inst, 1.0), abs=1e-12)
    assert coeffs[2] == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("k", [2, 4, 5])
def test_linear_term_other_arities(k):
    inst = gen_maxklin2(10, k, k, seed=3)
    coeffs = expansion_coefficients(inst)
    assert coeffs[1] == pytest.approx(linear_term(inst, 1.0), abs=1e-12)


def test_zero_step_gives_zero():
    inst = gen_max3lin2(6, 3, seed=1)
    assert linear_term(inst, 0.0) == 0.0
    assert exact_expected_objective(inst, 0.0) == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("inst", small_fixtures())
def test_cubic_loop_formula_matches_oracle(inst):
    ct = cubic_term(inst, 0.2)
    assert ct.agree, (ct.oracle, ct.loop)


def test_loop_prefactor_calibration():
    assert calibrate_loop_prefactor(small_fixtures()) == pytest.approx(LOOP_PREFACTOR, rel=1e-12)
    assert LOOP_PREFACTOR == 1 / 384


def test_single_term_cubic():
    inst = Instance.from_terms(3, 3, [((0, 1, 2), 1.0)])
    assert loop_sum(inst) == 6.0
    assert cubic_term(inst, 0.5).oracle == pytest.approx(0.5**3 / 64, abs=1e-15)


def test_ring_fixture_loop_sum():
    assert loop_sum(RING) == 0.0
    plus = Instance.from_terms(3, 6, [(t, 1) for t in RING.terms])
    assert loop_sum(plus) == 48.0


def test_cubic_bound_random_instances():
    rng = np.random.default_rng(5)
    for _ in range(100):
        d = int(rng.integers(1, 7))
        n = 3 * int(rng.integers(max(2, d), 8))
        inst = gen_max3lin2(n, d, seed=int(rng.integers(2**31)))
        c0 = float(rng.uniform(-0.5, 0.5))
        loop = cubic_term(inst, c0, max_spins=0).loop
        assert abs(loop) <= cubic_bound(inst, c0) + 1e-12


@pytest.mark.parametrize("seed", range(3))
def test_clamped_objective_two_ways(seed):
    inst = gen_max3lin2(6, 3, seed=seed)
    for c0 in (0.1, 0.5, 1.2):
        assert exact_expected_objective(inst, c0) == pytest.approx(
            exact_expected_objective_by_outcomes(inst, c0), abs=1e-12)


def test_small_c0_objective_is_linear_plus_cubic():
    inst = gen_max3lin2(6, 3, seed=2)
    c0 = 0.05  # |v1| <= 1/2 + 3 * c0 / 4 < 1, so nothing clamps
    coeffs = expansion_coefficients(inst)
    poly = sum(a * c0**m for m, a in enumerate(coeffs))
    assert exact_expected_objective(inst, c0) == pytest.approx(poly, abs=1e-14)
    assert poly == pytest.approx(linear_term(inst, c0) + cubic_term(inst, c0).loop, abs=1e-14)


def test_run_matches_exact_expectation():
    inst = gen_max3lin2(6, 3, seed=0)
    c0 = 0.4
    mean, err = run_m3l2(inst, c0, 200_000, seed=11)
    assert abs(mean - exact_expected_objective(inst, c0)) < 4 * err


def test_run_zero_step_is_unbiased():
    inst = gen_max3lin2(30, 4, seed=0)
    mean, err = run_m3l2(inst, 0.0, 20_000, seed=3)
    assert abs(mean) < 4 * err


def test_run_deterministic():
    inst = gen_max3lin2(30, 4, seed=0)
    assert run_m3l2(inst, 0.1, 2500, 7) == run_m3l2(inst, 0.1, 2500, 7)
    assert run_m3l2(inst, 0.1, 2500, 7) != run_m3l2(inst, 0.1, 2500, 8)


def test_clamp_fraction_zero_below_two_over_d():
    # |v1| <= 1/2 + c0 * D / 4 <= 1 for c0 <= 2/D
    inst = gen_max3lin2(30, 4, seed=0)
    assert clamp_fraction(inst, 2 / 4 * 0.99, 2000, 1) == 0.0


def test_clamp_fraction_small_at_default_step():
    inst = gen_max3lin2(300, 16, seed=0)
    assert clamp_fraction(inst, 16**-0.75, 500, 1) < 1e-2


def test_clamp_fraction_monotone():
    inst = gen_max3lin2(60, 8, seed=0)
    fracs = [clamp_fraction(inst, c, 500, 2) for c in (0.1, 0.3, 0.6, 1.0, 2.0)]
    assert fracs == sorted(fracs) and fracs[-1] > 0


@settings(max_examples=25, deadline=None)
@given(alpha=st.floats(0.05, 1.0), d=st.integers(1, 64))
def test_default_c0(alpha, d):
    assert default_c0(d, alpha) == pytest.approx(alpha / d**0.75)


def test_mean_tracks_linear_term_at_large_degree():
    inst = gen_max3lin2(600, 16, seed=4)
    c0 = default_c0(16)
    mean, err = run_m3l2(inst, c0, 2000, seed=4)
    assert abs(mean - linear_term(inst, c0)) <= 0.25 * linear_term(inst, c0)


def test_expansion_report_fields():
    inst = gen_max3lin2(9, 3, seed=0)
    rep = expansion_report(inst, 0.2, 2000, 5)
    assert rep.predicted_total == pytest.approx(rep.linear_term + rep.cubic_term)
    assert rep.clamp_fraction == 0.0
    assert rep == expansion_report(inst, 0.2, 2000, 5)


def test_scaling_rows_and_determinism():
    rows = scaling_experiment([4, 8], 90, trials=500, seed=1)
    assert [r.d for r in rows] == [4, 8]
    assert all(r.c0 == default_c0(r.d) for r in rows)
    assert rows == scaling_experiment([4, 8], 90, trials=500, seed=1)
    assert rows[0].scaled == rows[0].mean / (4**0.25 * 90)


@pytest.mark.slow
def test_k5_variant_positive():
    inst = gen_maxklin2(1000, 5, 5, seed=0)
    c0 = default_c0(5)
    mean, err = run_m3l2(inst, c0, 40_000, seed=0)
    assert mean > 4 * err
    assert math.isfinite(mean)
