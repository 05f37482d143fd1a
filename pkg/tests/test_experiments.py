import math

import numpy as np
import pytest

from config import build_config
from errors import DomainError, ExperimentError
from experiments import (RATE_FLOOR, ErrorTable, MomentRow, RateFit, convolution_study, coupled_errors,
                         evolution_snapshot, fit_rate, holder_study, moment_study, moment_variation,
                         strong_error_study, verify_eq_ineq)
from noise import build_path_table
from schemes import SPLITTING_KINDS, SchemeKind, run_trajectory
from spatial import build_operator, forward_transform


def small_error_config(**overrides):
    values = dict(n_modes=16, T=2.0 ** -3, tau_list='2^-4,2^-5,2^-6', tau_ref=2.0 ** -8, n_samples=4)
    values.update(overrides)
    return build_config('strong-error', overrides=values)


# --- rate fitting ---------------------------------------------------------

@pytest.mark.parametrize('rate', [0.5, 0.25])
def test_fit_exact_power_law(rate):
    taus = [2.0 ** -k for k in range(3, 10)]
    fit = fit_rate([(tau, tau ** rate) for tau in taus])
    assert fit.slope == pytest.approx(rate, abs=1e-12)
    assert fit.intercept == pytest.approx(0.0, abs=1e-10)
    assert fit.ci_halfwidth < 1e-10


def test_fit_noisy_data():
    rng = np.random.default_rng(5)
    taus = [2.0 ** -k for k in range(1, 11)]
    points = [(tau, 0.3 * tau ** 0.5 * (1.0 + 0.05 * rng.standard_normal())) for tau in taus]
    fit = fit_rate(points)
    assert 0.45 <= fit.slope <= 0.55
    low, high = fit.interval
    assert low < fit.slope < high


def test_fit_rejects_bad_input():
    with pytest.raises(DomainError):
        fit_rate([(0.1, 0.1), (0.05, 0.07)])
    with pytest.raises(DomainError):
        fit_rate([(0.1, 0.1), (0.05, 0.0), (0.025, 0.03)])


# --- inequality scan --------------------------------------------------------

def test_ineq_trivial_point():
    scan = verify_eq_ineq(1, [0.0])
    assert scan.constants == (0.0, 0.0)


def test_ineq_small_n_is_finite():
    scan = verify_eq_ineq(2, np.linspace(0.0, 20.0, 2001))
    assert 0.0 < scan.sup_weighted < 1.0
    assert 0.0 < scan.argmax_weighted[1] < 20.0


def test_ineq_full_scan():
    scan = verify_eq_ineq(10 ** 4, np.logspace(-6, 3, 10 ** 4))
    assert math.isfinite(scan.sup_weighted) and math.isfinite(scan.sup_normalized)
    assert scan.sup_weighted <= 0.5
    assert scan.sup_normalized <= 0.5


def test_ineq_ceiling_is_enforced():
    with pytest.raises(ExperimentError):
        verify_eq_ineq(50, np.linspace(0.0, 5.0, 100), ceiling=1e-3)
    with pytest.raises(DomainError):
        verify_eq_ineq(0, [1.0])
    with pytest.raises(DomainError):
        verify_eq_ineq(5, [-1.0])


# --- strong error -------------------------------------------------------------

def test_reference_against_itself_is_zero():
    cfg = small_error_config(kinds='LTexact')
    errors = coupled_errors(cfg, trajectory=0, taus=(cfg.tau_ref, 2.0 ** -6))
    assert errors[(SchemeKind.LT_EXACT, cfg.tau_ref)] == 0.0
    assert errors[(SchemeKind.LT_EXACT, 2.0 ** -6)] > 0.0


def test_strong_error_table_shape():
    cfg = small_error_config()
    table = strong_error_study(cfg)
    assert len(table.rows) == 9
    assert set(table.fits) == set(SPLITTING_KINDS)
    for row in table.rows:
        assert row.n_samples == 4
        assert row.rms_error > 0
        assert row.stderr >= 0
    assert not table.blowups


def test_strong_error_is_deterministic_and_job_independent():
    cfg = small_error_config(kinds='LTexact,LTimp')
    serial = strong_error_study(cfg, jobs=1)
    again = strong_error_study(cfg, jobs=1)
    parallel = strong_error_study(cfg, jobs=2)
    assert serial.rows == again.rows == parallel.rows


def test_sup_mode_dominates_terminal():
    terminal = strong_error_study(small_error_config(kinds='LTexpo'))
    sup = strong_error_study(small_error_config(kinds='LTexpo', error_mode='sup'))
    for a, b in zip(terminal.rows, sup.rows):
        assert b.rms_error >= a.rms_error
    assert sup.error_mode == 'sup'


def test_hat_kinds_are_measured():
    table = strong_error_study(small_error_config(kinds='LTexactHat,LTimpHat'))
    assert {row.kind for row in table.rows} == {SchemeKind.LT_EXACT_HAT, SchemeKind.LT_IMP_HAT}
    assert all(math.isfinite(row.rms_error) for row in table.rows)


def test_euler_maruyama_blowup_is_recorded_not_fitted():
    cfg = small_error_config(kinds='LTexact,EulerMaruyama', initial='constant', amplitude=10.0)
    table = strong_error_study(cfg)
    assert SchemeKind.EULER_MARUYAMA not in table.fits
    em_rows = table.rows_for(SchemeKind.EULER_MARUYAMA)
    assert sum(table.blowups.values()) > 0
    assert any(row.n_samples < cfg.n_samples for row in em_rows)


def test_rate_floor_verdicts():
    slow = RateFit(0.10, 0.0, 0.02, ())
    table = ErrorTable(rows=[], fits={SchemeKind.LT_EXPO: slow, SchemeKind.LT_EXPO_HAT: slow})
    assert table.floor == RATE_FLOOR
    assert table.meets_floor(SchemeKind.LT_EXPO) is False
    assert table.meets_floor(SchemeKind.LT_EXPO_HAT) is None
    assert table.meets_floor(SchemeKind.LT_IMP) is None
    table.floor = 0.11
    assert table.meets_floor('LTexpo') is True


def test_rate_floor_is_lowered_by_alpha():
    table = strong_error_study(small_error_config(kinds='LTexact', alpha=0.2))
    assert table.floor == pytest.approx(RATE_FLOOR - 0.2)
    fit = table.fits[SchemeKind.LT_EXACT]
    assert table.meets_floor(SchemeKind.LT_EXACT) is (fit.interval[1] >= table.floor)
    assert strong_error_study(small_error_config(kinds='LTexact')).floor == RATE_FLOOR


# --- moments ------------------------------------------------------------------

def test_moment_variation():
    rows = [MomentRow(SchemeKind.LT_EXACT, tau, 2.0, value, 0.0, 10)
            for tau, value in [(0.1, 2.0), (0.05, 2.2), (0.025, 2.1)]]
    assert moment_variation(rows, SchemeKind.LT_EXACT) == pytest.approx(0.1)
    rows.append(MomentRow(SchemeKind.EULER_MARUYAMA, 0.1, 2.0, math.inf, 1.0, 10))
    assert moment_variation(rows, 'EulerMaruyama') == math.inf
    with pytest.raises(DomainError):
        moment_variation(rows, SchemeKind.LT_IMP)


def test_moment_study_blowup_contrast_small():
    cfg = build_config('moments', overrides=dict(n_modes=16, T=0.5, tau_list='2^-4', n_samples=20,
                                                 initial='constant', amplitude=10.0))
    rows = {row.kind: row for row in moment_study(cfg)}
    assert rows[SchemeKind.EULER_MARUYAMA].blowup_fraction > 0.9
    assert rows[SchemeKind.EULER_MARUYAMA].sup_moment == math.inf
    for kind in SPLITTING_KINDS:
        assert rows[kind].blowup_fraction == 0.0
        assert math.isfinite(rows[kind].sup_moment)
        assert rows[kind].sup_moment >= 100.0   # initial ‖x₀‖_E² = 100


# --- evolution ----------------------------------------------------------------

def test_evolution_v_follows_scalar_ode():
    cfg = build_config('simulate', overrides=dict(n_modes=8, gamma1=0.0, amplitude=0.0, noise=False,
                                                  tau='2^-15', T=1.0))
    evolution = evolution_snapshot(cfg)
    v_final = evolution.v[-1]
    np.testing.assert_allclose(v_final, v_final[0], atol=1e-14)
    tau, gamma2, beta = cfg.tau, cfg.gamma2, cfg.beta
    n = cfg.n_steps(tau)
    discrete = beta * tau * sum(math.exp(-k * gamma2 * tau) for k in range(1, n + 1))
    assert v_final[0] == pytest.approx(discrete, abs=1e-10)
    closed = beta / gamma2 * (1.0 - math.exp(-gamma2 * cfg.T))
    assert v_final[0] == pytest.approx(closed, abs=1e-6)


def test_evolution_heat_dominated_decay():
    cfg = build_config('simulate', overrides=dict(n_modes=32, noise=False, tau='2^-8', T=0.25))
    evolution = evolution_snapshot(cfg)
    amplitude = np.abs(forward_transform(evolution.u)[:, 2])
    assert amplitude[-1] < amplitude[0]
    assert evolution.u.shape == (len(evolution.times), 32)
    np.testing.assert_array_equal(evolution_snapshot(cfg).u, evolution.u)


def test_same_path_shares_first_v_update():
    cfg = build_config('simulate', overrides=dict(n_modes=16, tau='2^-6', T=2.0 ** -3))
    op = build_operator(cfg.grid)
    table = build_path_table(cfg.seed, cfg.tau, cfg.n_steps(cfg.tau), op)
    exact = run_trajectory(cfg.scheme_config(SchemeKind.LT_EXACT, cfg.tau, snapshot_stride=1), path=table)
    expo = run_trajectory(cfg.scheme_config(SchemeKind.LT_EXPO, cfg.tau, snapshot_stride=1), path=table)
    np.testing.assert_array_equal(exact.states[1].v.values, expo.states[1].v.values)
    assert not np.allclose(exact.states[1].u.values, expo.states[1].u.values)


# --- desk-scale acceptance runs ------------------------------------------------

@pytest.mark.slow
def test_desk_scale_strong_rates():
    cfg = build_config('strong-error')
    table = strong_error_study(cfg, jobs=4)
    for kind in SPLITTING_KINDS:
        assert table.fits[kind].slope >= 0.22
        errors = [row.rms_error for row in table.rows_for(kind)]
        for coarse, fine in zip(errors, errors[1:]):
            assert fine <= coarse * (1.0 + cfg.monotone_slack)
    assert 0.4 <= table.fits[SchemeKind.LT_EXACT].slope <= 0.6
    by_tau = {row.tau: row.rms_error for row in table.rows_for(SchemeKind.LT_EXACT)}
    mid_ratio = (by_tau[2.0 ** -6] / by_tau[2.0 ** -9]) ** (1.0 / 3.0)
    assert 1.25 <= mid_ratio <= 1.6


@pytest.mark.slow
def test_desk_scale_moment_uniformity():
    cfg = build_config('moments', overrides=dict(kinds='LTexact,LTexpo,LTimp'))
    rows = moment_study(cfg, jobs=4)
    for kind in SPLITTING_KINDS:
        assert moment_variation(rows, kind) < cfg.moment_slack
    assert all(row.blowup_fraction == 0.0 for row in rows)


@pytest.mark.slow
def test_desk_scale_blowup_contrast():
    cfg = build_config('moments', overrides=dict(tau_list='2^-4', n_samples=100,
                                                 initial='constant', amplitude=10.0))
    rows = {row.kind: row for row in moment_study(cfg, jobs=4)}
    assert rows[SchemeKind.EULER_MARUYAMA].blowup_fraction > 0.9
    for kind in SPLITTING_KINDS:
        assert rows[kind].blowup_fraction == 0.0


@pytest.mark.slow
def test_moments_agree_across_kinds_at_small_step():
    cfg = build_config('moments', overrides=dict(gamma1=0.08, gamma2=0.064, beta=0.7, n_modes=64,
                                                 tau_list='2^-10', n_samples=20))
    values = [row.sup_moment for row in moment_study(cfg, jobs=4)]
    assert all(math.isfinite(v) for v in values)
    assert max(values) / min(values) < 3.0


@pytest.mark.slow
def test_holder_exponent():
    cfg = build_config('strong-error', overrides=dict(n_modes=64, tau_ref=2.0 ** -12, n_samples=16))
    study = holder_study(cfg, jobs=4)
    assert study.fit.slope >= 0.22


@pytest.mark.slow
def test_stochastic_convolution_is_stable_under_halving():
    cfg = build_config('moments', overrides=dict(n_modes=32, T=1.0, tau_list='2^-4,2^-5', n_samples=1000))
    (_, coarse), (_, fine) = convolution_study(cfg, jobs=4)
    assert math.isfinite(coarse) and math.isfinite(fine)
    assert abs(fine / coarse - 1.0) < 0.05
