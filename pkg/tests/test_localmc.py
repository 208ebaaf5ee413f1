import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import cross_term_at_zero, local_coincidence
from vacuum_bell_sim.errors import InputError, NumericalError
from vacuum_bell_sim.localmc import (
    GAUSSIAN,
    ZPF_INDEPENDENT,
    DetectorParams,
    PhaseModel,
    accumulate,
    analytic_targets,
    clamp_study,
    default_threads,
    estimate_observables,
    estimate_rates,
    estimate_single,
    interference_factors,
    phase_suppression_scan,
)
from vacuum_bell_sim.wick import make_rng
from vacuum_bell_sim.wwmodel import ExperimentConfig, rates_ww

N = 1_000_000
CLAMP = DetectorParams(clamp=True, zpf_background=ZPF_INDEPENDENT)
GRID8 = [j * math.pi / 8 for j in range(8)]


def within(value, target, se, k=4.0):
    return abs(value - target) <= k * se


# -- accumulation -----------------------------------------------------------------


def test_merge_matches_flat_statistics():
    def kernel(rng, n):
        return {"x": rng.standard_normal(n) * 3 + 1}

    n, block = 10_007, 1000
    res = accumulate(kernel, n, 5, 0, block_size=block, threads=3)["x"]
    flat = np.concatenate([kernel(make_rng(5, 0, b), min(block, n - b * block))["x"] for b in range(11)])
    assert res.mean == pytest.approx(flat.mean(), rel=1e-12)
    assert res.se == pytest.approx(flat.std(ddof=1) / math.sqrt(n), rel=1e-12)


def test_accumulate_rejects_non_finite():
    with pytest.raises(NumericalError):
        accumulate(lambda rng, n: {"x": np.full(n, np.inf)}, 2000, 0)


def test_trial_count_guard():
    with pytest.raises(InputError):
        estimate_rates(ExperimentConfig(), n_trials=999)
    with pytest.raises(InputError):
        estimate_rates(ExperimentConfig(), n_trials=1500.5)


def test_thread_env(monkeypatch):
    monkeypatch.setenv("VBS_THREADS", "3")
    assert default_threads() == 3
    monkeypatch.setenv("VBS_THREADS", "zero")
    with pytest.raises(InputError):
        default_threads()


def test_thread_count_does_not_change_results():
    cfg = ExperimentConfig(0.4, 1.0, 0.1)
    one = estimate_rates(cfg, n_trials=300_000, seed=8, threads=1)
    four = estimate_rates(cfg, n_trials=300_000, seed=8, threads=4)
    assert one == four


def test_seed_changes_results():
    cfg = ExperimentConfig()
    assert estimate_rates(cfg, n_trials=5000, seed=1) != estimate_rates(cfg, n_trials=5000, seed=2)


# -- unclamped estimator ------------------------------------------------------------


def test_zero_coupling_gives_exact_zero():
    r = estimate_rates(ExperimentConfig(0.3, 0.2, 0.0), n_trials=1000, seed=3)
    assert (r.r_a, r.r_b, r.r_ab) == (0.0, 0.0, 0.0)


def test_rates_at_equal_angles():
    r = estimate_rates(ExperimentConfig(0.6, 0.6, 0.1), n_trials=N, seed=11)
    assert within(r.r_ab, 0.005, r.se_ab)
    assert within(r.r_a, 0.005, r.se_a) and within(r.r_b, 0.005, r.se_b)
    assert min(r.se_a, r.se_b, r.se_ab) >= 0


def test_rates_on_8x8_grid():
    for j, theta in enumerate(GRID8):
        for k, phi in enumerate(GRID8):
            r = estimate_rates(ExperimentConfig(theta, phi, 0.1), n_trials=N, seed=100 + 8 * j + k)
            assert within(r.r_ab, local_coincidence(theta, phi, 0.1), r.se_ab), (theta, phi, r)
            assert r.r_ab <= min(r.r_a, r.r_b) + 4 * math.hypot(r.se_ab, max(r.se_a, r.se_b))


def test_covariance_and_product_estimators_agree():
    res = estimate_observables(ExperimentConfig(0.2, 1.0, 0.1), 200_000, 4)
    diff = res["r_ab_diff"]
    assert within(diff.mean, 0.0, diff.se)
    assert within(res["r_ab"].mean, res["r_ab_expanded"].mean, math.hypot(res["r_ab"].se, res["r_ab_expanded"].se))


def test_sample_plug_in_variant():
    cfg = ExperimentConfig(0.5, 0.1, 0.1)
    r = estimate_rates(cfg, n_trials=400_000, seed=21, plug_in="sample")
    assert within(r.r_ab, local_coincidence(0.5, 0.1, 0.1), r.se_ab)
    with pytest.raises(InputError):
        estimate_rates(cfg, n_trials=1000, plug_in="median")


def test_antithetic_keeps_mean_and_shrinks_single_error():
    cfg = ExperimentConfig(0.3, 0.8, 0.1)
    plain = estimate_rates(cfg, n_trials=200_000, seed=6)
    anti = estimate_rates(cfg, n_trials=200_000, seed=6, antithetic=True)
    assert anti.r_ab == plain.r_ab
    assert anti.se_a < plain.se_a / 3
    assert within(anti.r_a, 0.005, anti.se_a)


def test_interference_column_has_zero_mean():
    res = estimate_observables(ExperimentConfig(0.7, 0.7, 0.1), 200_000, 9)
    assert within(res["i_a1"].mean, 0.0, res["i_a1"].se)
    assert within(res["i_b1"].mean, 0.0, res["i_b1"].se)


def test_windowed_rates_keep_their_mean():
    cfg = ExperimentConfig(0.2, 0.2, 0.1)
    one = estimate_rates(cfg, DetectorParams(window_k=1), 200_000, 13)
    four = estimate_rates(cfg, DetectorParams(window_k=4), 200_000, 13)
    assert within(four.r_a, 0.005, four.se_a)
    assert within(four.r_ab, 0.005, four.se_ab)
    assert four.se_ab < 0.6 * one.se_ab


def test_clamp_flag_routed_to_study():
    with pytest.raises(InputError):
        estimate_rates(ExperimentConfig(), CLAMP, 1000)


def test_detector_params_validation():
    with pytest.raises(InputError):
        DetectorParams(window_k=0)
    with pytest.raises(InputError):
        DetectorParams(zpf_background="thermal")


@pytest.mark.parametrize("side", ["alice", "bob"])
def test_local_single_estimate(side):
    m = estimate_single(side, 1.1, 0.1, 200_000, 3, antithetic=True)
    assert within(m.mean, 0.005, m.se)
    with pytest.raises(InputError):
        estimate_single("nobody", 0.0, 0.1, 1000, 3)


@settings(max_examples=30, deadline=None)
@given(st.floats(-4, 4), st.floats(-4, 4), st.floats(0, 0.45), st.floats(0, 2 * math.pi))
def test_analytic_targets_are_half_of_ww(theta, phi, d_abs, chi):
    cfg = ExperimentConfig(theta, phi, d_abs * complex(math.cos(chi), math.sin(chi)))
    ww = rates_ww(cfg)
    local = analytic_targets(cfg)
    for w, t in zip(ww, local):
        assert w == 2 * t or (w == pytest.approx(2 * t, abs=1e-17))


def test_complex_coupling_only_modulus_enters():
    a = estimate_rates(ExperimentConfig(0.3, 0.5, 0.1j), n_trials=200_000, seed=31, antithetic=True)
    assert within(a.r_ab, local_coincidence(0.3, 0.5, 0.1), a.se_ab)
    assert within(a.r_a, 0.005, a.se_a)


# -- positivity clamp -------------------------------------------------------------


def test_clamp_requirements():
    with pytest.raises(InputError):
        clamp_study(ExperimentConfig(), DetectorParams(), 1000, 1)
    with pytest.raises(InputError):
        clamp_study(ExperimentConfig(), DetectorParams(clamp=True), 1000, 1)


def test_clamp_cannot_lower_mean():
    s = clamp_study(ExperimentConfig(0.3, 0.3, 0.1), CLAMP, 100_000, 2)
    assert s.clamped.r_a >= s.unclamped.r_a - 4 * s.unclamped.se_a
    assert s.clamped.r_b >= s.unclamped.r_b - 4 * s.unclamped.se_b
    assert 0.0 < s.activation_fraction < 1.0
    assert min(s.clamped.r_a, s.clamped.r_b, s.clamped.r_ab) >= 0


def test_clamp_without_pump():
    cfg = ExperimentConfig(0.0, 0.0, 0.0)
    s = clamp_study(cfg, CLAMP, 100_000, 5)
    # the net flux is symmetric about zero: its mean vanishes...
    assert within(s.unclamped.r_a, 0.0, s.unclamped.se_a)
    assert within(s.unclamped.r_b, 0.0, s.unclamped.se_b)
    # ...but its positive part does not; at D = 0 the clamped run is its own baseline
    assert s.clamped.r_a > 10 * s.clamped.se_a
    assert s.excess == (0.0, 0.0, 0.0)


def test_clamp_residual_background_reported():
    s = clamp_study(ExperimentConfig(0.2, 1.0, 0.1), CLAMP, 50_000, 6)
    assert s.baseline.r_ab > 0


def test_clamp_bias_survives_moderate_window():
    det = DetectorParams(window_k=100, clamp=True, zpf_background=ZPF_INDEPENDENT)
    s = clamp_study(ExperimentConfig(0.4, 0.4, 0.1), det, 5000, 7)
    assert s.clamped.r_a - s.unclamped.r_a > 4 * s.unclamped.se_a


def test_clamp_washes_out_for_long_window_and_strong_signal():
    det = DetectorParams(window_k=2000, clamp=True, zpf_background=ZPF_INDEPENDENT)
    s = clamp_study(ExperimentConfig(0.4, 0.4, 0.4), det, 2000, 8)
    assert within(s.clamped.r_a, s.unclamped.r_a, s.unclamped.se_a)
    assert s.activation_fraction < 0.05


def test_clamp_deterministic_across_threads():
    cfg = ExperimentConfig(0.1, 0.6, 0.1)
    assert clamp_study(cfg, CLAMP, 140_000, 4, threads=1) == clamp_study(cfg, CLAMP, 140_000, 4, threads=4)


# -- phase suppression ------------------------------------------------------------


def test_interference_factors_closed_form():
    theta, phi, d = 0.3, 0.9, 0.1
    c1, c2 = interference_factors(ExperimentConfig(theta, phi, d))
    assert c1 == pytest.approx(0.5j * math.sin(theta + phi), abs=1e-15)
    assert c2 == pytest.approx(-0.5j * d * d * math.sin(theta + phi), abs=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.floats(-4, 4), st.floats(-4, 4), st.floats(0, 0.45))
def test_cross_term_at_zero_spread(theta, phi, d):
    row = phase_suppression_scan(ExperimentConfig(theta, phi, d), [0.0])[0]
    assert abs(row.cross_term - cross_term_at_zero(theta, phi, d)) <= 1e-12


def test_cross_term_vanishes_at_full_turn():
    rows = phase_suppression_scan(ExperimentConfig(math.pi / 4, math.pi / 4, 0.1), [0.0, 2 * math.pi, 50.0, 1e4])
    assert abs(rows[1].cross_term) <= 1e-12 * 0.01
    assert abs(rows[3].cross_term) < 1e-3 * abs(rows[0].cross_term)
    assert len({r.signal_term for r in rows}) == 1
    assert rows[0].signal_term == pytest.approx(0.01)


def test_gaussian_phase_option():
    rows = phase_suppression_scan(ExperimentConfig(0.5, 0.5, 0.1), [0.0, 1.0, 10.0], GAUSSIAN)
    assert rows[1].cross_term == pytest.approx(rows[0].cross_term * math.exp(-0.5))
    assert abs(rows[2].cross_term) < 1e-20


@given(st.floats(0, 1e6), st.sampled_from(["uniform", "gaussian"]))
def test_suppression_factor_bounded(w, dist):
    assert abs(PhaseModel(w, dist).suppression_factor) <= 1.0
    assert PhaseModel(0.0, dist).suppression_factor == 1


def test_phase_model_validation():
    with pytest.raises(InputError):
        PhaseModel(-1.0)
    with pytest.raises(InputError):
        PhaseModel(1.0, "cauchy")
