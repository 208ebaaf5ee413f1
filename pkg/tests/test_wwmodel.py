import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import qm_coincidence
from vacuum_bell_sim import fock
from vacuum_bell_sim.errors import InputError
from vacuum_bell_sim.wick import FieldExpr, VacuumSample, sample_vacuum_batch
from vacuum_bell_sim.wwmodel import (
    ExperimentConfig,
    coincidence_rate_ww,
    intensities_for_sample,
    make_ww_fields,
    mean_vacuum_intensity,
    rates_ww,
    signal_correlations,
    single_rate_ww_local,
    single_rates_ww,
)

angles = st.floats(-2 * math.pi, 2 * math.pi, allow_nan=False)
GRID16 = [(j * math.pi / 8, k * math.pi / 8) for j in range(4) for k in range(4)]


def amp(mode, conj=False, coeff=1.0):
    return FieldExpr.amplitude(mode, conj, coeff)


@pytest.fixture(scope="module")
def batch():
    cfg = ExperimentConfig(0.3, 0.9, 0.1)
    return cfg, intensities_for_sample(make_ww_fields(cfg), sample_vacuum_batch(2, 1_000_000, 2024))


def mc(x):
    x = np.asarray(x)
    return x.mean(), x.std(ddof=1) / math.sqrt(x.size)


def test_config_validation():
    with pytest.raises(InputError):
        ExperimentConfig(d=0.5)
    with pytest.raises(InputError):
        ExperimentConfig(theta=math.inf)
    with pytest.raises(InputError):
        ExperimentConfig(d=complex(math.nan, 0))
    assert ExperimentConfig(d=-0.2).d == -0.2 + 0j


def test_field_substitutions():
    f = make_ww_fields(ExperimentConfig(0.0, 0.0, 0.1))
    assert f.e_a0.allclose(amp(0))
    assert f.e_a1.allclose(amp(1, True, 0.1))
    assert f.e_b0.allclose(amp(1))
    assert f.e_b1.allclose(amp(0, True, 0.1))
    g = make_ww_fields(ExperimentConfig(math.pi / 2, 0.0, 0.1))
    assert g.e_a0.allclose(amp(1, False, 1j))


@settings(max_examples=30, deadline=None)
@given(angles, angles, st.floats(0, 0.4))
def test_field_structure(theta, phi, d):
    f = make_ww_fields(ExperimentConfig(theta, phi, d))
    for e in (f.e_a0, f.e_b0):
        assert all(not conj for _, conj in e.terms)
    for e in (f.e_a1, f.e_b1):
        assert all(conj for _, conj in e.terms)


@pytest.mark.parametrize("d, expected", [(0.1, 0.01), (0.0, 0.0)])
def test_single_rates(d, expected):
    r_a, r_b = single_rates_ww(ExperimentConfig(0.2, 1.3, d))
    assert r_a == pytest.approx(expected, abs=1e-15)
    assert r_b == pytest.approx(expected, abs=1e-15)


@settings(max_examples=40, deadline=None)
@given(angles, angles)
def test_single_rates_independent_of_angles(theta, phi):
    r_a, r_b = single_rates_ww(ExperimentConfig(theta, phi, 0.1))
    assert abs(r_a - 0.01) < 1e-15 and abs(r_b - 0.01) < 1e-15


def test_local_single_rate_rejects_bad_side():
    assert single_rate_ww_local("bob", 0.5, 0.1) == pytest.approx(0.01)
    with pytest.raises(InputError):
        single_rate_ww_local("eve", 0.0, 0.1)


@pytest.mark.parametrize(
    "theta, phi, expected",
    [(0.4, 0.4, 0.01), (math.pi / 4, 0.0, 0.005), (math.pi / 8, 3 * math.pi / 8, 0.005)],
)
def test_coincidence_examples(theta, phi, expected):
    assert coincidence_rate_ww(ExperimentConfig(theta, phi, 0.1)) == pytest.approx(expected, abs=1e-15)


@settings(max_examples=50, deadline=None)
@given(angles, angles, st.floats(0, 0.4))
def test_coincidence_closed_form(theta, phi, d):
    assert coincidence_rate_ww(ExperimentConfig(theta, phi, d)) == pytest.approx(qm_coincidence(theta, phi, d), abs=1e-15)


@settings(max_examples=40, deadline=None)
@given(angles, angles, angles)
def test_coincidence_rotation_invariant(theta, phi, delta):
    r = coincidence_rate_ww(ExperimentConfig(theta, phi, 0.1))
    assert r == pytest.approx(coincidence_rate_ww(ExperimentConfig(theta + delta, phi + delta, 0.1)), abs=1e-15)


@pytest.mark.parametrize("d", [0.1, 0.05, 0.07j])
def test_matches_fock_on_grid(d):
    for theta, phi in GRID16:
        cfg = ExperimentConfig(theta, phi, d)
        r_hs = fock.rates_hs(theta, phi, d)
        r_ww = rates_ww(cfg)
        assert abs(r_ww[2] - r_hs[2]) <= 5 * abs(d) ** 4
        assert abs(r_ww[0] - r_hs[0]) <= 1e-12 and abs(r_ww[1] - r_hs[1]) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(angles, angles, st.floats(0, 2 * math.pi))
def test_only_modulus_of_d_matters(theta, phi, chi):
    base = rates_ww(ExperimentConfig(theta, phi, 0.1))
    rot = rates_ww(ExperimentConfig(theta, phi, 0.1 * cmath.exp(1j * chi)))
    assert max(abs(x - y) for x, y in zip(base, rot)) < 1e-15


def test_signal_correlations_closed_form():
    theta, phi, d = 0.7, 0.2, 0.1
    x, y = signal_correlations(make_ww_fields(ExperimentConfig(theta, phi, d)))
    assert x == pytest.approx(0.5 * d * math.cos(theta - phi))
    assert y == pytest.approx(0.5 * d * math.cos(theta - phi))


# -- intensities --------------------------------------------------------------------


def test_zero_sample_intensities():
    ib = intensities_for_sample(make_ww_fields(ExperimentConfig()), VacuumSample(np.zeros(2, dtype=complex)))
    assert (ib.i_a0, ib.i_a1, ib.i_a2, ib.i_b0, ib.i_b1, ib.i_b2) == (0.0,) * 6


def test_sample_must_cover_modes():
    with pytest.raises(InputError):
        intensities_for_sample(make_ww_fields(ExperimentConfig()), VacuumSample(np.zeros(1, dtype=complex)))


def test_intensity_signs(batch):
    _, ib = batch
    for x in (ib.i_a0, ib.i_a2, ib.i_b0, ib.i_b2, ib.i_a, ib.i_b):
        assert np.all(x >= 0)
    assert np.any(ib.i_a1 < 0) and np.any(ib.i_b1 < 0)


def test_mean_vacuum_intensity_exact():
    for theta in (0.0, 0.4, 2.2):
        assert mean_vacuum_intensity(make_ww_fields(ExperimentConfig(theta, 0.1)).e_a0) == pytest.approx(0.5)


def test_mean_intensities(batch):
    _, ib = batch
    m, se = mc(ib.i_a0)
    assert abs(m - 0.5) <= 3 * se
    m, se = mc(ib.i_a2)
    assert abs(m - 0.005) <= 3 * se


def test_single_rate_from_intensities(batch):
    cfg, ib = batch
    r_a, r_b = single_rates_ww(cfg)
    for i1, i2, r in ((ib.i_a1, ib.i_a2, r_a), (ib.i_b1, ib.i_b2, r_b)):
        m, se = mc(2 * i2)
        assert abs(m - r) <= 4 * se
        m, se = mc(i1)
        assert abs(m) <= 4 * se


def test_gaussian_factorization(batch):
    cfg, ib = batch
    x, _ = signal_correlations(make_ww_fields(cfg))
    # influence function of the sample covariance
    d_a0, d_b2 = ib.i_a0 - ib.i_a0.mean(), ib.i_b2 - ib.i_b2.mean()
    m, se = mc(d_a0 * d_b2)
    assert abs(m - abs(x) ** 2) <= 4 * se
