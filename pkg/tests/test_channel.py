import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thzbeam.channel import (AOA_AZ, AOA_EL, AOD_AZ, AOD_EL, PATHLOSS, PHASE, SPEED_OF_LIGHT, TOA, ArrayGeometry,
                             BandConfig, ChannelFactorSet, FrequencyChannel, PathFactors, Region, ScenarioConfig,
                             pathloss, pilot_estimate, sample_scenario, steering_vector, synthesize_channel,
                             wrap_angle)
from thzbeam.errors import ConfigError, DelayWindowError, DomainError

from conftest import small_scenario


# -- pathloss ---------------------------------------------------------------

def test_pathloss_at_one_metre_is_free_space_reference():
    assert pathloss(1.0, 2.0, 0.0, 100e9) == pytest.approx(SPEED_OF_LIGHT / (4 * math.pi * 100e9), rel=1e-12)


def test_pathloss_doubling_distance_halves_amplitude():
    assert pathloss(2.0, 2.0, 0.0) / pathloss(1.0, 2.0, 0.0) == pytest.approx(0.5, rel=1e-12)


def test_pathloss_with_absorption_matches_hand_formula():
    d, kappa, f = 100.0, 0.01, 100e9
    expected = (SPEED_OF_LIGHT / (4 * math.pi * f)) / d * math.exp(-kappa * d / 2)
    assert pathloss(d, 2.0, kappa, f) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("d", [0.0, -1.0, float("nan")])
def test_pathloss_rejects_nonpositive_distance(d):
    with pytest.raises(DomainError):
        pathloss(d)


@given(st.floats(0.1, 1e3), st.floats(0.1, 1e3), st.floats(1.5, 4.0), st.floats(0, 0.05))
def test_pathloss_decreases_with_distance(d1, d2, n, kappa):
    lo, hi = sorted((d1, d2))
    assert pathloss(lo, n, kappa) >= pathloss(hi, n, kappa)


# -- steering ---------------------------------------------------------------

def test_steering_broadside_of_linear_y_array_is_all_ones():
    a = steering_vector(ArrayGeometry((1, 4, 1)), 0.0, 0.0)
    np.testing.assert_allclose(a, np.ones(4), atol=1e-15)


def test_steering_two_elements_endfire_alternates_sign():
    a = steering_vector(ArrayGeometry((1, 2, 1)), math.pi / 2, 0.0)
    np.testing.assert_allclose(a, [1, -1], atol=1e-12)


def test_steering_planar_array_matches_per_element_loop():
    g = ArrayGeometry((2, 3, 2), 0.5)
    az, el = 0.3, 0.2
    expected = []
    for z in range(2):
        for y in range(3):
            for x in range(2):
                proj = x * math.cos(el) * math.cos(az) + y * math.cos(el) * math.sin(az) + z * math.sin(el)
                expected.append(complex(math.cos(2 * math.pi * 0.5 * proj), math.sin(2 * math.pi * 0.5 * proj)))
    np.testing.assert_allclose(steering_vector(g, az, el), expected, atol=1e-13)


@given(st.floats(-math.pi, math.pi - 1e-9), st.floats(-math.pi / 2, math.pi / 2))
def test_steering_entries_have_unit_modulus(az, el):
    np.testing.assert_allclose(np.abs(steering_vector(ArrayGeometry((2, 4, 2)), az, el)), 1.0, atol=1e-12)


# -- synthesis --------------------------------------------------------------

def _factors(rows, budget=None):
    paths = [PathFactors(*r) for r in rows]
    return ChannelFactorSet.from_paths(paths, budget or max(1, len(rows)))


def test_zero_paths_give_zero_channel():
    h = synthesize_channel(ChannelFactorSet.from_paths([], 3), ArrayGeometry((1, 4, 1)), 8, 50e6)
    assert h.entries.shape == (8, 4)
    assert not h.entries.any()


def test_single_unit_path_at_zero_delay_is_all_ones():
    h = synthesize_channel(_factors([(1, 0, 0, 0, 0, 0, 0)]), ArrayGeometry((1, 4, 1)), 8, 50e6)
    np.testing.assert_allclose(h.entries, np.ones((8, 4)), atol=1e-15)


def test_two_path_channel_matches_summation_loop():
    g = ArrayGeometry((1, 2, 1))
    K, B = 4, 50e6
    rows = [(0.9, 10e-9, 0.4, 0.2, 0.1, 0.0, 0.0), (0.3, 25e-9, -1.1, -0.7, 0.0, 0.5, -0.2)]
    fs = _factors(rows)
    expected = np.zeros((K, 2), complex)
    for k in range(K):
        for n, pos_y in enumerate((0, 1)):
            for a, toa, ph, az, el, _, _ in rows:
                steer = complex(math.cos(math.pi * pos_y * math.cos(el) * math.sin(az)),
                                math.sin(math.pi * pos_y * math.cos(el) * math.sin(az)))
                ang = ph - 2 * math.pi * k * toa * B / K
                expected[k, n] += a * complex(math.cos(ang), math.sin(ang)) * steer
    np.testing.assert_allclose(synthesize_channel(fs, g, K, B).entries, expected, atol=1e-14)


def test_zero_delay_channel_is_flat_across_subcarriers():
    h = synthesize_channel(_factors([(0.5, 0, 1.0, 0.3, 0.1, 0, 0), (0.2, 0, -2.0, -0.4, 0.0, 0, 0)]),
                           ArrayGeometry((2, 2, 1)), 6, 50e6).entries
    np.testing.assert_allclose(h, np.broadcast_to(h[0], h.shape), atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(0.01, 1), st.floats(0, 100e-9), st.floats(-3.1, 3.1),
                          st.floats(-3.1, 3.1), st.floats(-1.5, 1.5)), min_size=2, max_size=5))
def test_channel_is_the_sum_of_single_path_channels(paths):
    g = ArrayGeometry((2, 2, 1))
    rows = [(a, t, p, az, el, 0.0, 0.0) for a, t, p, az, el in paths]
    full = synthesize_channel(_factors(rows), g, 8, 50e6).entries
    parts = sum(synthesize_channel(_factors([r]), g, 8, 50e6).entries for r in rows)
    np.testing.assert_allclose(full, parts, atol=1e-12)


def test_delay_beyond_window_is_rejected():
    with pytest.raises(DelayWindowError):
        synthesize_channel(_factors([(1, 200e-9, 0, 0, 0, 0, 0)]), ArrayGeometry(), 8, 50e6)


def test_factor_set_sorts_truncates_and_pads():
    rows = [(0.1, 0, 0, 0, 0, 0, 0), (0.5, 0, 0, 0, 0, 0, 0), (0.3, 0, 0, 0, 0, 0, 0)]
    fs = _factors(rows, budget=2)
    assert fs.active_count == 2
    np.testing.assert_array_equal(fs.values[:, PATHLOSS], [0.5, 0.3])
    padded = _factors(rows[:1], budget=3)
    assert padded.active_count == 1 and not padded.values[1:].any()


def test_path_factor_ranges_are_enforced():
    with pytest.raises(DomainError):
        PathFactors(1, 0, math.pi, 0, 0, 0, 0)
    with pytest.raises(DomainError):
        PathFactors(-1, 0, 0, 0, 0, 0, 0)


# -- pilot estimate -----------------------------------------------------------

def _chan(entries):
    return FrequencyChannel(np.asarray(entries, complex), "sub6", 2.4e9, 20e6)


@pytest.mark.parametrize("pilot", [1.0, 2.0, 1j, 0.5 - 0.5j])
def test_noiseless_estimate_is_exact(pilot, rng):
    h = _chan(rng.standard_normal((4, 3)) + 1j * rng.standard_normal((4, 3)))
    np.testing.assert_allclose(pilot_estimate(h, 0.0, pilot, rng).entries, h.entries, atol=1e-15)


def test_estimate_error_variance_matches_noise_over_pilot_power(rng):
    h = _chan(np.ones((2, 2)))
    sigma2, x = 0.3, 2.0
    errs = np.concatenate([(pilot_estimate(h, sigma2, x, rng).entries - 1).ravel() for _ in range(10_000)])
    assert np.var(errs) == pytest.approx(sigma2 / abs(x) ** 2, rel=0.05)
    assert abs(errs.mean()) < 0.01


def test_estimate_rejects_zero_pilot(rng):
    with pytest.raises(DomainError):
        pilot_estimate(_chan(np.ones((1, 1))), 0.1, 0, rng)


# -- scenario sampling ----------------------------------------------------------

def test_zero_users_gives_empty_list():
    assert sample_scenario(small_scenario(num_users=0)) == []


def test_same_seed_same_samples_and_parallel_matches_serial():
    cfg = small_scenario(num_users=12)
    a, b = sample_scenario(cfg), sample_scenario(cfg, threads=4)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.h_sub6.entries, y.h_sub6.entries)
        assert x.thz_factors == y.thz_factors
    c = sample_scenario(replace(cfg, seed=cfg.seed + 1))
    assert not np.array_equal(a[0].h_sub6.entries, c[0].h_sub6.entries)


def test_first_users_do_not_depend_on_population_size():
    a = sample_scenario(small_scenario(num_users=3))
    b = sample_scenario(small_scenario(num_users=10))
    for x, y in zip(a, b):
        assert x.thz_factors == y.thz_factors


def test_line_of_sight_geometry_matches_direct_computation():
    cfg = small_scenario(num_users=10, scatterers=replace(ScenarioConfig().scatterers, num_random=0,
                                                          wall_reflections=False, ground_reflection=False))
    bs = np.array(cfg.region.bs_position)
    for s in sample_scenario(cfg):
        user = np.array(s.user_position)
        d = np.linalg.norm(user - bs)
        (row,) = s.thz_factors.values[: s.thz_factors.active_count]
        v = user - bs
        assert row[TOA] == pytest.approx(d / SPEED_OF_LIGHT, rel=1e-12)
        assert row[PATHLOSS] == pytest.approx(pathloss(d, 2.0, cfg.absorption_coeff, 100e9), rel=1e-12)
        assert row[AOA_AZ] == pytest.approx(math.atan2(v[1], v[0]), abs=1e-12)
        assert row[AOA_EL] == pytest.approx(math.asin(v[2] / d), abs=1e-12)
        assert row[AOD_AZ] == pytest.approx(float(wrap_angle(math.atan2(-v[1], -v[0]))), abs=1e-12)
        assert row[AOD_EL] == pytest.approx(-math.asin(v[2] / d), abs=1e-12)
        assert row[PHASE] == pytest.approx(float(wrap_angle(2 * math.pi * 100e9 * d / SPEED_OF_LIGHT)), abs=1e-6)


def test_bands_share_line_of_sight_angles_exactly():
    for s in sample_scenario(small_scenario(num_users=20)):
        sub6 = s.sub6_factors.values[: s.sub6_factors.active_count]
        thz = s.thz_factors.values[: s.thz_factors.active_count]
        los6 = sub6[np.argmin(sub6[:, TOA])]
        lost = thz[np.argmin(thz[:, TOA])]
        assert lost[TOA] == los6[TOA]
        for col in (AOA_AZ, AOA_EL, AOD_AZ, AOD_EL):
            assert lost[col] == los6[col]


def test_thz_paths_are_weaker_than_sub6_counterparts():
    for s in sample_scenario(small_scenario(num_users=10)):
        assert s.thz_factors.values[0, PATHLOSS] < s.sub6_factors.values[0, PATHLOSS]


def test_samples_respect_the_delay_window():
    cfg = ScenarioConfig(num_users=50)
    for s in sample_scenario(cfg):
        taps = s.thz_factors.values[:, TOA] * cfg.thz.bandwidth_hz
        assert taps.max() < cfg.thz.num_subcarriers


def test_config_collects_every_problem():
    cfg = ScenarioConfig(num_users=-1, region=Region(length=0),
                         thz=BandConfig(100e9, 500e6, 32, ArrayGeometry((2, 8, 2)), 0, -1.0))
    with pytest.raises(ConfigError) as err:
        cfg.validate()
    assert len(err.value.problems) >= 4


def test_config_rejects_bandwidth_that_breaks_the_delay_window():
    cfg = ScenarioConfig(thz=replace(ScenarioConfig().thz, bandwidth_hz=500e6))
    with pytest.raises(ConfigError, match="delay"):
        cfg.validate()
