import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cryonoise.noisecalc import (
    H_PLANCK,
    K_BOLTZMANN,
    ChainConfig,
    db_to_linear,
    effective_input_noise,
    expected_output_power_thru,
    idler_frequency,
    linear_to_db,
    photons_from_temperature,
    planck_input_noise,
    planck_input_noise_slope,
    standard_quantum_limit,
    system_noise_twpa_forward,
    twpa_intrinsic_noise,
    weighted_average_photons,
)

# reference values computed with mpmath at 40 digits
HF2K_6GHZ = 0.14397729220098664
TIN_6GHZ_AT_HF2K = 0.18904922559553686  # t_bath = 0.14398 K
TIN_6GHZ_100K = 100.00006909819268
TEFF_5735_5968_135MK = 0.32631971568862737  # g_twpa 10 dB, g_conv 9 dB
SQL_5735 = 0.27523659025755279
SQL_6GHZ = 0.28795458440197327

freqs = st.floats(min_value=1e8, max_value=2e10)
temps = st.floats(min_value=1e-3, max_value=300.0)


class TestPlanckInputNoise:
    def test_zero_bath_is_half_photon(self):
        assert planck_input_noise(6e9, 0.0) == pytest.approx(HF2K_6GHZ, rel=1e-12)

    def test_coth_one(self):
        assert planck_input_noise(6e9, 0.14398) == pytest.approx(TIN_6GHZ_AT_HF2K, rel=1e-12)

    def test_classical_limit(self):
        assert planck_input_noise(6e9, 100.0) == pytest.approx(TIN_6GHZ_100K, rel=1e-12)

    def test_series_expansion_at_high_temperature(self):
        f = 6e9
        t = 100 * H_PLANCK * f / K_BOLTZMANN
        series = t + (H_PLANCK * f) ** 2 / (12 * K_BOLTZMANN**2 * t)
        assert planck_input_noise(f, t) == pytest.approx(series, rel=1e-6)

    @pytest.mark.parametrize("bad", [float("nan"), float("inf")])
    def test_rejects_non_finite(self, bad):
        with pytest.raises(ValueError):
            planck_input_noise(bad, 1.0)
        with pytest.raises(ValueError):
            planck_input_noise(6e9, bad)

    def test_rejects_negative_inputs(self):
        with pytest.raises(ValueError):
            planck_input_noise(-1.0, 1.0)
        with pytest.raises(ValueError):
            planck_input_noise(6e9, -0.1)

    def test_broadcasts(self):
        out = planck_input_noise(6e9, np.array([0.0, 0.14398, 100.0]))
        np.testing.assert_allclose(out, [HF2K_6GHZ, TIN_6GHZ_AT_HF2K, TIN_6GHZ_100K], rtol=1e-12)

    @given(freqs, temps)
    def test_bounded_below(self, f, t):
        t_in = planck_input_noise(f, t)
        assert t_in >= max(t, HF2K_6GHZ * f / 6e9) * (1 - 1e-12)

    @given(freqs, temps, st.floats(min_value=1.001, max_value=10.0))
    def test_excess_decreasing_in_t(self, f, t, scale):
        excess_lo = planck_input_noise(f, t) - t
        excess_hi = planck_input_noise(f, t * scale) - t * scale
        assert excess_hi <= excess_lo + 1e-12 * t * scale
        assert excess_hi >= -1e-12 * t * scale

    @given(freqs, temps, st.floats(min_value=1.001, max_value=10.0))
    def test_monotone_in_f_and_t(self, f, t, scale):
        base = planck_input_noise(f, t)
        assert planck_input_noise(f * scale, t) >= base
        assert planck_input_noise(f, t * scale) >= base


class TestSlope:
    @pytest.mark.parametrize(
        "t, expected",
        # d/dT of the mpmath reference
        [(1.0, 0.99311873315792237), (0.05, 0.10527132323482349)],
    )
    def test_against_reference(self, t, expected):
        assert planck_input_noise_slope(6e9, t) == pytest.approx(expected, rel=1e-10)

    @given(freqs, st.floats(min_value=0.01, max_value=10.0))
    def test_matches_finite_difference(self, f, t):
        h = t * 1e-4
        p = [planck_input_noise(f, t + j * h) for j in (-2, -1, 1, 2)]
        fd = (p[0] - 8 * p[1] + 8 * p[2] - p[3]) / (12 * h)
        assert planck_input_noise_slope(f, t) == pytest.approx(fd, rel=1e-6, abs=1e-9)

    def test_zero_bath(self):
        assert planck_input_noise_slope(6e9, 0.0) == 0.0


class TestIdler:
    def test_reported_operating_point(self):
        assert idler_frequency(5968e6, 5735e6) == pytest.approx(6201e6, rel=1e-15)

    def test_degenerate(self):
        assert idler_frequency(6e9, 6e9) == 6e9

    def test_simple(self):
        assert idler_frequency(6e9, 5e9) == 7e9

    def test_rejects_non_positive_idler(self):
        with pytest.raises(ValueError):
            idler_frequency(3e9, 6e9)


class TestEffectiveInputNoise:
    def test_zero_conversion_gain(self):
        assert effective_input_noise(5.7e9, 6e9, 0.2, 10.0, 0.0) == planck_input_noise(5.7e9, 0.2)

    def test_degenerate_point(self):
        expected = (1 + 7.0 / 10.0) * planck_input_noise(6e9, 0.3)
        assert effective_input_noise(6e9, 6e9, 0.3, 10.0, 7.0) == pytest.approx(expected, rel=1e-14)

    def test_operating_point(self):
        value = effective_input_noise(5.735e9, 5.968e9, 0.135, db_to_linear(10.0), db_to_linear(9.0))
        assert value == pytest.approx(TEFF_5735_5968_135MK, rel=1e-10)

    def test_rejects_idler_below_zero(self):
        with pytest.raises(ValueError):
            effective_input_noise(13e9, 6e9, 0.1, 10.0, 9.0)


class TestForwardModels:
    def test_zero_noise_gives_zero_power(self):
        chain = ChainConfig(g_hemt=1e4, t_hemt=0.0, t_bkg=0.0, bandwidth_b=100.0)
        assert expected_output_power_thru(chain, 0.0, 1.0) == 0.0

    def test_reference_power(self):
        chain = ChainConfig(g_hemt=db_to_linear(40.0), t_hemt=2.0, t_bkg=300.0, bandwidth_b=100.0)
        assert expected_output_power_thru(chain, 1.0, 1.0) == pytest.approx(4.18336647e-21, rel=1e-8)

    def test_linear_in_gain(self):
        chain = ChainConfig(g_hemt=1e4, t_hemt=2.0, t_bkg=300.0, bandwidth_b=100.0)
        p1 = expected_output_power_thru(chain, 0.5, 3.0)
        assert expected_output_power_thru(chain, 0.5, 6.0) == pytest.approx(2 * p1, rel=1e-15)

    @given(st.floats(min_value=0.0, max_value=10.0), st.floats(min_value=1.0, max_value=1e12))
    def test_affine_slope(self, t_in, g_tot):
        chain = ChainConfig(g_hemt=1e4, t_hemt=3.0, t_bkg=300.0, bandwidth_b=100.0)
        dt = 0.25
        slope = (expected_output_power_thru(chain, t_in + dt, g_tot) - expected_output_power_thru(chain, t_in, g_tot)) / dt
        assert slope == pytest.approx(g_tot * K_BOLTZMANN * 100.0, rel=1e-12)

    def test_twpa_forward_example(self):
        chain = ChainConfig(g_hemt=1e12, t_hemt=3.0, t_bkg=0.0, bandwidth_b=100.0,
                            g_twpa=10.0, g_conv=9.0, t_twpa=0.35)
        assert system_noise_twpa_forward(chain, 0.14) == pytest.approx(0.79, rel=1e-12)

    def test_twpa_forward_large_gain(self):
        chain = ChainConfig(g_hemt=1e4, t_hemt=3.0, t_bkg=300.0, bandwidth_b=100.0,
                            g_twpa=1e15, g_conv=1e15, t_twpa=0.35)
        assert system_noise_twpa_forward(chain, 0.14) == pytest.approx(0.49, rel=1e-12)

    def test_twpa_forward_unity_gain_matches_thru(self):
        chain = ChainConfig(g_hemt=1e4, t_hemt=3.0, t_bkg=300.0, bandwidth_b=100.0,
                            g_twpa=1.0, g_conv=0.0, t_twpa=0.0)
        t_in = 0.3
        thru = expected_output_power_thru(chain, t_in, 1.0) / (K_BOLTZMANN * 100.0)
        assert system_noise_twpa_forward(chain, t_in) == pytest.approx(thru, rel=1e-12)

    def test_twpa_forward_requires_twpa_fields(self):
        chain = ChainConfig(g_hemt=1e4, t_hemt=3.0, t_bkg=300.0, bandwidth_b=100.0)
        with pytest.raises(ValueError):
            system_noise_twpa_forward(chain, 0.1)

    def test_chain_rejects_unpaired_gains(self):
        with pytest.raises(ValueError):
            ChainConfig(g_hemt=1e4, t_hemt=3.0, t_bkg=300.0, bandwidth_b=100.0, g_twpa=10.0)


class TestDerivedQuantities:
    def test_intrinsic_noise(self):
        assert twpa_intrinsic_noise(0.68, 3.3, db_to_linear(10.0)) == pytest.approx(0.35, rel=1e-12)

    def test_intrinsic_noise_unity_gain(self):
        assert twpa_intrinsic_noise(2.0, 2.0, 1.0) == 0.0

    def test_intrinsic_noise_keeps_sign(self):
        assert twpa_intrinsic_noise(0.5, 10.0, 10.0) == pytest.approx(-0.5)

    @given(temps, temps)
    def test_intrinsic_antisymmetry(self, a, b):
        assert twpa_intrinsic_noise(a, b, 1.0) == -twpa_intrinsic_noise(b, a, 1.0)

    def test_photons(self):
        assert photons_from_temperature(0.35, 5.735e9) == pytest.approx(1.2716332507697734, rel=1e-12)
        assert photons_from_temperature(0.0, 5.735e9) == 0.0

    def test_sql_values(self):
        assert standard_quantum_limit(5.735e9) == pytest.approx(SQL_5735, rel=1e-12)
        assert standard_quantum_limit(6e9) == pytest.approx(SQL_6GHZ, rel=1e-12)
        assert standard_quantum_limit(12e9) == pytest.approx(2 * SQL_6GHZ, rel=1e-15)

    @given(freqs)
    def test_one_photon_at_sql(self, f):
        assert photons_from_temperature(standard_quantum_limit(f), f) == pytest.approx(1.0, rel=1e-15)


class TestWeightedAverage:
    def test_single_point(self):
        assert weighted_average_photons([(1.3, 0.2, 0.3)]) == pytest.approx((1.3, 0.2, 0.3))

    def test_identical_points(self):
        n, lo, hi = weighted_average_photons([(1.3, 0.2, 0.2)] * 2)
        assert n == pytest.approx(1.3)
        assert lo == pytest.approx(0.2 / math.sqrt(2))
        assert hi == pytest.approx(0.2 / math.sqrt(2))

    def test_two_points(self):
        n, lo, hi = weighted_average_photons([(1.0, 0.1, 0.1), (2.0, 0.3, 0.3)])
        assert n == pytest.approx(1.1, rel=1e-12)
        assert lo == pytest.approx(1 / math.sqrt(100 + 1 / 0.09), rel=1e-12)
        assert hi == pytest.approx(lo)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            weighted_average_photons([])


class TestUnits:
    @given(st.floats(min_value=-60, max_value=60))
    def test_db_round_trip(self, g_db):
        assert linear_to_db(db_to_linear(g_db)) == pytest.approx(g_db, rel=1e-12, abs=1e-12)

    @settings(max_examples=50)
    @given(st.floats(min_value=1e-6, max_value=1e6))
    def test_linear_round_trip(self, g):
        assert db_to_linear(linear_to_db(g)) == pytest.approx(g, rel=1e-12)
