import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from dtvec.channel import (
    ChannelParams,
    InfeasibleReliabilityError,
    dbm_to_watts,
    min_power_for_reliability,
    sample_fading,
    shannon_rate,
    snr,
    threshold_gain,
    transmission_duration,
    transmission_energy,
    worst_case_success_prob,
)

P = ChannelParams()
dists = st.floats(1.0, 2000.0)
powers = st.floats(1e-4, 1.0)


def test_defaults_match_setup():
    assert math.isclose(dbm_to_watts(-90), 1e-12)
    assert P.noise_power == 1e-12 and P.fading_mean == 2.0 and P.fading_var == 0.4
    assert P.reliability == 0.9 and P.snr_target == 10.0


def test_params_validation():
    with pytest.raises(ValueError):
        ChannelParams(noise_power=0.0)
    with pytest.raises(ValueError):
        ChannelParams(reliability=1.0)
    with pytest.raises(ValueError):
        ChannelParams(fading_var=-1.0)


# -------------------------------------------------------------------- snr


def test_snr_hand_value():
    assert math.isclose(snr(100.0, 0.1, 2.0, P), 2e5, rel_tol=1e-12)


def test_snr_zero_power():
    assert snr(100.0, 0.0, 2.0, P) == 0.0


def test_snr_rejects_zero_distance():
    with pytest.raises(ValueError):
        snr(0.0, 0.1, 2.0, P)


@given(dists, powers, st.floats(0.01, 5))
def test_snr_linear_in_power(d, p, g):
    assert math.isclose(snr(d, 2 * p, g, P), 2 * snr(d, p, g, P), rel_tol=1e-12)


@given(dists, st.floats(0, 500), powers)
def test_snr_decreasing_in_distance(d, extra, p):
    assert snr(d + extra, p, 2.0, P) <= snr(d, p, 2.0, P)


# ---------------------------------------------------------- reliability


def test_worst_case_examples():
    assert worst_case_success_prob(2.0, P) == 0.0
    assert worst_case_success_prob(3.0, P) == 0.0
    assert math.isclose(worst_case_success_prob(1.0, P), 1 / 1.4)


@given(st.floats(-5, 2), st.floats(0, 3))
def test_worst_case_non_increasing(c, dc):
    assert worst_case_success_prob(c + dc, P) <= worst_case_success_prob(c, P) + 1e-15


def test_min_power_feasible_example():
    margin = math.sqrt(0.9 * 0.4 / 0.1)
    assert math.isclose(margin, 1.8973665961010275)
    p = min_power_for_reliability(100.0, P)
    assert math.isclose(p, 10 * 1e-12 * 1e6 / (2 - margin), rel_tol=1e-12)


def test_min_power_small_delta_limit():
    params = ChannelParams(reliability=1e-12)
    limit = params.snr_target * params.noise_power * 100.0**3 / params.fading_mean
    assert math.isclose(min_power_for_reliability(100.0, params), limit, rel_tol=1e-5)


def test_min_power_infeasible():
    with pytest.raises(InfeasibleReliabilityError):
        min_power_for_reliability(100.0, ChannelParams(fading_var=4.0))


@given(dists, st.floats(0.05, 0.95), st.floats(0.01, 0.4))
def test_min_power_meets_delta_exactly(d, delta, var):
    params = ChannelParams(reliability=delta, fading_var=var)
    assume(params.fading_mean > math.sqrt(delta * var / (1.0 - delta)) * 1.001)
    p = min_power_for_reliability(d, params)
    prob = worst_case_success_prob(threshold_gain(d, p, params), params)
    assert abs(prob - delta) <= 1e-9
    # any power below the minimum misses the target
    assert worst_case_success_prob(threshold_gain(d, p * 0.999, params), params) < delta


def test_min_power_monte_carlo_gaussian():
    d = 150.0
    p = min_power_for_reliability(d, P)
    gains = sample_fading(np.random.default_rng(0), 100_000, P)
    s = gains * P.antenna_const * d ** (-P.pathloss_exp) * p / P.noise_power
    assert np.mean(s >= P.snr_target) >= 0.9


def test_fading_is_truncated_and_reproducible():
    a = sample_fading(np.random.default_rng(3), (50, 20), ChannelParams(fading_mean=0.5, fading_var=1.0))
    b = sample_fading(np.random.default_rng(3), (50, 20), ChannelParams(fading_mean=0.5, fading_var=1.0))
    assert a.shape == (50, 20)
    assert np.all(a >= 0)
    np.testing.assert_array_equal(a, b)


# ------------------------------------------------------------------ rate


def test_shannon_examples():
    assert shannon_rate(1e6, 0.0) == 0.0
    assert shannon_rate(0.0, 5.0) == 0.0
    assert shannon_rate(1e6, 1.0) == 1e6
    with pytest.raises(ValueError):
        shannon_rate(-1.0, 1.0)


@given(st.floats(0, 1e7), st.floats(0, 1e7), dists, powers, st.floats(1, 10))
def test_rate_monotone_in_power_and_bandwidth(b, db, d, p, k):
    r = shannon_rate(b, snr(d, p, 2.0, P))
    assert shannon_rate(b + db, snr(d, p, 2.0, P)) >= r
    assert shannon_rate(b, snr(d, p * k, 2.0, P)) >= r


# -------------------------------------------------------------- duration


def test_duration_constant_rate():
    assert transmission_duration(5e5, [1e6] * 3, 0.0) == 0.5


def test_duration_piecewise():
    # first 0.3 s of slot 0 at 1e6, then 5e5 afterwards
    rates = [1e6, 5e5, 5e5]
    g = transmission_duration(5e5, rates, 0.7)
    assert math.isclose(g, 0.3 + 2e5 / 5e5)


def test_duration_tiny_size():
    assert transmission_duration(1e-9, [1e6], 0.0) < 1e-12


def test_duration_not_completed():
    assert transmission_duration(5e6, [1e6, 1e6], 0.0) is None
    assert transmission_duration(1.0, [0.0, 0.0], 0.0) is None
    assert transmission_duration(1.0, [1e6], 1.0) is None


def test_duration_skips_dead_slot():
    assert math.isclose(transmission_duration(5e5, [0.0, 1e6], 0.5), 1.0)


def test_duration_preconditions():
    with pytest.raises(ValueError):
        transmission_duration(0.0, [1.0], 0.0)
    with pytest.raises(ValueError):
        transmission_duration(1.0, [1.0], -0.1)


@given(
    st.floats(1e3, 5e6),
    st.lists(st.floats(0, 2e6), min_size=1, max_size=6),
    st.floats(0, 0.99),
    st.integers(0, 5),
    st.floats(0, 1e6),
)
def test_duration_non_increasing_in_rates(size, rates, start, j, bump):
    base = transmission_duration(size, rates, start)
    faster = list(rates)
    faster[j % len(rates)] += bump
    new = transmission_duration(size, faster, start)
    if base is not None:
        assert new is not None and new <= base + 1e-9 * max(1.0, base)


# ---------------------------------------------------------------- energy


def test_energy_examples():
    assert transmission_energy(0.1, 0.0) == 0.0
    assert math.isclose(transmission_energy(0.1, 0.5), 0.05)
    with pytest.raises(ValueError):
        transmission_energy(-0.1, 1.0)


@given(powers, st.floats(0, 10), st.floats(0.1, 10))
def test_energy_bilinear(p, g, k):
    e = transmission_energy(p, g)
    assert math.isclose(transmission_energy(k * p, g), k * e, rel_tol=1e-12, abs_tol=1e-300)
    assert math.isclose(transmission_energy(p, k * g), k * e, rel_tol=1e-12, abs_tol=1e-300)
