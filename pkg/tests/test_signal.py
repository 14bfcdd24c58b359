import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sparsediff.signal import (
    RegressorStream,
    SignalProfile,
    SystemSchedule,
    TrialData,
    desired_sample,
    generate_trial_data,
    input_sequence,
    next_regressor,
    sample_profile,
    substream,
)


def test_white_stream_first_regressor():
    s = RegressorStream(4, 1.0)
    x0 = np.random.default_rng(3).standard_normal()
    np.testing.assert_array_equal(next_regressor(s, np.random.default_rng(3)), [x0, 0, 0, 0])


def test_zero_pole_equals_white():
    a, b = RegressorStream(5, 2.0), RegressorStream(5, 2.0, ar_pole=0.0)
    ra, rb = np.random.default_rng(8), np.random.default_rng(8)
    for _ in range(20):
        np.testing.assert_array_equal(a.next_regressor(ra), b.next_regressor(rb))


def test_stream_matches_vector_sequence():
    s = RegressorStream(3, 0.7, ar_pole=0.6)
    rng = np.random.default_rng(1)
    rows = np.array([s.next_regressor(rng) for _ in range(50)])
    x = input_sequence(np.random.default_rng(1), 50, 0.7, 0.6)
    np.testing.assert_allclose(rows[:, 0], x, rtol=1e-13)
    np.testing.assert_allclose(rows[5:, 2], x[3:-2], rtol=1e-13)


def test_colored_variance_inflation():
    x = input_sequence(np.random.default_rng(0), 400_000, 1.0, 0.7)
    assert abs(x[1000:].var() - 1.0 / (1 - 0.49)) < 0.03


def test_profile_ranges_and_determinism():
    p = sample_profile(20, (0.5, 1.5), (0.01, 0.1), 42)
    assert all(0.5 <= v <= 1.5 for v in p.input_variances)
    assert all(0.01 <= v <= 0.1 for v in p.noise_variances)
    assert p == sample_profile(20, (0.5, 1.5), (0.01, 0.1), 42)
    assert SignalProfile.from_dict(p.to_dict()) == p


@pytest.mark.parametrize("kwargs", [
    dict(input_variances=(1.0,), noise_variances=(-0.1,)),
    dict(input_variances=(0.0,), noise_variances=(0.1,)),
    dict(input_variances=(1.0, 1.0), noise_variances=(0.1,)),
    dict(input_variances=(1.0,), noise_variances=(0.1,), ar_pole=1.0),
])
def test_profile_validation(kwargs):
    with pytest.raises(ValueError):
        SignalProfile(**kwargs)


def test_desired_sample_noise_free():
    assert desired_sample(np.array([1.0, 2.0]), np.array([0.5, -1.0]), 0.0, np.random.default_rng(0)) == -1.5
    with pytest.raises(ValueError):
        desired_sample(np.ones(3), np.ones(2), 0.1, np.random.default_rng(0))


def test_schedule_validation_and_lookup():
    s = SystemSchedule((0, 10), np.array([[1.0, 0.0], [0.0, 1.0]]))
    assert s.taps == 2
    np.testing.assert_array_equal(s.vector_at(9), [1, 0])
    np.testing.assert_array_equal(s.vector_at(10), [0, 1])
    np.testing.assert_array_equal(s.stage_of(12)[[0, 9, 10, 11]], [0, 0, 1, 1])
    for starts in [(1,), (0, 0), (0, 5, 3)]:
        with pytest.raises(ValueError):
            SystemSchedule(starts, np.zeros((len(starts), 2)))


def test_trial_data_matches_linear_model():
    prof = SignalProfile((1.0, 0.5), (0.0, 0.0))
    w = np.array([0.3, -1.0, 2.0])
    td = generate_trial_data(prof, SystemSchedule.fixed(w), 30, 9, 0)
    for k in range(2):
        for i in range(30):
            assert td.d[k, i] == pytest.approx(td.regressor(k, i) @ w, abs=1e-13)
    assert td.regressor(0, 0)[1:].tolist() == [0.0, 0.0]


def test_trial_data_switches_system():
    prof = SignalProfile((1.0,), (0.0,))
    s = SystemSchedule((0, 5), np.array([[1.0, 0.0], [0.0, 1.0]]))
    td = generate_trial_data(prof, s, 10, 1, 0)
    for i in range(10):
        assert td.d[0, i] == pytest.approx(td.regressor(0, i) @ s.vector_at(i), abs=1e-14)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**64 - 1), trial=st.integers(0, 10_000), node=st.integers(0, 50))
def test_substreams_reproducible_and_role_separated(seed, trial, node):
    a = substream(seed, trial, node, 0).standard_normal(4)
    np.testing.assert_array_equal(a, substream(seed, trial, node, 0).standard_normal(4))
    assert not np.array_equal(a, substream(seed, trial, node, 1).standard_normal(4))
    assert not np.array_equal(a, substream(seed, trial + 1, node, 0).standard_normal(4))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32), trial=st.integers(0, 100))
def test_trial_data_is_pure(seed, trial):
    prof = SignalProfile((1.0, 0.8), (0.1, 0.05), 0.5)
    s = SystemSchedule.fixed([0.0, 1.0, 0.0])
    a = generate_trial_data(prof, s, 25, seed, trial)
    b = generate_trial_data(prof, s, 25, seed, trial)
    assert isinstance(a, TrialData) and a.digest() == b.digest()
