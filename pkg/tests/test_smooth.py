import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from signfuse.errors import InvalidArgumentError, InvalidConfigError
from signfuse.smooth import (
    GroupWeights,
    SmoothConfig,
    Trajectory,
    difference_operator,
    finite_difference,
    normal_matrix,
    segments,
    smooth_sequence,
    temporal_energy,
)


def cfg_for(**weights):
    return SmoothConfig({"all": GroupWeights(**weights)})


def test_segments():
    assert segments(10, ()) == [(0, 10)]
    assert segments(10, (0, 4)) == [(0, 4), (4, 10)]
    assert segments(10, (3, 7)) == [(0, 3), (3, 7), (7, 10)]


def test_bad_boundaries_rejected():
    with pytest.raises(InvalidArgumentError):
        Trajectory(np.zeros((5, 1)), boundaries=(6,))
    with pytest.raises(InvalidArgumentError):
        Trajectory(np.zeros((5, 1)), boundaries=(3, 2))


def test_channel_groups_must_partition():
    with pytest.raises(InvalidArgumentError):
        Trajectory(np.zeros((5, 3)), {"a": [0, 1]})
    with pytest.raises(InvalidArgumentError):
        Trajectory(np.zeros((5, 2)), {"a": [0, 1], "b": [1]})


def test_difference_operator_rows():
    D3 = difference_operator(5, 3).toarray()
    np.testing.assert_array_equal(D3, [[-1, 3, -3, 1, 0], [0, -1, 3, -3, 1]])
    assert difference_operator(3, 3).shape == (0, 3)


def test_finite_difference_cubic():
    t = np.arange(8.0)
    traj = Trajectory(t ** 3)
    np.testing.assert_array_equal(finite_difference(traj, 3).ravel(), np.full(5, 6.0))
    np.testing.assert_array_equal(finite_difference(traj, 1).ravel(), np.diff(t ** 3))


def test_finite_difference_quadratic():
    traj = Trajectory(np.arange(9.0) ** 2)
    np.testing.assert_array_equal(finite_difference(traj, 2).ravel(), np.full(7, 2.0))
    np.testing.assert_array_equal(finite_difference(traj, 3).ravel(), np.zeros(6))
    with pytest.raises(InvalidArgumentError):
        finite_difference(traj, 4)


def test_finite_difference_skips_boundary_windows():
    traj = Trajectory(np.arange(10.0) ** 2, boundaries=(5,))
    d1 = finite_difference(traj, 1).ravel()
    assert len(d1) == 8  # 4 + 4; the 4 -> 5 step is masked
    np.testing.assert_array_equal(d1, [1, 3, 5, 7, 11, 13, 15, 17])


def test_energy_hand_computed():
    raw = Trajectory([0.0, 1.0, 0.0])
    smoothed = raw.with_values([0.0, 0.5, 0.0])
    # data 0.25 + first differences 0.5^2 + 0.5^2
    assert temporal_energy(smoothed, raw, cfg_for(data=1.0, d1=1.0, d2=0.0, d3=0.0)) == 0.75


def test_energy_trivial_cases(rng):
    const = Trajectory(np.full((6, 2), 3.0))
    assert temporal_energy(const, const, SmoothConfig()) == 0.0
    raw = Trajectory(rng.normal(size=(9, 2)))
    sm = raw.with_values(raw.values + rng.normal(size=(9, 2)))
    data_only = cfg_for(data=2.0, d1=0.0, d2=0.0, d3=0.0)
    assert temporal_energy(sm, raw, data_only) == pytest.approx(2.0 * np.sum((sm.values - raw.values) ** 2))


def test_constant_is_fixed_point():
    raw = Trajectory(np.tile([1.5, -2.0, 0.25], (40, 1)), boundaries=(13,))
    out = smooth_sequence(raw, cfg_for())
    np.testing.assert_allclose(out.values, raw.values, atol=1e-12)


def test_quadratic_is_fixed_point_of_jerk_only_penalty():
    t = np.arange(30.0)
    raw = Trajectory(0.01 * t ** 2 - 0.3 * t + 2.0)
    out = smooth_sequence(raw, cfg_for(data=1.0, d1=0.0, d2=0.0, d3=5.0))
    np.testing.assert_allclose(out.values, raw.values, atol=1e-10)


def test_solution_satisfies_normal_equations(rng):
    raw = Trajectory(rng.normal(size=(120, 4)), boundaries=(50, 51, 90))
    w = GroupWeights(1.3, 0.7, 2.0, 4.0)
    out = smooth_sequence(raw, cfg_for(data=w.data, d1=w.d1, d2=w.d2, d3=w.d3))
    for a, b in raw.segments:
        H = normal_matrix(b - a, w)
        resid = H @ out.values[a:b] - w.data * raw.values[a:b]
        assert np.max(np.abs(resid)) < 1e-8


def test_energy_decreases_and_beats_perturbations(rng):
    raw = Trajectory(rng.normal(size=(60, 3)), boundaries=(20,))
    cfg = cfg_for()
    out = smooth_sequence(raw, cfg)
    e = temporal_energy(out, raw, cfg)
    assert e <= temporal_energy(raw, raw, cfg)
    for _ in range(20):
        nudged = out.with_values(out.values + 1e-3 * rng.normal(size=out.values.shape))
        assert temporal_energy(nudged, raw, cfg) >= e


def test_segment_independence(rng):
    a = rng.normal(size=(25, 3))
    b = rng.normal(size=(40, 3))
    cfg = cfg_for()
    joint = smooth_sequence(Trajectory(np.vstack([a, b]), boundaries=(25,)), cfg).values
    sep = np.vstack([smooth_sequence(Trajectory(a), cfg).values, smooth_sequence(Trajectory(b), cfg).values])
    np.testing.assert_array_equal(joint, sep)


@settings(max_examples=25, deadline=None)
@given(st.integers(5, 60), st.integers(1, 4), st.integers(0, 10_000))
def test_segment_independence_property(n1, n2, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(n1, 2)), rng.normal(size=(n2, 2))
    joint = smooth_sequence(Trajectory(np.vstack([a, b]), boundaries=(n1,))).values
    np.testing.assert_allclose(joint[:n1], smooth_sequence(Trajectory(a)).values, atol=1e-13)
    np.testing.assert_allclose(joint[n1:], smooth_sequence(Trajectory(b)).values, atol=1e-13)


def test_groups_use_their_own_weights(rng):
    raw = Trajectory(rng.normal(size=(50, 4)), {"body": [0, 1], "hands": [2, 3]})
    out = smooth_sequence(raw)
    body_only = smooth_sequence(Trajectory(raw.values[:, :2], {"body": [0, 1]}))
    hands_only = smooth_sequence(Trajectory(raw.values[:, 2:], {"hands": [0, 1]}))
    np.testing.assert_array_equal(out.values[:, :2], body_only.values)
    np.testing.assert_array_equal(out.values[:, 2:], hands_only.values)


def test_jerk_monotone_in_third_order_weight(rng):
    raw = Trajectory(rng.normal(size=(80, 3)), {"hands": [0, 1, 2]}, boundaries=(30,))
    previous = np.inf
    for lam3 in (0.0, 0.1, 0.5, 2.0, 10.0, 100.0):
        cfg = SmoothConfig({"hands": GroupWeights(1.0, 0.05, 0.1, lam3)})
        jerk = float(np.sum(finite_difference(smooth_sequence(raw, cfg), 3) ** 2))
        assert jerk <= previous + 1e-12
        previous = jerk


@pytest.mark.parametrize("group", ["body", "hands"])
def test_noisy_sine_defaults(group):
    # thresholds: jerk <= 30% of raw, RMS deviation <= 2 sigma
    rng = np.random.default_rng(0)
    sigma, T = 0.05, 300
    t = np.arange(T)
    clean = 0.5 * np.sin(2 * np.pi * 0.02 * t)[:, None] * np.ones((1, 6))
    raw = clean + rng.normal(0.0, sigma, clean.shape)
    out = smooth_sequence(Trajectory(raw, {group: range(6)})).values
    jerk = lambda x: np.mean(np.abs(np.diff(x, 3, axis=0)))  # noqa: E731
    assert jerk(out) <= 0.3 * jerk(raw)
    assert np.sqrt(np.mean((out - raw) ** 2)) <= 2 * sigma


def test_zero_data_weight_rejected():
    with pytest.raises(InvalidConfigError):
        smooth_sequence(Trajectory(np.zeros((10, 1))), cfg_for(data=0.0))
    with pytest.raises(InvalidConfigError):
        GroupWeights(d3=-1.0)


def test_no_derivative_weights_is_identity(rng):
    raw = Trajectory(rng.normal(size=(10, 2)))
    out = smooth_sequence(raw, cfg_for(data=1.0, d1=0.0, d2=0.0, d3=0.0))
    assert np.array_equal(out.values, raw.values)


def test_short_segments_pass_through(rng):
    raw = Trajectory(rng.normal(size=(6, 2)), boundaries=(1, 2, 3))
    out = smooth_sequence(raw)
    np.testing.assert_array_equal(out.values[:3], raw.values[:3])
    assert out.boundaries == raw.boundaries
