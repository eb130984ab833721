import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from basinstab.classifier import (ClassifierSettings, InsufficientData, Label, Outcome, classify,
                                  classify_extrema, stroboscopic_period)
from basinstab.harvesters import WellGeometry, well_geometry
from basinstab.ode_core import STATUS_DIVERGED, STATUS_OK, STATUS_UNDERFLOW, Trajectory

S1_WELLS = well_geometry("s1")
SHORT = ClassifierSettings(transient_periods=10, observation_periods=60, window_periods=20)


def synthetic(x, n_periods, omega=0.3, per_period=400):
    """Trajectory summary of an analytic signal x(t), derivative by central differences."""
    T = 2 * math.pi / omega
    t = np.linspace(0.0, n_periods * T, n_periods * per_period + 1)
    xs = x(t)
    h = 1e-6
    strobe_t = T * np.arange(1, n_periods + 1)
    strobe = np.column_stack([x(strobe_t), (x(strobe_t + h) - x(strobe_t - h)) / (2 * h)])
    seg = xs[1:].reshape(n_periods, per_period)
    starts = xs[:-1:per_period]
    xmin = np.minimum(seg.min(axis=1), starts)
    xmax = np.maximum(seg.max(axis=1), starts)
    return Trajectory(strobe, xmin, xmax, STATUS_OK, n_periods, omega, 0)


def test_small_oscillation_in_one_well():
    traj = synthetic(lambda t: 0.31 + 0.01 * np.sin(0.3 * t), SHORT.total_periods)
    assert classify(traj, S1_WELLS, SHORT) == Outcome(Label.INTRA_WELL, True, 1)


def test_large_oscillation_spans_both_wells():
    traj = synthetic(lambda t: 0.6 * np.sin(0.3 * t), SHORT.total_periods)
    assert classify(traj, S1_WELLS, SHORT) == Outcome(Label.CROSS_WELL, True, 1)


def test_subharmonic_cross_well():
    traj = synthetic(lambda t: 0.6 * np.sin(0.1 * t), SHORT.total_periods)
    assert classify(traj, S1_WELLS, SHORT) == Outcome(Label.CROSS_WELL, True, 3)


def test_crossing_without_spanning_is_intra_well():
    # crosses zero but never reaches either threshold
    traj = synthetic(lambda t: 0.2 * np.sin(0.3 * t), SHORT.total_periods)
    assert classify(traj, S1_WELLS, SHORT).label is Label.INTRA_WELL


def test_intermittent_spanning_is_undetermined():
    n = SHORT.total_periods
    traj = synthetic(lambda t: 0.31 + 0.01 * np.sin(0.3 * t), n)
    xmin, xmax = traj.xmin.copy(), traj.xmax.copy()
    # one isolated jump across both wells early in the observation span
    k = SHORT.transient_periods + 5
    xmin[k], xmax[k] = -0.5, 0.5
    t2 = Trajectory(traj.strobe, xmin, xmax, STATUS_OK, n, 0.3, 0)
    assert classify(t2, S1_WELLS, SHORT) == Outcome(Label.UNDETERMINED)


def test_transient_escape_ignored():
    n = SHORT.total_periods
    traj = synthetic(lambda t: 0.31 + 0.01 * np.sin(0.3 * t), n)
    traj.xmin[3], traj.xmax[3] = -0.9, 0.9
    assert classify(traj, S1_WELLS, SHORT).label is Label.INTRA_WELL


def test_aperiodic_spanning_is_cross_well_not_periodic():
    n = SHORT.total_periods
    rng = np.random.default_rng(3)
    strobe = rng.uniform(-1, 1, (n, 2))
    traj = Trajectory(strobe, np.full(n, -0.8), np.full(n, 0.8), STATUS_OK, n, 0.3, 0)
    assert classify(traj, S1_WELLS, SHORT) == Outcome(Label.CROSS_WELL, False, None)


def test_status_pass_through():
    n = SHORT.total_periods
    nan = np.full(n, np.nan)
    div = Trajectory(np.full((n, 2), np.nan), nan, nan, STATUS_DIVERGED, 12, 0.3, 0)
    assert classify(div, S1_WELLS, SHORT) == Outcome(Label.DIVERGED)
    und = Trajectory(np.full((n, 2), np.nan), nan, nan, STATUS_UNDERFLOW, 12, 0.3, 0)
    assert classify(und, S1_WELLS, SHORT) == Outcome(Label.UNDETERMINED)


def test_insufficient_data():
    traj = synthetic(lambda t: 0.6 * np.sin(0.3 * t), SHORT.total_periods - 1)
    with pytest.raises(InsufficientData):
        classify(traj, S1_WELLS, SHORT)
    with pytest.raises(InsufficientData):
        stroboscopic_period(np.zeros((5, 2)), 1e-3, 16)


def test_settings_invariants():
    with pytest.raises(ValueError):
        ClassifierSettings(observation_periods=30, window_periods=20)
    with pytest.raises(ValueError):
        ClassifierSettings(periodicity_tol=0.0)
    assert ClassifierSettings().total_periods == 700


def test_outcome_invariants():
    with pytest.raises(ValueError):
        Outcome(Label.DIVERGED, True, 1)
    with pytest.raises(ValueError):
        Outcome(Label.CROSS_WELL, False, 2)


def test_label_strings():
    assert [str(v) for v in Label] == ["cross_well", "intra_well", "undetermined", "diverged"]


# -- stroboscopic period ------------------------------------------------------------

def test_period_constant():
    assert stroboscopic_period(np.ones((40, 3)), 1e-3, 16) == 1


def test_period_alternating():
    a, b = np.array([0.3, 0.1]), np.array([-0.3, 0.2])
    seq = np.array([a, b] * 20)
    assert stroboscopic_period(seq, 1e-3, 16) == 2


def test_period_logistic_map_aperiodic():
    x = np.empty(200)
    x[0] = 0.2
    for i in range(1, 200):
        x[i] = 4.0 * x[i - 1] * (1.0 - x[i - 1])
    tail = x[-64:]
    # oracle: no lag k <= 16 recurs within tolerance anywhere in the tail
    lags = [np.max(np.abs(tail[k:] - tail[:-k])) for k in range(1, 17)]
    assert min(lags) > 1e-3
    assert stroboscopic_period(2 * tail - 1, 1e-3, 16) is None


@given(k=st.integers(1, 16), seed=st.integers(0, 2 ** 32 - 1))
def test_period_of_constructed_cycle(k, seed):
    rng = np.random.default_rng(seed)
    # points of the cycle pairwise separated by more than the tolerance
    base = np.arange(k, dtype=float)[rng.permutation(k)] * 0.01
    seq = np.tile(base, 40 // k + 2)[:max(40, 2 * 16)]
    assert stroboscopic_period(seq, 1e-3, 16) == k


# -- properties ----------------------------------------------------------------------

flags = st.lists(st.tuples(st.booleans(), st.booleans()), min_size=40, max_size=120)


def _extrema(fl):
    xmin = np.array([-0.5 if a else 0.05 for a, _ in fl])
    xmax = np.array([0.5 if b else 0.1 for _, b in fl])
    return xmin, xmax


@given(fl=flags, extra=flags)
def test_extending_observation_never_turns_cross_into_intra(fl, extra):
    xmin, xmax = _extrema(fl)
    xmin2, xmax2 = _extrema(fl + extra)
    if classify_extrema(xmin, xmax, S1_WELLS, 20) is Label.CROSS_WELL:
        assert classify_extrema(xmin2, xmax2, S1_WELLS, 20) is not Label.INTRA_WELL


@given(fl=flags)
def test_mirror_invariance(fl):
    xmin, xmax = _extrema(fl)
    w = WellGeometry(0, 0.0, -0.3, 0.4)
    assert (classify_extrema(-xmax, -xmin, w.mirrored(), 20)
            == classify_extrema(xmin, xmax, w, 20))


@given(fl=flags)
def test_exactly_one_label(fl):
    xmin, xmax = _extrema(fl)
    label = classify_extrema(xmin, xmax, S1_WELLS, 20)
    assert isinstance(label, Label) and label is not Label.DIVERGED


@given(fl=flags, scale=st.floats(0.5, 2.0))
def test_threshold_consistency(fl, scale):
    # rescaling the coordinate together with its thresholds leaves the label unchanged
    xmin, xmax = _extrema(fl)
    w = S1_WELLS
    ws = WellGeometry(0, 0.0, w.left_bound * scale, w.right_bound * scale)
    assert (classify_extrema(xmin * scale, xmax * scale, ws, 20)
            == classify_extrema(xmin, xmax, w, 20))
