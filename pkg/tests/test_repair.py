import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lifasim.errors import ContractError, MetricError
from lifasim.repair import (
    RepairPolicy,
    Stage,
    classify_windows,
    fault_tolerance,
    monitor_and_repair,
    network_recovery,
)


def _spikes_for(rate_hz, policy, n=10):
    return np.array([rate_hz * n * policy.rate_window / 1000.0])


def test_on_target_keeps_drive():
    pol = RepairPolicy(target_rate=2.0)
    upd = monitor_and_repair([1.3], _spikes_for(2.0, pol), [10], pol, 1.0)
    assert upd.drive[0] == 1.3
    assert upd.reconstruction_error[0] == 0.0


def test_silent_cluster_raises_drive_by_gain_times_target():
    pol = RepairPolicy(target_rate=2.17, repair_gain=0.1)
    upd = monitor_and_repair([0.4], [0.0], [10], pol, 1.0)
    assert upd.drive[0] == pytest.approx(0.4 + 0.1 * 2.17)


def test_deadband_holds_small_errors():
    pol = RepairPolicy(target_rate=10.0, deadband=0.1)
    assert monitor_and_repair([1.0], _spikes_for(10.5, pol), [10], pol, 1.0).drive[0] == 1.0
    assert monitor_and_repair([1.0], _spikes_for(5.0, pol), [10], pol, 1.0).drive[0] > 1.0


def test_drive_clipped_and_flagged():
    pol = RepairPolicy(target_rate=2.0, repair_gain=1.0, max_drive=1.0)
    upd = monitor_and_repair([0.0, 0.9], _spikes_for(50.0, pol).tolist() + [0.0], [10, 10], pol, 1.0)
    assert upd.drive.tolist() == [0.0, 1.0]
    assert upd.saturated.tolist() == [True, True]


def test_window_too_short():
    with pytest.raises(ContractError):
        monitor_and_repair([0.0], [0.0], [1], RepairPolicy(rate_window=5.0), 1.0)


def test_policy_validation():
    with pytest.raises(ContractError):
        RepairPolicy(target_rate=0)
    with pytest.raises(ContractError):
        RepairPolicy(max_reconstruction_error=1.5)
    with pytest.raises(ContractError):
        RepairPolicy(deadband=1.0)


def test_fault_tolerance_examples():
    same = fault_tolerance(0.8, 0.8)
    assert same.ft_percent == 0.0 and same.retained_percent == 100.0
    half = fault_tolerance(1.0, 0.5)
    assert half.ft_percent == pytest.approx(-50.0)
    assert half.retained_percent == pytest.approx(50.0)
    with pytest.raises(MetricError):
        fault_tolerance(0.0, 0.5)


def test_network_recovery_examples():
    assert network_recovery(63.11, 81.10).complement_percent == pytest.approx(18.90)
    assert network_recovery(63.11, 100.0).complement_percent == 0.0
    assert network_recovery(63.11, 81.10).difference_percent == pytest.approx(17.99)
    with pytest.raises(MetricError):
        network_recovery(np.nan, 50.0)


def test_classify_constant_zero_is_normal():
    assert set(classify_windows(np.zeros(12), RepairPolicy())) == {Stage.NORMAL}


def test_classify_ramp_then_decay():
    trace = np.concatenate([np.linspace(0, 0.5, 8), np.linspace(0.5, 0.0, 8)])
    labels = classify_windows(trace, RepairPolicy())
    first_stress = labels.index(Stage.STRESS)
    assert Stage.RECOVERY in labels[first_stress:]
    assert labels[-1] == Stage.NORMAL


def test_classify_saturated_trace_fails_after_dwell():
    pol = RepairPolicy(failure_dwell=4)
    trace = np.concatenate([np.linspace(0, 0.6, 5), np.full(10, 0.6)])
    labels = classify_windows(trace, pol)
    assert labels[-1] == Stage.FAILURE
    assert Stage.FAILURE not in labels[: 5 + pol.failure_dwell - 1]


@given(st.floats(0.01, 10), st.floats(0, 10), st.floats(0.01, 100))
def test_fault_tolerance_scale_invariant(o, f, c):
    a = fault_tolerance(o, f).ft_percent
    b = fault_tolerance(c * o, c * f).ft_percent
    assert b == pytest.approx(a, rel=1e-9, abs=1e-9)


@given(st.lists(st.floats(-2, 2), min_size=1, max_size=60))
def test_classify_labels_partition_timeline(trace):
    labels = classify_windows(trace, RepairPolicy())
    assert len(labels) == len(trace)
    assert all(isinstance(x, Stage) for x in labels)
