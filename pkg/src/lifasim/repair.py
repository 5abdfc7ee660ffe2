"""Astrocyte self-repair: the rate controller, fault-tolerance metrics and
stage classification of threshold traces."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ContractError, MetricError


class Stage(str, enum.Enum):
    NORMAL = "normal"
    STRESS = "stress"
    RECOVERY = "recovery"
    FAILURE = "failure"


@dataclass(frozen=True)
class RepairPolicy:
    target_rate: float = 2.17  # Hz
    rate_window: float = 100.0  # ms
    max_reconstruction_error: float = 0.10
    repair_gain: float = 0.1
    stress_threshold_delta: float = 0.1
    failure_dwell: int = 5  # windows
    flat_tolerance: float = 1e-3
    max_drive: float = 50.0
    deadband: float = 0.0  # relative error inside which the controller holds

    def __post_init__(self):
        if not self.target_rate > 0:
            raise ContractError("target_rate must be positive")
        if not 0 < self.max_reconstruction_error < 1:
            raise ContractError("max_reconstruction_error must lie in (0, 1)")
        if self.repair_gain < 0:
            raise ContractError("repair_gain must be non-negative")
        if not self.rate_window > 0:
            raise ContractError("rate_window must be positive")
        if not 0 <= self.deadband < 1:
            raise ContractError("deadband must lie in [0, 1)")


class RepairUpdate(NamedTuple):
    drive: np.ndarray
    rate: np.ndarray
    reconstruction_error: np.ndarray
    saturated: np.ndarray


def monitor_and_repair(
    drive,
    window_spikes,
    covered_counts,
    policy: RepairPolicy,
    dt: float,
) -> RepairUpdate:
    """One controller update per astrocyte.

    Args:
        drive: current release drive ``r_g`` per astrocyte.
        window_spikes: spikes emitted by each astrocyte's covered neurons
            during the last ``policy.rate_window`` ms.
        covered_counts: number of neuron instances behind each count
            (covered neurons times batch size).
        policy: controller settings.
        dt: simulation step in ms; the window must span at least ten steps.

    Returns:
        the new drive ``max(0, r_g + gain * (target - rate))`` clipped to
        ``policy.max_drive`` (held where the error is within
        ``policy.deadband``), the measured rates in Hz, the relative
        reconstruction error and a flag for astrocytes pinned at a bound.
    """
    if policy.rate_window < 10 * dt:
        raise ContractError("rate_window must cover at least 10 steps")
    drive = np.asarray(drive, dtype=float)
    counts = np.asarray(covered_counts, dtype=float)
    rate = np.asarray(window_spikes, dtype=float) / np.maximum(counts, 1) / (policy.rate_window / 1000.0)
    err = np.abs(rate - policy.target_rate) / policy.target_rate
    raw = np.where(err > policy.deadband, drive + policy.repair_gain * (policy.target_rate - rate), drive)
    new = np.clip(raw, 0.0, policy.max_drive)
    return RepairUpdate(new, rate, err, raw != new)


@dataclass(frozen=True)
class FaultToleranceMetric:
    o_original: float
    o_fault: float
    ft_percent: float
    retained_percent: float


def fault_tolerance(o_original: float, o_fault: float) -> FaultToleranceMetric:
    """Signed deviation from the fault-free output, plus the retained share."""
    if o_original == 0:
        raise MetricError("fault tolerance is undefined for a zero fault-free output")
    ft = (o_fault - o_original) / o_original * 100.0
    retained = 100.0 * min(o_fault, o_original) / o_original
    return FaultToleranceMetric(float(o_original), float(o_fault), float(ft), float(retained))


class NetworkRecovery(NamedTuple):
    complement_percent: float  # 100 - FT_astro
    difference_percent: float  # FT_astro - FT_baseline


def network_recovery(ft_baseline_percent: float, ft_astro_percent: float) -> NetworkRecovery:
    if not (np.isfinite(ft_baseline_percent) and np.isfinite(ft_astro_percent)):
        raise MetricError("network recovery needs finite inputs")
    return NetworkRecovery(100.0 - ft_astro_percent, ft_astro_percent - ft_baseline_percent)


@dataclass
class RecoveryRecord:
    """Per-window threshold deviation and gliotransmitter level per astrocyte."""

    steps: list[int] = field(default_factory=list)
    astrocyte_ids: tuple[int, ...] = ()
    delta_vth: list[np.ndarray] = field(default_factory=list)
    g: list[np.ndarray] = field(default_factory=list)

    def append(self, step: int, delta_vth, g) -> None:
        self.steps.append(int(step))
        self.delta_vth.append(np.asarray(delta_vth, dtype=float))
        self.g.append(np.asarray(g, dtype=float))

    def __len__(self) -> int:
        return len(self.steps)

    def series(self, astro_pos: int) -> np.ndarray:
        return np.array([d[astro_pos] for d in self.delta_vth])

    def rows(self, policy: RepairPolicy):
        """CSV rows ``(step, astrocyte_id, delta_vth, g, stage)``."""
        labels = {
            pos: classify_windows(self.series(pos), policy) for pos in range(len(self.astrocyte_ids))
        }
        for w, step in enumerate(self.steps):
            for pos, aid in enumerate(self.astrocyte_ids):
                yield step, aid, float(self.delta_vth[w][pos]), float(self.g[w][pos]), labels[pos][w].value


def classify_windows(record, policy: RepairPolicy) -> list[Stage]:
    """Label each window of a threshold-deviation trace.

    Below ``stress_threshold_delta`` a window is normal.  Above it, a rising
    magnitude is stress, a falling one recovery, and a plateau held for
    ``failure_dwell`` windows is failure.  A short plateau keeps the
    previous label.
    """
    trace = np.abs(np.asarray(record.series(0) if isinstance(record, RecoveryRecord) else record, dtype=float))
    if trace.size == 0:
        raise ContractError("cannot classify an empty record")
    labels: list[Stage] = []
    prev = 0.0
    flat = 0
    tol = policy.flat_tolerance
    for a in trace:
        if a < policy.stress_threshold_delta:
            label, flat = Stage.NORMAL, 0
        else:
            change = a - prev
            flat = flat + 1 if abs(change) <= tol else 0
            if flat >= policy.failure_dwell:
                label = Stage.FAILURE
            elif change > tol:
                label = Stage.STRESS
            elif change < -tol:
                label = Stage.RECOVERY
            else:
                label = labels[-1] if labels and labels[-1] in (Stage.STRESS, Stage.RECOVERY) else Stage.STRESS
        labels.append(label)
        prev = a
    return labels
