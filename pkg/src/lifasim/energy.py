"""Energy accounting with Alternative Reduce Regime (ARR) gating.

Energies are in arbitrary, config-supplied units.  The ledger keeps integer
event counts and multiplies by the coefficients only when totals are read,
so concatenating traces adds up exactly.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ContractError

CATEGORIES = ("spikes", "idle", "synaptic", "memory")


class ArrMode(str, enum.Enum):
    OFF = "off"
    ACCOUNT = "account"  # gating changes the bill only
    DYNAMICS = "dynamics"  # gated neurons also skip integration


@dataclass(frozen=True)
class EnergyCoefficients:
    e_spike: float = 1.0
    e_active_idle: float = 0.1
    e_gated_idle: float = 0.01
    e_syn_event: float = 0.05
    e_mem_update: dict = field(default_factory=lambda: {"sram": 0.0, "dram": 0.0, "memristor": 0.0})
    technology: str = "sram"

    def __post_init__(self):
        for name in ("e_spike", "e_active_idle", "e_gated_idle", "e_syn_event"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be non-negative")
        if self.e_gated_idle > self.e_active_idle:
            raise ConfigurationError("e_gated_idle must not exceed e_active_idle")
        if any(v < 0 for v in self.e_mem_update.values()):
            raise ConfigurationError("memory update energies must be non-negative")
        if self.technology not in self.e_mem_update:
            raise ConfigurationError(f"no update energy for technology '{self.technology}'")

    @property
    def e_update(self) -> float:
        return float(self.e_mem_update[self.technology])


@dataclass
class EnergyLedger:
    coeffs: EnergyCoefficients
    arr_enabled: bool
    n_spikes: int = 0
    n_active_idle: int = 0
    n_gated_idle: int = 0
    n_syn_events: int = 0
    n_mem_updates: int = 0
    per_neuron_spikes: np.ndarray | None = None
    per_neuron_active_idle: np.ndarray | None = None
    per_neuron_gated_idle: np.ndarray | None = None

    @property
    def spikes(self) -> float:
        return self.n_spikes * self.coeffs.e_spike

    @property
    def idle(self) -> float:
        return self.n_active_idle * self.coeffs.e_active_idle + self.n_gated_idle * self.coeffs.e_gated_idle

    @property
    def synaptic(self) -> float:
        return self.n_syn_events * self.coeffs.e_syn_event

    @property
    def memory(self) -> float:
        return self.n_mem_updates * self.coeffs.e_update

    @property
    def total(self) -> float:
        return self.spikes + self.idle + self.synaptic + self.memory

    def categories(self) -> dict[str, float]:
        return {c: getattr(self, c) for c in CATEGORIES}

    def per_neuron(self) -> np.ndarray:
        """Spike and idle energy per neuron (synaptic and memory costs are network-level)."""
        if self.per_neuron_spikes is None:
            return np.zeros(0)
        c = self.coeffs
        return (
            self.per_neuron_spikes * c.e_spike
            + self.per_neuron_active_idle * c.e_active_idle
            + self.per_neuron_gated_idle * c.e_gated_idle
        )

    def __add__(self, other: "EnergyLedger") -> "EnergyLedger":
        if other.coeffs != self.coeffs or other.arr_enabled != self.arr_enabled:
            raise ContractError("can only merge ledgers with identical coefficients and ARR setting")

        def _sum(a, b):
            if a is None:
                return None if b is None else b.copy()
            return a.copy() if b is None else a + b

        return EnergyLedger(
            self.coeffs,
            self.arr_enabled,
            self.n_spikes + other.n_spikes,
            self.n_active_idle + other.n_active_idle,
            self.n_gated_idle + other.n_gated_idle,
            self.n_syn_events + other.n_syn_events,
            self.n_mem_updates + other.n_mem_updates,
            _sum(self.per_neuron_spikes, other.per_neuron_spikes),
            _sum(self.per_neuron_active_idle, other.per_neuron_active_idle),
            _sum(self.per_neuron_gated_idle, other.per_neuron_gated_idle),
        )


def account_step(
    idle_steps,
    spikes,
    syn_events: int,
    coeffs: EnergyCoefficients,
    arr_enabled: bool,
    gate_after: int = 0,
    mem_updates: int = 0,
) -> tuple[EnergyLedger, np.ndarray]:
    """Charge one simulation step.

    ``idle_steps`` counts consecutive silent steps per neuron before this
    one; a silent neuron is gated when ARR is on and that count has reached
    ``gate_after``.  Returns the ledger delta and the updated idle counters.
    """
    spikes = np.asarray(spikes, dtype=bool)
    idle_steps = np.asarray(idle_steps)
    silent = ~spikes
    gated = silent & (idle_steps >= gate_after) if arr_enabled else np.zeros_like(silent)
    active_idle = silent & ~gated
    flat = spikes.reshape(-1, spikes.shape[-1]) if spikes.ndim else spikes.reshape(1, 1)
    per = lambda m: m.reshape(flat.shape).sum(axis=0).astype(np.int64)  # noqa: E731
    delta = EnergyLedger(
        coeffs,
        arr_enabled,
        n_spikes=int(spikes.sum()),
        n_active_idle=int(active_idle.sum()),
        n_gated_idle=int(gated.sum()),
        n_syn_events=int(syn_events),
        n_mem_updates=int(mem_updates),
        per_neuron_spikes=per(spikes),
        per_neuron_active_idle=per(active_idle),
        per_neuron_gated_idle=per(gated),
    )
    new_idle = np.where(spikes, 0, idle_steps + 1)
    return delta, new_idle


class EnergyAccountant:
    """Stateful wrapper around :func:`account_step` for use inside a run."""

    def __init__(self, shape, coeffs: EnergyCoefficients, arr_enabled: bool, gate_after: int = 0, bucket: int = 0):
        self.coeffs = coeffs
        self.arr_enabled = arr_enabled
        self.gate_after = gate_after
        self.idle = np.zeros(shape, dtype=np.int64)
        self.ledger = EnergyLedger(coeffs, arr_enabled)
        self.bucket = bucket
        self.buckets: list[EnergyLedger] = []
        self._current = EnergyLedger(coeffs, arr_enabled)
        self._steps = 0

    def account_step(self, spikes, syn_events: int = 0, mem_updates: int = 0) -> EnergyLedger:
        delta, self.idle = account_step(
            self.idle, spikes, syn_events, self.coeffs, self.arr_enabled, self.gate_after, mem_updates
        )
        self.ledger = self.ledger + delta
        if self.bucket:
            self._current = self._current + delta
            self._steps += 1
            if self._steps % self.bucket == 0:
                self.buckets.append(self._current)
                self._current = EnergyLedger(self.coeffs, self.arr_enabled)
        return delta

    def flush(self) -> list[EnergyLedger]:
        if self.bucket and self._steps % self.bucket:
            self.buckets.append(self._current)
            self._current = EnergyLedger(self.coeffs, self.arr_enabled)
            self._steps = 0
        return self.buckets


def account_trace(
    spike_trace,
    coeffs: EnergyCoefficients,
    arr_enabled: bool,
    gate_after: int = 0,
    syn_events=None,
    mem_updates=None,
) -> EnergyLedger:
    """Ledger for a whole ``(steps, ..., n_neurons)`` boolean spike trace."""
    spike_trace = np.asarray(spike_trace, dtype=bool)
    acc = EnergyAccountant(spike_trace.shape[1:], coeffs, arr_enabled, gate_after)
    for t in range(spike_trace.shape[0]):
        acc.account_step(
            spike_trace[t],
            0 if syn_events is None else int(syn_events[t]),
            0 if mem_updates is None else int(mem_updates[t]),
        )
    return acc.ledger


def savings(base: EnergyLedger, arr: EnergyLedger) -> float:
    if base.total == 0:
        return 0.0
    return 1.0 - arr.total / base.total
