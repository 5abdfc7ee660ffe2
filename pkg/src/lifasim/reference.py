"""The reference 64-32-10 configuration used by the repair benchmarks."""

from __future__ import annotations

import numpy as np

from .network import NetworkSpec, build_feedforward, cover_all
from .repair import RepairPolicy
from .simulator import NoisyStimulus, SimResult, SimSettings, simulate

REFERENCE_TOPOLOGY = (64, 32, 10)
REFERENCE_SETTINGS = SimSettings(input_bias=0.7)


def reference_network(seed: int = 0, budget: int | None = None) -> NetworkSpec:
    """Dense 64-32-10 network with every layer covered by astrocytes."""
    return cover_all(build_feedforward(REFERENCE_TOPOLOGY, seed=seed), budget=budget)


def reference_stimulus(batch: int = 20, seed: int = 0, amplitude: float = 0.7, sigma: float = 1.0) -> NoisyStimulus:
    """Per-sample currents in ``[0, amplitude)`` with unit-variance noise.

    On its own this drive keeps the healthy network well below 1 Hz, so the
    astrocytes have to lift it to the target rate.
    """
    base = np.random.default_rng([seed, batch]).uniform(0.0, amplitude, size=(batch, REFERENCE_TOPOLOGY[0]))
    return NoisyStimulus(base, sigma, seed)


def reconstruct_rate(
    seed: int = 0,
    steps: int = 2000,
    policy: RepairPolicy = RepairPolicy(),
    settings: SimSettings = REFERENCE_SETTINGS,
    budget: int | None = None,
) -> tuple[float, SimResult]:
    """Run the repair loop on the reference network.

    Returns the mean covered-neuron rate over the second half of the run
    and the full result.
    """
    spec = reference_network(seed, budget)
    res = simulate(spec, reference_stimulus(seed=seed), steps, settings, policy=policy, record_spikes=True)
    covered = np.flatnonzero(spec.roster.owner(spec.n_neurons) >= 0)
    late = res.spikes[steps // 2 :, :, covered]
    rate = float(late.mean()) * 1000.0 / settings.dt
    return rate, res
