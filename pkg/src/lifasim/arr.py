"""Paired ARR on/off energy comparison on a simulated network."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .energy import ArrMode, EnergyAccountant, EnergyCoefficients, EnergyLedger, savings
from .errors import ContractError
from .faults import base_spec
from .simulator import SimSettings, _stimulus_fn, simulate


@dataclass
class ArrComparison:
    base: EnergyLedger
    arr: EnergyLedger
    savings: float
    mode: ArrMode
    spikes_identical: bool
    base_buckets: list[EnergyLedger]
    arr_buckets: list[EnergyLedger]


def compare_arr(
    net,
    stimulus,
    steps: int,
    coeffs: EnergyCoefficients = EnergyCoefficients(),
    settings: SimSettings = SimSettings(),
    mode: ArrMode | str = ArrMode.ACCOUNT,
    gate_after: int | None = None,
    bucket: int = 100,
    **sim_kwargs,
) -> ArrComparison:
    """Simulate the same network and stimulus with ARR off and on.

    In ``account`` mode gating only changes the bill, and the two spike
    trains are checked to be bit-identical.  ``dynamics`` mode lets gated
    neurons skip integration, so spikes may differ and that is reported.
    """
    mode = ArrMode(mode)
    if mode is ArrMode.OFF:
        raise ContractError("compare_arr needs an ARR mode to compare against")
    gate_after = settings.gate_after if gate_after is None else gate_after
    base_settings = replace(settings, arr_mode=ArrMode.OFF, gate_after=gate_after)
    arr_settings = replace(settings, arr_mode=mode, gate_after=gate_after)

    batch = np.atleast_2d(_stimulus_fn(stimulus)(0)).shape[0]
    shape = (batch, base_spec(net).n_neurons)

    def run(s: SimSettings, arr_on: bool):
        acc = EnergyAccountant(shape, coeffs, arr_on, gate_after, bucket)
        res = simulate(net, stimulus, steps, s, accountants=[acc], record_spikes=True, **sim_kwargs)
        acc.flush()
        return res, acc

    base_res, base_acc = run(base_settings, False)
    arr_res, arr_acc = run(arr_settings, True)
    identical = bool(np.array_equal(base_res.spikes, arr_res.spikes))
    if mode is ArrMode.ACCOUNT and not identical:
        raise AssertionError("accounting-only ARR changed the spike train")
    return ArrComparison(
        base_acc.ledger,
        arr_acc.ledger,
        savings(base_acc.ledger, arr_acc.ledger),
        mode,
        identical,
        base_acc.buckets,
        arr_acc.buckets,
    )
