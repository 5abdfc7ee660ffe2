import math

import numpy as np
import pytest

from lifasim.dynamics import AstrocyteParams, EfficacyLaw
from lifasim.errors import ContractError
from lifasim.faults import FaultEvent, FaultKind, FaultPlan, FaultScope, apply_plan
from lifasim.network import build_feedforward, cover_all
from lifasim.reference import reconstruct_rate, reference_stimulus
from lifasim.repair import RepairPolicy
from lifasim.simulator import CompiledNetwork, NoisyStimulus, SimSettings, simulate


def _plain_lif(spec, stim, steps, bias):
    """Independent leaky integrate-and-fire loop, no astrocytes."""
    p = spec.neuron_params
    sizes = spec.topology.layer_sizes
    off = np.concatenate([[0], np.cumsum(sizes)])
    Ws = [lc.dense_weights() * lc.kernel() for lc in spec.layers]
    batch = stim.shape[0]
    v = np.zeros((batch, off[-1]))
    ref = np.zeros((batch, off[-1]), dtype=int)
    prev = np.zeros_like(v)
    decay = math.exp(-1.0 / p.tau_n)
    raster = []
    for _ in range(steps):
        i_n = np.empty_like(v)
        i_n[:, : sizes[0]] = stim
        for l in range(1, len(sizes)):
            i_n[:, off[l] : off[l + 1]] = bias + p.tau_n * (prev[:, off[l - 1] : off[l]] @ Ws[l - 1])
        v = i_n + (v - i_n) * decay
        held = ref > 0
        v[held] = p.v_idle
        spk = ~held & (v >= p.v_th_base)
        v[spk] = p.v_idle
        ref = np.where(spk, p.refractory, np.maximum(ref - 1, 0))
        raster.append(spk)
        prev = spk.astype(float)
    return np.array(raster)


@pytest.fixture
def small():
    return build_feedforward([12, 8, 4], seed=3)


def test_matches_plain_lif_oracle(small):
    stim = np.random.default_rng(0).uniform(0.5, 2.0, size=(3, 12))
    res = simulate(small, stim, 150, SimSettings(input_bias=0.3), record_spikes=True)
    assert np.array_equal(res.spikes, _plain_lif(small, stim, 150, 0.3))


def test_zero_gain_astrocytes_are_invisible(small):
    stim = np.random.default_rng(1).uniform(0.5, 2.0, size=(2, 12))
    inert = cover_all(small, 4, AstrocyteParams(Q=0.0, release_gain=0.0))
    settings = SimSettings(input_bias=0.3)
    a = simulate(small, stim, 300, settings, record_spikes=True)
    b = simulate(inert, stim, 300, settings, policy=RepairPolicy(), record_spikes=True)
    assert np.array_equal(a.spikes, b.spikes)


def test_zero_repair_gain_equals_no_controller(small):
    net = cover_all(small, 4)
    stim = NoisyStimulus(np.full((2, 12), 0.8), 0.5, seed=2)
    a = simulate(net, stim, 400, SimSettings(), record_spikes=True)
    b = simulate(net, stim, 400, SimSettings(), policy=RepairPolicy(repair_gain=0.0), record_spikes=True)
    assert np.array_equal(a.spikes, b.spikes)


def test_stuck_neurons_are_forced(small):
    plan = FaultPlan(
        0,
        2,
        FaultScope(),
        (FaultEvent(FaultKind.NEURON_STUCK_FIRING, 13), FaultEvent(FaultKind.NEURON_STUCK_SILENT, 0)),
    )
    res = simulate(apply_plan(small, plan), np.full(12, 5.0), 50, record_spikes=True)
    assert res.spikes[:, 0, 13].all()
    assert not res.spikes[:, 0, 0].any()


def test_stimulus_shapes(small):
    one = simulate(small, np.ones(12), 10)
    assert one.counts.shape == (1, 24)
    seq = simulate(small, np.ones((10, 2, 12)), 10)
    assert seq.counts.shape == (2, 24)
    with pytest.raises(ContractError):
        simulate(small, np.ones(5), 10)
    with pytest.raises(ContractError):
        simulate(small, np.ones((2, 2, 2, 12)), 10)


def test_compiled_network_reuse(small):
    comp = CompiledNetwork(small)
    stim = np.full((1, 12), 1.5)
    assert np.array_equal(simulate(comp, stim, 50).counts, simulate(small, stim, 50).counts)


def test_noisy_stimulus_is_seeded():
    s = NoisyStimulus(np.zeros((2, 3)), 1.0, seed=4)
    assert np.array_equal(s(7), s(7))
    assert not np.array_equal(s(7), s(8))
    assert np.array_equal(NoisyStimulus(np.ones(3), 0.0)(5), np.ones((1, 3)))


def test_indirect_law_runs_and_stays_finite(small):
    net = cover_all(small, 4)
    res = simulate(
        net, reference_stimulus(batch=2)(0)[:, :12], 300, SimSettings(efficacy_law=EfficacyLaw.INDIRECT), policy=RepairPolicy()
    )
    assert np.all(np.isfinite(res.astro.g))


def test_repair_log_and_recovery_record(small):
    net = cover_all(small, 8)
    res = simulate(net, np.full((2, 12), 0.9), 500, SimSettings(input_bias=0.5), policy=RepairPolicy())
    assert res.repair.steps == [100, 200, 300, 400, 500]
    assert len(res.recovery) == 5
    assert res.recovery.astrocyte_ids == tuple(a.id for a in net.roster.active())
    rows = list(res.recovery.rows(RepairPolicy()))
    assert len(rows) == 5 * len(net.roster.active())


def test_frequency_reconstruction_single_seed():
    rate, res = reconstruct_rate(seed=0)
    assert abs(rate - 2.17) / 2.17 <= 0.10
    assert res.steps == 2000
