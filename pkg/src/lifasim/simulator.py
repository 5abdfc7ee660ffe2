"""Discrete-time simulation of a (possibly faulted) astrocyte-augmented SNN.

Each step every layer integrates the previous step's spikes of the layer
below (one-step synaptic delay).  A presynaptic spike enters as a rate of
``1/dt`` scaled by ``tau_n`` so that a single spike moves the target's
membrane by roughly its synaptic weight.  The input layer integrates the
external stimulus current directly.

Astrocytes modulate the incoming drive of the neurons they cover: the
synaptic input of layers >= 1 and the stimulus current of layer 0.  A batch
of stimuli is simulated in parallel against one shared set of astrocytes,
which sense the batch-averaged activity of their covered neurons.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dynamics import (
    AstrocyteParams,
    AstrocyteState,
    EfficacyLaw,
    NeuronState,
    indirect_pathway_weight,
    modulation_factor,
    receptor_rate,
    step_astrocyte,
    step_gliotransmitter,
    step_neuron,
    step_receptor,
)
from .energy import ArrMode, EnergyAccountant
from .errors import ContractError
from .faults import STUCK_FIRING, STUCK_SILENT, FaultedView, Network, base_spec
from .repair import RecoveryRecord, RepairPolicy, monitor_and_repair


@dataclass(frozen=True)
class SimSettings:
    dt: float = 1.0
    efficacy_law: EfficacyLaw = EfficacyLaw.MULTIPLICATIVE
    threshold_relief: float = 0.05  # fraction of v_th_base removed at g = 1
    input_bias: float = 0.0  # constant current into layers >= 1
    passive_release_gain: float = 0.0  # r_g contribution from calcium level
    indirect_gain: float = 50.0  # G_ij / M_ij for the indirect efficacy law (ms)
    arr_mode: ArrMode = ArrMode.OFF
    gate_after: int = 20

    def __post_init__(self):
        object.__setattr__(self, "efficacy_law", EfficacyLaw(self.efficacy_law))
        object.__setattr__(self, "arr_mode", ArrMode(self.arr_mode))
        if not self.dt > 0:
            raise ContractError("dt must be positive")


@dataclass(frozen=True)
class AstroRuntime:
    v_g: np.ndarray
    g: np.ndarray
    gamma: np.ndarray
    drive: np.ndarray
    activations: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "AstroRuntime":
        z = np.zeros(n)
        return cls(z, z.copy(), z.copy(), z.copy(), np.zeros(n, dtype=np.int64))


class CompiledNetwork:
    """Dense per-pair weight matrices and lookup tables for one network."""

    def __init__(self, net: Network):
        spec = base_spec(net)
        topo = spec.topology
        self.net = net
        self.topology = topo
        self.params = spec.neuron_params
        self.n = topo.n_neurons
        self.slices = [topo.layer_slice(l) for l in range(topo.n_layers)]
        self.weights = []
        for i, lc in enumerate(spec.layers):
            data = net.edge_data(i) if isinstance(net, FaultedView) else lc.r * lc.w
            self.weights.append(lc._csr(data).toarray())
        if isinstance(net, FaultedView):
            self.silent = np.flatnonzero(net.stuck == STUCK_SILENT)
            self.firing = np.flatnonzero(net.stuck == STUCK_FIRING)
            self.v_th0 = self.params.v_th_base + net.threshold_delta
        else:
            self.silent = self.firing = np.zeros(0, dtype=np.int64)
            self.v_th0 = np.full(self.n, self.params.v_th_base)

        self.out_degree = np.zeros(self.n)
        in_degree = np.ones(self.n)  # stimulus line into layer 0
        for i, W in enumerate(self.weights):
            nz = W != 0
            self.out_degree[self.slices[i]] = nz.sum(axis=1)
            in_degree[self.slices[i + 1]] = nz.sum(axis=0)

        active = spec.roster.active()
        self.astro_ids = tuple(a.id for a in active)
        self.n_astro = len(active)
        self.owner = spec.roster.owner(self.n)
        self.covered = np.flatnonzero(self.owner >= 0)
        self.cover = np.zeros((self.n_astro, self.n))
        for i, a in enumerate(active):
            self.cover[i, list(a.neurons)] = 1.0
        self.n_cov = self.cover.sum(axis=1)
        self.astro_in_syn = self.cover @ in_degree
        groups: dict[AstrocyteParams, list[int]] = {}
        for i, a in enumerate(active):
            groups.setdefault(a.params, []).append(i)
        self.groups = [(p, np.array(idx)) for p, idx in groups.items()]


@dataclass
class RepairLog:
    steps: list[int] = field(default_factory=list)
    rates: list[np.ndarray] = field(default_factory=list)
    errors: list[np.ndarray] = field(default_factory=list)
    drive: list[np.ndarray] = field(default_factory=list)
    saturated: list[np.ndarray] = field(default_factory=list)


@dataclass
class SimResult:
    counts: np.ndarray  # (batch, n_neurons) spike counts
    steps: int
    dt: float
    state: NeuronState
    astro: AstroRuntime
    spikes: np.ndarray | None
    syn_events: np.ndarray
    mem_updates: np.ndarray
    repair: RepairLog
    recovery: RecoveryRecord

    @property
    def duration_s(self) -> float:
        return self.steps * self.dt / 1000.0

    def rates(self) -> np.ndarray:
        return self.counts / self.duration_s

    def mean_rate(self, neurons=None) -> float:
        r = self.rates()
        return float(r.mean() if neurons is None else r[:, neurons].mean())


def _stimulus_fn(stimulus) -> Callable[[int], np.ndarray]:
    if callable(stimulus):
        return stimulus
    arr = np.asarray(stimulus, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim == 2:
        return lambda t: arr
    if arr.ndim == 3:
        return lambda t: arr[t]
    raise ContractError("stimulus must be (n_in,), (batch, n_in), (steps, batch, n_in) or callable")


def _astro_factor(comp: CompiledNetwork, settings: SimSettings, st: AstrocyteState) -> np.ndarray:
    out = np.ones(comp.n_astro)
    for params, idx in comp.groups:
        if settings.efficacy_law is EfficacyLaw.MULTIPLICATIVE:
            out[idx] = modulation_factor(params, st.g[idx])
        else:
            sub = AstrocyteState(st.v_g[idx], st.g[idx], st.gamma[idx])
            rate = receptor_rate(sub, params)
            out[idx] = np.maximum(indirect_pathway_weight(1.0, settings.indirect_gain, rate, params.tau_p), 0.0)
    return out


def simulate(
    net: Network | CompiledNetwork,
    stimulus,
    steps: int,
    settings: SimSettings = SimSettings(),
    *,
    policy: RepairPolicy | None = None,
    astro: AstroRuntime | None = None,
    freeze_astrocytes: bool = False,
    state: NeuronState | None = None,
    record_spikes: bool = False,
    accountants: Sequence[EnergyAccountant] = (),
    step_offset: int = 0,
) -> SimResult:
    """Run ``steps`` steps.

    Args:
        net: network, faulted view, or a precompiled network.
        stimulus: input-layer current, ``(n_in,)``, ``(batch, n_in)``,
            ``(steps, batch, n_in)`` or a callable ``step -> (batch, n_in)``.
        steps: number of steps of length ``settings.dt``.
        settings: integration and modulation settings.
        policy: repair controller; ``None`` keeps every astrocyte's release
            drive fixed at its starting value.
        astro: starting astrocyte state (defaults to quiescent).
        freeze_astrocytes: hold gliotransmitter levels fixed for the run.
        state: starting neuron state (defaults to resting).
        record_spikes: keep the full boolean spike raster.
        accountants: energy accountants charged every step.
        step_offset: added to step indices stored in the neuron state.
    """
    comp = net if isinstance(net, CompiledNetwork) else CompiledNetwork(net)
    dt = settings.dt
    params = comp.params
    stim = _stimulus_fn(stimulus)
    s0 = np.asarray(stim(0), dtype=float)
    batch = s0.shape[0]
    n = comp.n
    if s0.shape[1] != comp.topology.layer_sizes[0]:
        raise ContractError(f"stimulus width {s0.shape[1]} does not match the input layer")

    if state is None:
        state = NeuronState.resting(params, (batch, n))
    v, refractory, last = state.v_n, state.refractory_left, state.last_spike_step
    n_astro = comp.n_astro
    astro = astro or AstroRuntime.zeros(n_astro)
    if astro.g.shape != (n_astro,):
        raise ContractError("astrocyte state does not match the roster")
    ast = AstrocyteState(astro.v_g.copy(), astro.g.copy(), astro.gamma.copy())
    drive = astro.drive.copy()
    activations = astro.activations.copy()

    controlled = policy is not None and not freeze_astrocytes and n_astro > 0
    window_steps = int(round(policy.rate_window / dt)) if controlled else 0
    win_counts = np.zeros(n_astro)
    repair_log = RepairLog()
    recovery = RecoveryRecord(astrocyte_ids=comp.astro_ids)

    counts = np.zeros((batch, n), dtype=np.int64)
    raster = np.zeros((steps, batch, n), dtype=bool) if record_spikes else None
    syn_events = np.zeros(steps, dtype=np.int64)
    mem_updates = np.zeros(steps, dtype=np.int64)
    prev = np.zeros((batch, n))
    scale = params.tau_n / dt
    bias = settings.input_bias
    relief = settings.threshold_relief
    slices = comp.slices
    dynamics_gating = settings.arr_mode is ArrMode.DYNAMICS
    idle = np.zeros((batch, n), dtype=np.int64)
    owner_cov = comp.owner[comp.covered]

    for t in range(steps):
        fac = None
        v_th = comp.v_th0
        if n_astro:
            fac = np.ones(n)
            fac[comp.covered] = _astro_factor(comp, settings, ast)[owner_cov]
            if relief:
                g_n = np.zeros(n)
                g_n[comp.covered] = ast.g[owner_cov]
                v_th = comp.v_th0 - relief * g_n * params.v_th_base

        drive_in = np.empty((batch, n))  # raw incoming activity, for ARR wake-up
        i_n = np.empty((batch, n))
        st = np.asarray(stim(t), dtype=float)
        drive_in[:, slices[0]] = st
        i_n[:, slices[0]] = st if fac is None else st * fac[slices[0]]
        for l in range(1, len(slices)):
            syn = prev[:, slices[l - 1]] @ comp.weights[l - 1]
            drive_in[:, slices[l]] = syn
            if fac is None:
                i_n[:, slices[l]] = bias + scale * syn
            else:
                i_n[:, slices[l]] = bias + scale * syn * fac[slices[l]]

        new, spikes = step_neuron(
            NeuronState(v, v_th, refractory, last), params, i_n, dt, step=step_offset + t
        )
        if dynamics_gating:
            gated = (idle >= settings.gate_after) & (drive_in == 0)
            v = np.where(gated, v, new.v_n)
            refractory = np.where(gated, refractory, new.refractory_left)
            spikes &= ~gated
        else:
            v, refractory = new.v_n, new.refractory_left
        last = new.last_spike_step
        if comp.silent.size:
            spikes[:, comp.silent] = False
        if comp.firing.size:
            spikes[:, comp.firing] = True
            last = np.where(spikes, step_offset + t, last)
        idle = np.where(spikes, 0, idle + 1)

        counts += spikes
        if raster is not None:
            raster[t] = spikes
        fired = spikes.astype(float)
        syn_events[t] = int(round(float(fired.sum(axis=0) @ comp.out_degree)))

        if n_astro and not freeze_astrocytes:
            per_neuron = fired.sum(axis=0)
            rate_hz = (comp.cover @ per_neuron) / (comp.n_cov * batch) * (1000.0 / dt)
            for p, idx in comp.groups:
                sub = AstrocyteState(ast.v_g[idx], ast.g[idx], ast.gamma[idx])
                sub = step_astrocyte(sub, p, rate_hz[idx], dt)
                r_g = drive[idx] + settings.passive_release_gain * np.maximum(sub.v_g, 0.0)
                sub = step_gliotransmitter(sub, p, r_g, dt)
                sub = step_receptor(sub, p, dt)
                ast.v_g[idx], ast.g[idx], ast.gamma[idx] = sub.v_g, sub.g, sub.gamma
            if controlled:
                win_counts += comp.cover @ per_neuron
                if (t + 1) % window_steps == 0:
                    upd = monitor_and_repair(drive, win_counts, comp.n_cov * batch, policy, dt)
                    changed = upd.drive != drive
                    mem_updates[t] = int(comp.astro_in_syn[changed].sum())
                    drive = upd.drive
                    activations = activations + changed
                    repair_log.steps.append(step_offset + t + 1)
                    repair_log.rates.append(upd.rate)
                    repair_log.errors.append(upd.reconstruction_error)
                    repair_log.drive.append(drive.copy())
                    repair_log.saturated.append(upd.saturated)
                    dvth = (comp.cover @ (v_th - params.v_th_base)) / comp.n_cov
                    recovery.append(step_offset + t + 1, dvth, ast.g.copy())
                    win_counts[:] = 0

        for acc in accountants:
            acc.account_step(spikes, syn_events[t], mem_updates[t])
        prev = fired

    final_state = NeuronState(v, comp.v_th0 if not n_astro else v_th, refractory, last)
    final_astro = AstroRuntime(ast.v_g, ast.g, ast.gamma, drive, activations)
    return SimResult(counts, steps, dt, final_state, final_astro, raster, syn_events, mem_updates, repair_log, recovery)


class NoisyStimulus:
    """Constant per-sample currents plus seeded Gaussian noise each step.

    The noise for step ``t`` depends only on ``(seed, t)``, so repeated runs
    and runs resumed mid-way see the same input.
    """

    def __init__(self, base, sigma: float, seed: int = 0):
        self.base = np.atleast_2d(np.asarray(base, dtype=float))
        self.sigma = float(sigma)
        self.seed = int(seed)

    def __call__(self, t: int) -> np.ndarray:
        if self.sigma == 0:
            return self.base
        noise = np.random.default_rng([self.seed, int(t)]).standard_normal(self.base.shape)
        return self.base + self.sigma * noise
