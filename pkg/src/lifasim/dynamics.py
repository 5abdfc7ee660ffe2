"""Coupled neuron / astrocyte / gliotransmitter dynamics.

All three state equations are linear in their own state over a step with
piecewise-constant drive::

    tau_n dv/dt = -v + I_n
    tau_g dv_g/dt = -v_g + I_g
    tau_p dg/dt = -g + G (1 - g) r_g          = -(1 + G r_g) g + G r_g
    tau_p dgamma/dt = -gamma + Gp (1 - gamma) g tau_p

so each is advanced with the exponential-Euler update
``x <- x_inf + (x - x_inf) * exp(-k dt)``, which is exact for constant drive.

Units: time in ms.  ``r_g`` is a dimensionless release drive (a rate in
1/ms multiplied by 1 ms) so that ``G * r_g`` is dimensionless.  ``g_post``
carries 1/ms because the receptor equation multiplies by ``tau_p``.

Every function is pure: states are frozen dataclasses holding numpy arrays
(or 0-d arrays when called with scalars) and a new state is returned.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ContractError, IntegrationError

V_TH_FLOOR = 1e-6


class EfficacyLaw(str, enum.Enum):
    MULTIPLICATIVE = "multiplicative"  # w = u (q0 + Q g)
    INDIRECT = "indirect"  # s = J0 + (G_ij / tau_p) dgamma/dt


@dataclass(frozen=True)
class NeuronParams:
    tau_n: float = 20.0
    v_th_base: float = 1.0
    v_spk: float = 1.5
    v_idle: float = 0.0
    refractory: int = 2

    def __post_init__(self):
        if not self.tau_n > 0:
            raise ConfigurationError(f"tau_n must be positive, got {self.tau_n}")
        if not self.v_spk > self.v_th_base > self.v_idle:
            raise ConfigurationError(
                "need v_spk > v_th_base > v_idle, got "
                f"{self.v_spk}, {self.v_th_base}, {self.v_idle}"
            )
        if self.v_th_base <= 0:
            raise ConfigurationError("v_th_base must be positive")
        if int(self.refractory) != self.refractory or self.refractory < 0:
            raise ConfigurationError("refractory must be a non-negative integer")


@dataclass(frozen=True)
class NeuronState:
    v_n: np.ndarray
    v_th: np.ndarray
    refractory_left: np.ndarray
    last_spike_step: np.ndarray  # -1 means "never spiked"

    @classmethod
    def resting(cls, params: NeuronParams, shape=()) -> "NeuronState":
        return cls(
            v_n=np.full(shape, params.v_idle, dtype=float),
            v_th=np.full(shape, params.v_th_base, dtype=float),
            refractory_left=np.zeros(shape, dtype=np.int64),
            last_spike_step=np.full(shape, -1, dtype=np.int64),
        )


@dataclass(frozen=True)
class AstrocyteParams:
    tau_g: float = 200.0
    tau_p: float = 50.0
    release_gain: float = 0.5
    g_post: float = 0.02
    q0: float = 0.5
    Q: float = 1.0
    u: float = 1.0
    ca_threshold: float = 0.0

    def __post_init__(self):
        if not (self.tau_g > 0 and self.tau_p > 0):
            raise ConfigurationError("astrocyte time constants must be positive")
        for name in ("release_gain", "g_post", "q0", "Q", "u"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be non-negative")


@dataclass(frozen=True)
class AstrocyteState:
    v_g: np.ndarray
    g: np.ndarray
    gamma: np.ndarray

    @classmethod
    def quiescent(cls, shape=()) -> "AstrocyteState":
        z = np.zeros(shape, dtype=float)
        return cls(v_g=z, g=z.copy(), gamma=z.copy())


@dataclass(frozen=True)
class StepInputs:
    i_n: np.ndarray
    i_g: np.ndarray
    r_g: np.ndarray

    def validate(self, n_neurons: int, n_astrocytes: int) -> None:
        if np.shape(self.i_n)[-1:] != (n_neurons,):
            raise ContractError(f"i_n must have {n_neurons} entries")
        if np.shape(self.i_g)[-1:] != (n_astrocytes,) or np.shape(self.r_g)[-1:] != (n_astrocytes,):
            raise ContractError(f"i_g and r_g must have {n_astrocytes} entries")
        if np.any(np.asarray(self.r_g) < 0):
            raise ContractError("r_g must be non-negative")


def _finite(what: str, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        bad = np.argwhere(~np.isfinite(x))
        idx = tuple(int(i) for i in bad[0]) if x.ndim else None
        raise IntegrationError(what, idx)
    return x


def _check_dt(dt: float, tau: float, name: str) -> None:
    if not dt > 0:
        raise ContractError(f"dt must be positive, got {dt}")
    if dt > tau:
        raise ContractError(f"dt={dt} exceeds {name}={tau}")


def exp_euler(x, target, dt: float, tau: float):
    """One exact step of ``tau dx/dt = -x + target`` with constant target."""
    return target + (x - target) * math.exp(-dt / tau)


def step_neuron(
    state: NeuronState,
    params: NeuronParams,
    i_n,
    dt: float,
    step: int | None = None,
) -> tuple[NeuronState, np.ndarray]:
    """Advance membrane activity one step and apply threshold-and-reset.

    Neurons still in their refractory period are held at ``v_idle`` and
    cannot fire.  Returns the new state and a boolean spike array.
    """
    _check_dt(dt, params.tau_n, "tau_n")
    i_n = _finite("neuron input", i_n)
    v = _finite("membrane state", state.v_n)
    v_th = np.maximum(np.asarray(state.v_th, dtype=float), V_TH_FLOOR)

    v = exp_euler(v, i_n, dt, params.tau_n)
    refractory = np.asarray(state.refractory_left)
    held = refractory > 0
    v = np.where(held, params.v_idle, v)
    spikes = ~held & (v >= v_th)
    v = np.where(spikes, params.v_idle, v)
    refractory = np.where(spikes, params.refractory, np.maximum(refractory - 1, 0))
    last = np.asarray(state.last_spike_step)
    if step is not None:
        last = np.where(spikes, step, last)
    new = NeuronState(v_n=v, v_th=v_th, refractory_left=refractory, last_spike_step=last)
    return new, spikes


def step_astrocyte(state: AstrocyteState, params: AstrocyteParams, i_g, dt: float) -> AstrocyteState:
    _check_dt(dt, params.tau_g, "tau_g")
    i_g = _finite("astrocyte input", i_g)
    v_g = exp_euler(_finite("calcium state", state.v_g), i_g, dt, params.tau_g)
    return AstrocyteState(v_g=v_g, g=state.g, gamma=state.gamma)


def step_gliotransmitter(
    state: AstrocyteState, params: AstrocyteParams, r_g, dt: float
) -> AstrocyteState:
    """Advance gliotransmitter availability ``g``.

    Release is gated: where calcium ``v_g`` sits below ``ca_threshold`` the
    effective release drive is zero.
    """
    if not dt > 0:
        raise ContractError(f"dt must be positive, got {dt}")
    r_g = _finite("release rate", r_g)
    if np.any(r_g < 0):
        raise ContractError("release rate r_g must be non-negative")
    g = _finite("gliotransmitter state", state.g)
    r_eff = np.where(np.asarray(state.v_g) < params.ca_threshold, 0.0, r_g)
    a = params.release_gain * r_eff
    g_inf = a / (1.0 + a)
    g = g_inf + (g - g_inf) * np.exp(-(1.0 + a) * dt / params.tau_p)
    return AstrocyteState(v_g=state.v_g, g=np.clip(g, 0.0, 1.0), gamma=state.gamma)


def step_receptor(state: AstrocyteState, params: AstrocyteParams, dt: float) -> AstrocyteState:
    if not dt > 0:
        raise ContractError(f"dt must be positive, got {dt}")
    gamma = _finite("receptor state", state.gamma)
    if np.any((gamma < 0) | (gamma > 1)):
        raise ContractError("gamma must lie in [0, 1]")
    b = params.g_post * _finite("gliotransmitter state", state.g) * params.tau_p
    gamma_inf = b / (1.0 + b)
    gamma = gamma_inf + (gamma - gamma_inf) * np.exp(-(1.0 + b) * dt / params.tau_p)
    return AstrocyteState(v_g=state.v_g, g=state.g, gamma=np.clip(gamma, 0.0, 1.0))


def receptor_rate(state: AstrocyteState, params: AstrocyteParams) -> np.ndarray:
    """Instantaneous d(gamma)/dt in 1/ms."""
    gamma = np.asarray(state.gamma, dtype=float)
    g = np.asarray(state.g, dtype=float)
    return (-gamma + params.g_post * (1.0 - gamma) * g * params.tau_p) / params.tau_p


def modulation_factor(params: AstrocyteParams, g):
    """Multiplicative gain ``u (q0 + Q g) / (u q0)``; exactly 1 at ``g = 0``."""
    g = np.asarray(g, dtype=float)
    if np.any((g < 0) | (g > 1)):
        raise ContractError("g must lie in [0, 1]")
    norm = params.u * params.q0
    if norm == 0:
        if params.Q > 0:
            raise ConfigurationError("u * q0 = 0 leaves the weight normalisation undefined")
        return np.ones_like(g)
    return params.u * (params.q0 + params.Q * g) / norm


def effective_weight(base_weight, params: AstrocyteParams, g, covered: bool = True):
    """Astrocyte-modulated synaptic weight.

    The main efficacy law ``w = u (q0 + Q g)`` is applied as a gain relative
    to the ``g = 0`` baseline so that the structural weight is preserved when
    no gliotransmitter is present.  Uncovered synapses pass through.
    """
    if not covered:
        return base_weight
    return base_weight * modulation_factor(params, g)


def indirect_pathway_weight(j0, g_ij, gamma_dot, tau_p: float):
    """Direct pathway ``j0`` plus the receptor-driven indirect term."""
    if not tau_p > 0:
        raise ContractError("tau_p must be positive")
    out = np.asarray(j0, dtype=float) + (np.asarray(g_ij, dtype=float) / tau_p) * np.asarray(
        gamma_dot, dtype=float
    )
    _finite("indirect pathway weight", out)
    return out if out.ndim else float(out)
