"""Run configuration: a YAML tree validated against a strict schema.

Unknown keys are rejected at every level and every default is written back
into the resolved configuration that accompanies a run's outputs.
"""

from __future__ import annotations

from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .dynamics import AstrocyteParams, EfficacyLaw, NeuronParams
from .energy import ArrMode, EnergyCoefficients
from .errors import ConfigurationError
from .faults import FaultKind, FaultMixture, FaultScope
from .network import DEFAULT_BUDGET, WeightInit
from .oracle import TaskConfig
from .repair import RepairPolicy
from .simulator import SimSettings

DEFAULT_TOPOLOGY = [1024, 768, 2048, 512, 100]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class WeightInitConfig(_Section):
    kind: Literal["uniform_fan_in", "normal", "constant"] = "uniform_fan_in"
    scale: float = 1.0
    mean: float = 0.0

    def build(self) -> WeightInit:
        return WeightInit(self.kind, self.scale, self.mean)


class NetworkConfig(_Section):
    topology: list[int] = Field(default_factory=lambda: list(DEFAULT_TOPOLOGY))
    density: float = 1.0
    seed: int = 0
    count_mode: Literal["unidirectional", "bidirectional"] = "bidirectional"
    weight_init: WeightInitConfig = Field(default_factory=WeightInitConfig)
    clusters: int = 7
    cluster_policy: Literal["by-layer-block", "round-robin"] = "by-layer-block"
    budget: int = DEFAULT_BUDGET
    latency_steps: int = 100  # simulated steps for the latency and throughput figures

    @field_validator("topology")
    @classmethod
    def _sizes(cls, v):
        if len(v) < 2 or any(s < 1 for s in v):
            raise ValueError("topology needs at least two layers of positive size")
        return v


class NeuronConfig(_Section):
    tau_n: float = 20.0
    v_th_base: float = 1.0
    v_spk: float = 1.5
    v_idle: float = 0.0
    refractory: int = 2

    def build(self) -> NeuronParams:
        return NeuronParams(**self.model_dump())


class AstrocyteConfig(_Section):
    tau_g: float = 200.0
    tau_p: float = 50.0
    release_gain: float = 0.5
    g_post: float = 0.02
    q0: float = 0.5
    Q: float = 1.0
    u: float = 1.0
    ca_threshold: float = 0.0

    def build(self) -> AstrocyteParams:
        return AstrocyteParams(**self.model_dump())


class DynamicsConfig(_Section):
    dt: float = 1.0
    neuron: NeuronConfig = Field(default_factory=NeuronConfig)
    astrocyte: AstrocyteConfig = Field(default_factory=AstrocyteConfig)
    efficacy_law: Literal["multiplicative", "indirect"] = "multiplicative"
    threshold_relief: float = 0.05
    input_bias: float = 0.7
    passive_release_gain: float = 0.0
    indirect_gain: float = 50.0

    def settings(self, arr_mode: str = "off", gate_after: int = 20) -> SimSettings:
        return SimSettings(
            dt=self.dt,
            efficacy_law=EfficacyLaw(self.efficacy_law),
            threshold_relief=self.threshold_relief,
            input_bias=self.input_bias,
            passive_release_gain=self.passive_release_gain,
            indirect_gain=self.indirect_gain,
            arr_mode=ArrMode(arr_mode),
            gate_after=gate_after,
        )


class RepairConfig(_Section):
    target_rate: float = 2.17
    rate_window: float = 100.0
    max_reconstruction_error: float = 0.10
    repair_gain: float = 0.1
    stress_threshold_delta: float = 0.1
    failure_dwell: int = 5
    flat_tolerance: float = 1e-3
    max_drive: float = 50.0
    deadband: float = 0.0
    steps: int = 2000  # length of the frequency-reconstruction run

    def build(self) -> RepairPolicy:
        d = self.model_dump()
        d.pop("steps")
        return RepairPolicy(**d)


class TaskSection(_Section):
    calib_per_class: int = 4
    test_per_class: int = 40
    sample_noise: float = 0.15
    amplitude: float = 1.6
    present_steps: int = 200
    warmup_steps: int = 3000
    adapt_steps: int = 1500
    target_rate: float = 40.0
    deadband: float = 0.05
    seed: int = 0
    readout: Literal["euclidean", "cosine"] = "euclidean"

    def build(self) -> TaskConfig:
        return TaskConfig(**self.model_dump())


def _equal_mixture() -> dict[str, float]:
    return FaultMixture().as_dict()


class FaultConfig(_Section):
    """The paired with/without-repair fault campaign on the surrogate task."""

    enabled: bool = True
    topology: list[int] = Field(default_factory=lambda: [64, 32, 10])
    budget: int = 1
    synapse_fraction: float = 0.02  # n_r as a fraction of unidirectional synapses
    n_r: Optional[int] = None  # overrides synapse_fraction
    scope: str = "whole"
    mixture: dict[str, float] = Field(
        default_factory=lambda: {"synapse_dead": 1.0, "weight_bitflip": 1.0, "threshold_shift": 1.0}
    )
    seeds: list[int] = Field(default_factory=lambda: list(range(10)))
    plan_seed: int = 1000  # fault plan for network seed s uses plan_seed + s
    task: TaskSection = Field(default_factory=TaskSection)

    @field_validator("mixture")
    @classmethod
    def _kinds(cls, v):
        for k in v:
            FaultKind(k)
        return v

    @field_validator("scope")
    @classmethod
    def _scope(cls, v):
        FaultScope.parse(v)
        return v


class PlacementConfig(_Section):
    enabled: bool = False
    topology: list[int] = Field(default_factory=lambda: [64, 32, 10])
    clusters: int = 1
    n_r: int = 10_000
    a_th: Optional[float] = None
    trials: int = 5
    max_astrocytes_per_layer: Optional[int] = None
    budget: int = 8
    seed: int = 0
    mode: Literal["sequential", "simultaneous"] = "sequential"
    checkpoints: int = 4
    persist_faults: bool = False
    mixture: dict[str, float] = Field(default_factory=_equal_mixture)


class RoutingConfig(_Section):
    enabled: bool = True
    width: int = 4
    height: int = 4
    fault_fractions: list[float] = Field(default_factory=lambda: [0.0, 0.1, 0.2, 0.3])
    seeds: list[int] = Field(default_factory=lambda: list(range(30)))
    traffic: Literal["cluster", "random"] = "cluster"
    # random traffic only
    flows: int = 20
    fanout: int = 4
    traffic_seed: int = 0


class MemoryConfig(_Section):
    enabled: bool = True
    n: int = 100
    p_max: int = 20
    noise: float = 0.1
    seeds: list[int] = Field(default_factory=lambda: list(range(20)))
    astro_g: Optional[float] = None
    prune_density: Optional[float] = None


class EnergyConfig(_Section):
    enabled: bool = True
    e_spike: float = 1.0
    e_active_idle: float = 0.1
    e_gated_idle: float = 0.01
    e_syn_event: float = 0.05
    e_mem_update: dict[str, float] = Field(default_factory=lambda: {"sram": 0.0, "dram": 0.0, "memristor": 0.0})
    technology: Literal["sram", "dram", "memristor"] = "sram"
    arr: Literal["off", "account", "dynamics"] = "account"
    gate_after: int = 20
    steps: int = 1000
    bucket: int = 100
    batch: int = 4

    def coefficients(self) -> EnergyCoefficients:
        return EnergyCoefficients(
            self.e_spike, self.e_active_idle, self.e_gated_idle, self.e_syn_event, dict(self.e_mem_update), self.technology
        )


class RunConfig(_Section):
    network: NetworkConfig = Field(default_factory=NetworkConfig)
    dynamics: DynamicsConfig = Field(default_factory=DynamicsConfig)
    repair: RepairConfig = Field(default_factory=RepairConfig)
    faults: FaultConfig = Field(default_factory=FaultConfig)
    placement: PlacementConfig = Field(default_factory=PlacementConfig)
    routing: RoutingConfig = Field(default_factory=RoutingConfig)
    memory: MemoryConfig = Field(default_factory=MemoryConfig)
    energy: EnergyConfig = Field(default_factory=EnergyConfig)
    output_dir: str = "lifasim-out"


def _format_error(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"])
        if err["type"] == "extra_forbidden":
            parts.append(f"unknown key '{loc}'")
        else:
            parts.append(f"{loc}: {err['msg']}")
    return "; ".join(parts)


def parse_config(data: dict | None) -> RunConfig:
    try:
        return RunConfig.model_validate(data or {})
    except ValidationError as exc:
        raise ConfigurationError(_format_error(exc)) from None


def load_config(path: str | Path) -> RunConfig:
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{path}: {exc}") from None
    if data is not None and not isinstance(data, dict):
        raise ConfigurationError(f"{path}: top level must be a mapping")
    return parse_config(data)


def dump_config(cfg: RunConfig) -> str:
    """Resolved configuration with every default spelled out."""
    return yaml.safe_dump(cfg.model_dump(mode="json"), sort_keys=True, default_flow_style=False)
