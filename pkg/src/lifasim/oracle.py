"""Accuracy oracles for fault probing.

``SurrogateOracle`` is a self-contained pattern-classification task: class
prototypes are a fixed random projection of one-hot class codes onto the
input layer, samples are noisy copies, and the readout is a nearest-centroid
classifier (a linear layer plus argmax) on output-layer spike counts that is
calibrated once on the healthy network.

Evaluation protocol for a (possibly faulted) network:

1. the healthy network warms up with repair enabled, which settles every
   astrocyte at its homeostatic operating point;
2. the readout is calibrated and ``a0`` measured with astrocytes frozen there;
3. a faulted network either adapts with repair from the healthy astrocyte
   state (``repair=True``) or keeps the healthy state (``repair=False``),
   then the test set is scored with astrocytes frozen.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ContractError
from .faults import FaultPlan, Network, apply_plan, base_spec
from .network import NetworkSpec, fingerprint
from .repair import RepairPolicy
from .simulator import AstroRuntime, CompiledNetwork, SimSettings, simulate


class ConstantOracle:
    """Always reports the same accuracy; models a fault-immune task."""

    def __init__(self, value: float):
        self.value = float(value)

    def baseline(self, spec) -> float:
        return self.value

    def evaluate(self, net) -> float:
        return self.value


class ScriptedOracle:
    """Replays a list of accuracies, or a function of the evaluated network."""

    def __init__(self, a0: float, script):
        self.a0 = float(a0)
        self._script = script
        self._calls = 0

    def baseline(self, spec) -> float:
        return self.a0

    def evaluate(self, net) -> float:
        if callable(self._script):
            value = self._script(net)
        else:
            value = self._script[self._calls % len(self._script)]
        self._calls += 1
        return float(value)


@dataclass(frozen=True)
class TaskConfig:
    calib_per_class: int = 4
    test_per_class: int = 40
    sample_noise: float = 0.15  # relative to amplitude
    amplitude: float = 1.6
    present_steps: int = 200
    warmup_steps: int = 3000
    adapt_steps: int = 1500
    target_rate: float = 40.0  # Hz, homeostatic set point of the task network
    deadband: float = 0.05
    seed: int = 0
    readout: str = "euclidean"


@dataclass
class _Healthy:
    astro: AstroRuntime
    centroids: np.ndarray
    a0: float


class SurrogateOracle:
    def __init__(
        self,
        settings: SimSettings = SimSettings(input_bias=0.7),
        task: TaskConfig = TaskConfig(),
        repair: bool = True,
        policy: RepairPolicy | None = None,
    ):
        self.settings = settings
        self.task = task
        self.repair = repair
        self.policy = policy or RepairPolicy(target_rate=task.target_rate, deadband=task.deadband)
        self._cache: dict[str, _Healthy] = {}

    def with_repair(self, repair: bool) -> "SurrogateOracle":
        """Same task and shared calibration cache, other repair arm."""
        other = SurrogateOracle(self.settings, self.task, repair, self.policy)
        other._cache = self._cache
        return other

    def _data(self, n_in: int, n_classes: int):
        t = self.task
        rng = np.random.default_rng([t.seed, n_in, n_classes])
        projection = rng.uniform(0.0, 1.0, size=(n_classes, n_in))
        prototypes = t.amplitude * (np.eye(n_classes) @ projection)

        def draw(per_class):
            labels = np.repeat(np.arange(n_classes), per_class)
            x = prototypes[labels] + t.amplitude * t.sample_noise * rng.standard_normal((labels.size, n_in))
            return np.clip(x, 0.0, None), labels

        calib = draw(t.calib_per_class)
        test = draw(t.test_per_class)
        return calib, test

    def _counts(self, comp: CompiledNetwork, x: np.ndarray, astro: AstroRuntime) -> np.ndarray:
        res = simulate(comp, x, self.task.present_steps, self.settings, astro=astro, freeze_astrocytes=True)
        out = comp.slices[-1]
        return res.counts[:, out].astype(float)

    def _classify(self, counts: np.ndarray, centroids: np.ndarray) -> np.ndarray:
        if self.task.readout == "cosine":
            counts = counts / np.maximum(np.linalg.norm(counts, axis=1, keepdims=True), 1e-12)
            centroids = centroids / np.maximum(np.linalg.norm(centroids, axis=1, keepdims=True), 1e-12)
        # nearest centroid as a linear readout: argmax of 2 c.x - |c|^2
        scores = 2.0 * counts @ centroids.T - (centroids**2).sum(axis=1)
        return np.argmax(scores, axis=1)

    def _healthy(self, spec: NetworkSpec) -> _Healthy:
        key = fingerprint(spec)
        if key in self._cache:
            return self._cache[key]
        comp = CompiledNetwork(spec)
        n_out = spec.topology.layer_sizes[-1]
        (xc, yc), (xt, yt) = self._data(spec.topology.layer_sizes[0], n_out)
        warm = simulate(comp, xc, self.task.warmup_steps, self.settings, policy=self.policy).astro
        counts = self._counts(comp, xc, warm)
        centroids = np.stack([counts[yc == c].mean(axis=0) for c in range(n_out)])
        a0 = float(np.mean(self._classify(self._counts(comp, xt, warm), centroids) == yt))
        healthy = _Healthy(warm, centroids, a0)
        self._cache[key] = healthy
        return healthy

    def baseline(self, spec: NetworkSpec) -> float:
        return self._healthy(base_spec(spec)).a0

    def evaluate(self, net: Network) -> float:
        return self.evaluate_arms(net, arms=(self.repair,))[0]

    def evaluate_arms(self, net: Network, arms: Sequence[bool] = (True, False)) -> tuple[float, ...]:
        """Accuracy of ``net`` for each requested repair setting."""
        spec = base_spec(net)
        healthy = self._healthy(spec)
        comp = CompiledNetwork(net)
        n_out = spec.topology.layer_sizes[-1]
        (xc, _), (xt, yt) = self._data(spec.topology.layer_sizes[0], n_out)
        out = []
        for arm in arms:
            astro = healthy.astro
            if arm and comp.n_astro:
                astro = simulate(comp, xc, self.task.adapt_steps, self.settings, astro=astro, policy=self.policy).astro
            pred = self._classify(self._counts(comp, xt, astro), healthy.centroids)
            out.append(float(np.mean(pred == yt)))
        return tuple(out)


@dataclass(frozen=True)
class PairedTrial:
    seed: int
    a0: float
    with_repair: float
    without_repair: float

    @property
    def improvement(self) -> float:
        return self.with_repair - self.without_repair


def paired_repair_trial(
    spec: NetworkSpec, oracle: SurrogateOracle, plan: FaultPlan, seed: int = 0
) -> PairedTrial:
    """Score one fault plan with and without astrocyte repair."""
    if not spec.roster.active():
        raise ContractError("paired repair trials need at least one active astrocyte")
    a0 = oracle.baseline(spec)
    rep, frozen = oracle.evaluate_arms(apply_plan(spec, plan), arms=(True, False))
    return PairedTrial(seed, a0, rep, frozen)


def retained(accuracy: float, a0: float) -> float:
    return 100.0 * min(accuracy, a0) / a0 if a0 > 0 else 0.0


__all__ = [
    "ConstantOracle",
    "ScriptedOracle",
    "TaskConfig",
    "SurrogateOracle",
    "PairedTrial",
    "paired_repair_trial",
    "retained",
]
