"""Astrocyte placement by iterative fault injection.

Every layer of every cluster is probed with seeded fault plans; while the
minimum accuracy stays below the threshold one more astrocyte is attached to
that layer.  A cap per layer guarantees termination when the oracle cannot
be rescued.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np

from .dynamics import AstrocyteParams
from .errors import ContractError, OracleError
from .faults import AccuracyOracle, FaultMixture, FaultScope, min_accuracy_under_faults
from .network import NetworkSpec, attach_astrocyte
from .repair import RepairPolicy
from .simulator import SimSettings, simulate

PROTECTED = "protected"
UNPROTECTABLE = "unprotectable"


@dataclass
class PlacementProblem:
    model: NetworkSpec
    oracle: AccuracyOracle
    n_r: int = 10_000
    a_th: float | None = None  # None means the fault-free accuracy a0
    trials: int = 5
    max_astrocytes_per_layer: int | None = None  # None means ceil(layer size / budget)
    budget: int | None = None
    seed: int = 0
    mode: str = "sequential"
    checkpoints: int = 4
    persist_faults: bool = False
    mixture: FaultMixture | None = None
    params: AstrocyteParams | None = None

    def __post_init__(self):
        if self.a_th is not None and not 0 <= self.a_th <= 1:
            raise ContractError("a_th must lie in [0, 1]")
        if self.max_astrocytes_per_layer is not None and self.max_astrocytes_per_layer < 1:
            raise ContractError("the per-layer cap must be at least 1")
        if self.trials < 1:
            raise ContractError("trials must be at least 1")


@dataclass(frozen=True)
class ProbeRecord:
    cluster: int
    layer: int
    iteration: int
    astrocytes: int
    a_min: float
    accuracies: tuple[float, ...]


@dataclass
class PlacementResult:
    spec: NetworkSpec
    counts: dict[tuple[int, int], int]
    log: list[ProbeRecord]
    status: dict[tuple[int, int], str]
    a_th: float
    a0: float
    config: dict
    disabled: tuple[int, ...] = ()
    error: str | None = None

    @property
    def placed(self) -> int:
        return sum(self.counts.values())

    @property
    def unprotectable(self) -> list[tuple[int, int]]:
        return [k for k, v in self.status.items() if v == UNPROTECTABLE]

    def layer_log(self, cluster: int, layer: int) -> list[ProbeRecord]:
        return [r for r in self.log if r.cluster == cluster and r.layer == layer]

    def monotone(self, cluster: int, layer: int) -> bool:
        a = [r.a_min for r in self.layer_log(cluster, layer)]
        return all(x <= y for x, y in zip(a, a[1:]))

    def log_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["cluster", "layer", "iteration", "astrocytes", "a_min"])
        for r in self.log:
            w.writerow([r.cluster, r.layer, r.iteration, r.astrocytes, f"{r.a_min:.6f}"])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "a0": self.a0,
            "a_th": self.a_th,
            "astrocytes_placed": self.placed,
            "layers": [
                {
                    "cluster": c,
                    "layer": l,
                    "astrocytes": self.counts[(c, l)],
                    "status": self.status[(c, l)],
                    "monotone": self.monotone(c, l),
                }
                for (c, l) in sorted(self.counts)
            ],
            "roster": [
                {"id": a.id, "cluster": a.cluster, "layer": a.layer, "neurons": len(a.neurons), "enabled": a.enabled}
                for a in self.spec.roster.astrocytes
            ],
            "disabled": list(self.disabled),
            "error": self.error,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _probe_seed(seed: int, cluster: int, layer: int, count: int | None) -> int:
    key = [seed, cluster, layer] + ([] if count is None else [count])
    return int(np.random.SeedSequence(key).generate_state(1)[0])


def place_astrocytes(problem: PlacementProblem) -> PlacementResult:
    """Protect every cluster layer, attaching astrocytes while ``a_min < a_th``.

    A probe's fault plans are seeded by the layer and its current astrocyte
    count, so each probe sees fresh faults and re-running on a passing
    result reproduces the passing probes.  With ``persist_faults`` every
    probe of a layer reuses the same plans.
    """
    spec = problem.model
    budget = problem.budget if problem.budget is not None else spec.roster.budget
    a0 = float(problem.oracle.baseline(spec))
    a_th = a0 if problem.a_th is None else float(problem.a_th)
    config = {
        "n_r": problem.n_r,
        "a_th": a_th,
        "a_th_source": "a0" if problem.a_th is None else "user",
        "trials": problem.trials,
        "max_astrocytes_per_layer": problem.max_astrocytes_per_layer,
        "budget": budget,
        "seed": problem.seed,
        "mode": problem.mode,
        "checkpoints": problem.checkpoints,
        "persist_faults": problem.persist_faults,
    }
    counts: dict[tuple[int, int], int] = {}
    status: dict[tuple[int, int], str] = {}
    log: list[ProbeRecord] = []

    for cluster, layer in spec.clusters.cluster_layers():
        size = spec.clusters.members(cluster, layer).size
        cap = problem.max_astrocytes_per_layer or max(1, math.ceil(size / budget))
        added = 0
        iteration = 0
        while True:
            count = spec.roster.count(cluster, layer)
            seed = _probe_seed(problem.seed, cluster, layer, None if problem.persist_faults else count)
            try:
                probe = min_accuracy_under_faults(
                    spec,
                    problem.oracle,
                    problem.n_r,
                    trials=problem.trials,
                    seed=seed,
                    scope=FaultScope(cluster, layer),
                    mixture=problem.mixture,
                    mode=problem.mode,
                    checkpoints=problem.checkpoints,
                )
            except OracleError as exc:
                counts[(cluster, layer)] = spec.roster.count(cluster, layer)
                status[(cluster, layer)] = UNPROTECTABLE
                return PlacementResult(spec, counts, log, status, a_th, a0, config, error=str(exc))
            log.append(ProbeRecord(cluster, layer, iteration, count, probe.a_min, probe.accuracies))
            if probe.a_min >= a_th:
                status[(cluster, layer)] = PROTECTED
                break
            if added >= cap:
                status[(cluster, layer)] = UNPROTECTABLE
                break
            spec, saturated, _ = attach_astrocyte(spec, cluster, layer, budget, problem.params)
            if saturated:
                status[(cluster, layer)] = UNPROTECTABLE
                break
            added += 1
            iteration += 1
        counts[(cluster, layer)] = spec.roster.count(cluster, layer)
    return PlacementResult(spec, counts, log, status, a_th, a0, config)


def usage_log(
    spec: NetworkSpec,
    stimulus,
    steps: int,
    settings: SimSettings = SimSettings(),
    policy: RepairPolicy = RepairPolicy(),
) -> dict[int, int]:
    """Repair activations per astrocyte id over one post-placement run."""
    res = simulate(spec, stimulus, steps, settings, policy=policy)
    ids = [a.id for a in spec.roster.active()]
    return {aid: int(n) for aid, n in zip(ids, res.astro.activations)}


def disable_unused(result: PlacementResult, usage: dict[int, int]) -> PlacementResult:
    """Disable every astrocyte that never activated during ``usage``."""
    idle = tuple(sorted(a.id for a in result.spec.roster.active() if usage.get(a.id, 0) == 0))
    if not idle:
        return result
    spec = result.spec.replace(roster=result.spec.roster.disable(idle))
    return PlacementResult(
        spec,
        dict(result.counts),
        list(result.log),
        dict(result.status),
        result.a_th,
        result.a0,
        dict(result.config),
        tuple(sorted(set(result.disabled) | set(idle))),
        result.error,
    )
