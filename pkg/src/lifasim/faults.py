"""Seeded fault injection: plan generation, overlay views and accuracy probes."""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, NamedTuple, Protocol, Sequence, Union

import numpy as np

from .errors import ContractError, FaultPlanError, OracleError
from .network import NetworkSpec

WEIGHT_BITS = 16
WEIGHT_FRAC_BITS = 12


class FaultKind(str, enum.Enum):
    NEURON_STUCK_SILENT = "neuron_stuck_silent"
    NEURON_STUCK_FIRING = "neuron_stuck_firing"
    SYNAPSE_DEAD = "synapse_dead"
    WEIGHT_BITFLIP = "weight_bitflip"
    THRESHOLD_SHIFT = "threshold_shift"

    @property
    def targets_neuron(self) -> bool:
        return self in (FaultKind.NEURON_STUCK_SILENT, FaultKind.NEURON_STUCK_FIRING, FaultKind.THRESHOLD_SHIFT)


ALL_KINDS = tuple(FaultKind)

# stuck-state codes stored in FaultedView.stuck
HEALTHY, STUCK_SILENT, STUCK_FIRING = 0, 1, 2


@dataclass(frozen=True)
class FaultScope:
    """Whole network when both fields are None."""

    cluster: int | None = None
    layer: int | None = None

    def describe(self) -> str:
        if self.cluster is None and self.layer is None:
            return "whole"
        parts = []
        if self.cluster is not None:
            parts.append(f"cluster={self.cluster}")
        if self.layer is not None:
            parts.append(f"layer={self.layer}")
        return ",".join(parts)

    @classmethod
    def parse(cls, text: str) -> "FaultScope":
        """Parse ``whole``, ``cluster=2``, ``layer=1`` or ``cluster=2,layer=1``."""
        text = text.strip()
        if text in ("", "whole"):
            return cls()
        kw = {}
        for part in text.split(","):
            key, _, value = part.partition("=")
            if key not in ("cluster", "layer") or not value:
                raise ContractError(f"bad fault scope '{text}'")
            kw[key] = int(value)
        return cls(**kw)


@dataclass(frozen=True)
class FaultMixture:
    weights: tuple[tuple[FaultKind, float], ...] = tuple((k, 1.0) for k in ALL_KINDS)

    @classmethod
    def of(cls, mapping: Mapping[str, float]) -> "FaultMixture":
        return cls(tuple((FaultKind(k), float(v)) for k, v in mapping.items()))

    def as_dict(self) -> dict[str, float]:
        return {k.value: w for k, w in self.weights}


@dataclass(frozen=True)
class FaultEvent:
    kind: FaultKind
    target: int  # global neuron index, or global edge index for synapse kinds
    delta: float = 0.0
    bit: int = -1


@dataclass(frozen=True)
class FaultPlan:
    seed: int
    n_r: int
    scope: FaultScope
    events: tuple[FaultEvent, ...]
    mixture: FaultMixture = field(default_factory=FaultMixture)

    def prefix(self, k: int) -> "FaultPlan":
        return FaultPlan(self.seed, k, self.scope, self.events[:k], self.mixture)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "n_r": self.n_r,
            "scope": asdict(self.scope),
            "mixture": self.mixture.as_dict(),
            "events": [[e.kind.value, e.target, e.delta, e.bit] for e in self.events],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "FaultPlan":
        events = tuple(FaultEvent(FaultKind(k), int(t), float(dv), int(b)) for k, t, dv, b in d["events"])
        return cls(int(d["seed"]), int(d["n_r"]), FaultScope(**d["scope"]), events, FaultMixture.of(d["mixture"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "FaultPlan":
        return cls.from_dict(json.loads(Path(path).read_text()))


EMPTY_PLAN = FaultPlan(0, 0, FaultScope(), ())


def _scope_neuron_mask(spec: NetworkSpec, scope: FaultScope) -> np.ndarray:
    n = spec.n_neurons
    mask = np.ones(n, dtype=bool)
    if scope.cluster is not None:
        if not 0 <= scope.cluster < spec.clusters.k:
            raise FaultPlanError(f"cluster {scope.cluster} does not exist")
        mask &= spec.clusters.cluster_of == scope.cluster
    if scope.layer is not None:
        if not 0 <= scope.layer < spec.topology.n_layers:
            raise FaultPlanError(f"layer {scope.layer} does not exist")
        mask &= spec.clusters.layer_of == scope.layer
    return mask


def eligible_targets(spec: NetworkSpec, scope: FaultScope) -> tuple[np.ndarray, np.ndarray | int]:
    """Neuron indices and edge indices a plan may hit.

    Synapses belong to the scope of their postsynaptic neuron.  For the whole
    network the edge set is returned as a count to avoid materialising it.
    """
    mask = _scope_neuron_mask(spec, scope)
    neurons = np.flatnonzero(mask)
    if scope.cluster is None and scope.layer is None:
        return neurons, int(spec.edge_offsets()[-1])
    offsets = spec.topology.offsets
    parts = []
    for i, (lc, e0) in enumerate(zip(spec.layers, spec.edge_offsets()[:-1])):
        post = offsets[i + 1] + lc.indices
        parts.append(e0 + np.flatnonzero(mask[post]))
    edges = np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)
    return neurons, edges


def generate_plan(
    spec: NetworkSpec,
    n_r: int,
    scope: FaultScope = FaultScope(),
    seed: int = 0,
    mixture: FaultMixture | None = None,
    shift_range: tuple[float, float] = (0.2, 0.6),
) -> FaultPlan:
    """Draw ``n_r`` faults uniformly over the eligible targets in ``scope``.

    Kinds come from ``mixture`` restricted to kinds that have targets.
    Threshold shifts move ``v_th`` by a signed amount whose magnitude is
    uniform in ``shift_range`` times the baseline threshold.
    """
    if n_r < 1:
        raise ContractError("n_r must be at least 1")
    mixture = mixture or FaultMixture()
    neurons, edges = eligible_targets(spec, scope)
    n_edges = edges if isinstance(edges, int) else edges.size
    kinds, probs = [], []
    for kind, w in mixture.weights:
        available = neurons.size if kind.targets_neuron else n_edges
        if w > 0 and available > 0:
            kinds.append(kind)
            probs.append(w)
    if not kinds:
        raise FaultPlanError(f"scope {scope.describe()} has no eligible fault targets")
    probs = np.asarray(probs) / np.sum(probs)

    rng = np.random.default_rng(seed)
    which = rng.choice(len(kinds), size=n_r, p=probs)
    u = rng.random(n_r)
    signs = rng.choice((-1.0, 1.0), size=n_r)
    mags = rng.uniform(*shift_range, size=n_r) * spec.neuron_params.v_th_base
    bits = rng.integers(0, WEIGHT_BITS, size=n_r)

    # one uniform draw per event, mapped onto whichever target set its kind uses
    neuron_pick = edge_pick = None
    if neurons.size:
        neuron_pick = neurons[np.minimum((u * neurons.size).astype(np.int64), neurons.size - 1)]
    if n_edges:
        edge_pos = np.minimum((u * n_edges).astype(np.int64), n_edges - 1)
        edge_pick = edge_pos if isinstance(edges, int) else edges[edge_pos]

    events = []
    for i in range(n_r):
        kind = kinds[which[i]]
        if kind.targets_neuron:
            target = int(neuron_pick[i])
        else:
            target = int(edge_pick[i])
        if kind is FaultKind.THRESHOLD_SHIFT:
            events.append(FaultEvent(kind, target, delta=float(signs[i] * mags[i])))
        elif kind is FaultKind.WEIGHT_BITFLIP:
            events.append(FaultEvent(kind, target, bit=int(bits[i])))
        else:
            events.append(FaultEvent(kind, target))
    return FaultPlan(seed, n_r, scope, tuple(events), mixture)


def quantize(w):
    scaled = np.round(np.asarray(w, dtype=float) * (1 << WEIGHT_FRAC_BITS))
    return np.clip(scaled, -(1 << (WEIGHT_BITS - 1)), (1 << (WEIGHT_BITS - 1)) - 1).astype(np.int16)


def dequantize(q) -> np.ndarray:
    return np.asarray(q, dtype=np.int16).astype(float) / (1 << WEIGHT_FRAC_BITS)


def flip_weight_bit(w: float, bit: int) -> float:
    """Flip one bit of the 16-bit fixed-point (Q3.12) encoding of ``w``."""
    if not 0 <= bit < WEIGHT_BITS:
        raise ContractError(f"bit {bit} outside the {WEIGHT_BITS}-bit word")
    q = quantize(w).reshape(1)
    flipped = (q.view(np.uint16) ^ np.uint16(1 << bit)).view(np.int16)
    return float(dequantize(flipped)[0])


@dataclass(frozen=True, eq=False)
class FaultedView:
    """Faults overlaid on an untouched base network.

    Only the touched entries are stored: per layer pair, the set of dead
    edges and the replacement structural weights of bit-flipped edges.
    """

    base: NetworkSpec
    plan: FaultPlan
    stuck: np.ndarray
    threshold_delta: np.ndarray
    dead: dict[int, np.ndarray]
    overrides: dict[int, tuple[np.ndarray, np.ndarray]]

    # the simulator and oracles read these through the view
    @property
    def topology(self):
        return self.base.topology

    @property
    def roster(self):
        return self.base.roster

    @property
    def clusters(self):
        return self.base.clusters

    @property
    def neuron_params(self):
        return self.base.neuron_params

    @property
    def n_neurons(self) -> int:
        return self.base.n_neurons

    def edge_data(self, pair: int) -> np.ndarray:
        """Per-edge effective weights R * M_hat for one layer pair, faults applied."""
        lc = self.base.layers[pair]
        w = lc.w
        if pair in self.overrides:
            idx, vals = self.overrides[pair]
            w = w.copy()
            w[idx] = vals
        data = lc.r * w
        if pair in self.dead:
            data[self.dead[pair]] = 0.0
        return data

    def effective(self, pair: int):
        return self.base.layers[pair]._csr(self.edge_data(pair))

    @property
    def is_empty(self) -> bool:
        return not self.plan.events


Network = Union[NetworkSpec, FaultedView]


def base_spec(net: Network) -> NetworkSpec:
    return net.base if isinstance(net, FaultedView) else net


def _locate_edge(spec: NetworkSpec, edge: int) -> tuple[int, int]:
    offsets = spec.edge_offsets()
    if not 0 <= edge < offsets[-1]:
        raise IndexError(edge)
    pair = int(np.searchsorted(offsets, edge, side="right") - 1)
    return pair, int(edge - offsets[pair])


def apply_plan(spec: NetworkSpec, plan: FaultPlan) -> FaultedView:
    n = spec.n_neurons
    stuck = np.zeros(n, dtype=np.int8)
    delta = np.zeros(n)
    dead: dict[int, set[int]] = {}
    flipped: dict[int, dict[int, float]] = {}
    for i, ev in enumerate(plan.events):
        try:
            if ev.kind.targets_neuron:
                if not 0 <= ev.target < n:
                    raise IndexError(ev.target)
                if ev.kind is FaultKind.NEURON_STUCK_SILENT:
                    stuck[ev.target] = STUCK_SILENT
                elif ev.kind is FaultKind.NEURON_STUCK_FIRING:
                    stuck[ev.target] = STUCK_FIRING
                else:
                    delta[ev.target] += ev.delta
            else:
                pair, local = _locate_edge(spec, ev.target)
                if ev.kind is FaultKind.SYNAPSE_DEAD:
                    dead.setdefault(pair, set()).add(local)
                else:
                    current = flipped.get(pair, {}).get(local, spec.layers[pair].w[local])
                    flipped.setdefault(pair, {})[local] = flip_weight_bit(current, ev.bit)
        except IndexError:
            raise FaultPlanError(f"event {i} ({ev}) targets an index outside the network") from None
    dead_arr = {p: np.array(sorted(s), dtype=np.int64) for p, s in dead.items()}
    overrides = {}
    for p, d in flipped.items():
        idx = np.array(sorted(d), dtype=np.int64)
        overrides[p] = (idx, np.array([d[int(j)] for j in idx]))
    return FaultedView(spec, plan, stuck, delta, dead_arr, overrides)


def revert(view: FaultedView) -> NetworkSpec:
    return view.base


class AccuracyOracle(Protocol):
    def baseline(self, spec: NetworkSpec) -> float: ...

    def evaluate(self, net: Network) -> float: ...


class FaultProbe(NamedTuple):
    a_min: float
    accuracies: tuple[float, ...]
    baseline: float


def _checkpoints(n_r: int, count: int) -> list[int]:
    count = max(1, min(count, n_r))
    return sorted({int(np.ceil(n_r * (j + 1) / count)) for j in range(count)})


def min_accuracy_under_faults(
    spec: NetworkSpec,
    oracle: AccuracyOracle,
    n_r: int,
    trials: int = 5,
    seed: int = 0,
    scope: FaultScope = FaultScope(),
    mixture: FaultMixture | None = None,
    mode: str = "sequential",
    checkpoints: int = 4,
    plan_seeds: Sequence[int] | None = None,
) -> FaultProbe:
    """Minimum oracle accuracy over ``trials`` independent fault plans.

    ``sequential`` inserts the plan's faults in order and evaluates after
    each of ``checkpoints`` evenly spaced prefixes, keeping the worst;
    ``simultaneous`` evaluates only with all faults in place.
    """
    if trials < 1:
        raise ContractError("trials must be at least 1")
    if mode not in ("sequential", "simultaneous"):
        raise ContractError(f"unknown injection mode '{mode}'")
    a0 = float(oracle.baseline(spec))
    if n_r == 0:
        return FaultProbe(a0, (a0,) * trials, a0)
    seeds = list(plan_seeds) if plan_seeds is not None else list(
        np.random.SeedSequence(seed).generate_state(trials, dtype=np.uint32)
    )
    accs = []
    for t in range(trials):
        plan = generate_plan(spec, n_r, scope, int(seeds[t]), mixture)
        stops = _checkpoints(n_r, checkpoints) if mode == "sequential" else [n_r]
        worst = np.inf
        for k in stops:
            try:
                acc = float(oracle.evaluate(apply_plan(spec, plan.prefix(k))))
            except Exception as exc:  # noqa: BLE001 - re-raised with the trial index
                raise OracleError(t, exc) from exc
            worst = min(worst, acc)
        accs.append(worst)
    return FaultProbe(float(min(accs)), tuple(accs), a0)
