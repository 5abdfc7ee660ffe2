"""Layered feed-forward SNN construction.

Connectivity between adjacent layers is stored per layer pair in CSR form
(rows = presynaptic neurons, columns = postsynaptic neurons).  The binary
adjacency ``A`` is the sparsity structure itself; the stochastic kernel ``R``
and the structural weights ``M_hat`` are per-edge arrays aligned with it, so
the effective weight is ``M = A * R * M_hat`` with zeros off the structure.
"""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy import sparse

from .dynamics import AstrocyteParams, NeuronParams
from .errors import ClusterError, ConstructionError, ContractError, ShapeError

DEFAULT_BUDGET = 4452


class CountMode(str, enum.Enum):
    UNIDIRECTIONAL = "unidirectional"
    BIDIRECTIONAL = "bidirectional"


class ClusterPolicy(str, enum.Enum):
    BY_LAYER_BLOCK = "by-layer-block"
    ROUND_ROBIN = "round-robin"


@dataclass(frozen=True)
class Topology:
    layer_sizes: tuple[int, ...]
    count_mode: CountMode = CountMode.BIDIRECTIONAL

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2:
            raise ConstructionError("a topology needs at least two layers")
        if any(s < 1 for s in sizes):
            raise ConstructionError(f"layer sizes must be positive, got {sizes}")
        object.__setattr__(self, "layer_sizes", sizes)
        object.__setattr__(self, "count_mode", CountMode(self.count_mode))

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes)

    @property
    def n_neurons(self) -> int:
        return sum(self.layer_sizes)

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.layer_sizes)])

    def layer_slice(self, layer: int) -> slice:
        if not 0 <= layer < self.n_layers:
            raise ContractError(f"layer {layer} out of range")
        off = self.offsets
        return slice(int(off[layer]), int(off[layer + 1]))

    def layer_of(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_layers), self.layer_sizes)


@dataclass(frozen=True)
class WeightInit:
    """Distribution for the structural weights.

    ``uniform_fan_in`` draws from U(-scale/sqrt(fan_in), +scale/sqrt(fan_in)).
    """

    kind: str = "uniform_fan_in"
    scale: float = 1.0
    mean: float = 0.0

    def sample(self, rng: np.random.Generator, n: int, fan_in: int) -> np.ndarray:
        if self.kind == "uniform_fan_in":
            bound = self.scale / math.sqrt(fan_in)
            return self.mean + rng.uniform(-bound, bound, size=n)
        if self.kind == "normal":
            return rng.normal(self.mean, self.scale / math.sqrt(fan_in), size=n)
        if self.kind == "constant":
            return np.full(n, self.mean + self.scale)
        raise ConstructionError(f"unknown weight init '{self.kind}'")


@dataclass(frozen=True, eq=False)
class LayerConnectivity:
    n_pre: int
    n_post: int
    indptr: np.ndarray
    indices: np.ndarray
    r: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        if self.indptr.shape != (self.n_pre + 1,):
            raise ShapeError("indptr length", (self.n_pre + 1,), self.indptr.shape)
        nnz = int(self.indptr[-1])
        for name in ("indices", "r", "w"):
            arr = getattr(self, name)
            if arr.shape != (nnz,):
                raise ShapeError(f"{name} length", (nnz,), arr.shape)
        if nnz and (self.indices.min() < 0 or self.indices.max() >= self.n_post):
            raise ShapeError("postsynaptic index out of range", f"< {self.n_post}", int(self.indices.max()))
        if np.any((self.r < 0) | (self.r > 1)):
            raise ConstructionError("transmission probabilities must lie in [0, 1]")

    @property
    def nnz(self) -> int:
        return int(self.indptr[-1])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_pre, self.n_post)

    def rows(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_pre), np.diff(self.indptr))

    def _csr(self, data: np.ndarray) -> sparse.csr_matrix:
        return sparse.csr_matrix((data, self.indices, self.indptr), shape=self.shape)

    def adjacency(self) -> np.ndarray:
        return self._csr(np.ones(self.nnz)).toarray().astype(np.int8)

    def kernel(self) -> np.ndarray:
        """Dense R, zero where there is no edge."""
        return self._csr(self.r).toarray()

    def dense_weights(self) -> np.ndarray:
        """Dense M_hat, zero where there is no edge."""
        return self._csr(self.w).toarray()

    def effective(self, w: np.ndarray | None = None) -> sparse.csr_matrix:
        w = self.w if w is None else w
        return self._csr(self.r * w)

    def out_degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    def in_degree(self) -> np.ndarray:
        return np.bincount(self.indices, minlength=self.n_post)


@dataclass(frozen=True, eq=False)
class ClusterMap:
    cluster_of: np.ndarray
    k: int
    layer_of: np.ndarray

    def members(self, cluster: int, layer: int | None = None) -> np.ndarray:
        mask = self.cluster_of == cluster
        if layer is not None:
            mask &= self.layer_of == layer
        return np.flatnonzero(mask)

    def layers_within(self, cluster: int) -> list[np.ndarray]:
        """Per-layer partition of a cluster; empty layers are skipped."""
        out = []
        for layer in range(int(self.layer_of.max()) + 1):
            idx = self.members(cluster, layer)
            if idx.size:
                out.append(idx)
        return out

    def cluster_layers(self) -> list[tuple[int, int]]:
        pairs = []
        for c in range(self.k):
            for layer in np.unique(self.layer_of[self.cluster_of == c]):
                pairs.append((c, int(layer)))
        return pairs


@dataclass(frozen=True)
class Astrocyte:
    id: int
    cluster: int
    layer: int
    neurons: tuple[int, ...]
    params: AstrocyteParams = AstrocyteParams()
    enabled: bool = True


@dataclass(frozen=True)
class AstrocyteRoster:
    astrocytes: tuple[Astrocyte, ...] = ()
    budget: int = DEFAULT_BUDGET

    def __post_init__(self):
        if self.budget < 1:
            raise ContractError("neurons-per-astrocyte budget must be positive")
        seen: set[int] = set()
        for a in self.astrocytes:
            if len(a.neurons) > self.budget:
                raise ContractError(f"astrocyte {a.id} covers more than the budget")
            if seen.intersection(a.neurons):
                raise ContractError(f"astrocyte {a.id} overlaps an existing cover")
            seen.update(a.neurons)

    def __len__(self) -> int:
        return len(self.astrocytes)

    def active(self) -> tuple[Astrocyte, ...]:
        return tuple(a for a in self.astrocytes if a.enabled)

    def owner(self, n_neurons: int) -> np.ndarray:
        """Index into ``active()`` covering each neuron, or -1."""
        own = np.full(n_neurons, -1, dtype=np.int64)
        for i, a in enumerate(self.active()):
            own[list(a.neurons)] = i
        return own

    def coverage_weights(self, n_neurons: int) -> np.ndarray:
        """Synapse-to-astrocyte weights: uniform 1/|cover| over covered neurons."""
        act = self.active()
        W = np.zeros((len(act), n_neurons))
        for i, a in enumerate(act):
            W[i, list(a.neurons)] = 1.0 / len(a.neurons)
        return W

    def coupling(self) -> np.ndarray:
        """Astrocyte-to-astrocyte coupling; always zero in this model."""
        n = len(self.active())
        return np.zeros((n, n))

    def count(self, cluster: int | None = None, layer: int | None = None) -> int:
        return sum(
            1
            for a in self.astrocytes
            if (cluster is None or a.cluster == cluster) and (layer is None or a.layer == layer)
        )

    def disable(self, ids) -> "AstrocyteRoster":
        ids = set(ids)
        return dataclasses.replace(
            self,
            astrocytes=tuple(dataclasses.replace(a, enabled=False) if a.id in ids else a for a in self.astrocytes),
        )

    def without(self, ids) -> "AstrocyteRoster":
        ids = set(ids)
        return dataclasses.replace(self, astrocytes=tuple(a for a in self.astrocytes if a.id not in ids))


@dataclass(frozen=True, eq=False)
class NetworkSpec:
    topology: Topology
    layers: tuple[LayerConnectivity, ...]
    clusters: ClusterMap
    roster: AstrocyteRoster = field(default_factory=AstrocyteRoster)
    neuron_params: NeuronParams = field(default_factory=NeuronParams)
    seed: int = 0

    def __post_init__(self):
        sizes = self.topology.layer_sizes
        if len(self.layers) != len(sizes) - 1:
            raise ShapeError("layer pair count", len(sizes) - 1, len(self.layers))
        for i, lc in enumerate(self.layers):
            if lc.shape != (sizes[i], sizes[i + 1]):
                raise ShapeError(f"layer pair {i} shape", (sizes[i], sizes[i + 1]), lc.shape)
        if self.clusters.cluster_of.shape != (self.topology.n_neurons,):
            raise ShapeError("cluster map length", self.topology.n_neurons, self.clusters.cluster_of.shape[0])

    def replace(self, **changes) -> "NetworkSpec":
        return dataclasses.replace(self, **changes)

    @property
    def n_neurons(self) -> int:
        return self.topology.n_neurons

    def edge_offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum([lc.nnz for lc in self.layers])]).astype(np.int64)


def _single_cluster(topology: Topology) -> ClusterMap:
    return ClusterMap(np.zeros(topology.n_neurons, dtype=np.int64), 1, topology.layer_of())


def _pair_edges(rng: np.random.Generator, n_pre: int, n_post: int, density: float):
    total = n_pre * n_post
    k = math.ceil(round(density * total, 9))
    if k >= total:
        flat = np.arange(total, dtype=np.int64)
    else:
        flat = np.sort(rng.choice(total, size=k, replace=False))
    rows, cols = np.divmod(flat, n_post)
    indptr = np.zeros(n_pre + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n_pre), out=indptr[1:])
    return indptr, cols.astype(np.int64)


def build_feedforward(
    topology: Topology | Sequence[int],
    density: float = 1.0,
    weight_init: WeightInit = WeightInit(),
    seed: int = 0,
    neuron_params: NeuronParams | None = None,
    budget: int = DEFAULT_BUDGET,
) -> NetworkSpec:
    """Build a seeded layered network with ``ceil(density * n_i * n_j)`` edges per pair."""
    if not isinstance(topology, Topology):
        if len(topology) == 0:
            raise ConstructionError("empty topology")
        topology = Topology(tuple(topology))
    if not 0 < density <= 1:
        raise ConstructionError(f"density must lie in (0, 1], got {density}")
    sizes = topology.layer_sizes
    children = np.random.SeedSequence(seed).spawn(len(sizes) - 1)
    layers = []
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        indptr, indices = _pair_edges(rng, sizes[i], sizes[i + 1], density)
        w = weight_init.sample(rng, indices.size, fan_in=sizes[i])
        layers.append(LayerConnectivity(sizes[i], sizes[i + 1], indptr, indices, np.ones(indices.size), w))
    return NetworkSpec(
        topology=topology,
        layers=tuple(layers),
        clusters=_single_cluster(topology),
        roster=AstrocyteRoster(budget=budget),
        neuron_params=neuron_params or NeuronParams(),
        seed=seed,
    )


def total_neurons(spec: NetworkSpec) -> int:
    return spec.topology.n_neurons


def synapse_count(spec: NetworkSpec, count_mode: CountMode | str | None = None) -> int:
    mode = CountMode(count_mode) if count_mode is not None else spec.topology.count_mode
    n = sum(lc.nnz for lc in spec.layers)
    return 2 * n if mode is CountMode.BIDIRECTIONAL else n


def assign_clusters(
    spec: NetworkSpec, k: int, policy: ClusterPolicy | str = ClusterPolicy.BY_LAYER_BLOCK
) -> ClusterMap:
    """Partition neurons into ``k`` clusters.

    ``by-layer-block`` cuts every layer into k contiguous blocks whose sizes
    differ by at most one; ``round-robin`` deals neurons out by global index.
    """
    policy = ClusterPolicy(policy)
    topo = spec.topology
    if not 1 <= k <= topo.n_neurons:
        raise ClusterError(f"cluster count {k} must lie in [1, {topo.n_neurons}]")
    cluster_of = np.empty(topo.n_neurons, dtype=np.int64)
    if policy is ClusterPolicy.ROUND_ROBIN:
        cluster_of[:] = np.arange(topo.n_neurons) % k
    else:
        if max(topo.layer_sizes) < k:
            raise ClusterError(f"by-layer-block needs a layer with at least {k} neurons")
        for layer in range(topo.n_layers):
            sl = topo.layer_slice(layer)
            blocks = np.array_split(np.arange(sl.start, sl.stop), k)
            for c, block in enumerate(blocks):
                cluster_of[block] = c
    return ClusterMap(cluster_of, k, topo.layer_of())


def with_clusters(spec: NetworkSpec, clusters: ClusterMap) -> NetworkSpec:
    if spec.roster.astrocytes:
        raise ClusterError("re-clustering a network that already has astrocytes")
    return spec.replace(clusters=clusters)


class AttachResult(NamedTuple):
    spec: NetworkSpec
    saturated: bool
    astrocyte: Astrocyte | None


def attach_astrocyte(
    spec: NetworkSpec,
    cluster: int,
    layer: int,
    budget: int | None = None,
    params: AstrocyteParams | None = None,
) -> AttachResult:
    """Add one astrocyte covering up to ``budget`` uncovered neurons of a cluster layer."""
    if not 0 <= cluster < spec.clusters.k:
        raise ContractError(f"cluster {cluster} does not exist")
    if not 0 <= layer < spec.topology.n_layers:
        raise ContractError(f"layer {layer} does not exist")
    roster = spec.roster
    budget = roster.budget if budget is None else budget
    if budget < 1:
        raise ContractError("budget must be positive")
    covered = {n for a in roster.astrocytes for n in a.neurons}
    candidates = [int(n) for n in spec.clusters.members(cluster, layer) if int(n) not in covered]
    if not candidates:
        return AttachResult(spec, True, None)
    next_id = max((a.id for a in roster.astrocytes), default=-1) + 1
    astro = Astrocyte(
        id=next_id,
        cluster=cluster,
        layer=layer,
        neurons=tuple(candidates[:budget]),
        params=params or AstrocyteParams(),
    )
    new_roster = AstrocyteRoster(roster.astrocytes + (astro,), max(roster.budget, budget))
    return AttachResult(spec.replace(roster=new_roster), False, astro)


def cover_all(spec: NetworkSpec, budget: int | None = None, params: AstrocyteParams | None = None) -> NetworkSpec:
    """Attach astrocytes until every cluster layer is fully covered."""
    for cluster, layer in spec.clusters.cluster_layers():
        while True:
            spec, saturated, _ = attach_astrocyte(spec, cluster, layer, budget, params)
            if saturated:
                break
    return spec


def effective_connectivity(spec: NetworkSpec) -> list[sparse.csr_matrix]:
    sizes = spec.topology.layer_sizes
    out = []
    for i, lc in enumerate(spec.layers):
        if lc.shape != (sizes[i], sizes[i + 1]):
            raise ShapeError(f"layer pair {i}", (sizes[i], sizes[i + 1]), lc.shape)
        out.append(lc.effective())
    return out


def fingerprint(spec: NetworkSpec) -> str:
    """SHA-256 over every array and flag that defines the network."""
    h = hashlib.sha256()
    h.update(repr(spec.topology).encode())
    h.update(repr(spec.neuron_params).encode())
    for lc in spec.layers:
        for arr in (lc.indptr, lc.indices, lc.r, lc.w):
            h.update(np.ascontiguousarray(arr).tobytes())
    h.update(spec.clusters.cluster_of.tobytes())
    h.update(repr(spec.roster).encode())
    return h.hexdigest()
