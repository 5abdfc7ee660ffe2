"""Network persistence and weight import.

Binary container layout (all integers little-endian)::

    magic      8 bytes   b"LIFASIM\\0"
    version    u32
    meta_len   u32
    meta       meta_len bytes of UTF-8 JSON (topology, params, roster, nnz per pair)
    per pair   indptr i64[n_pre+1], indices i64[nnz], r f64[nnz], w f64[nnz]
    clusters   i64[n_neurons]
    end        4 bytes   b"END\\0"

Every read goes through a cursor that reports the byte offset at which the
data ran out or stopped making sense.  A JSON descriptor written next to the
container carries the same metadata plus counts, for humans.

The layered-matrix text format is one dense matrix per layer pair, rows =
presynaptic neurons, blocks separated by blank lines; ``#`` starts a comment.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from pathlib import Path
from typing import Sequence

import numpy as np

from .dynamics import AstrocyteParams, NeuronParams
from .errors import ParseError, ShapeError
from .network import (
    Astrocyte,
    AstrocyteRoster,
    ClusterMap,
    CountMode,
    LayerConnectivity,
    NetworkSpec,
    Topology,
    _single_cluster,
    fingerprint,
    synapse_count,
)

MAGIC = b"LIFASIM\0"
TRAILER = b"END\0"
FORMAT_VERSION = 1


def _meta(spec: NetworkSpec) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "topology": list(spec.topology.layer_sizes),
        "count_mode": spec.topology.count_mode.value,
        "seed": spec.seed,
        "neuron_params": dataclasses.asdict(spec.neuron_params),
        "clusters": spec.clusters.k,
        "nnz": [lc.nnz for lc in spec.layers],
        "roster": {
            "budget": spec.roster.budget,
            "astrocytes": [
                {
                    "id": a.id,
                    "cluster": a.cluster,
                    "layer": a.layer,
                    "neurons": list(a.neurons),
                    "params": dataclasses.asdict(a.params),
                    "enabled": a.enabled,
                }
                for a in spec.roster.astrocytes
            ],
        },
    }


def to_bytes(spec: NetworkSpec) -> bytes:
    meta = json.dumps(_meta(spec), sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(meta)), meta]
    for lc in spec.layers:
        parts.append(np.ascontiguousarray(lc.indptr, dtype="<i8").tobytes())
        parts.append(np.ascontiguousarray(lc.indices, dtype="<i8").tobytes())
        parts.append(np.ascontiguousarray(lc.r, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(lc.w, dtype="<f8").tobytes())
    parts.append(np.ascontiguousarray(spec.clusters.cluster_of, dtype="<i8").tobytes())
    parts.append(TRAILER)
    return b"".join(parts)


class _Cursor:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise ParseError(f"truncated {what}: need {n} bytes, {len(self.data) - self.pos} left", self.pos)
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def array(self, dtype: str, count: int, what: str) -> np.ndarray:
        raw = self.take(8 * count, what)
        return np.frombuffer(raw, dtype=dtype).astype(dtype[1:], copy=True)


def from_bytes(data: bytes) -> NetworkSpec:
    cur = _Cursor(data)
    if cur.take(len(MAGIC), "magic") != MAGIC:
        raise ParseError("not a lifasim network container", 0)
    version, meta_len = struct.unpack("<II", cur.take(8, "header"))
    if version != FORMAT_VERSION:
        raise ParseError(f"unsupported container version {version}", len(MAGIC))
    meta_at = cur.pos
    try:
        meta = json.loads(cur.take(meta_len, "metadata").decode())
        sizes = [int(s) for s in meta["topology"]]
        nnz = [int(n) for n in meta["nnz"]]
    except ParseError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise ParseError(f"bad metadata: {exc}", meta_at) from None
    if len(nnz) != len(sizes) - 1:
        raise ParseError("metadata pair count disagrees with topology", meta_at)

    layers = []
    for i, k in enumerate(nnz):
        at = cur.pos
        indptr = cur.array("<i8", sizes[i] + 1, f"indptr of pair {i}")
        indices = cur.array("<i8", k, f"indices of pair {i}")
        r = cur.array("<f8", k, f"kernel of pair {i}")
        w = cur.array("<f8", k, f"weights of pair {i}")
        if indptr[0] != 0 or indptr[-1] != k or np.any(np.diff(indptr) < 0):
            raise ParseError(f"inconsistent indptr for pair {i}", at)
        layers.append(LayerConnectivity(sizes[i], sizes[i + 1], indptr, indices, r, w))
    n = sum(sizes)
    cluster_of = cur.array("<i8", n, "cluster map")
    if cur.take(len(TRAILER), "trailer") != TRAILER:
        raise ParseError("missing trailer", cur.pos - len(TRAILER))
    if cur.pos != len(data):
        raise ParseError("trailing bytes after container", cur.pos)

    topology = Topology(tuple(sizes), CountMode(meta["count_mode"]))
    ro = meta["roster"]
    roster = AstrocyteRoster(
        tuple(
            Astrocyte(
                a["id"], a["cluster"], a["layer"], tuple(a["neurons"]), AstrocyteParams(**a["params"]), a["enabled"]
            )
            for a in ro["astrocytes"]
        ),
        ro["budget"],
    )
    return NetworkSpec(
        topology=topology,
        layers=tuple(layers),
        clusters=ClusterMap(cluster_of, int(meta["clusters"]), topology.layer_of()),
        roster=roster,
        neuron_params=NeuronParams(**meta["neuron_params"]),
        seed=int(meta["seed"]),
    )


def descriptor(spec: NetworkSpec) -> dict:
    d = _meta(spec)
    d["neurons"] = spec.n_neurons
    d["synapses_bidirectional"] = synapse_count(spec, CountMode.BIDIRECTIONAL)
    d["synapses_unidirectional"] = synapse_count(spec, CountMode.UNIDIRECTIONAL)
    d["fingerprint"] = fingerprint(spec)
    d["roster"]["active"] = len(spec.roster.active())
    return d


def save_network(spec: NetworkSpec, path: str | Path) -> tuple[Path, Path]:
    """Write ``path`` (binary) and ``path`` with a ``.json`` suffix (descriptor)."""
    path = Path(path)
    path.write_bytes(to_bytes(spec))
    desc = path.with_suffix(".json")
    desc.write_text(json.dumps(descriptor(spec), indent=2, sort_keys=True) + "\n")
    return path, desc


def load_network(path: str | Path) -> NetworkSpec:
    return from_bytes(Path(path).read_bytes())


def parse_layered_text(text: str) -> list[np.ndarray]:
    """Dense matrices from blank-line separated blocks; errors carry byte offsets."""
    blocks: list[list[list[float]]] = []
    current: list[list[float]] = []
    offset = 0
    for line in text.splitlines(keepends=True):
        body = line.split("#", 1)[0]
        if not body.strip():
            if current:
                blocks.append(current)
                current = []
            offset += len(line.encode())
            continue
        row = []
        col = 0
        for token in body.split():
            col = body.index(token, col)
            try:
                row.append(float(token))
            except ValueError:
                raise ParseError(f"bad number {token!r}", offset + len(body[:col].encode())) from None
            col += len(token)
        if current and len(row) != len(current[0]):
            raise ParseError(f"row has {len(row)} columns, expected {len(current[0])}", offset)
        current.append(row)
        offset += len(line.encode())
    if current:
        blocks.append(current)
    if not blocks:
        raise ParseError("no weight matrices found", offset)
    return [np.array(b, dtype=float) for b in blocks]


def spec_from_matrices(mats: Sequence[np.ndarray], topology: Sequence[int] | None = None, seed: int = 0) -> NetworkSpec:
    """A = nonzero mask, R = 1, M_hat = the matrix entries on A."""
    mats = [np.atleast_2d(np.asarray(m, dtype=float)) for m in mats]
    for i in range(len(mats) - 1):
        if mats[i].shape[1] != mats[i + 1].shape[0]:
            raise ShapeError(
                f"matrix {i + 1} does not chain onto matrix {i}",
                (mats[i].shape[1], mats[i + 1].shape[1]),
                mats[i + 1].shape,
            )
    sizes = [mats[0].shape[0]] + [m.shape[1] for m in mats]
    if topology is not None:
        want = [int(s) for s in topology]
        if len(want) != len(sizes):
            raise ShapeError("layer count", len(want), len(sizes))
        for i, m in enumerate(mats):
            if m.shape != (want[i], want[i + 1]):
                raise ShapeError(f"layer pair {i}", (want[i], want[i + 1]), m.shape)
    layers = []
    for m in mats:
        rows, cols = np.nonzero(m)
        indptr = np.zeros(m.shape[0] + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=m.shape[0]), out=indptr[1:])
        layers.append(
            LayerConnectivity(m.shape[0], m.shape[1], indptr, cols.astype(np.int64), np.ones(cols.size), m[rows, cols])
        )
    topo = Topology(tuple(sizes))
    return NetworkSpec(topology=topo, layers=tuple(layers), clusters=_single_cluster(topo), seed=seed)


def import_weights(path: str | Path, format: str | None = None, topology: Sequence[int] | None = None) -> NetworkSpec:
    """Load a network from a binary container or a layered-matrix text file.

    ``format`` is ``"binary"`` or ``"text"``; by default it is sniffed from
    the magic bytes.  With ``topology`` the file must match it exactly.
    """
    data = Path(path).read_bytes()
    if format is None:
        format = "binary" if data.startswith(MAGIC) else "text"
    if format == "binary":
        spec = from_bytes(data)
        if topology is not None and list(spec.topology.layer_sizes) != [int(s) for s in topology]:
            raise ShapeError("topology", tuple(topology), spec.topology.layer_sizes)
        return spec
    if format != "text":
        raise ValueError(f"unknown weight format '{format}'")
    try:
        text = data.decode()
    except UnicodeDecodeError as exc:
        raise ParseError("text weights are not UTF-8", exc.start) from None
    return spec_from_matrices(parse_layered_text(text), topology)


def export_text(spec: NetworkSpec, path: str | Path) -> None:
    """Write effective weights (R * M_hat) as layered-matrix text."""
    blocks = []
    for i, lc in enumerate(spec.layers):
        m = lc.effective().toarray()
        lines = [f"# pair {i}: {lc.n_pre} x {lc.n_post}"]
        lines += [" ".join(repr(float(x)) for x in row) for row in m]
        blocks.append("\n".join(lines))
    Path(path).write_text("\n\n".join(blocks) + "\n")
