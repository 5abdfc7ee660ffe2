"""Hopfield-style associative memory benchmark.

Patterns are stored with the Hebbian outer-product rule and recalled with
asynchronous sign updates in fixed index order.  A unit whose local field is
zero keeps its state, which makes every update a strict energy descent.

Astrocyte modulation scales each neuron's incoming weights by the efficacy
gain of its gliotransmitter level.  A positive per-row gain never changes the
sign of a local field, so modulated recall follows the unmodulated trajectory
exactly; the pruning knob is the experiment that actually changes dynamics.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dynamics import AstrocyteParams, modulation_factor
from .errors import ContractError

FIELD_RTOL = 1e-12


@dataclass(frozen=True)
class PatternSet:
    n: int
    patterns: np.ndarray  # (P, n) of +-1
    seed: int | None = None

    def __post_init__(self):
        p = np.asarray(self.patterns)
        if p.ndim != 2 or p.shape[1] != self.n:
            raise ContractError(f"patterns must have shape (P, {self.n})")
        if p.size and not np.all(np.abs(p) == 1):
            raise ContractError("pattern entries must be +1 or -1")

    def __len__(self) -> int:
        return int(np.asarray(self.patterns).shape[0])


def random_patterns(n: int, p: int, seed: int = 0) -> PatternSet:
    """``p`` distinct random +-1 patterns of length ``n``."""
    if p > 2**n:
        raise ContractError(f"cannot draw {p} distinct patterns of length {n}")
    rng = np.random.default_rng(seed)
    out, seen = [], set()
    while len(out) < p:
        x = rng.choice(np.array([-1, 1], dtype=np.int8), size=n)
        key = x.tobytes()
        if key not in seen:
            seen.add(key)
            out.append(x)
    arr = np.array(out, dtype=np.int8).reshape(p, n)
    return PatternSet(n, arr, seed)


def hebbian_store(patterns) -> np.ndarray:
    """``W = (1/n) sum_mu xi xi^T`` with a zero diagonal."""
    if isinstance(patterns, PatternSet):
        patterns = patterns.patterns
    xi = np.asarray(patterns, dtype=float)
    if xi.ndim != 2:
        raise ContractError("patterns must be a 2-D array (P, n)")
    n = xi.shape[1]
    if n < 2:
        raise ContractError("need at least two neurons")
    if len({row.tobytes() for row in xi}) < xi.shape[0]:
        warnings.warn("duplicate patterns stored", stacklevel=2)
    W = xi.T @ xi / n
    np.fill_diagonal(W, 0.0)
    return W


def energy(W, x) -> float:
    x = np.asarray(x, dtype=float)
    return float(-0.5 * x @ np.asarray(W) @ x)


def overlap(state, pattern) -> float:
    state = np.asarray(state, dtype=float)
    return float(state @ np.asarray(pattern, dtype=float) / state.size)


@dataclass(frozen=True)
class AstroModulation:
    """Per-neuron gliotransmitter levels applied to incoming weights."""

    params: AstrocyteParams = AstrocyteParams()
    g: float | np.ndarray = 0.0

    def apply(self, W: np.ndarray) -> np.ndarray:
        gain = np.broadcast_to(modulation_factor(self.params, self.g), (W.shape[0],))
        return W * gain[:, None]


@dataclass
class RecallOutcome:
    state: np.ndarray
    sweeps: int
    converged: bool
    energies: list[float]  # after each sweep, starting with the cue
    trajectory: list[np.ndarray] = field(default_factory=list)
    overlap: float | None = None  # with the nearest stored pattern
    nearest: int | None = None


def recall(
    W,
    cue,
    max_sweeps: int = 100,
    astro_modulation: AstroModulation | None = None,
    patterns=None,
    record: bool = False,
) -> RecallOutcome:
    """Asynchronous recall from ``cue`` until a sweep changes nothing.

    Energies are measured with the unmodulated ``W``.  When ``patterns`` is
    given the outcome also carries the overlap with the nearest one.
    """
    W = np.asarray(W, dtype=float)
    x = np.array(cue, dtype=float)
    n = W.shape[0]
    if x.shape != (n,):
        raise ContractError(f"cue length {x.size} does not match {n} neurons")
    Wm = astro_modulation.apply(W) if astro_modulation is not None else W
    tol = FIELD_RTOL * np.abs(Wm).sum(axis=1)
    energies = [energy(W, x)]
    trajectory = [x.copy()] if record else []
    converged = False
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        changed = False
        for i in range(n):
            h = Wm[i] @ x
            if abs(h) <= tol[i]:
                continue
            s = 1.0 if h > 0 else -1.0
            if s != x[i]:
                x[i] = s
                changed = True
                if record:
                    trajectory.append(x.copy())
        energies.append(energy(W, x))
        if not changed:
            converged = True
            break
    out = RecallOutcome(x.astype(np.int8), sweeps, converged, energies, trajectory)
    if patterns is not None:
        p = patterns.patterns if isinstance(patterns, PatternSet) else np.asarray(patterns)
        if len(p):
            m = p.astype(float) @ x / n
            out.nearest = int(np.argmax(np.abs(m)))
            out.overlap = float(m[out.nearest])
    return out


def corrupt(pattern, noise: float, rng: np.random.Generator) -> np.ndarray:
    """Flip ``round(noise * n)`` distinct entries."""
    x = np.array(pattern, dtype=np.int8)
    k = int(round(noise * x.size))
    if k:
        idx = rng.choice(x.size, size=k, replace=False)
        x[idx] = -x[idx]
    return x


@dataclass(frozen=True)
class RecallResult:
    overlaps: np.ndarray
    noise: float

    @property
    def capacity(self) -> float:
        if self.overlaps.size == 0:
            return 0.0
        return float(np.mean(np.maximum(self.overlaps, 0.0)))


def prune_weights(W, density: float) -> np.ndarray:
    """Keep the largest-magnitude fraction ``density`` of off-diagonal weights.

    Pruning is symmetric, so the pruned matrix is still a valid Hopfield
    coupling.  This is one reading of astrocytes using fewer connections.
    """
    if not 0 <= density <= 1:
        raise ContractError("density must lie in [0, 1]")
    W = np.asarray(W, dtype=float)
    iu = np.triu_indices(W.shape[0], k=1)
    vals = np.abs(W[iu])
    keep = int(round(density * vals.size))
    mask = np.zeros(vals.size, dtype=bool)
    if keep:
        mask[np.argsort(-vals, kind="stable")[:keep]] = True
    out = np.zeros_like(W)
    out[iu[0][mask], iu[1][mask]] = W[iu][mask]
    return out + out.T


def evaluate_recall(
    patterns: PatternSet,
    noise: float,
    seed: int = 0,
    max_sweeps: int = 100,
    astro_modulation: AstroModulation | None = None,
    prune_density: float | None = None,
) -> RecallResult:
    """Cue every stored pattern with ``noise`` flips and measure its overlap."""
    W = hebbian_store(patterns)
    if prune_density is not None:
        W = prune_weights(W, prune_density)
    rng = np.random.default_rng(seed)
    ms = []
    for xi in patterns.patterns:
        out = recall(W, corrupt(xi, noise, rng), max_sweeps, astro_modulation)
        ms.append(overlap(out.state, xi))
    return RecallResult(np.array(ms), noise)


@dataclass
class CapacityCurve:
    n: int
    noise: float
    rows: list[tuple[int, int, float, int, float]]  # (n, P, noise, seed, capacity)

    def mean(self) -> dict[int, float]:
        by_p: dict[int, list[float]] = {}
        for _, p, _, _, c in self.rows:
            by_p.setdefault(p, []).append(c)
        return {p: float(np.mean(v)) for p, v in sorted(by_p.items())}

    def first_below(self, level: float = 0.9) -> int | None:
        for p, c in self.mean().items():
            if c < level:
                return p
        return None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "P", "noise", "seed", "capacity"])
        for n, p, noise, seed, c in self.rows:
            w.writerow([n, p, f"{noise:g}", seed, f"{c:.6f}"])
        return buf.getvalue()


def capacity_sweep(
    n: int,
    p_max: int,
    noise: float,
    seeds: Sequence[int] = range(10),
    max_sweeps: int = 100,
    astro_modulation: AstroModulation | None = None,
    prune_density: float | None = None,
) -> CapacityCurve:
    """Mean capacity for every load ``P = 1..p_max`` over ``seeds``."""
    if p_max < 1:
        raise ContractError("p_max must be at least 1")
    rows = []
    for p in range(1, p_max + 1):
        for seed in seeds:
            ps = random_patterns(n, p, seed=int(np.random.SeedSequence([seed, n, p]).generate_state(1)[0]))
            res = evaluate_recall(ps, noise, seed, max_sweeps, astro_modulation, prune_density)
            rows.append((n, p, float(noise), int(seed), res.capacity))
    return CapacityCurve(n, float(noise), rows)
