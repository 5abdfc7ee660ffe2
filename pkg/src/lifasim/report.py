"""Run orchestration and report emission.

A run is a sequence of named stages.  Each stage reads the resolved config,
writes its own artifact files and contributes a section to the report.  The
summary JSON uses the standard benchmark metric names and holds only
simulated quantities, so it is byte-identical across repeated runs; wall-clock timings go to a
separate ``timing.json``.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .arr import compare_arr
from .config import RunConfig, dump_config
from .energy import CATEGORIES, ArrMode, EnergyAccountant
from .errors import StageError
from .faults import FaultMixture, FaultScope, generate_plan
from .io import save_network
from .memory import AstroModulation, capacity_sweep
from .network import (
    CountMode,
    NetworkSpec,
    Topology,
    assign_clusters,
    build_feedforward,
    cover_all,
    synapse_count,
    with_clusters,
)
from .oracle import SurrogateOracle, paired_repair_trial
from .placement import PlacementProblem, place_astrocytes
from .reference import REFERENCE_TOPOLOGY, reference_stimulus
from .repair import fault_tolerance, network_recovery
from .routing import Mesh, RouteMode, cluster_bench, evaluate_modes, random_traffic
from .simulator import NoisyStimulus, simulate

STAGES = ("build", "latency", "frequency", "placement", "faults", "routing", "memory", "energy")


def _r(x: float, nd: int = 6) -> float:
    return float(round(float(x), nd))


def _csv(header: Iterable[str], rows: Iterable[Iterable]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(header))
    for row in rows:
        w.writerow([f"{v:.6f}" if isinstance(v, float) else v for v in row])
    return buf.getvalue()


@dataclass
class RunReport:
    """Everything a run produced, keyed by stage."""

    sections: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)

    def summary(self) -> dict:
        """Benchmark metric names plus per-stage details; simulated quantities only."""
        s = self.sections
        out: dict = {}
        if "build" in s:
            b = s["build"]
            out["Neurons"] = b["neurons"]
            out["Synapses"] = b["synapses"]
            out["Network Topology"] = b["topology"]
            out["Model Complexity (MAC)"] = {
                "unidirectional": b["synapses_unidirectional"],
                "bidirectional": b["synapses_bidirectional"],
            }
        if "latency" in s:
            out["Latency"] = s["latency"]["latency_s"]
            out["Throughput"] = s["latency"]["throughput"]
        if "frequency" in s:
            out["Average Spike Frequency"] = s["frequency"]["rate_hz"]
        if "faults" in s:
            f = s["faults"]
            out["Fault Tolerance Rate"] = f["astro"]["retained_percent"]
            out["Network Recovery"] = f["recovery"]["complement_percent"]
        if "energy" in s:
            out["Energy"] = {k: v for k, v in s["energy"].items() if k != "buckets"}
        out["details"] = {
            k: {kk: vv for kk, vv in v.items() if kk not in ("rows", "trials", "buckets", "recovery_rows")}
            for k, v in s.items()
        }
        return out

    def summary_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True) + "\n"

    def to_json(self) -> str:
        return json.dumps({"sections": self.sections}, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        return cls(sections=json.loads(text)["sections"])


# ---------------------------------------------------------------- stages


def build_network(cfg: RunConfig) -> NetworkSpec:
    n = cfg.network
    topology = Topology(tuple(n.topology), CountMode(n.count_mode))
    spec = build_feedforward(topology, n.density, n.weight_init.build(), n.seed, cfg.dynamics.neuron.build(), n.budget)
    if n.clusters > 1:
        spec = with_clusters(spec, assign_clusters(spec, n.clusters, n.cluster_policy))
    return cover_all(spec, n.budget, cfg.dynamics.astrocyte.build())


def stage_build(cfg: RunConfig, out: Path, ctx: dict) -> dict:
    spec = build_network(cfg)
    ctx["spec"] = spec
    save_network(spec, out / "network.lifa")
    return {
        "neurons": spec.n_neurons,
        "synapses": synapse_count(spec),
        "synapses_unidirectional": synapse_count(spec, CountMode.UNIDIRECTIONAL),
        "synapses_bidirectional": synapse_count(spec, CountMode.BIDIRECTIONAL),
        "count_mode": spec.topology.count_mode.value,
        "topology": ", ".join(str(s) for s in spec.topology.layer_sizes),
        "clusters": spec.clusters.k,
        "astrocytes": len(spec.roster.active()),
    }


def stage_latency(cfg: RunConfig, out: Path, ctx: dict) -> dict:
    """Simulate one sample through the configured network.

    Latency is simulated time, so throughput times latency is exactly the
    simulated neuron count.
    """
    spec = ctx.get("spec") or build_network(cfg)
    n_in = spec.topology.layer_sizes[0]
    base = np.random.default_rng([cfg.network.seed, n_in]).uniform(0.0, 0.7, size=(1, n_in))
    steps = cfg.network.latency_steps
    res = simulate(spec, NoisyStimulus(base, 1.0, cfg.network.seed), steps, cfg.dynamics.settings())
    latency = res.duration_s
    return {
        "steps": steps,
        "latency_s": _r(latency),
        "throughput": _r(spec.n_neurons / latency),
        "simulated_neurons": spec.n_neurons,
        "mean_rate_hz": _r(res.mean_rate()),
    }


def stage_frequency(cfg: RunConfig, out: Path, ctx: dict) -> dict:
    """Repair loop on the reference network towards the target rate."""
    policy = cfg.repair.build()
    settings = cfg.dynamics.settings()
    seed = cfg.network.seed
    spec = cover_all(
        build_feedforward(REFERENCE_TOPOLOGY, seed=seed, neuron_params=cfg.dynamics.neuron.build()),
        params=cfg.dynamics.astrocyte.build(),
    )
    steps = cfg.repair.steps
    res = simulate(spec, reference_stimulus(seed=seed), steps, settings, policy=policy, record_spikes=True)
    covered = np.flatnonzero(spec.roster.owner(spec.n_neurons) >= 0)
    rate = float(res.spikes[steps // 2 :, :, covered].mean()) * 1000.0 / settings.dt
    rows = [[s, a, _r(d), _r(g), st] for s, a, d, g, st in res.recovery.rows(policy)]
    (out / "recovery.csv").write_text(_csv(["step", "astrocyte_id", "delta_vth", "g", "stage"], rows))
    err = abs(rate - policy.target_rate) / policy.target_rate
    return {
        "network": ", ".join(map(str, REFERENCE_TOPOLOGY)),
        "target_hz": policy.target_rate,
        "rate_hz": _r(rate),
        "relative_error": _r(err),
        "within_tolerance": bool(err <= policy.max_reconstruction_error),
        "recovery_rows": rows,
    }


def stage_placement(cfg: RunConfig, out: Path, ctx: dict) -> dict:
    p = cfg.placement
    spec = build_feedforward(p.topology, seed=p.seed, neuron_params=cfg.dynamics.neuron.build(), budget=p.budget)
    if p.clusters > 1:
        spec = with_clusters(spec, assign_clusters(spec, p.clusters))
    oracle = SurrogateOracle(cfg.dynamics.settings(), cfg.faults.task.build())
    result = place_astrocytes(
        PlacementProblem(
            spec,
            oracle,
            n_r=p.n_r,
            a_th=p.a_th,
            trials=p.trials,
            max_astrocytes_per_layer=p.max_astrocytes_per_layer,
            budget=p.budget,
            seed=p.seed,
            mode=p.mode,
            checkpoints=p.checkpoints,
            persist_faults=p.persist_faults,
            mixture=FaultMixture.of(p.mixture),
            params=cfg.dynamics.astrocyte.build(),
        )
    )
    (out / "placement.json").write_text(result.to_json() + "\n")
    (out / "placement_log.csv").write_text(result.log_csv())
    return {
        "astrocytes_placed": result.placed,
        "a0": _r(result.a0),
        "a_th": _r(result.a_th),
        "unprotectable": [list(k) for k in result.unprotectable],
        "error": result.error,
    }


def fault_n_r(cfg: RunConfig) -> int:
    f = cfg.faults
    if f.n_r is not None:
        return f.n_r
    spec = build_feedforward(f.topology, seed=0)
    return max(1, int(round(f.synapse_fraction * synapse_count(spec, CountMode.UNIDIRECTIONAL))))


def stage_faults(cfg: RunConfig, out: Path, ctx: dict) -> dict:
    """Paired with/without repair campaign on the surrogate task."""
    f = cfg.faults
    oracle = SurrogateOracle(cfg.dynamics.settings(), f.task.build())
    n_r = fault_n_r(cfg)
    scope = FaultScope.parse(f.scope)
    mixture = FaultMixture.of(f.mixture)
    trials = []
    for seed in f.seeds:
        spec = cover_all(
            build_feedforward(f.topology, seed=seed, neuron_params=cfg.dynamics.neuron.build()),
            f.budget,
            cfg.dynamics.astrocyte.build(),
        )
        plan = generate_plan(spec, n_r, scope, f.plan_seed + seed, mixture)
        trials.append(paired_repair_trial(spec, oracle, plan, seed))

    def arm(acc_of):
        metrics = [fault_tolerance(t.a0, acc_of(t)) for t in trials]
        return {
            "accuracy": _r(np.mean([acc_of(t) for t in trials])),
            "deviation_percent": _r(np.mean([m.ft_percent for m in metrics])),
            "retained_percent": _r(np.mean([m.retained_percent for m in metrics])),
        }

    base = arm(lambda t: t.without_repair)
    astro = arm(lambda t: t.with_repair)
    rec = network_recovery(base["retained_percent"], astro["retained_percent"])
    rows = [[t.seed, _r(t.a0), _r(t.with_repair), _r(t.without_repair), _r(t.improvement)] for t in trials]
    (out / "fault_trials.csv").write_text(_csv(["seed", "a0", "with_repair", "without_repair", "improvement"], rows))
    imp = np.array([t.improvement for t in trials])
    return {
        "n_r": n_r,
        "scope": scope.describe(),
        "mixture": dict(f.mixture),
        "baseline": base,
        "astro": astro,
        "recovery": {"complement_percent": _r(rec.complement_percent), "difference_percent": _r(rec.difference_percent)},
        "repair_at_least_as_good": _r(np.mean(imp >= 0)),
        "mean_improvement": _r(imp.mean()),
        "trials": rows,
    }


def stage_routing(cfg: RunConfig, out: Path, ctx: dict) -> dict:
    """Mesh routing under node faults.

    ``cluster`` traffic places the configured network's clusters on the
    healthy cores of each faulted mesh; ``random`` traffic is a fixed list
    of flows on physical cores, so a dead destination core is undeliverable.
    """
    r = cfg.routing
    if r.traffic == "cluster":
        spec = ctx.get("spec") or build_network(cfg)
        rows = cluster_bench(spec, r.width, r.height, r.fault_fractions, r.seeds).rows
    else:
        mesh = Mesh(r.width, r.height)
        traffic = random_traffic(mesh, r.flows, r.fanout, r.traffic_seed)
        rows = []
        for frac in r.fault_fractions:
            rows += evaluate_modes(mesh, traffic, frac, r.seeds).rows
    csv_rows = [[m, f"{fr:g}", s, _r(d), h, lat] for m, fr, s, d, h, lat in rows]
    (out / "route_bench.csv").write_text(
        _csv(["mode", "fault_fraction", "seed", "delivered", "total_hops", "max_latency"], csv_rows)
    )
    means = {}
    for mode in RouteMode:
        for frac in r.fault_fractions:
            sel = np.array([x[3:] for x in rows if x[0] == mode.value and x[1] == frac], dtype=float)
            means[f"{mode.value}@{frac:g}"] = [_r(v) for v in sel.mean(axis=0)]
    return {"mesh": f"{r.width}x{r.height}", "traffic": r.traffic, "means": means, "rows": csv_rows}


def stage_memory(cfg: RunConfig, out: Path, ctx: dict) -> dict:
    m = cfg.memory
    mod = AstroModulation(cfg.dynamics.astrocyte.build(), m.astro_g) if m.astro_g is not None else None
    curve = capacity_sweep(m.n, m.p_max, m.noise, m.seeds, astro_modulation=mod, prune_density=m.prune_density)
    (out / "membench.csv").write_text(curve.to_csv())
    return {
        "n": m.n,
        "noise": m.noise,
        "capacity": {str(p): _r(c) for p, c in curve.mean().items()},
        "first_below_0.9": curve.first_below(0.9),
    }


def stage_energy(cfg: RunConfig, out: Path, ctx: dict) -> dict:
    e = cfg.energy
    coeffs = e.coefficients()
    seed = cfg.network.seed
    spec = cover_all(
        build_feedforward(REFERENCE_TOPOLOGY, seed=seed, neuron_params=cfg.dynamics.neuron.build()),
        params=cfg.dynamics.astrocyte.build(),
    )
    stim = reference_stimulus(batch=e.batch, seed=seed)
    settings = cfg.dynamics.settings()
    policy = cfg.repair.build()
    arms = {}
    if e.arr == ArrMode.OFF.value:
        acc = EnergyAccountant((e.batch, spec.n_neurons), coeffs, False, e.gate_after, e.bucket)
        simulate(spec, stim, e.steps, settings, policy=policy, accountants=[acc])
        arms["base"] = (acc.ledger, acc.flush())
        extra = {"mode": "off"}
    else:
        cmp = compare_arr(spec, stim, e.steps, coeffs, settings, e.arr, e.gate_after, e.bucket, policy=policy)
        arms["base"] = (cmp.base, cmp.base_buckets)
        arms["arr"] = (cmp.arr, cmp.arr_buckets)
        extra = {"mode": cmp.mode.value, "savings": _r(cmp.savings), "spikes_identical": cmp.spikes_identical}
    buckets = []
    for name, (_, bs) in arms.items():
        for i, b in enumerate(bs):
            for cat, v in b.categories().items():
                buckets.append([name, i * e.bucket, cat, _r(v)])
    (out / "energy.csv").write_text(_csv(["arm", "bucket_start", "category", "value"], buckets))
    totals = {name: {**{c: _r(v) for c, v in led.categories().items()}, "total": _r(led.total)} for name, (led, _) in arms.items()}
    return {**extra, "technology": coeffs.technology, "totals": totals, "buckets": buckets}


STAGE_FUNCS: dict[str, Callable[[RunConfig, Path, dict], dict]] = {
    "build": stage_build,
    "latency": stage_latency,
    "frequency": stage_frequency,
    "placement": stage_placement,
    "faults": stage_faults,
    "routing": stage_routing,
    "memory": stage_memory,
    "energy": stage_energy,
}


def enabled_stages(cfg: RunConfig) -> list[str]:
    flags = {
        "placement": cfg.placement.enabled,
        "faults": cfg.faults.enabled,
        "routing": cfg.routing.enabled,
        "memory": cfg.memory.enabled,
        "energy": cfg.energy.enabled,
    }
    return [s for s in STAGES if flags.get(s, True)]


def run_stages(cfg: RunConfig, stages: Iterable[str], out_dir: str | Path | None = None) -> RunReport:
    """Run the named stages in order; the first failure raises StageError."""
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved_config.yaml").write_text(dump_config(cfg))
    report = RunReport()
    ctx: dict = {}
    for name in stages:
        t0 = time.perf_counter()
        try:
            report.sections[name] = STAGE_FUNCS[name](cfg, out, ctx)
        except Exception as exc:
            raise StageError(name, exc) from exc
        report.timing[name] = round(time.perf_counter() - t0, 3)
    (out / "summary.json").write_text(report.summary_json())
    (out / "report.json").write_text(report.to_json())
    (out / "timing.json").write_text(json.dumps(report.timing, indent=2, sort_keys=True) + "\n")
    return report


def run_experiment(cfg: RunConfig, out_dir: str | Path | None = None) -> RunReport:
    """Every enabled stage, then the plot bundle."""
    report = run_stages(cfg, enabled_stages(cfg), out_dir)
    emit_plot_data([report], Path(out_dir if out_dir is not None else cfg.output_dir) / "plots")
    return report


def emit_plot_data(reports: Iterable[RunReport], out_dir: str | Path) -> list[Path]:
    """One CSV per figure family; rows from several reports are concatenated.

    energy.csv   arm, category, value
    routing.csv  mode, condition, delivered, hops, latency
    ft.csv       arm, variant, value  (baseline and astro arms, signed deviation and retained share)
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    energy, routing, ft = [], [], []
    for rep in reports:
        s = rep.sections
        if "energy" in s:
            for arm, totals in s["energy"]["totals"].items():
                for cat in CATEGORIES + ("total",):
                    energy.append([arm, cat, totals[cat]])
        if "routing" in s:
            for key, (delivered, hops, latency) in s["routing"]["means"].items():
                mode, frac = key.split("@")
                cond = "fault-free" if float(frac) == 0 else f"faults={frac}"
                routing.append([mode, cond, delivered, hops, latency])
        if "faults" in s:
            for arm in ("baseline", "astro"):
                ft.append([arm, "deviation", s["faults"][arm]["deviation_percent"]])
                ft.append([arm, "retained", s["faults"][arm]["retained_percent"]])
    files = {
        "energy.csv": (["arm", "category", "value"], energy),
        "routing.csv": (["mode", "condition", "delivered", "hops", "latency"], routing),
        "ft.csv": (["arm", "variant", "value"], ft),
    }
    written = []
    for name, (header, rows) in files.items():
        path = out / name
        path.write_text(_csv(header, rows))
        written.append(path)
    return written
