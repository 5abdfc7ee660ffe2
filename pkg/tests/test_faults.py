import hashlib

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from lifasim.errors import FaultPlanError, OracleError
from lifasim.faults import (
    ALL_KINDS,
    EMPTY_PLAN,
    FaultEvent,
    FaultKind,
    FaultMixture,
    FaultPlan,
    FaultScope,
    apply_plan,
    dequantize,
    eligible_targets,
    flip_weight_bit,
    generate_plan,
    min_accuracy_under_faults,
    quantize,
    revert,
)
from lifasim.network import assign_clusters, build_feedforward, fingerprint, with_clusters
from lifasim.oracle import ConstantOracle, ScriptedOracle, SurrogateOracle, TaskConfig


def _checksum(net) -> str:
    h = hashlib.sha256()
    for i in range(len(net.layers) if hasattr(net, "layers") else len(net.base.layers)):
        data = net.edge_data(i) if hasattr(net, "edge_data") else net.layers[i].r * net.layers[i].w
        h.update(np.ascontiguousarray(data).tobytes())
    return h.hexdigest()


@pytest.fixture
def spec():
    return build_feedforward([8, 6, 4], seed=1)


def test_plan_size_and_determinism(spec):
    big = build_feedforward([40, 30, 10], seed=0)
    plan = generate_plan(big, 10_000, seed=3)
    assert len(plan.events) == 10_000
    assert generate_plan(big, 10_000, seed=3) == plan
    assert generate_plan(big, 10_000, seed=4) != plan


def test_empty_scope_errors(spec):
    clustered = with_clusters(spec, assign_clusters(spec, 4, "by-layer-block"))
    with pytest.raises(FaultPlanError):
        generate_plan(clustered, 5, FaultScope(cluster=9))
    with pytest.raises(FaultPlanError):
        generate_plan(spec, 5, FaultScope(layer=7))


def test_scope_restricts_targets(spec):
    plan = generate_plan(spec, 200, FaultScope(layer=1), seed=2)
    neurons, edges = eligible_targets(spec, FaultScope(layer=1))
    allowed_n, allowed_e = set(neurons.tolist()), set(np.asarray(edges).tolist())
    for ev in plan.events:
        assert ev.target in (allowed_n if ev.kind.targets_neuron else allowed_e)


def test_empty_plan_view_equals_spec(spec):
    view = apply_plan(spec, EMPTY_PLAN)
    assert view.is_empty
    assert _checksum(view) == _checksum(spec)
    assert not view.stuck.any() and not view.threshold_delta.any()


def test_single_dead_synapse(spec):
    plan = FaultPlan(0, 1, FaultScope(), (FaultEvent(FaultKind.SYNAPSE_DEAD, 5),))
    view = apply_plan(spec, plan)
    before = spec.layers[0].r * spec.layers[0].w
    after = view.edge_data(0)
    assert after[5] == 0.0
    mask = np.arange(before.size) != 5
    assert np.array_equal(after[mask], before[mask])
    assert np.array_equal(view.edge_data(1), spec.layers[1].r * spec.layers[1].w)


def test_thousand_events_revert(spec):
    before = _checksum(spec), fingerprint(spec)
    view = apply_plan(spec, generate_plan(spec, 1000, seed=11))
    assert _checksum(view) != before[0]
    back = revert(view)
    assert (_checksum(back), fingerprint(back)) == before


def test_out_of_range_event(spec):
    plan = FaultPlan(0, 1, FaultScope(), (FaultEvent(FaultKind.NEURON_STUCK_SILENT, 10_000),))
    with pytest.raises(FaultPlanError):
        apply_plan(spec, plan)


def test_bitflip_roundtrip():
    w = 0.3
    flipped = flip_weight_bit(w, 3)
    assert flipped != w
    assert flip_weight_bit(flipped, 3) == dequantize(quantize(w))


def test_min_accuracy_examples(spec):
    assert min_accuracy_under_faults(spec, ConstantOracle(0.8), 0).a_min == 0.8
    assert min_accuracy_under_faults(spec, ConstantOracle(0.9), 50, trials=4).a_min == 0.9
    probe = min_accuracy_under_faults(spec, ScriptedOracle(0.9, [0.8, 0.6, 0.7]), 10, trials=3, mode="simultaneous")
    assert probe.accuracies == (0.8, 0.6, 0.7)
    assert probe.a_min == 0.6


def test_oracle_failure_names_trial(spec):
    def boom(net):
        raise RuntimeError("kaput")

    with pytest.raises(OracleError) as e:
        min_accuracy_under_faults(spec, ScriptedOracle(0.9, boom), 5, trials=2)
    assert e.value.trial == 0


def test_plan_serialisation(tmp_path, spec):
    plan = generate_plan(spec, 30, seed=5)
    plan.save(tmp_path / "plan.json")
    assert FaultPlan.load(tmp_path / "plan.json") == plan


def test_plan_uniform_over_targets():
    # chi-square goodness of fit for a single kind on a small scope
    spec = build_feedforward([5, 4], seed=0)
    mix = FaultMixture.of({"synapse_dead": 1.0})
    plan = generate_plan(spec, 20_000, seed=8, mixture=mix)
    counts = np.bincount([e.target for e in plan.events], minlength=20)
    assert stats.chisquare(counts).pvalue > 0.001
    mix = FaultMixture.of({"threshold_shift": 1.0})
    plan = generate_plan(spec, 9_000, seed=9, mixture=mix)
    counts = np.bincount([e.target for e in plan.events], minlength=9)
    assert stats.chisquare(counts).pvalue > 0.001


@given(st.sampled_from(ALL_KINDS), st.integers(1, 60), st.integers(0, 10_000))
def test_apply_revert_exact_for_every_kind(kind, n_r, seed):
    spec = build_feedforward([6, 5, 3], seed=2)
    plan = generate_plan(spec, n_r, seed=seed, mixture=FaultMixture.of({kind.value: 1.0}))
    assert all(e.kind is kind for e in plan.events)
    before = (_checksum(spec), fingerprint(spec))
    view = apply_plan(spec, plan)
    back = revert(view)
    assert (_checksum(back), fingerprint(back)) == before


def test_surrogate_stress_is_monotone_in_n_r():
    """Expected a_min falls as more faults are injected (30 seeds)."""
    oracle = SurrogateOracle(task=TaskConfig(test_per_class=10, warmup_steps=600, adapt_steps=300, present_steps=100))
    mix = FaultMixture.of({"synapse_dead": 1.0, "weight_bitflip": 1.0, "threshold_shift": 1.0})
    levels = (5, 40, 160)
    xs, ys = [], []
    for seed in range(30):
        spec = build_feedforward([16, 12, 4], seed=seed)
        for n_r in levels:
            probe = min_accuracy_under_faults(spec, oracle, n_r, trials=1, seed=seed, mixture=mix, mode="simultaneous")
            xs.append(n_r)
            ys.append(probe.a_min)
    rho, p = stats.spearmanr(xs, ys)
    assert rho < 0 and p < 0.01
