import csv
import json

import pytest
import yaml

from lifasim import cli
from lifasim.config import DEFAULT_TOPOLOGY, dump_config, load_config, parse_config
from lifasim.errors import ConfigurationError, StageError
from lifasim.report import RunReport, emit_plot_data, run_experiment, run_stages

SMALL = {
    "network": {"topology": [64, 32, 10], "clusters": 3},
    "repair": {"steps": 500},
    "faults": {"seeds": [0, 1], "task": {"test_per_class": 10, "warmup_steps": 500, "adapt_steps": 300}},
    "placement": {"enabled": True, "topology": [8, 6, 3], "n_r": 5, "trials": 1},
    "routing": {"seeds": [0, 1, 2]},
    "memory": {"n": 30, "p_max": 6, "seeds": [0, 1]},
    "energy": {"steps": 300},
}

SUMMARY_KEYS = {
    "Neurons",
    "Synapses",
    "Network Topology",
    "Model Complexity (MAC)",
    "Latency",
    "Throughput",
    "Average Spike Frequency",
    "Fault Tolerance Rate",
    "Network Recovery",
}


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    return run_experiment(parse_config(SMALL), out), out


def _write_cfg(path, data):
    path.write_text(yaml.safe_dump(data))
    return path


def test_unknown_key_is_named():
    with pytest.raises(ConfigurationError, match="unknown key 'network.bogus'"):
        parse_config({"network": {"bogus": 1}})
    with pytest.raises(ConfigurationError, match="unknown key 'extra'"):
        parse_config({"extra": {}})


def test_bad_values_rejected(tmp_path):
    with pytest.raises(ConfigurationError):
        parse_config({"faults": {"mixture": {"gremlins": 1}}})
    with pytest.raises(ConfigurationError):
        parse_config({"faults": {"scope": "cluster=x"}})
    with pytest.raises(ConfigurationError):
        load_config(_write_cfg(tmp_path / "c.yaml", [1, 2]))


def test_defaults_round_trip_through_yaml(tmp_path):
    cfg = parse_config({})
    assert cfg.network.topology == DEFAULT_TOPOLOGY
    resolved = yaml.safe_load(dump_config(cfg))
    assert resolved["repair"]["target_rate"] == 2.17
    assert resolved["network"]["clusters"] == 7
    assert load_config(_write_cfg(tmp_path / "r.yaml", resolved)) == cfg


def test_summary_uses_table_vocabulary(small_run):
    report, out = small_run
    summary = json.loads((out / "summary.json").read_text())
    assert SUMMARY_KEYS <= set(summary)
    assert summary["Neurons"] == 106
    assert summary["Model Complexity (MAC)"] == {"unidirectional": 2368, "bidirectional": 4736}
    assert summary["Network Recovery"] == pytest.approx(100 - summary["Fault Tolerance Rate"], abs=1e-5)


def test_throughput_times_latency_is_neurons(small_run):
    report, _ = small_run
    lat = report.sections["latency"]
    assert lat["throughput"] * lat["latency_s"] == pytest.approx(lat["simulated_neurons"], rel=1e-6)


def test_outputs_written(small_run):
    _, out = small_run
    for name in (
        "resolved_config.yaml",
        "summary.json",
        "report.json",
        "timing.json",
        "network.lifa",
        "network.json",
        "recovery.csv",
        "placement.json",
        "placement_log.csv",
        "fault_trials.csv",
        "route_bench.csv",
        "membench.csv",
        "energy.csv",
    ):
        assert (out / name).exists(), name
    assert yaml.safe_load((out / "resolved_config.yaml").read_text())["memory"]["n"] == 30
    assert "timing" not in (out / "summary.json").read_text()


def test_plot_csv_headers(small_run):
    _, out = small_run
    heads = {}
    for name in ("energy.csv", "routing.csv", "ft.csv"):
        with open(out / "plots" / name) as fh:
            heads[name] = next(csv.reader(fh))
    assert heads == {
        "energy.csv": ["arm", "category", "value"],
        "routing.csv": ["mode", "condition", "delivered", "hops", "latency"],
        "ft.csv": ["arm", "variant", "value"],
    }


def test_report_json_round_trip(small_run, tmp_path):
    report, out = small_run
    back = RunReport.from_json((out / "report.json").read_text())
    assert back.summary_json() == report.summary_json()
    written = emit_plot_data([back, back], tmp_path)
    rows = (tmp_path / "ft.csv").read_text().splitlines()
    assert len(rows) == 1 + 2 * 4 and len(written) == 3


def test_stage_failure_is_named(tmp_path):
    cfg = parse_config({"memory": {"n": 1, "p_max": 1, "seeds": [0]}})
    with pytest.raises(StageError) as err:
        run_stages(cfg, ["memory"], tmp_path)
    assert err.value.stage == "memory"


def test_cli_exit_codes(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv(cli.OUTPUT_ENV, raising=False)
    bad = _write_cfg(tmp_path / "bad.yaml", {"network": {"bogus": 1}})
    assert cli.main(["build", "-c", str(bad), "-o", str(tmp_path / "x")]) == cli.EXIT_CONFIG
    assert "unknown key 'network.bogus'" in capsys.readouterr().err

    broken = _write_cfg(tmp_path / "broken.yaml", {"memory": {"n": 1, "p_max": 1, "seeds": [0]}})
    assert cli.main(["membench", "-c", str(broken), "-o", str(tmp_path / "y")]) == cli.EXIT_STAGE
    assert "stage 'memory'" in capsys.readouterr().err

    small = _write_cfg(tmp_path / "small.yaml", {"memory": {"n": 20, "p_max": 3, "seeds": [0]}})
    assert cli.main(["membench", "-c", str(small), "-o", str(tmp_path / "z")]) == 0
    assert (tmp_path / "z" / "membench.csv").exists()


def test_cli_flags_reach_config(tmp_path, monkeypatch):
    monkeypatch.delenv(cli.OUTPUT_ENV, raising=False)
    cfg = _write_cfg(tmp_path / "f.yaml", SMALL)
    out = tmp_path / "fb"
    argv = ["fault-bench", "-c", str(cfg), "-o", str(out), "--faults", "7", "--fault-seed", "5", "--fault-scope", "layer=1"]
    assert cli.main(argv) == 0
    resolved = yaml.safe_load((out / "resolved_config.yaml").read_text())
    assert resolved["faults"]["n_r"] == 7
    assert resolved["faults"]["plan_seed"] == 5
    assert json.loads((out / "report.json").read_text())["sections"]["faults"]["n_r"] == 7


def test_env_overrides_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "env"))
    cfg = _write_cfg(tmp_path / "r.yaml", {"routing": {"seeds": [0]}})
    assert cli.main(["route-bench", "-c", str(cfg), "-o", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "env" / "route_bench.csv").exists()
    assert not (tmp_path / "flag").exists()


def test_export_plots(small_run, tmp_path, monkeypatch):
    monkeypatch.delenv(cli.OUTPUT_ENV, raising=False)
    _, out = small_run
    assert cli.main(["export-plots", str(out), str(out / "report.json"), "-o", str(tmp_path / "p")]) == 0
    assert len((tmp_path / "p" / "routing.csv").read_text().splitlines()) > 1
