import json
from pathlib import Path

import numpy as np
import pytest

from modalsep.cli import main
from modalsep.dynamics import ResponseRecord
from modalsep.errors import ConfigError, DataError, EmptyFile, MissingSampleRate, RaggedRows
from modalsep.pipeline import (PreprocessConfig, RunConfig, emit_plot_series, load_input,
                               preprocess, run_pipeline)
from modalsep.recordio import ingest_csv, write_record_csv
from modalsep.synthetic import benchmark_record, bridge_analog, bridge_shapes


def quick_config(tmp_path, **over):
    cfg = {"input": "simulate:benchmark4dof", "output_dir": str(tmp_path / "out"),
           "train_samples": 1000, "simulation": {"duration_s": 60.0},
           "preprocessing": {"standardize": True},
           "network": {"lambdas": [1.0, 0.001, 0.1, 0.1], "epochs": 30},
           "analysis": {"welch_segment_length": 1024}}
    cfg.update(over)
    return cfg


# --- ingestion ------------------------------------------------------------------

def test_small_csv(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("a,b\n1,2\n3,4\n5,6\n")
    rec = ingest_csv(p, sample_rate=10.0)
    assert rec.samples.shape == (3, 2) and rec.channel_labels == ["a", "b"]


def test_simulator_export_roundtrip_is_exact(tmp_path):
    rec, _ = benchmark_record(3.0, seed=5)
    csv_path, side = write_record_csv(rec, tmp_path / "rec.csv")
    back = ingest_csv(csv_path)
    assert np.array_equal(back.samples, rec.samples)
    assert back.sample_rate == rec.sample_rate and back.seed == 5
    assert back.channel_labels == rec.channel_labels and back.units == rec.units
    assert json.loads(side.read_text())["sample_rate"] == 100.0


def test_nan_cell_names_the_line(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("a,b\n1,2\n3,NaN\n")
    with pytest.raises(RaggedRows, match=":3:"):
        ingest_csv(p, 10.0)


@pytest.mark.parametrize("text,err", [("a,b\n1,2\n3\n", RaggedRows), ("a,b\n1,x\n2,3\n", RaggedRows),
                                      ("", EmptyFile), ("a,b\n", EmptyFile)])
def test_malformed_files(tmp_path, text, err):
    p = tmp_path / "r.csv"
    p.write_text(text)
    with pytest.raises(err):
        ingest_csv(p, 10.0)


def test_missing_sample_rate_and_missing_file(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("a\n1\n2\n")
    with pytest.raises(MissingSampleRate):
        ingest_csv(p)
    with pytest.raises(DataError):
        ingest_csv(tmp_path / "nope.csv", 10.0)


# --- preprocessing ----------------------------------------------------------------

def _offset_record():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((400, 3)) * [1.0, 5.0, 0.1] + [3.0, -7.0, 100.0]
    return ResponseRecord(x, 100.0)


def test_demean():
    out = preprocess(_offset_record(), PreprocessConfig(demean=True))
    np.testing.assert_allclose(out.samples.mean(axis=0), 0.0, atol=1e-12)


def test_decimate():
    out = preprocess(_offset_record(), PreprocessConfig(decimate_factor=2))
    assert out.sample_rate == 50.0 and out.n_samples == 200


def test_decimation_averages_before_subsampling():
    x = np.tile([1.0, -1.0], 50)[:, None]  # Nyquist tone is removed by the 2-tap average
    out = preprocess(ResponseRecord(x, 100.0), PreprocessConfig(demean=False, decimate_factor=2))
    np.testing.assert_allclose(out.samples[1:], 0.0, atol=1e-12)


def test_standardize():
    out = preprocess(_offset_record(), PreprocessConfig(standardize=True))
    np.testing.assert_allclose(out.samples.var(axis=0), 1.0, atol=1e-12)
    assert out.channel_scale is not None and out.units == "standardized"


def test_standardize_uses_training_prefix():
    rec = _offset_record()
    out = preprocess(rec, PreprocessConfig(standardize=True), stats_rows=100)
    centred = rec.samples - rec.samples.mean(axis=0)
    np.testing.assert_allclose(out.channel_scale, centred[:100].std(axis=0))


# --- configuration -----------------------------------------------------------------

def test_config_roundtrip_and_validation(tmp_path):
    cfg = RunConfig.from_dict(quick_config(tmp_path))
    assert RunConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"bogus": 1})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"preprocessing": {"decimate_factor": 0}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"network": {"lambdas": [2, 0, 0, 0]}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"input": "simulate:nothing"})


def test_bridge_analog_truth():
    rec, truth = bridge_analog(200.0, seed=1)
    assert rec.samples.shape == (2000, 10) and rec.sample_rate == 10.0
    assert truth.shapes.shape == (10, 6)
    np.testing.assert_allclose(np.abs(bridge_shapes()).max(axis=0), 1.0)
    # shapes are deliberately not orthogonal on the sensor grid
    gram = truth.shapes.T @ truth.shapes
    assert np.abs(gram - np.diag(np.diag(gram))).max() > 0.05


def test_load_input_reference_override(tmp_path):
    _, truth = benchmark_record(1.0)
    ref = tmp_path / "truth.json"
    ref.write_text(json.dumps(truth.to_dict()))
    cfg = RunConfig.from_dict(quick_config(tmp_path, reference=str(ref)))
    _, loaded, apparent = load_input(cfg)
    assert apparent is None and np.array_equal(loaded.shapes, truth.shapes)


# --- full runs -----------------------------------------------------------------------

def test_run_pipeline_writes_every_artifact(tmp_path):
    report = run_pipeline(RunConfig.from_dict(quick_config(tmp_path)))
    for p in report.paths():
        assert Path(p).exists() and Path(p).stat().st_size > 0
    doc = json.loads(Path(report.report_path).read_text())
    assert "wall_time_s" not in doc
    assert json.loads((tmp_path / "out" / "timing.json").read_text())["wall_time_s"] > 0
    assert doc["config_echo"]["seed"] == 0
    n_modes = len(report.modes)
    shapes_rows = Path(report.shapes_path).read_text().strip().splitlines()
    assert len(shapes_rows) == n_modes + 1
    series = Path(tmp_path / "out" / "series_shapes.csv").read_text().strip().splitlines()
    assert len(series) == n_modes + 1
    assert len(list((tmp_path / "out").glob("series_psd_mode*.csv"))) == n_modes


def test_epochs_zero_flags_low_confidence(tmp_path):
    cfg = quick_config(tmp_path, network={"epochs": 0})
    report = run_pipeline(RunConfig.from_dict(cfg))
    assert Path(report.report_path).exists()
    assert all(m.confidence == "low" for m in report.modes)


def test_emit_with_no_modes_writes_only_loss(tmp_path):
    report = run_pipeline(RunConfig.from_dict(quick_config(tmp_path)))
    report.modes = []
    out = tmp_path / "empty"
    paths = emit_plot_series(report, out)
    assert [p.name for p in paths] == ["series_loss.csv"]
    assert sorted(p.name for p in out.iterdir()) == ["series_loss.csv"]


def test_benchmark_psd_series_have_one_dominant_peak(tmp_path):
    cfg = quick_config(tmp_path, simulation={"duration_s": 300.0},
                       network={"separation_dim": 4, "lambdas": [1.0, 0.001, 0.1, 0.1],
                                "epochs": 10000}, seed=3)
    report = run_pipeline(RunConfig.from_dict(cfg))
    assert len(report.modes) == 4
    for i in range(1, 5):
        data = np.loadtxt(tmp_path / "out" / f"series_psd_mode{i}.csv", delimiter=",", skiprows=1)
        power = data[:, 1]
        k = int(np.argmax(power))
        far = np.abs(data[:, 0] - data[k, 0]) > 0.5
        assert power[k] > 10 * power[far].max()


def test_run_from_csv_input(tmp_path):
    rec, _ = benchmark_record(60.0, seed=1)
    write_record_csv(rec, tmp_path / "rec.csv")
    cfg = quick_config(tmp_path, input=str(tmp_path / "rec.csv"))
    report = run_pipeline(RunConfig.from_dict(cfg))
    assert report.mac_table == []  # no reference supplied


# --- CLI ------------------------------------------------------------------------------

def _write_cfg(tmp_path, cfg):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    return str(p)


def test_cli_run_and_report(tmp_path, capsys):
    path = _write_cfg(tmp_path, quick_config(tmp_path))
    assert main(["run", "--config", path, "--seed", "2", "--out", str(tmp_path / "cli")]) == 0
    doc = json.loads((tmp_path / "cli" / "report.json").read_text())
    assert doc["seed"] == 2
    assert main(["report", str(tmp_path / "cli" / "report.json")]) == 0
    assert "freq [Hz]" in capsys.readouterr().out


def test_cli_simulate_train_identify(tmp_path):
    cfg = quick_config(tmp_path)
    path = _write_cfg(tmp_path, cfg)
    sim = tmp_path / "sim"
    assert main(["simulate", "--config", path, "--out", str(sim)]) == 0
    assert (sim / "record.csv").exists() and (sim / "truth.json").exists()
    over = ["--set", f"input={sim / 'record.csv'}", "--set", f"reference={sim / 'truth.json'}"]
    assert main(["train", "--config", path, "--out", str(tmp_path / "tr"), *over]) == 0
    assert main(["identify", "--config", path, "--out", str(tmp_path / "id"),
                 "--params", str(tmp_path / "tr" / "params.json"), *over]) == 0
    doc = json.loads((tmp_path / "id" / "identify.json").read_text())
    assert doc["mac_table"] and len(doc["modes"]) == len(doc["selected_columns"])


def test_cli_set_override_parses_json(tmp_path):
    path = _write_cfg(tmp_path, quick_config(tmp_path))
    assert main(["run", "--config", path, "--set", "network.epochs=0",
                 "--out", str(tmp_path / "o")]) == 0
    doc = json.loads((tmp_path / "o" / "report.json").read_text())
    assert doc["config_echo"]["network"]["epochs"] == 0


@pytest.mark.parametrize("args,code", [
    (["run", "--config", "/nonexistent/cfg.json"], 2),
    (["run", "--set", "network.learning_rate=-1"], 2),
    (["run", "--set", "input=/nonexistent/data.csv"], 3),
    (["report", "/nonexistent/report.json"], 3),
])
def test_cli_exit_codes(tmp_path, args, code, capsys):
    assert main(args + (["--out", str(tmp_path / "x")] if args[0] == "run" else [])) == code
    assert "error" in capsys.readouterr().err


def test_cli_analysis_error_exit_code(tmp_path):
    # PSD segments longer than the 12 s record make mode selection fail
    cfg = quick_config(tmp_path, simulation={"duration_s": 12.0},
                       analysis={"welch_segment_length": 4096})
    assert main(["run", "--config", _write_cfg(tmp_path, cfg)]) == 5


def test_stage_label_in_message(tmp_path, capsys):
    main(["run", "--set", "input=/nonexistent/data.csv", "--out", str(tmp_path / "x")])
    assert "[ingest]" in capsys.readouterr().err


def test_thread_env_is_recorded(tmp_path, monkeypatch):
    monkeypatch.setenv("MODAL_SEP_THREADS", "1")
    report = run_pipeline(RunConfig.from_dict(quick_config(tmp_path, network={"epochs": 2})))
    assert report.thread_count == 1
    monkeypatch.setenv("MODAL_SEP_THREADS", "many")
    with pytest.raises(ConfigError):
        run_pipeline(RunConfig.from_dict(quick_config(tmp_path, network={"epochs": 2})))
