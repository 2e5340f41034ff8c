"""End-to-end identification: ingest or simulate, preprocess, train, analyse, report."""

from __future__ import annotations

import copy
import json
import logging
import math
import os
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy.ndimage import uniform_filter1d

from . import analysis as an
from .dynamics import ModalTruth, ResponseRecord, newmark_apparent_frequencies
from .errors import (AnalysisError, ConfigError, DataError, ModalSepError, TrainingError)
from .network import (NetworkConfig, NetworkParams, extract_modal_responses, max_abs_normalize,
                      refit_shapes, save_trace_csv, sign_normalize_rows, train)
from .recordio import atomic_write_text, ingest_csv, write_record_csv
from .synthetic import benchmark_record, bridge_analog

log = logging.getLogger(__name__)

SIMULATED_INPUTS = ("simulate:benchmark4dof", "simulate:bridge-analog")
THREADS_ENV = "MODAL_SEP_THREADS"


@dataclass
class PreprocessConfig:
    demean: bool = True
    decimate_factor: int = 1
    standardize: bool = False


@dataclass
class SimulationConfig:
    duration_s: float | None = None  # None: 1800 s benchmark, 3600 s bridge analog
    sample_rate: float | None = None  # None: 100 Hz benchmark, 10 Hz bridge analog
    std_per_dof: float = 1.0
    output: str = "acceleration"
    noise_fraction: float = 0.05
    seed: int | None = None  # None: follow the run seed


@dataclass
class AnalysisConfig:
    welch_segment_length: int | None = None
    welch_overlap: float = 0.5
    band: tuple[float, float] | None = None
    rdt_trigger_sigma: float = 1.0
    rdt_periods: float = 10.0
    prominence: float = 10.0
    min_separation_bins: float = 2.0

    def criteria(self) -> an.SelectionCriteria:
        return an.SelectionCriteria(self.prominence, self.min_separation_bins,
                                    self.welch_segment_length, self.welch_overlap, self.band)


@dataclass
class RunConfig:
    input: str = "simulate:benchmark4dof"
    output_dir: str = "modal-sep-out"
    seed: int = 0
    sample_rate: float | None = None  # for CSV input without a sidecar
    train_samples: int | None = None  # train on the first N preprocessed rows; None = all
    reference: str | None = None
    preprocessing: PreprocessConfig = field(default_factory=PreprocessConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    network: dict = field(default_factory=dict)  # NetworkConfig fields; dims inferred
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)

    _NESTED = {"preprocessing": PreprocessConfig, "simulation": SimulationConfig,
               "analysis": AnalysisConfig}

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = copy.deepcopy(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            for key, sub in cls._NESTED.items():
                if key in d:
                    d[key] = sub(**d[key])
            if "analysis" in d and d["analysis"].band is not None:
                d["analysis"].band = tuple(d["analysis"].band)
            cfg = cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["analysis"]["band"] is not None:
            d["analysis"]["band"] = list(d["analysis"]["band"])
        return d

    def validate(self) -> None:
        if self.preprocessing.decimate_factor < 1:
            raise ConfigError("decimate_factor must be >= 1")
        if self.train_samples is not None and self.train_samples < 2:
            raise ConfigError("train_samples must be >= 2")
        if self.input.startswith("simulate:") and self.input not in SIMULATED_INPUTS:
            raise ConfigError(f"unknown simulated input {self.input!r}")
        try:
            NetworkConfig.from_dict({"input_dim": 1, "separation_dim": 1,
                                     **{k: v for k, v in self.network.items()
                                        if k not in ("input_dim", "separation_dim")}})
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"network config: {exc}") from exc


@dataclass
class RunReport:
    modes: list[an.ModalEstimate]
    mac_table: list[dict]
    loss_trace_path: str
    responses_path: str
    shapes_path: str
    config_echo: dict
    seed: int
    thread_count: int | None
    wall_time_s: float = 0.0
    selected_columns: list[int] = field(default_factory=list)
    report_path: str = ""
    params_path: str = ""
    extra_paths: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        """Deterministic content; wall time is kept out so reruns compare equal."""
        return {
            "modes": [m.to_dict() for m in self.modes],
            "mac_table": self.mac_table,
            "selected_columns": self.selected_columns,
            "loss_trace_path": self.loss_trace_path,
            "responses_path": self.responses_path,
            "shapes_path": self.shapes_path,
            "params_path": self.params_path,
            "config_echo": self.config_echo,
            "seed": self.seed,
            "thread_count": self.thread_count,
        }

    def paths(self) -> list[str]:
        return [p for p in (self.loss_trace_path, self.responses_path, self.shapes_path,
                            self.report_path, self.params_path) if p] + list(self.extra_paths)


@contextmanager
def stage(name: str, default: type[ModalSepError]):
    """Label errors raised inside a pipeline stage; wrap foreign errors in ``default``."""
    try:
        yield
    except ModalSepError as exc:
        if not getattr(exc, "stage", None):
            exc.stage = name
            exc.args = (f"[{name}] {exc.args[0] if exc.args else ''}",) + exc.args[1:]
        raise
    except (ValueError, OSError, np.linalg.LinAlgError) as exc:
        err = default(f"[{name}] {exc}")
        err.stage = name
        raise err from exc


def preprocess(record: ResponseRecord, config: PreprocessConfig,
               stats_rows: int | None = None) -> ResponseRecord:
    """Mean removal, moving-average anti-aliased decimation, optional standardization.

    Standardization divides each channel by its standard deviation over the
    first ``stats_rows`` rows (all rows by default), so a network trained on
    that prefix sees the same scaling when applied to the full record.
    """
    x = record.samples.copy()
    fs = record.sample_rate
    if config.demean:
        x -= x.mean(axis=0)
    q = int(config.decimate_factor)
    if q > 1:
        x = uniform_filter1d(x, size=q, axis=0, mode="nearest")
        x = x[: (x.shape[0] // q) * q: q]
        fs = fs / q
    scale = None
    if config.standardize:
        scale = x[:stats_rows].std(axis=0)
        scale[scale == 0] = 1.0
        x = (x - x.mean(axis=0)) / scale
    return ResponseRecord(x, fs, list(record.channel_labels), record.quantity,
                          "standardized" if scale is not None else record.units,
                          record.seed, scale)


def load_input(config: RunConfig) -> tuple[ResponseRecord, ModalTruth | None, np.ndarray | None]:
    """Return (record, reference truth or None, frequencies to match against or None)."""
    sim = config.simulation
    seed = config.seed if sim.seed is None else sim.seed
    if config.input == "simulate:benchmark4dof":
        fs = sim.sample_rate or 100.0
        record, truth = benchmark_record(sim.duration_s or 1800.0, fs, seed, sim.std_per_dof, sim.output)
        apparent = newmark_apparent_frequencies(truth.frequencies, fs)
    elif config.input == "simulate:bridge-analog":
        fs = sim.sample_rate or 10.0
        record, truth = bridge_analog(sim.duration_s or 3600.0, fs, seed, sim.noise_fraction)
        apparent = None
    else:
        record = ingest_csv(config.input, config.sample_rate)
        truth, apparent = None, None
    if config.reference:
        truth = ModalTruth.from_dict(json.loads(Path(config.reference).read_text()))
        apparent = None
    return record, truth, apparent


def network_config(config: RunConfig, n_channels: int) -> NetworkConfig:
    net = dict(config.network)
    net.setdefault("input_dim", n_channels)
    net.setdefault("separation_dim", n_channels)
    net.setdefault("seed", config.seed)
    try:
        return NetworkConfig.from_dict(net)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"network config: {exc}") from exc


def training_rows(record: ResponseRecord, config: RunConfig) -> np.ndarray:
    n = config.train_samples
    return record.samples if n is None else record.samples[:n]


def identify(params: NetworkParams, record: ResponseRecord, config: RunConfig,
             low_confidence: bool = False):
    """Modal estimates from a trained network; returns (estimates, selected, responses)."""
    acfg = config.analysis
    fs = record.sample_rate
    with stage("extract", AnalysisError):
        q = extract_modal_responses(params, record, normalize=False)
    with stage("select", AnalysisError):
        selected = an.select_modes(q, fs, acfg.criteria())
    if not selected:
        return [], selected, q
    q_sel = q[:, selected]
    with stage("shapes", AnalysisError):
        if params.separation_dim > len(selected):
            w = refit_shapes(q_sel, record, normalize=False)
        else:
            w = params.w3[selected]
        if record.channel_scale is not None:
            w = w * record.channel_scale
        shapes = sign_normalize_rows(w)

    estimates = []
    for k in range(len(selected)):
        resp = q_sel[:, k]
        with stage("psd", AnalysisError):
            psd = an.welch_psd(resp, fs, acfg.welch_segment_length, acfg.welch_overlap)
            freq = an.pick_peak(psd, acfg.band)
        confidence = "low" if low_confidence else "ok"
        try:
            sig = an.rdt_extract(resp, fs, acfg.rdt_trigger_sigma, acfg.rdt_periods / freq)
            zeta = an.fit_damping(sig, freq)
            if sig.low_confidence or not 0 <= zeta < 1:
                confidence = "low"
        except AnalysisError as exc:
            log.info("damping fit failed for column %d: %s", selected[k], exc)
            zeta, confidence = math.nan, "low"
        estimates.append(an.ModalEstimate(freq, zeta, shapes[k], max_abs_normalize(resp),
                                          confidence))
    return estimates, selected, q


def mac_table(estimates, truth: ModalTruth | None, ref_freqs=None) -> list[dict]:
    if truth is None or not estimates:
        return []
    pairs = an.match_modes(estimates, truth, ref_freqs)
    ref_f = truth.frequencies if ref_freqs is None else ref_freqs
    return [{"mode": p.estimate + 1, "reference_mode": p.reference + 1, "mac": p.mac,
             "frequency_hz": estimates[p.estimate].frequency,
             "reference_frequency_hz": float(ref_f[p.reference]),
             "frequency_error_hz": p.frequency_error,
             "damping_ratio": None if math.isnan(estimates[p.estimate].damping_ratio)
             else estimates[p.estimate].damping_ratio,
             "reference_damping_ratio": float(truth.damping_ratios[p.reference])}
            for p in pairs]


def _thread_limit():
    value = os.environ.get(THREADS_ENV)
    if not value:
        return None, None
    try:
        n = int(value)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {value!r}") from None
    from threadpoolctl import threadpool_limits
    return n, threadpool_limits(limits=n)


def run_pipeline(config: RunConfig) -> RunReport:
    """Execute every stage and write the report plus artifacts into ``output_dir``."""
    t0 = time.perf_counter()
    threads, limiter = _thread_limit()
    try:
        return _run(config, threads, t0)
    finally:
        if limiter is not None:
            limiter.unregister()


def _run(config: RunConfig, threads, t0) -> RunReport:
    out = Path(config.output_dir)
    with stage("setup", ConfigError):
        out.mkdir(parents=True, exist_ok=True)
    with stage("ingest", DataError):
        raw, truth, ref_freqs = load_input(config)
    with stage("preprocess", DataError):
        record = preprocess(raw, config.preprocessing, config.train_samples)
    net_cfg = network_config(config, record.n_channels)
    with stage("train", TrainingError):
        params, trace = train(training_rows(record, config), net_cfg)

    estimates, selected, _ = identify(params, record, config, low_confidence=net_cfg.epochs == 0)
    table = mac_table(estimates, truth, ref_freqs)

    with stage("report", AnalysisError):
        params_path = out / "params.json"
        atomic_write_text(params_path, params.to_json())
        trace_path = out / "loss_trace.csv"
        tmp = out / ".loss_trace.tmp"
        save_trace_csv(trace, tmp)
        os.replace(tmp, trace_path)
        responses_path = out / "responses.csv"
        resp = np.column_stack([e.response_trace for e in estimates]) if estimates else \
            np.zeros((record.n_samples, 0))
        header = ",".join(["time_s"] + [f"mode{i + 1}" for i in range(len(estimates))])
        atomic_write_text(responses_path, _matrix_csv(header, np.column_stack([record.time, resp])))
        shapes_path = out / "shapes.csv"
        shapes = np.array([e.shape for e in estimates]).reshape(len(estimates), record.n_channels)
        atomic_write_text(shapes_path, _matrix_csv(",".join(record.channel_labels), shapes))

        report = RunReport(estimates, table, str(trace_path), str(responses_path),
                           str(shapes_path), config.to_dict(), config.seed, threads,
                           selected_columns=[int(s) for s in selected],
                           params_path=str(params_path))
        report.extra_paths = [str(p) for p in emit_plot_series(report, out, trace, record.sample_rate,
                                                                    config.analysis)]
        report.report_path = str(out / "report.json")
        atomic_write_text(report.report_path, json.dumps(report.to_dict(), indent=2))
        report.wall_time_s = time.perf_counter() - t0
        atomic_write_text(out / "timing.json", json.dumps({"wall_time_s": report.wall_time_s}))
    return report


def _matrix_csv(header: str, a: np.ndarray) -> str:
    lines = [header] + [",".join(repr(float(v)) for v in row) for row in np.atleast_2d(a)]
    return "\n".join(lines) + "\n"


def emit_plot_series(report: RunReport, out_dir, trace=None, sample_rate: float | None = None,
                     analysis: AnalysisConfig | None = None) -> list[Path]:
    """Write plot-ready CSVs: loss curve, per-mode traces and PSDs, shape vectors.

    With no modes only the loss curve is written.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths = []
        loss_path = out / "series_loss.csv"
        if trace is not None:
            tmp = out / ".series_loss.tmp"
            save_trace_csv(trace, tmp)
            os.replace(tmp, loss_path)
        else:
            atomic_write_text(loss_path, Path(report.loss_trace_path).read_text())
        paths.append(loss_path)
        if not report.modes:
            return paths
        fs = sample_rate
        if fs is None:
            raise ValueError("sample_rate is needed to emit response and PSD series")
        acfg = analysis or AnalysisConfig()
        t = np.arange(len(report.modes[0].response_trace)) / fs
        for i, mode in enumerate(report.modes, start=1):
            p = out / f"series_response_mode{i}.csv"
            atomic_write_text(p, _matrix_csv("time_s,response", np.column_stack([t, mode.response_trace])))
            paths.append(p)
            psd = an.welch_psd(mode.response_trace, fs, acfg.welch_segment_length, acfg.welch_overlap)
            p = out / f"series_psd_mode{i}.csv"
            atomic_write_text(p, _matrix_csv("frequency_hz,power", np.column_stack([psd.frequencies, psd.power])))
            paths.append(p)
        p = out / "series_shapes.csv"
        shapes = np.array([m.shape for m in report.modes])
        header = ",".join(f"ch{j + 1}" for j in range(shapes.shape[1]))
        atomic_write_text(p, _matrix_csv(header, shapes))
        paths.append(p)
        return paths
    except OSError as exc:
        raise DataError(f"[emit] {exc}") from exc


def load_report(path) -> dict:
    return json.loads(Path(path).read_text())


def format_report(report: dict) -> str:
    """Plain-text table: frequency, damping %, matched MAC per mode."""
    macs = {row["mode"]: row for row in report.get("mac_table", [])}
    lines = [f"{'mode':>4} {'freq [Hz]':>10} {'damping [%]':>12} {'MAC':>7} {'ref mode':>8} {'conf':>5}"]
    for i, m in enumerate(report["modes"], start=1):
        row = macs.get(i, {})
        damp = "-" if m["damping_percent"] is None else f"{m['damping_percent']:.3f}"
        mac_s = f"{row['mac']:.4f}" if row else "-"
        ref = str(row.get("reference_mode", "-"))
        lines.append(f"{i:>4} {m['frequency_hz']:>10.4f} {damp:>12} {mac_s:>7} {ref:>8} {m['confidence']:>5}")
    return "\n".join(lines)


def simulate_to_csv(config: RunConfig, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    record, truth, _ = load_input(config)
    paths = list(write_record_csv(record, out / "record.csv"))
    if truth is not None:
        tp = out / "truth.json"
        atomic_write_text(tp, json.dumps(truth.to_dict(), indent=2))
        paths.append(tp)
    return paths
