"""``modal-sep`` command line: simulate, train, identify, report, run."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import ConfigError, DataError, ModalSepError, TrainingError
from .network import NetworkParams, save_trace_csv, train
from .pipeline import (RunConfig, format_report, identify, load_input, load_report, mac_table,
                       network_config, preprocess, run_pipeline, simulate_to_csv, stage,
                       training_rows)
from .recordio import atomic_write_text

log = logging.getLogger("modalsep")


def _parse_override(text: str) -> tuple[list[str], object]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not KEY=VALUE")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.split("."), value


def build_config(args) -> RunConfig:
    data = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    for item in args.set or []:
        path, value = _parse_override(item)
        node = data
        for key in path[:-1]:
            node = node.setdefault(key, {})
        node[path[-1]] = value
    if args.seed is not None:
        data["seed"] = args.seed
    if args.out is not None:
        data["output_dir"] = args.out
    return RunConfig.from_dict(data)


def cmd_simulate(args) -> int:
    cfg = build_config(args)
    for p in simulate_to_csv(cfg, cfg.output_dir):
        print(p)
    return 0


def _prepared(cfg):
    with stage("ingest", DataError):
        raw, truth, ref_freqs = load_input(cfg)
    with stage("preprocess", DataError):
        record = preprocess(raw, cfg.preprocessing, cfg.train_samples)
    return record, truth, ref_freqs


def cmd_train(args) -> int:
    cfg = build_config(args)
    record, _, _ = _prepared(cfg)
    net_cfg = network_config(cfg, record.n_channels)
    with stage("train", TrainingError):
        params, trace = train(training_rows(record, cfg), net_cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "params.json", params.to_json())
    save_trace_csv(trace, out / "loss_trace.csv")
    print(out / "params.json")
    return 0


def cmd_identify(args) -> int:
    cfg = build_config(args)
    record, truth, ref_freqs = _prepared(cfg)
    params = NetworkParams.load(args.params)
    estimates, selected, _ = identify(params, record, cfg)
    report = {"modes": [e.to_dict() for e in estimates],
              "mac_table": mac_table(estimates, truth, ref_freqs),
              "selected_columns": [int(s) for s in selected]}
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "identify.json", json.dumps(report, indent=2))
    print(format_report(report))
    return 0


def cmd_report(args) -> int:
    print(format_report(load_report(args.report)))
    return 0


def cmd_run(args) -> int:
    report = run_pipeline(build_config(args))
    print(format_report(report.to_dict()))
    print(f"report: {report.report_path}  ({report.wall_time_s:.1f} s)")
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="modal-sep", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config entry, e.g. network.epochs=100")

    for name, fn in (("simulate", cmd_simulate), ("train", cmd_train), ("run", cmd_run)):
        p = sub.add_parser(name)
        common(p)
        p.set_defaults(func=fn)
    p = sub.add_parser("identify")
    common(p)
    p.add_argument("--params", required=True, help="trained params.json")
    p.set_defaults(func=cmd_identify)
    p = sub.add_parser("report")
    p.add_argument("report", help="report.json written by `run`")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except ModalSepError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
