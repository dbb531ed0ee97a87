"""Command-line front end.

Subcommands: ``simulate`` writes the optical fields, detected waveform
and ground-truth symbols for a configured link; ``rc`` trains and scores
the reservoir equalizer on a stored waveform; ``sweep`` drives the grid,
tap, power and OSNR studies; ``ingest`` scores an externally recorded
trace; ``report`` summarizes whatever a previous command left in the
output directory. Exit codes: 0 ok, 2 config error, 3 numerical abort,
4 I/O or file-format error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .analysis import (
    HD_FEC_BER,
    MAP_FIELDS,
    OSNR_FIELDS,
    POWER_FIELDS,
    TAP_FIELDS,
    aggregate_map,
    aggregate_rows,
    heatmap_svg,
    lines_svg,
    map_grid,
    record_row,
    rows_to_csv,
    run_map,
    run_osnr_sweep,
    run_power_sweep,
    run_tap_study,
    sweep_seeds,
    write_table,
)
from .config import (
    ExperimentConfig,
    config_flat_dict,
    config_hash,
    config_to_text,
    load_config,
    load_preset,
    preset_names,
)
from .errors import ConfigError, FileFormatError, NumericalAbortError
from .experiment import (
    StreamBundle,
    report_to_text,
    reservoir_drive,
    reservoir_nodes,
    run_equalization,
    shrink_run,
    simulate_combined,
)
from .io import (
    read_detected,
    read_symbols,
    write_detected,
    write_optical_field,
    write_symbols,
)
from .link import SymbolStream
from .pipeline import assemble_features
from .readout import save_model

DESK_SYMBOLS = 32768


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH", help="config file to apply")
    parser.add_argument(
        "--preset",
        metavar="NAME",
        help=f"named preset to start from ({', '.join(preset_names())})",
    )
    parser.add_argument("--seed", type=int, metavar="N", help="master seed override")
    parser.add_argument("--out", metavar="DIR", help="output directory override")
    parser.add_argument(
        "--desk-scale",
        action="store_true",
        help=f"shrink streams to {DESK_SYMBOLS} symbols and one test set",
    )


def resolve_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if args.preset:
        cfg = load_preset(args.preset, cfg)
    if args.config:
        cfg = load_config(args.config, cfg)
    if args.desk_scale:
        cfg = shrink_run(cfg, DESK_SYMBOLS, 1)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = int(args.seed)
    if args.out is not None:
        overrides["output_dir"] = args.out
    if overrides:
        cfg = dataclasses.replace(cfg, run=dataclasses.replace(cfg.run, **overrides))
    cfg.validate()
    return cfg


def _out_dir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.run.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _baud_period_s(cfg: ExperimentConfig) -> float:
    return 1.0 / cfg.link.baud_rate_hz


def cmd_simulate(args) -> int:
    cfg = resolve_config(args)
    out = _out_dir(cfg)
    bundle = simulate_combined(cfg, cfg.run.seed, keep_fields=True)
    write_optical_field(out / "launch_field.bin", bundle.launch)
    write_optical_field(out / "received_field.bin", bundle.received)
    write_detected(out / "detected.bin", bundle.wave)
    write_symbols(out / "symbols.bin", SymbolStream(bundle.symbols))
    (out / "config.cfg").write_text(config_to_text(cfg))
    _write_json(
        out / "simulate_meta.json",
        {
            "config": config_flat_dict(cfg),
            "config_hash": config_hash(cfg),
            "master_seed": cfg.run.seed,
            "n_symbols_total": int(bundle.symbols.size),
            "osnr_db": bundle.osnr_db,
        },
    )
    for name in (
        "launch_field.bin",
        "received_field.bin",
        "detected.bin",
        "symbols.bin",
        "config.cfg",
        "simulate_meta.json",
    ):
        print(out / name)
    return 0


def _load_bundle(cfg: ExperimentConfig, wave_path, symbols_path) -> StreamBundle:
    wave = read_detected(wave_path, _baud_period_s(cfg))
    stream = read_symbols(symbols_path)
    return StreamBundle(symbols=stream.symbols, wave=wave, osnr_db=None)


def _run_report(cfg: ExperimentConfig, bundle: StreamBundle, out: Path, args) -> int:
    report = run_equalization(cfg, cfg.run.seed, bundle=bundle)
    (out / "report.json").write_text(report_to_text(report))
    save_model(report["_models"]["rc"], out / "model_rc.npz")
    save_model(report["_models"]["lr"], out / "model_lr.npz")
    if getattr(args, "save_features", False):
        masked, _, _ = reservoir_drive(cfg, bundle.wave)
        nodes = reservoir_nodes(cfg, masked, cfg.run.seed)
        feats = assemble_features(nodes, cfg.readout.taps_k)
        k = feats.k
        names = [
            f"node{i}_tap{j - k}" for j in range(2 * k + 1) for i in range(feats.n_nodes)
        ]
        np.savetxt(
            out / "features.csv", feats.data, fmt="%.17g", delimiter=",",
            header=",".join(names + ["bias"]), comments="",
        )
        print(out / "features.csv")
    mean = report["mean"]
    print(out / "report.json")
    print(
        f"ber_rc={mean['ber_rc']:.6g} ber_lr={mean['ber_lr']:.6g} "
        f"ber_naive={mean['ber_naive']:.6g}"
    )
    print(
        f"speed_penalty={report['speed_penalty']:.6g} "
        f"config_hash={report['config_hash'][:16]}"
    )
    return 0


def cmd_rc(args) -> int:
    cfg = resolve_config(args)
    out = _out_dir(cfg)
    bundle = _load_bundle(cfg, out / "detected.bin", out / "symbols.bin")
    return _run_report(cfg, bundle, out, args)


def cmd_ingest(args) -> int:
    cfg = resolve_config(args)
    out = _out_dir(cfg)
    bundle = _load_bundle(cfg, args.waveform, args.symbols)
    return _run_report(cfg, bundle, out, args)


class _CsvFlusher:
    """Appends one CSV row per record and flushes immediately.

    Keeps partial sweep output on disk if the run is interrupted.
    """

    def __init__(self, path: Path, fieldnames):
        self.fieldnames = fieldnames
        self.fh = open(path, "w", encoding="utf-8", newline="\n")
        self.fh.write(",".join(fieldnames) + "\n")
        self.fh.flush()

    def __call__(self, row) -> None:
        if not isinstance(row, dict):
            row = record_row(row)
        text = rows_to_csv(self.fieldnames, [row])
        self.fh.write(text.split("\n", 1)[1])
        self.fh.flush()

    def close(self) -> None:
        self.fh.close()


def _agg_fieldnames(keys, values):
    names = list(keys) + ["n_seeds", "n_ok"]
    for value in values:
        names += [f"{value}_mean", f"{value}_min", f"{value}_max"]
    return names + ["n_bits_total"]


def _sweep_map(cfg: ExperimentConfig, out: Path, salt: str) -> None:
    flusher = _CsvFlusher(out / "map.csv", MAP_FIELDS)
    try:
        records = run_map(cfg, on_record=flusher)
    finally:
        flusher.close()
    agg = aggregate_map(records)
    values = ("ber_rc", "snr_db", "ber_lr", "ber_naive")
    write_table(out / "map_agg.csv", _agg_fieldnames(("delta_f_ghz", "k_f"), values), agg)
    dfs, kfs, z = map_grid(agg, "ber_rc_mean")
    heatmap_svg(
        out / "map_ber.svg", dfs, kfs, z,
        "injection detuning (GHz)", "feedback strength", "BER",
        hashsalt=salt,
    )
    dfs, kfs, zs = map_grid(agg, "snr_db_mean")
    heatmap_svg(
        out / "map_snr.svg", dfs, kfs, zs,
        "injection detuning (GHz)", "feedback strength", "consistency SNR (dB)",
        hashsalt=salt, log=False, mark_min=False,
    )


def _sweep_lines(cfg, out, salt, kind) -> None:
    runners = {
        "power": (run_power_sweep, POWER_FIELDS, "power_dbm", "launch peak power (dBm)"),
        "osnr": (run_osnr_sweep, OSNR_FIELDS, "osnr_target_db", "OSNR (dB)"),
        "taps": (run_tap_study, TAP_FIELDS, "taps_k", "taps per side"),
    }
    runner, fieldnames, key, xlabel = runners[kind]
    flusher = _CsvFlusher(out / f"{kind}.csv", fieldnames)
    try:
        rows = runner(cfg, on_record=flusher)
    finally:
        flusher.close()
    values = ("ber_rc", "ber_lr", "ber_naive")
    agg = aggregate_rows(rows, keys=(key,), values=values)
    write_table(out / f"{kind}_agg.csv", _agg_fieldnames((key,), values), agg)
    x = [row[key] for row in agg]
    series = {name: [row[f"{name}_mean"] for row in agg] for name in values}
    lines_svg(
        out / f"{kind}.svg", x, series, xlabel, "BER",
        hashsalt=salt, hline=HD_FEC_BER, hline_label="HD-FEC",
    )


def cmd_sweep(args) -> int:
    cfg = resolve_config(args)
    out = _out_dir(cfg)
    salt = config_hash(cfg)
    _write_json(
        out / "sweep_meta.json",
        {
            "kind": args.kind,
            "config": config_flat_dict(cfg),
            "config_hash": salt,
            "seeds": sweep_seeds(cfg),
        },
    )
    if args.kind == "map":
        _sweep_map(cfg, out, salt)
    else:
        _sweep_lines(cfg, out, salt, args.kind)
    for path in sorted(out.glob("*")):
        if path.suffix in (".csv", ".svg"):
            print(path)
    return 0


def cmd_report(args) -> int:
    out = Path(args.out if args.out else ExperimentConfig().run.output_dir)
    if not out.is_dir():
        raise FileFormatError(f"{out}: not a directory")
    found = False
    report_path = out / "report.json"
    if report_path.is_file():
        found = True
        report = json.loads(report_path.read_text())
        mean = report["mean"]
        print(f"{report_path}:")
        print(
            f"  ber_rc={mean['ber_rc']:.6g} ber_lr={mean['ber_lr']:.6g} "
            f"ber_naive={mean['ber_naive']:.6g}"
        )
        print(f"  taps_k={report['taps_k']} theta_ps={report['theta_ps']:.6g}")
        print(f"  speed_penalty={report['speed_penalty']:.6g}")
        print(f"  config_hash={report['config_hash']}")
        below = mean["ber_rc"] <= HD_FEC_BER
        print(f"  hd_fec={'pass' if below else 'fail'} (threshold {HD_FEC_BER})")
    for csv_path in sorted(out.glob("*.csv")):
        found = True
        n_rows = max(0, len(csv_path.read_text().splitlines()) - 1)
        print(f"{csv_path}: {n_rows} rows")
    if not found:
        raise FileFormatError(f"{out}: no report.json or CSV output found")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lrc",
        description="PAM-4 IM/DD link simulation equalized by a "
        "time-multiplexed semiconductor-laser reservoir",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate the link; write fields and symbols")
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("rc", help="equalize a stored waveform; write the BER report")
    _add_common(p)
    p.add_argument(
        "--save-features",
        action="store_true",
        help="also store the assembled feature matrix (large)",
    )
    p.set_defaults(func=cmd_rc)

    p = sub.add_parser("sweep", help="run a parameter sweep; write CSV and SVG")
    p.add_argument("kind", choices=("map", "taps", "power", "osnr"))
    _add_common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ingest", help="score an externally recorded trace")
    p.add_argument("--waveform", required=True, metavar="PATH")
    p.add_argument("--symbols", required=True, metavar="PATH")
    _add_common(p)
    p.add_argument(
        "--save-features",
        action="store_true",
        help="also store the assembled feature matrix (large)",
    )
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("report", help="summarize stored outputs")
    p.add_argument("--out", metavar="DIR", help="directory to summarize")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalAbortError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 3
    except (FileFormatError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
