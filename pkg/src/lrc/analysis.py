"""Parameter sweeps, regime maps and waveform diagnostics.

Drivers in this module push the equalization pipeline across operating
grids (injection detuning x feedback strength), launch-power scans, OSNR
scans and readout-tap studies. Each grid point yields one record per
replicate seed; point failures become NaN records with a reason instead
of aborting a long sweep. Everything is deterministic for a given config
and seed list, including the rendered SVG figures.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
from matplotlib.colors import LogNorm

from .config import ExperimentConfig
from .experiment import (
    ROLE_PROBE,
    _segment_wave,
    reservoir_drive,
    reservoir_nodes,
    role_seed,
    run_equalization,
    segment_bounds,
    simulate_combined,
    train_and_score,
)
from .pipeline import assemble_features
from .readout import (
    SplitSpec,
    apply_naive_slicer,
    baseline_features,
    ber,
    fit_naive_slicer,
    predict_and_slice,
    train_ridge,
)
from .reservoir import build_injection, consistency_probe

# hard-decision FEC limit used as the pass line in figures and reports
HD_FEC_BER = 3.8e-3

MAP_FIELDS = (
    "delta_f_ghz",
    "k_f",
    "seed",
    "snr_db",
    "ber_rc",
    "ber_lr",
    "ber_naive",
    "n_bits",
)


@dataclass(frozen=True)
class SweepRecord:
    """One regime-map grid point scored with one replicate seed."""

    delta_f_ghz: float
    k_f: float
    seed: int
    snr_db: float
    ber_rc: float
    ber_lr: float
    ber_naive: float
    n_bits: int
    note: str = ""  # failure reason; empty on success, never exported


def _fmt_cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def rows_to_csv(fieldnames, rows) -> str:
    """Render dict rows to CSV text with repr-exact floats."""
    lines = [",".join(fieldnames)]
    for row in rows:
        lines.append(",".join(_fmt_cell(row[name]) for name in fieldnames))
    return "\n".join(lines) + "\n"


def write_table(path, fieldnames, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(rows_to_csv(fieldnames, rows))


def record_row(rec: SweepRecord) -> dict:
    return {name: getattr(rec, name) for name in MAP_FIELDS}


def records_to_csv(records) -> str:
    return rows_to_csv(MAP_FIELDS, [record_row(r) for r in records])


def write_records_csv(path, records) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(records_to_csv(records))


def sweep_seeds(cfg: ExperimentConfig) -> list[int]:
    """Replicate master seeds: consecutive integers from run.seed."""
    return [cfg.run.seed + i for i in range(cfg.sweep.n_seeds)]


def _pooled(test_sets, key) -> float:
    return float(np.mean([t[key] for t in test_sets]))


def _score_segments(cfg, symbols, feats, model, skip):
    _, test_rows = segment_bounds(cfg)
    out = []
    for rows in test_rows:
        out.append(ber(predict_and_slice(model, feats[rows]), symbols[rows], skip))
    return out


def run_map(cfg: ExperimentConfig, seeds=None, on_record=None) -> list[SweepRecord]:
    """Score the detuning x feedback grid; one record per point per seed.

    The optical link does not depend on the laser operating point, so the
    waveform, its mask projection, the linear baseline and the naive
    slicer are built once per seed and reused across all grid points.
    Each point then drives the laser, trains the reservoir readout on the
    training segment and scores the independent test segments, plus a
    short repeated-drive probe for the consistency SNR. A failed point
    produces a NaN record carrying the reason in ``note``.
    """
    cfg.validate()
    sweep = cfg.sweep
    k = cfg.readout.taps_k
    skip = max(k, 1)
    split = SplitSpec(
        train_fraction=cfg.readout.train_fraction,
        validation_fraction=1.0 - cfg.readout.train_fraction,
    )
    grid = np.asarray(cfg.readout.lambda_grid)
    records: list[SweepRecord] = []
    for seed in sweep_seeds(cfg) if seeds is None else list(seeds):
        bundle = simulate_combined(cfg, seed)
        masked, _, _ = reservoir_drive(cfg, bundle.wave)
        symbols = bundle.symbols
        sps = cfg.link.samples_per_baud
        train_rows, test_rows = segment_bounds(cfg)

        feats_lr = baseline_features(bundle.wave, k)
        model_lr = train_ridge(
            feats_lr.data[train_rows], symbols[train_rows], split, grid, skip_edges=k
        )
        lr_sets = _score_segments(cfg, symbols, feats_lr.data, model_lr, skip)
        ber_lr = float(np.mean([t["ber"] for t in lr_sets]))
        slicer = fit_naive_slicer(
            _segment_wave(bundle.wave, train_rows, sps), symbols[train_rows]
        )
        nv = []
        for rows in test_rows:
            seg = _segment_wave(bundle.wave, rows, sps)
            nv.append(ber(apply_naive_slicer(seg, slicer), symbols[rows], skip))
        ber_naive = float(np.mean([t["ber"] for t in nv]))

        probe_rows = masked[: sweep.probe_symbols]
        point = 0
        for df in sweep.delta_f_ghz:
            for kf in sweep.k_f:
                params = dataclasses.replace(
                    cfg.reservoir, delta_f=float(df), k_f=float(kf)
                )
                try:
                    nodes = reservoir_nodes(cfg, masked, seed, delta_f=df, k_f=kf)
                    feats_rc = assemble_features(nodes, k)
                    model_rc = train_ridge(
                        feats_rc.data[train_rows],
                        symbols[train_rows],
                        split,
                        grid,
                        skip_edges=k,
                    )
                    rc_sets = _score_segments(
                        cfg, symbols, feats_rc.data, model_rc, skip
                    )
                    ber_rc = float(np.mean([t["ber"] for t in rc_sets]))
                    n_bits = int(sum(t["counted_bits"] for t in rc_sets))
                    snr = consistency_probe(
                        build_injection(probe_rows, params),
                        params,
                        trials=sweep.probe_trials,
                        seed=role_seed(seed, ROLE_PROBE, point),
                    )
                    rec = SweepRecord(
                        delta_f_ghz=float(df),
                        k_f=float(kf),
                        seed=int(seed),
                        snr_db=float(snr),
                        ber_rc=ber_rc,
                        ber_lr=ber_lr,
                        ber_naive=ber_naive,
                        n_bits=n_bits,
                    )
                except Exception as exc:  # noqa: BLE001 - NaN row, keep sweeping
                    rec = SweepRecord(
                        delta_f_ghz=float(df),
                        k_f=float(kf),
                        seed=int(seed),
                        snr_db=math.nan,
                        ber_rc=math.nan,
                        ber_lr=ber_lr,
                        ber_naive=ber_naive,
                        n_bits=0,
                        note=f"{type(exc).__name__}: {exc}",
                    )
                records.append(rec)
                if on_record is not None:
                    on_record(rec)
                point += 1
    return records


POWER_FIELDS = ("power_dbm", "seed", "osnr_db", "ber_rc", "ber_lr", "ber_naive", "n_bits")


def run_power_sweep(cfg: ExperimentConfig, seeds=None, on_record=None) -> list[dict]:
    """Launch-power scan; the channel changes, so each point re-simulates."""
    cfg.validate()
    rows = []
    for power in cfg.sweep.power_dbm:
        link = dataclasses.replace(cfg.link, launch_peak_power_dbm=float(power))
        cfg_p = dataclasses.replace(cfg, link=link)
        for seed in sweep_seeds(cfg) if seeds is None else list(seeds):
            try:
                bundle = simulate_combined(cfg_p, seed)
                report = run_equalization(cfg_p, seed, bundle=bundle)
                row = _report_row(report, seed, bundle.osnr_db)
            except Exception as exc:  # noqa: BLE001
                row = _nan_row(seed, str(exc))
            row["power_dbm"] = float(power)
            rows.append(row)
            if on_record is not None:
                on_record(row)
    return rows


OSNR_FIELDS = ("osnr_target_db", "seed", "osnr_db", "ber_rc", "ber_lr", "ber_naive", "n_bits")


def run_osnr_sweep(cfg: ExperimentConfig, seeds=None, on_record=None) -> list[dict]:
    """OSNR scan at fixed launch power via loaded optical noise."""
    cfg.validate()
    rows = []
    for target in cfg.sweep.osnr_db:
        for seed in sweep_seeds(cfg) if seeds is None else list(seeds):
            try:
                bundle = simulate_combined(cfg, seed, osnr_db=float(target))
                report = run_equalization(cfg, seed, bundle=bundle)
                row = _report_row(report, seed, bundle.osnr_db)
            except Exception as exc:  # noqa: BLE001
                row = _nan_row(seed, str(exc))
            row["osnr_target_db"] = float(target)
            rows.append(row)
            if on_record is not None:
                on_record(row)
    return rows


TAP_FIELDS = ("taps_k", "seed", "ber_rc", "ber_lr", "ber_naive", "n_bits")


def run_tap_study(cfg: ExperimentConfig, seeds=None, on_record=None) -> list[dict]:
    """Readout window scan; laser response is computed once per seed.

    Both the reservoir readout and the linear baseline are re-windowed at
    every tap count so the comparison stays matched; the naive slicer has
    no taps and repeats across the row.
    """
    cfg.validate()
    rows = []
    for seed in sweep_seeds(cfg) if seeds is None else list(seeds):
        bundle = simulate_combined(cfg, seed)
        masked, _, _ = reservoir_drive(cfg, bundle.wave)
        nodes = reservoir_nodes(cfg, masked, seed)
        for k in cfg.sweep.taps:
            try:
                scores = train_and_score(cfg, bundle, nodes, taps_k=int(k))
                sets = scores["test_sets"]
                row = {
                    "taps_k": int(k),
                    "seed": int(seed),
                    "ber_rc": _pooled(sets, "ber_rc"),
                    "ber_lr": _pooled(sets, "ber_lr"),
                    "ber_naive": _pooled(sets, "ber_naive"),
                    "n_bits": int(sum(t["n_bits"] for t in sets)),
                }
            except Exception as exc:  # noqa: BLE001
                row = _nan_row(seed, str(exc))
                row["taps_k"] = int(k)
            rows.append(row)
            if on_record is not None:
                on_record(row)
    return rows


def _report_row(report: dict, seed: int, osnr_db: float) -> dict:
    sets = report["test_sets"]
    return {
        "seed": int(seed),
        "osnr_db": float(osnr_db),
        "ber_rc": report["mean"]["ber_rc"],
        "ber_lr": report["mean"]["ber_lr"],
        "ber_naive": report["mean"]["ber_naive"],
        "n_bits": int(sum(t["n_bits"] for t in sets)),
        "note": "",
    }


def _nan_row(seed: int, note: str) -> dict:
    return {
        "seed": int(seed),
        "osnr_db": math.nan,
        "ber_rc": math.nan,
        "ber_lr": math.nan,
        "ber_naive": math.nan,
        "n_bits": 0,
        "note": note,
    }


def aggregate_rows(rows, keys, values) -> list[dict]:
    """Per-group mean/min/max with NaN-excluded means and an n_ok count.

    Groups appear in first-seen order. ``n_ok`` counts rows whose first
    value column is finite; the per-column mean skips NaN entries and is
    NaN when every entry failed.
    """
    order: list[tuple] = []
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        key = tuple(row[k] for k in keys)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(row)
    out = []
    for key in order:
        members = groups[key]
        agg = dict(zip(keys, key))
        agg["n_seeds"] = len(members)
        first = np.asarray([m[values[0]] for m in members], dtype=np.float64)
        agg["n_ok"] = int(np.isfinite(first).sum())
        for name in values:
            col = np.asarray([m[name] for m in members], dtype=np.float64)
            good = col[np.isfinite(col)]
            agg[f"{name}_mean"] = float(good.mean()) if good.size else math.nan
            agg[f"{name}_min"] = float(good.min()) if good.size else math.nan
            agg[f"{name}_max"] = float(good.max()) if good.size else math.nan
        agg["n_bits_total"] = int(sum(m.get("n_bits", 0) for m in members))
        out.append(agg)
    return out


def aggregate_map(records) -> list[dict]:
    """Aggregate map records per grid point across replicate seeds."""
    rows = [record_row(r) for r in records]
    return aggregate_rows(
        rows,
        keys=("delta_f_ghz", "k_f"),
        values=("ber_rc", "snr_db", "ber_lr", "ber_naive"),
    )


def map_grid(agg, value: str):
    """Pivot aggregated map rows into (delta_f, k_f, Z[k_f, delta_f])."""
    dfs = sorted({row["delta_f_ghz"] for row in agg})
    kfs = sorted({row["k_f"] for row in agg})
    z = np.full((len(kfs), len(dfs)), math.nan)
    for row in agg:
        i = kfs.index(row["k_f"])
        j = dfs.index(row["delta_f_ghz"])
        z[i, j] = row[value]
    return np.asarray(dfs), np.asarray(kfs), z


@dataclass(frozen=True)
class LagCorrelation:
    r: float
    lag: int


def pearson_lagged(a, b, max_lag: int = 0) -> LagCorrelation:
    """Pearson correlation at the best alignment within +-max_lag.

    Positive lag means ``b`` trails ``a`` by that many samples. The lag
    maximizing |r| wins; ties prefer the smaller |lag|. Zero-variance
    inputs are rejected.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size != b.size:
        raise ValueError("series must have equal length")
    if a.size < 2:
        raise ValueError("need at least 2 samples")
    if a.std() == 0.0 or b.std() == 0.0:
        raise ValueError("zero-variance series has no correlation")
    max_lag = int(max_lag)
    if not 0 <= max_lag < a.size - 1:
        raise ValueError("max_lag must be in [0, len-2]")
    candidates = []
    for lag in range(-max_lag, max_lag + 1):
        if lag >= 0:
            xa, xb = a[: a.size - lag], b[lag:]
        else:
            xa, xb = a[-lag:], b[: b.size + lag]
        sa, sb = xa.std(), xb.std()
        if sa == 0.0 or sb == 0.0:
            continue
        r = float(np.mean((xa - xa.mean()) * (xb - xb.mean())) / (sa * sb))
        r = min(1.0, max(-1.0, r))
        candidates.append((abs(r), -abs(lag), -lag, r, lag))
    if not candidates:
        raise ValueError("every lag window had zero variance")
    _, _, _, r, lag = max(candidates)
    return LagCorrelation(r=r, lag=lag)


@dataclass(frozen=True)
class EyeData:
    """Waveform folded modulo two baud periods into a 2-d histogram."""

    counts: np.ndarray  # (phase bins, amplitude bins) int64
    amp_edges: np.ndarray  # (amplitude bins + 1,)
    samples_per_baud: int


def eye_data(wave, amp_bins: int = 64) -> EyeData:
    """Fold a detected waveform into an eye diagram histogram."""
    samples = np.asarray(wave.samples, dtype=np.float64)
    sps = int(round(wave.baud_period_s / wave.dt_s))
    n_cols = 2 * sps
    if samples.size < n_cols:
        raise ValueError("waveform shorter than two baud periods")
    lo = float(samples.min())
    hi = float(samples.max())
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    edges = np.linspace(lo, hi, amp_bins + 1)
    usable = (samples.size // n_cols) * n_cols
    folded = samples[:usable].reshape(-1, n_cols)
    counts = np.zeros((n_cols, amp_bins), dtype=np.int64)
    for col in range(n_cols):
        counts[col] = np.histogram(folded[:, col], bins=edges)[0]
    return EyeData(counts=counts, amp_edges=edges, samples_per_baud=sps)


def occupied_bands(eye: EyeData, phase: int, rel_threshold: float = 0.02) -> int:
    """Count contiguous occupied amplitude runs in one phase column."""
    column = eye.counts[phase]
    peak = column.max()
    if peak == 0:
        return 0
    mask = column >= max(rel_threshold * peak, 1.0)
    return int(np.sum(mask[1:] & ~mask[:-1]) + mask[0])


def eye_band_summary(eye: EyeData, rel_threshold: float = 0.02) -> np.ndarray:
    """Occupied-band count for every phase column."""
    return np.asarray(
        [occupied_bands(eye, p, rel_threshold) for p in range(eye.counts.shape[0])]
    )


def _svg_context(hashsalt: str):
    plt.rcParams["svg.hashsalt"] = hashsalt
    plt.rcParams["svg.fonttype"] = "path"


def heatmap_svg(
    path,
    x,
    y,
    z,
    xlabel: str,
    ylabel: str,
    clabel: str,
    title: str = "",
    hashsalt: str = "lrc",
    log: bool = True,
    mark_min: bool = True,
) -> None:
    """Deterministic SVG heatmap; NaN cells grey, minimum marked."""
    _svg_context(hashsalt)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    finite = z[np.isfinite(z)]
    norm = None
    if log and finite.size and (finite > 0).any():
        positive = finite[finite > 0]
        norm = LogNorm(vmin=positive.min(), vmax=positive.max())
    cmap = matplotlib.colormaps["viridis"].copy()
    cmap.set_bad("0.7")
    masked = np.ma.masked_invalid(z)
    mesh = ax.pcolormesh(x, y, masked, norm=norm, cmap=cmap, shading="nearest")
    fig.colorbar(mesh, ax=ax, label=clabel)
    if mark_min and finite.size:
        i, j = np.unravel_index(np.nanargmin(z), z.shape)
        ax.plot(x[j], y[i], marker="*", color="white", markersize=12,
                markeredgecolor="black")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def lines_svg(
    path,
    x,
    series: dict,
    xlabel: str,
    ylabel: str,
    title: str = "",
    hashsalt: str = "lrc",
    log_y: bool = True,
    hline: float | None = None,
    hline_label: str = "",
) -> None:
    """Deterministic SVG line chart with an optional threshold line."""
    _svg_context(hashsalt)
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for name, ys in series.items():
        ax.plot(np.asarray(x, dtype=np.float64), np.asarray(ys, dtype=np.float64),
                marker="o", label=name)
    if hline is not None:
        ax.axhline(hline, color="0.3", linestyle="--", linewidth=1.0,
                   label=hline_label or None)
    if log_y:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
