"""End-to-end experiment orchestration.

One experiment simulates a single contiguous PAM-4 stream through the
fiber link: the first run.n_symbols form the training segment, followed by
run.n_test_sets independent test segments of run.n_test_symbols each. The
detected waveform is normalized, oversampled, masked, driven through the
laser reservoir, tap-windowed and regressed; the same stream also scores
the naive slicer and the direct linear-regression baseline. Because the
whole pipeline is keyed off one master seed (sub-seeds are derived per
role), a report can be regenerated bit-identically, and an externally
supplied waveform (trace ingestion) flows through the identical code path.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

import numpy as np

from lrc.config import (
    ExperimentConfig,
    config_flat_dict,
    config_hash,
    oversample_factor,
    theta_ns,
)
from lrc.errors import ConfigError
from lrc.link import (
    DetectedWaveform,
    OpticalField,
    add_ase_noise,
    detect,
    measure_osnr,
    modulate,
    propagate,
    random_symbols,
)
from lrc.pipeline import (
    apply_mask,
    apply_normalizer,
    assemble_features,
    fit_normalizer,
    make_mask,
    oversample,
    speed_penalty,
)
from lrc.readout import (
    SplitSpec,
    apply_naive_slicer,
    baseline_features,
    ber,
    fit_naive_slicer,
    predict_and_slice,
    train_ridge,
)
from lrc.reservoir import respond

# Seed roles: every random consumer derives its generator from the master
# seed and a fixed spawn key, so adding consumers never shifts the others.
ROLE_SYMBOLS = 0
ROLE_RIN = 1
ROLE_DETECTOR = 2
ROLE_RESERVOIR = 3
ROLE_ASE = 4
ROLE_PROBE = 5


def role_seed(master: int, role: int, index: int = 0) -> np.random.SeedSequence:
    return np.random.SeedSequence(master, spawn_key=(role, index))


def role_rng(master: int, role: int, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(role_seed(master, role, index))


def total_symbols(cfg: ExperimentConfig) -> int:
    return cfg.run.n_symbols + cfg.run.n_test_sets * cfg.run.n_test_symbols


def segment_bounds(cfg: ExperimentConfig) -> tuple[slice, list[slice]]:
    """Row ranges of the training segment and each test segment."""
    train = slice(0, cfg.run.n_symbols)
    tests = []
    start = cfg.run.n_symbols
    for _ in range(cfg.run.n_test_sets):
        tests.append(slice(start, start + cfg.run.n_test_symbols))
        start += cfg.run.n_test_symbols
    return train, tests


@dataclass
class StreamBundle:
    """One simulated (or ingested) stream and its ground truth."""

    symbols: np.ndarray
    wave: DetectedWaveform
    osnr_db: float | None
    launch: OpticalField | None = None
    received: OpticalField | None = None


def simulate_combined(
    cfg: ExperimentConfig,
    master_seed: int | None = None,
    power_dbm: float | None = None,
    osnr_db: float | None = None,
    keep_fields: bool = False,
) -> StreamBundle:
    """Simulate the full train+test stream through the link.

    power_dbm overrides the configured launch power; osnr_db loads the
    received field with amplified-spontaneous-emission noise to the given
    optical SNR before detection.
    """
    cfg.validate()
    seed = cfg.run.seed if master_seed is None else master_seed
    link = cfg.link
    if power_dbm is not None:
        link = dataclasses.replace(link, launch_peak_power_dbm=float(power_dbm))
    stream = random_symbols(total_symbols(cfg), role_rng(seed, ROLE_SYMBOLS))
    field = modulate(stream, link, rng=role_rng(seed, ROLE_RIN))
    launch = field if keep_fields else None
    if link.fiber_length_km > 0:
        field = propagate(field, link)
    if osnr_db is not None:
        field = add_ase_noise(field, osnr_db, role_rng(seed, ROLE_ASE))
    measured = measure_osnr(field)
    wave = detect(field, link, rng=role_rng(seed, ROLE_DETECTOR))
    return StreamBundle(
        symbols=stream.symbols,
        wave=wave,
        osnr_db=measured,
        launch=launch,
        received=field if keep_fields else None,
    )


def reservoir_drive(cfg: ExperimentConfig, wave: DetectedWaveform):
    """Normalize, oversample and mask the detected waveform.

    Returns (masked matrix, affine record, mask). The affine is fitted on
    the training segment only.
    """
    sps = cfg.link.samples_per_baud
    n_train_samples = cfg.run.n_symbols * sps
    if wave.samples.size < n_train_samples:
        raise ConfigError("waveform shorter than the configured training segment")
    affine = fit_normalizer(wave.samples[:n_train_samples])
    norm = apply_normalizer(wave.samples, affine)
    over = oversample(norm, oversample_factor(cfg))
    mask = make_mask(cfg.mask.n_nodes, cfg.mask.kind, cfg.mask.rng_seed)
    masked = apply_mask(over, mask)
    return masked, affine, mask


def reservoir_nodes(
    cfg: ExperimentConfig,
    masked: np.ndarray,
    master_seed: int,
    delta_f: float | None = None,
    k_f: float | None = None,
) -> np.ndarray:
    """Drive the laser and return the (symbols, nodes) response matrix."""
    params = cfg.reservoir
    overrides = {}
    if delta_f is not None:
        overrides["delta_f"] = float(delta_f)
    if k_f is not None:
        overrides["k_f"] = float(k_f)
    if overrides:
        params = dataclasses.replace(params, **overrides)
    return respond(masked, params, seed=role_seed(master_seed, ROLE_RESERVOIR))


def _segment_wave(wave: DetectedWaveform, rows: slice, sps: int) -> DetectedWaveform:
    return DetectedWaveform(
        samples=wave.samples[rows.start * sps : rows.stop * sps],
        dt_s=wave.dt_s,
        baud_period_s=wave.baud_period_s,
    )


def train_and_score(
    cfg: ExperimentConfig,
    bundle: StreamBundle,
    nodes: np.ndarray,
    taps_k: int | None = None,
) -> dict:
    """Train RC, LR-baseline and naive slicer; score every test segment."""
    k = cfg.readout.taps_k if taps_k is None else int(taps_k)
    split = SplitSpec(
        train_fraction=cfg.readout.train_fraction,
        validation_fraction=1.0 - cfg.readout.train_fraction,
    )
    grid = np.asarray(cfg.readout.lambda_grid)
    symbols = bundle.symbols
    sps = cfg.link.samples_per_baud
    train_rows, test_rows = segment_bounds(cfg)

    feats_rc = assemble_features(nodes, k)
    feats_lr = baseline_features(bundle.wave, k)
    model_rc = train_ridge(
        feats_rc.data[train_rows], symbols[train_rows], split, grid, skip_edges=k
    )
    model_lr = train_ridge(
        feats_lr.data[train_rows], symbols[train_rows], split, grid, skip_edges=k
    )
    slicer = fit_naive_slicer(
        _segment_wave(bundle.wave, train_rows, sps), symbols[train_rows]
    )

    # skip k rows at both segment ends so every scored tap window is clean
    skip = max(k, 1)
    test_sets = []
    for rows in test_rows:
        ref = symbols[rows]
        out_rc = ber(predict_and_slice(model_rc, feats_rc.data[rows]), ref, skip)
        out_lr = ber(predict_and_slice(model_lr, feats_lr.data[rows]), ref, skip)
        seg = _segment_wave(bundle.wave, rows, sps)
        out_nv = ber(apply_naive_slicer(seg, slicer), ref, skip)
        test_sets.append(
            {
                "ber_rc": out_rc["ber"],
                "ser_rc": out_rc["ser"],
                "ber_lr": out_lr["ber"],
                "ber_naive": out_nv["ber"],
                "n_bits": out_rc["counted_bits"],
            }
        )
    return {
        "taps_k": k,
        "ridge_lambda_rc": model_rc.ridge_lambda,
        "ridge_lambda_lr": model_lr.ridge_lambda,
        "model_rc": model_rc,
        "model_lr": model_lr,
        "test_sets": test_sets,
    }


def run_equalization(
    cfg: ExperimentConfig,
    master_seed: int | None = None,
    bundle: StreamBundle | None = None,
) -> dict:
    """Full pipeline producing the BER report dict.

    Pass a pre-built bundle to score an externally supplied waveform
    (trace ingestion); its stream layout must match the config.
    """
    cfg.validate()
    seed = cfg.run.seed if master_seed is None else master_seed
    if bundle is None:
        bundle = simulate_combined(cfg, seed)
    else:
        expect = total_symbols(cfg)
        if bundle.symbols.size != expect:
            raise ConfigError(
                f"stream has {bundle.symbols.size} symbols; config expects "
                f"{expect} (run.n_symbols + n_test_sets * n_test_symbols)"
            )
        if bundle.wave.samples.size != expect * cfg.link.samples_per_baud:
            raise ConfigError(
                f"waveform has {bundle.wave.samples.size} samples; config "
                f"expects {expect * cfg.link.samples_per_baud}"
            )
    masked, affine, _ = reservoir_drive(cfg, bundle.wave)
    nodes = reservoir_nodes(cfg, masked, seed)
    scores = train_and_score(cfg, bundle, nodes)

    test_sets = scores["test_sets"]
    report = {
        "config": config_flat_dict(cfg),
        "config_hash": config_hash(cfg),
        "master_seed": seed,
        "theta_ps": theta_ns(cfg) * 1e3,
        "speed_penalty": speed_penalty(cfg.link.bit_rate_gbps, cfg.reservoir.tau),
        "taps_k": scores["taps_k"],
        "ridge_lambda_rc": scores["ridge_lambda_rc"],
        "ridge_lambda_lr": scores["ridge_lambda_lr"],
        "normalizer": {"offset": affine.offset, "scale": affine.scale},
        "test_sets": test_sets,
        "mean": {
            key: float(np.mean([t[key] for t in test_sets]))
            for key in ("ber_rc", "ber_lr", "ber_naive")
        },
    }
    report["_models"] = {"rc": scores["model_rc"], "lr": scores["model_lr"]}
    return report


def report_to_text(report: dict) -> str:
    """Deterministic JSON rendering; private keys stripped."""
    clean = {k: v for k, v in report.items() if not k.startswith("_")}
    return json.dumps(clean, indent=2, sort_keys=True) + "\n"


def shrink_run(cfg: ExperimentConfig, n_symbols: int, n_test_sets: int = 1) -> ExperimentConfig:
    """Copy of the config with a reduced stream layout (probes, smoke runs)."""
    return dataclasses.replace(
        cfg,
        run=dataclasses.replace(
            cfg.run,
            n_symbols=n_symbols,
            n_test_symbols=n_symbols,
            n_test_sets=n_test_sets,
        ),
    )
