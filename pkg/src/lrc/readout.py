"""Linear readout: ridge-regression training, PAM-4 slicing and BER.

Symbols are regressed onto the zero-mean level code {-3, -1, +1, +3}; the
continuous prediction is sliced at the midpoints {-2, 0, +2} (a prediction
exactly on a threshold takes the lower level). The regularization weight
is chosen on a temporal 75/25 train/validation split by validation BER,
then the model is refit on the full training stream. The same machinery
TRAINs the no-reservoir baseline that regresses directly on the detected
samples of each baud.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from lrc.link import GRAY_BIT_ERRORS, DetectedWaveform
from lrc.pipeline import AffineRecord, FeatureMatrix, assemble_features

TARGET_LEVELS = np.array([-3.0, -1.0, 1.0, 3.0])

DEFAULT_LAMBDA_GRID = np.logspace(-8.0, 4.0, 13)

# Relative normal-equations residual every accepted fit must reach.
_RESIDUAL_TOL = 1e-9


@dataclass(frozen=True)
class SplitSpec:
    """Temporal split of the training stream (earlier part trains)."""

    train_fraction: float = 0.75
    validation_fraction: float = 0.25

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")
        if abs(self.train_fraction + self.validation_fraction - 1.0) > 1e-12:
            raise ValueError("train and validation fractions must sum to 1")


@dataclass(frozen=True)
class ReadoutModel:
    weights: np.ndarray
    ridge_lambda: float
    target_levels: np.ndarray
    slicer_thresholds: np.ndarray
    norm_affine: AffineRecord | None = None

    def __post_init__(self):
        thr = np.asarray(self.slicer_thresholds, dtype=np.float64)
        lev = np.asarray(self.target_levels, dtype=np.float64)
        if thr.size != lev.size - 1 or np.any(np.diff(thr) <= 0):
            raise ValueError("thresholds must be strictly increasing midpoints")
        if not np.allclose(thr, 0.5 * (lev[:-1] + lev[1:])):
            raise ValueError("thresholds must be the midpoints of target levels")
        object.__setattr__(self, "weights", np.asarray(self.weights, np.float64))
        object.__setattr__(self, "target_levels", lev)
        object.__setattr__(self, "slicer_thresholds", thr)


def ridge_weights(x: np.ndarray, y: np.ndarray, lam: float) -> np.ndarray:
    """Solve (X'X + lam I) w = X'y from the data matrices."""
    x = np.asarray(x, np.float64)
    y = np.asarray(y, np.float64)
    return _solve_normal_eqs(x.T @ x, x.T @ y, lam)


def _solve_normal_eqs(gram: np.ndarray, rhs: np.ndarray, lam: float) -> np.ndarray:
    """Equilibrated Cholesky solve with iterative refinement.

    Raises numpy.linalg.LinAlgError if the system is not positive definite
    (singular fit, e.g. lam = 0 with collinear columns) and RuntimeError if
    refinement cannot reach the residual tolerance.
    """
    n = gram.shape[0]
    d = np.sqrt(np.diag(gram))
    d[d == 0.0] = 1.0
    scaled = gram / np.outer(d, d)
    scaled.flat[:: n + 1] += lam / (d * d)
    try:
        factor = cho_factor(scaled, lower=True, check_finite=False)
    except LinAlgError as exc:
        raise np.linalg.LinAlgError(str(exc)) from exc

    a_full = gram.copy()
    a_full.flat[:: n + 1] += lam
    w = cho_solve(factor, rhs / d, check_finite=False) / d
    rhs_norm = np.linalg.norm(rhs)
    if rhs_norm == 0.0:
        return np.zeros(n)
    for _ in range(8):
        resid = rhs - a_full @ w
        if np.linalg.norm(resid) <= _RESIDUAL_TOL * rhs_norm:
            return w
        w = w + cho_solve(factor, resid / d, check_finite=False) / d
    if np.linalg.norm(rhs - a_full @ w) > 10 * _RESIDUAL_TOL * rhs_norm:
        raise RuntimeError("ridge solve failed to reach residual tolerance")
    return w


def slice_levels(pred: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    """Map continuous predictions to symbol indices; threshold ties go low."""
    return np.searchsorted(thresholds, pred, side="left").astype(np.uint8)


def predict(model: ReadoutModel, features) -> np.ndarray:
    x = features.data if isinstance(features, FeatureMatrix) else np.asarray(features)
    if x.shape[1] != model.weights.size:
        raise ValueError(
            f"feature count {x.shape[1]} does not match model ({model.weights.size})"
        )
    return x @ model.weights


def predict_and_slice(model: ReadoutModel, features) -> np.ndarray:
    return slice_levels(predict(model, features), model.slicer_thresholds)


def ber(hat: np.ndarray, ref: np.ndarray, skip_edges: int = 0) -> dict:
    """Bit and symbol error rates under the Gray map, edges excluded."""
    hat = np.asarray(hat)
    ref = np.asarray(ref)
    if hat.shape != ref.shape:
        raise ValueError("symbol streams differ in length")
    if skip_edges:
        hat = hat[skip_edges:-skip_edges]
        ref = ref[skip_edges:-skip_edges]
    if hat.size == 0:
        raise ValueError("no symbols left after edge skipping")
    bit_errors = int(GRAY_BIT_ERRORS[hat, ref].sum())
    counted_bits = 2 * hat.size
    return {
        "ber": bit_errors / counted_bits,
        "ser": float(np.mean(hat != ref)),
        "bit_errors": bit_errors,
        "counted_bits": counted_bits,
    }


def train_ridge(
    features,
    symbols: np.ndarray,
    split: SplitSpec = SplitSpec(),
    lambda_grid: np.ndarray = DEFAULT_LAMBDA_GRID,
    skip_edges: int | None = None,
    norm_affine: AffineRecord | None = None,
) -> ReadoutModel:
    """Fit the ridge readout with validation-BER model selection.

    The first train_fraction of the stream fits each candidate lambda; the
    rest scores it by BER; ties choose the smallest lambda. The winner is
    refit on the whole stream (Gram matrices add across the split). Rows
    whose tap window runs off the stream ends are excluded from both
    fitting and scoring.
    """
    if isinstance(features, FeatureMatrix):
        x = features.data
        if skip_edges is None:
            skip_edges = features.k
    else:
        x = np.asarray(features, np.float64)
        if skip_edges is None:
            skip_edges = 0
    symbols = np.asarray(symbols)
    if x.shape[0] != symbols.size:
        raise ValueError("feature rows and symbol count differ")
    lambda_grid = np.asarray(lambda_grid, dtype=np.float64)
    if lambda_grid.size == 0:
        raise ValueError("lambda grid is empty")

    y = TARGET_LEVELS[symbols]
    thresholds = 0.5 * (TARGET_LEVELS[:-1] + TARGET_LEVELS[1:])
    n = symbols.size
    lo, hi = skip_edges, n - skip_edges
    cut = int(round(split.train_fraction * n))
    if not lo < cut < hi:
        raise ValueError("stream too short for the split and edge skipping")

    x_tr, y_tr = x[lo:cut], y[lo:cut]
    x_val, y_val = x[cut:hi], y[cut:hi]
    sym_val = symbols[cut:hi]

    g_tr = x_tr.T @ x_tr
    r_tr = x_tr.T @ y_tr
    g_val = x_val.T @ x_val
    r_val = x_val.T @ y_val

    best = None
    for lam in np.sort(lambda_grid):
        try:
            w = _solve_normal_eqs(g_tr, r_tr, lam)
        except np.linalg.LinAlgError:
            warnings.warn(f"singular ridge system at lambda={lam:g}; skipped")
            continue
        hat = slice_levels(x_val @ w, thresholds)
        score = ber(hat, sym_val)["ber"]
        if best is None or score < best[0]:
            best = (score, lam)
    if best is None:
        raise RuntimeError("every lambda in the grid produced a singular system")

    lam = best[1]
    w = _solve_normal_eqs(g_tr + g_val, r_tr + r_val, lam)
    return ReadoutModel(
        weights=w,
        ridge_lambda=float(lam),
        target_levels=TARGET_LEVELS.copy(),
        slicer_thresholds=thresholds,
        norm_affine=norm_affine,
    )


# ---------------------------------------------------------------------------
# benchmarks that bypass the reservoir


def _center_statistic(wave: DetectedWaveform) -> np.ndarray:
    """Per-baud decision value: mean of the two center samples."""
    sps = wave.samples_per_baud
    per_baud = wave.samples[: wave.samples.size - wave.samples.size % sps]
    per_baud = per_baud.reshape(-1, sps)
    mid = sps // 2
    if sps >= 2:
        return per_baud[:, mid - 1 : mid + 1].mean(axis=1)
    return per_baud[:, 0]


@dataclass(frozen=True)
class NaiveSlicer:
    """Three fixed thresholds between class-conditional mean levels."""

    levels: np.ndarray
    thresholds: np.ndarray


def fit_naive_slicer(wave: DetectedWaveform, symbols: np.ndarray) -> NaiveSlicer:
    stat = _center_statistic(wave)
    if stat.size != symbols.size:
        raise ValueError("waveform bauds and symbol count differ")
    levels = np.empty(4)
    for s in range(4):
        sel = symbols == s
        if not sel.any():
            raise ValueError(f"training stream never sends symbol {s}")
        levels[s] = stat[sel].mean()
    if np.any(np.diff(levels) <= 0):
        raise ValueError("class mean levels are not increasing; slicer undefined")
    return NaiveSlicer(levels=levels, thresholds=0.5 * (levels[:-1] + levels[1:]))


def apply_naive_slicer(wave: DetectedWaveform, slicer: NaiveSlicer) -> np.ndarray:
    return slice_levels(_center_statistic(wave), slicer.thresholds)


def baseline_features(wave: DetectedWaveform, k: int) -> FeatureMatrix:
    """Raw detected samples of each baud, tap-windowed like node responses."""
    sps = wave.samples_per_baud
    raw = wave.samples[: wave.samples.size - wave.samples.size % sps]
    return assemble_features(raw.reshape(-1, sps), k)


def baseline_lr(
    wave: DetectedWaveform,
    symbols: np.ndarray,
    split: SplitSpec = SplitSpec(),
    k: int = 10,
    lambda_grid: np.ndarray = DEFAULT_LAMBDA_GRID,
) -> ReadoutModel:
    """Linear regression straight on the detected waveform (RC benchmark)."""
    return train_ridge(baseline_features(wave, k), symbols, split, lambda_grid)


# ---------------------------------------------------------------------------
# serialization


def save_model(model: ReadoutModel, path) -> None:
    header = {
        "ridge_lambda": model.ridge_lambda,
        "target_levels": model.target_levels.tolist(),
        "thresholds": model.slicer_thresholds.tolist(),
        "affine": (
            None
            if model.norm_affine is None
            else {"offset": model.norm_affine.offset, "scale": model.norm_affine.scale}
        ),
    }
    with open(path, "w") as fh:
        fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
        for w in model.weights:
            fh.write(repr(float(w)) + "\n")


def load_model(path) -> ReadoutModel:
    with open(path) as fh:
        first = fh.readline()
        if not first.startswith("# "):
            raise ValueError("model file lacks its header line")
        header = json.loads(first[2:])
        weights = np.array([float(line) for line in fh if line.strip()])
    affine = header["affine"]
    return ReadoutModel(
        weights=weights,
        ridge_lambda=header["ridge_lambda"],
        target_levels=np.array(header["target_levels"]),
        slicer_thresholds=np.array(header["thresholds"]),
        norm_affine=None if affine is None else AffineRecord(**affine),
    )
