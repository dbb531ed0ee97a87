"""Waveform conditioning and feature assembly for the time-multiplexed RC.

The detected electrical waveform is normalized to [0, 1] with an affine
record fitted on training data, zero-order-hold oversampled so one baud
covers one mask value per virtual node, multiplied by a per-experiment
random mask, fed to the laser, and the sampled node responses are windowed
into a tap feature matrix for the linear readout.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from lrc.errors import ConfigError

# Test data mapped through a training affine may overshoot [0, 1]; it is
# clamped to this range before masking.
CLAMP_LO = -0.1
CLAMP_HI = 1.1


@dataclass(frozen=True)
class MaskConfig:
    """Per-node input mask, fixed for the lifetime of an experiment."""

    values: np.ndarray  # (n_nodes,) floats in [0, 1]
    rng_seed: int
    kind: str = "uniform"

    @property
    def n_nodes(self) -> int:
        return self.values.size

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1 or v.size == 0:
            raise ConfigError("mask values must be a nonempty 1-d array")
        if v.min() < 0.0 or v.max() > 1.0:
            raise ConfigError("mask values must lie in [0, 1]")
        object.__setattr__(self, "values", v)


def make_mask(
    n_nodes: int = 32, kind: str = "uniform", rng_seed: int = 2024
) -> MaskConfig:
    """Draw a random mask: uniform on [0, 1], or binary {0, 1} fifty-fifty."""
    rng = np.random.default_rng(rng_seed)
    if kind == "uniform":
        values = rng.uniform(0.0, 1.0, n_nodes)
    elif kind == "binary":
        values = rng.integers(0, 2, n_nodes).astype(np.float64)
    else:
        raise ConfigError(f"unknown mask kind {kind!r} (use 'uniform' or 'binary')")
    return MaskConfig(values=values, rng_seed=rng_seed, kind=kind)


@dataclass(frozen=True)
class AffineRecord:
    """Stored normalization x -> (x - offset) * scale, fitted on train data."""

    offset: float
    scale: float


def fit_normalizer(samples: np.ndarray) -> AffineRecord:
    """Affine map sending the sample min to 0 and max to 1."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size == 0:
        raise ValueError("cannot normalize an empty waveform")
    lo = float(samples.min())
    hi = float(samples.max())
    if not np.isfinite(lo) or not np.isfinite(hi):
        raise ValueError("waveform contains non-finite samples")
    if hi == lo:
        raise ValueError("degenerate waveform: max equals min")
    return AffineRecord(offset=lo, scale=1.0 / (hi - lo))


def apply_normalizer(samples: np.ndarray, record: AffineRecord) -> np.ndarray:
    """Apply a stored affine; overshoot is clamped to [-0.1, 1.1]."""
    out = (np.asarray(samples, dtype=np.float64) - record.offset) * record.scale
    return np.clip(out, CLAMP_LO, CLAMP_HI)


def oversample(samples: np.ndarray, factor: int) -> np.ndarray:
    """Zero-order hold: each sample repeated ``factor`` times."""
    if factor < 1:
        raise ValueError("oversampling factor must be >= 1")
    samples = np.asarray(samples)
    if factor == 1:
        return samples.copy()
    return np.repeat(samples, factor)


def apply_mask(oversampled: np.ndarray, mask: MaskConfig) -> np.ndarray:
    """Multiply each baud's node slots by the mask.

    Returns the (n_bauds, n_nodes) masked value matrix; the mask repeats
    every baud.
    """
    oversampled = np.asarray(oversampled, dtype=np.float64)
    n = mask.n_nodes
    if oversampled.ndim != 1 or oversampled.size % n != 0:
        raise ValueError(
            f"waveform length {oversampled.size} is not a multiple of "
            f"{n} node slots per baud"
        )
    return oversampled.reshape(-1, n) * mask.values


def sample_nodes(trace: np.ndarray, steps_per_slot: int, n_nodes: int) -> np.ndarray:
    """Read node responses off a full-rate intensity trace.

    Node (b, i) is the trace at the final integrator sample of slot i of
    symbol b, i.e. flat index (b * n_nodes + i + 1) * steps_per_slot - 1.
    """
    trace = np.asarray(trace, dtype=np.float64)
    if steps_per_slot < 1 or n_nodes < 1:
        raise ValueError("steps_per_slot and n_nodes must be >= 1")
    per_symbol = steps_per_slot * n_nodes
    if trace.ndim != 1 or trace.size == 0 or trace.size % per_symbol != 0:
        raise ValueError(
            f"trace length {trace.size} is not a whole number of symbols "
            f"({per_symbol} samples each)"
        )
    ends = trace[steps_per_slot - 1 :: steps_per_slot]
    return ends.reshape(-1, n_nodes)


@dataclass(frozen=True)
class FeatureMatrix:
    """Tap-windowed node responses plus a trailing bias column."""

    data: np.ndarray  # (n_symbols, (2k+1)*n_nodes + 1)
    n_nodes: int
    k: int

    @property
    def n_symbols(self) -> int:
        return self.data.shape[0]

    @property
    def column_names(self) -> list[str]:
        names = [
            f"node{i}_tap{j}"
            for j in range(-self.k, self.k + 1)
            for i in range(self.n_nodes)
        ]
        return names + ["bias"]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.column_names)
            for row in self.data:
                writer.writerow([repr(float(x)) for x in row])


def assemble_features(nodes: np.ndarray, k: int) -> FeatureMatrix:
    """Window node responses over 2k+1 taps.

    Row b concatenates node rows b-k ... b+k (zero rows past the edges)
    and a bias 1, giving (2k+1)*n_nodes + 1 columns.
    """
    nodes = np.asarray(nodes, dtype=np.float64)
    if nodes.ndim != 2:
        raise ValueError("node responses must be 2-d (symbols x nodes)")
    if k < 0:
        raise ValueError("tap count k must be >= 0")
    if not np.all(np.isfinite(nodes)):
        raise ValueError("node responses contain non-finite values")
    s, n = nodes.shape
    padded = np.zeros((s + 2 * k, n))
    padded[k : k + s] = nodes
    blocks = [padded[j : j + s] for j in range(2 * k + 1)]
    data = np.concatenate(blocks + [np.ones((s, 1))], axis=1)
    return FeatureMatrix(data=data, n_nodes=n, k=k)


def speed_penalty(bit_rate_gbps: float, tau_ns: float) -> float:
    """Time-stretch factor of the masked drive vs. the live line rate.

    One PAM-4 baud (2 bits) is stretched over one delay period tau, so the
    drive runs (bit_rate / 2) * tau times slower than real time.
    """
    return 0.5 * bit_rate_gbps * tau_ns
