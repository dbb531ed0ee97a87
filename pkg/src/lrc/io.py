"""Binary waveform and symbol file formats.

Waveform files: little-endian header ``magic "LRC1" | dt (f64, seconds) |
count (u64)`` followed by f64 samples. Optical fields store four floats per
time sample (re_x, im_x, re_y, im_y interleaved); detected waveforms store
one. Symbol files are one byte per symbol with values 0..3. Every reader
rejects malformed input naming the byte offset, and write -> read -> write
round-trips are byte-identical.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from lrc.errors import FileFormatError
from lrc.link import DetectedWaveform, OpticalField, SymbolStream

MAGIC = b"LRC1"
_HEADER = struct.Struct("<4sdQ")  # magic, dt, sample count


def _write_header(fh, dt_s: float, count: int) -> None:
    fh.write(_HEADER.pack(MAGIC, dt_s, count))


def _read_header(fh, path: Path) -> tuple[float, int]:
    raw = fh.read(_HEADER.size)
    if len(raw) < _HEADER.size:
        raise FileFormatError(
            f"{path}: truncated header at byte {len(raw)} (need {_HEADER.size})"
        )
    magic, dt_s, count = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise FileFormatError(f"{path}: bad magic {magic!r} at byte 0")
    if not dt_s > 0:
        raise FileFormatError(f"{path}: non-positive dt at byte 4")
    return dt_s, count


def _read_payload(fh, path: Path, n_floats: int) -> np.ndarray:
    data = fh.read(8 * n_floats)
    if len(data) < 8 * n_floats:
        raise FileFormatError(
            f"{path}: truncated payload at byte {_HEADER.size + len(data)} "
            f"(expected {_HEADER.size + 8 * n_floats} bytes total)"
        )
    if fh.read(1):
        raise FileFormatError(
            f"{path}: trailing bytes after byte {_HEADER.size + 8 * n_floats}"
        )
    return np.frombuffer(data, dtype="<f8")


def write_optical_field(path: str | Path, field: OpticalField) -> None:
    """Write an optical field (interleaved re_x, im_x, re_y, im_y)."""
    path = Path(path)
    n = field.env_x.size
    inter = np.empty(4 * n, dtype="<f8")
    inter[0::4] = field.env_x.real
    inter[1::4] = field.env_x.imag
    inter[2::4] = field.env_y.real
    inter[3::4] = field.env_y.imag
    with open(path, "wb") as fh:
        _write_header(fh, field.dt_s, n)
        fh.write(inter.tobytes())


def read_optical_field(path: str | Path, wavelength_nm: float) -> OpticalField:
    """Read an optical field; the carrier wavelength comes from the caller."""
    path = Path(path)
    with open(path, "rb") as fh:
        dt_s, count = _read_header(fh, path)
        inter = _read_payload(fh, path, 4 * count)
    env_x = inter[0::4] + 1j * inter[1::4]
    env_y = inter[2::4] + 1j * inter[3::4]
    return OpticalField(env_x, env_y, dt_s, wavelength_nm)


def write_detected(path: str | Path, wave: DetectedWaveform) -> None:
    """Write a detected waveform (one f64 per sample)."""
    path = Path(path)
    with open(path, "wb") as fh:
        _write_header(fh, wave.dt_s, wave.samples.size)
        fh.write(wave.samples.astype("<f8").tobytes())


def read_detected(path: str | Path, baud_period_s: float) -> DetectedWaveform:
    """Read a detected waveform; the baud period comes from the config.

    Raises FileFormatError when the stored dt does not divide the baud
    period into an integer number of samples (resample before ingesting).
    """
    path = Path(path)
    with open(path, "rb") as fh:
        dt_s, count = _read_header(fh, path)
        samples = _read_payload(fh, path, count)
    spb = baud_period_s / dt_s
    if abs(spb - round(spb)) > 1e-6 or round(spb) < 1:
        raise FileFormatError(
            f"{path}: sample rate mismatch (dt = {dt_s:.3e} s gives {spb:.6f} "
            "samples per baud); resample the waveform to an integer "
            "samples-per-baud grid before ingesting"
        )
    return DetectedWaveform(samples, dt_s, baud_period_s)


def write_symbols(path: str | Path, stream: SymbolStream) -> None:
    """Write symbols as raw bytes with values 0..3."""
    Path(path).write_bytes(stream.symbols.tobytes())


def read_symbols(path: str | Path) -> SymbolStream:
    """Read a symbol file, rejecting any byte outside {0, 1, 2, 3}."""
    path = Path(path)
    raw = np.frombuffer(path.read_bytes(), dtype=np.uint8)
    bad = np.nonzero(raw > 3)[0]
    if bad.size:
        raise FileFormatError(
            f"{path}: invalid symbol byte {int(raw[bad[0]])} at byte {int(bad[0])}"
        )
    return SymbolStream(raw.copy())
