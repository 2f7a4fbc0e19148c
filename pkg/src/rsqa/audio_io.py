"""WAV file I/O, canonical-format normalization, and dataset manifests.

Everything downstream works on mono float arrays at 16 kHz; this module is
the only place where files, sample rates, and encodings are dealt with.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CANONICAL_RATE = 16000
_ACCEPTED_RATES = (8000, 16000, 32000, 44100, 48000)
_MANIFEST_HEADER = ["clip_path", "mos", "enhanced_path", "condition_tag"]


class WavFormatError(ValueError):
    """Encoding, channel count, or sample rate outside the supported set."""


class WavParseError(ValueError):
    """Structurally broken or truncated WAV file."""


class ManifestError(ValueError):
    """Malformed manifest CSV or out-of-range label."""


@dataclass(frozen=True, eq=False)
class AudioClip:
    """Mono waveform; samples are float64 and immutable after creation."""

    samples: np.ndarray
    sample_rate: int = CANONICAL_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size < 1:
            raise ValueError("clip must be a nonempty 1-D array")
        if not np.isfinite(samples).all():
            raise ValueError("clip contains non-finite samples")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class CorpusRecord:
    clip_path: str
    mos: float
    enhanced_path: str | None = None
    condition_tag: str = ""


@dataclass(frozen=True)
class Manifest:
    root_dir: Path
    records: tuple[CorpusRecord, ...]

    def __len__(self) -> int:
        return len(self.records)


def _read_exact(f, n: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise WavParseError(f"truncated file while reading {what}")
    return buf


def read_wav(path) -> AudioClip:
    """Read a RIFF/WAVE file and normalize it to mono float64 at 16 kHz.

    Accepts PCM16 and IEEE float32 encodings, 1 or 2 channels, and sample
    rates in {8000, 16000, 32000, 44100, 48000}. Stereo is averaged to
    mono; non-canonical rates are resampled by linear interpolation.
    """
    path = Path(path)
    with open(path, "rb") as f:
        riff = _read_exact(f, 12, "RIFF header")
        tag, _size, wave = struct.unpack("<4sI4s", riff)
        if tag != b"RIFF" or wave != b"WAVE":
            raise WavParseError(f"{path.name}: not a RIFF/WAVE file")

        fmt = None
        data = None
        while True:
            head = f.read(8)
            if len(head) == 0:
                break
            if len(head) < 8:
                raise WavParseError(f"{path.name}: truncated chunk header")
            chunk_id, chunk_size = struct.unpack("<4sI", head)
            if chunk_id == b"fmt ":
                body = _read_exact(f, chunk_size, "fmt chunk")
                if chunk_size < 16:
                    raise WavParseError(f"{path.name}: fmt chunk too small")
                fmt = struct.unpack("<HHIIHH", body[:16])
            elif chunk_id == b"data":
                data = _read_exact(f, chunk_size, "data chunk")
            else:
                f.seek(chunk_size, 1)  # skip unknown chunks
            if chunk_size % 2:
                f.seek(1, 1)  # chunks are word-aligned

    if fmt is None:
        raise WavParseError(f"{path.name}: missing fmt chunk")
    if data is None:
        raise WavParseError(f"{path.name}: missing data chunk")

    format_code, channels, rate, _byte_rate, _block_align, bits = fmt
    if (format_code, bits) == (1, 16):
        raw = np.frombuffer(data[: len(data) - len(data) % 2], dtype="<i2")
        samples = raw.astype(np.float64) / 32768.0
    elif (format_code, bits) == (3, 32):
        raw = np.frombuffer(data[: len(data) - len(data) % 4], dtype="<f4")
        samples = raw.astype(np.float64)
    else:
        raise WavFormatError(
            f"{path.name}: unsupported encoding (format {format_code}, {bits}-bit)"
        )
    if channels not in (1, 2):
        raise WavFormatError(f"{path.name}: unsupported channel count {channels}")
    if rate not in _ACCEPTED_RATES:
        raise WavFormatError(f"{path.name}: unsupported sample rate {rate}")
    if samples.size == 0:
        raise WavParseError(f"{path.name}: no audio samples")

    if channels == 2:
        samples = samples[: samples.size - samples.size % 2]
        samples = samples.reshape(-1, 2).mean(axis=1)
        if samples.size == 0:
            raise WavParseError(f"{path.name}: no audio samples")

    if rate != CANONICAL_RATE:
        samples = _resample_linear(samples, rate, CANONICAL_RATE)
    return AudioClip(samples, CANONICAL_RATE)


def _resample_linear(x: np.ndarray, rate_in: int, rate_out: int) -> np.ndarray:
    n_out = int(round(x.size * rate_out / rate_in))
    pos = np.arange(n_out) * (rate_in / rate_out)
    return np.interp(pos, np.arange(x.size), x)


def write_wav(clip: AudioClip, path) -> None:
    """Write a clip as mono 16 kHz PCM16, clamping samples to [-1, 1]."""
    if clip.samples.size == 0:
        raise ValueError("empty clip")
    x = np.clip(clip.samples, -1.0, 1.0) * 32768.0
    # round half away from zero, then saturate at int16 limits
    q = np.sign(x) * np.floor(np.abs(x) + 0.5)
    q = np.clip(q, -32768, 32767).astype("<i2")
    data = q.tobytes()
    with open(path, "wb") as f:
        f.write(struct.pack("<4sI4s", b"RIFF", 36 + len(data), b"WAVE"))
        f.write(struct.pack("<4sIHHIIHH", b"fmt ", 16, 1, 1,
                            clip.sample_rate, clip.sample_rate * 2, 2, 16))
        f.write(struct.pack("<4sI", b"data", len(data)))
        f.write(data)


def load_manifest(path) -> Manifest:
    """Parse a manifest CSV; rows keep file order.

    Header must be `clip_path,mos,enhanced_path,condition_tag`; the last
    two columns may be empty. MOS values outside [1, 5] are rejected with
    the offending row number.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ManifestError(f"{path.name}: empty manifest") from None
        if [h.strip() for h in header] != _MANIFEST_HEADER:
            raise ManifestError(
                f"{path.name}: missing or malformed header "
                f"(expected {','.join(_MANIFEST_HEADER)})"
            )
        records = []
        for i, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise ManifestError(f"{path.name} row {i}: expected 4 columns")
            clip_path, mos_str, enhanced, tag = (c.strip() for c in row)
            if not clip_path:
                raise ManifestError(f"{path.name} row {i}: empty clip_path")
            try:
                mos = float(mos_str)
            except ValueError:
                raise ManifestError(
                    f"{path.name} row {i}: unparsable mos {mos_str!r}"
                ) from None
            if not (1.0 <= mos <= 5.0):
                raise ManifestError(f"{path.name} row {i}: mos {mos} outside [1, 5]")
            records.append(CorpusRecord(clip_path, mos, enhanced or None, tag))
    if not records:
        raise ManifestError(f"{path.name}: empty manifest")
    return Manifest(root_dir=path.parent, records=tuple(records))


def write_manifest(records, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(_MANIFEST_HEADER)
        for r in records:
            writer.writerow([r.clip_path, f"{r.mos:.4f}", r.enhanced_path or "",
                             r.condition_tag])
