"""STFT/ISTFT, spectrogram conditioning, residuals, and segmental SNR."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .audio_io import AudioClip

LOG_FLOOR = 1e-7
SEG_FRAME_S = 0.020
SEG_SILENCE_ENERGY = 1e-6
SEG_SNR_MIN_DB = -10.0
SEG_SNR_MAX_DB = 35.0


@dataclass(frozen=True)
class StftConfig:
    fft_size: int = 512
    hop: int = 256

    def __post_init__(self):
        if self.fft_size < 2 or self.fft_size & (self.fft_size - 1):
            raise ValueError("fft_size must be a power of two")
        if not (1 <= self.hop <= self.fft_size):
            raise ValueError("hop must be in [1, fft_size]")

    @property
    def bins(self) -> int:
        return self.fft_size // 2 + 1

    def window(self) -> np.ndarray:
        """Periodic Hann window (satisfies COLA at 50% overlap)."""
        n = np.arange(self.fft_size)
        return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / self.fft_size)

    def num_frames(self, n_samples: int) -> int:
        if n_samples < self.fft_size:
            raise ValueError("clip too short")
        return 1 + (n_samples - self.fft_size) // self.hop


@dataclass(frozen=True, eq=False)
class ComplexSpectrogram:
    values: np.ndarray  # frames x bins, complex
    config: StftConfig

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[1] != self.config.bins:
            raise ValueError("spectrogram bins inconsistent with config")
        if not np.isfinite(self.values).all():
            raise ValueError("non-finite spectrogram values")


@dataclass(frozen=True, eq=False)
class Spectrogram:
    values: np.ndarray  # frames x bins, real
    config: StftConfig
    scale_tag: str = "linear"  # "linear" | "log"

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[1] != self.config.bins:
            raise ValueError("spectrogram bins inconsistent with config")
        if self.scale_tag not in ("linear", "log"):
            raise ValueError(f"unknown scale_tag {self.scale_tag!r}")
        if not np.isfinite(self.values).all():
            raise ValueError("non-finite spectrogram values")
        if self.scale_tag == "linear" and self.values.size and self.values.min() < 0:
            raise ValueError("linear spectrogram must be nonnegative")


@dataclass(frozen=True, eq=False)
class FeatureTensor:
    """Network input: channel 0 impaired, channel 1 residual (log magnitude)."""

    values: np.ndarray  # 2 x frames x bins
    config: StftConfig

    def __post_init__(self):
        if self.values.ndim != 3 or self.values.shape[0] != 2:
            raise ValueError("feature tensor must be 2 x frames x bins")
        if self.values.shape[1] < 1 or self.values.shape[2] != self.config.bins:
            raise ValueError("feature tensor shape inconsistent with config")


def frame_signal(x: np.ndarray, cfg: StftConfig) -> np.ndarray:
    """Frame a signal into (num_frames, fft_size) without tail padding."""
    if x.size < cfg.fft_size:
        raise ValueError("clip too short")
    return sliding_window_view(x, cfg.fft_size)[:: cfg.hop]


def stft(clip: AudioClip, cfg: StftConfig = StftConfig()) -> ComplexSpectrogram:
    """Windowed, hopped DFT. Frame f, bin k is sum_n w[n] x[f*hop+n] e^(-2pi i k n / N)."""
    frames = frame_signal(clip.samples, cfg)
    spec = np.fft.rfft(frames * cfg.window(), axis=1)
    return ComplexSpectrogram(spec, cfg)


def magnitude(spec: ComplexSpectrogram) -> Spectrogram:
    return Spectrogram(np.abs(spec.values), spec.config, "linear")


def log_compress(spec: Spectrogram) -> Spectrogram:
    if spec.scale_tag == "log":
        raise ValueError("double compression")
    return Spectrogram(np.log(spec.values + LOG_FLOOR), spec.config, "log")


def istft(spec: ComplexSpectrogram) -> AudioClip:
    """Overlap-add inverse with Hann synthesis window.

    Output length is (frames - 1) * hop + fft_size; the summed squared
    window envelope (floored at 1e-8) normalizes the reconstruction.
    """
    cfg = spec.config
    n_frames = spec.values.shape[0]
    w = cfg.window()
    frames = np.fft.irfft(spec.values, n=cfg.fft_size, axis=1) * w
    out_len = (n_frames - 1) * cfg.hop + cfg.fft_size
    out = np.zeros(out_len)
    envelope = np.zeros(out_len)
    w2 = w * w
    for f in range(n_frames):
        start = f * cfg.hop
        out[start : start + cfg.fft_size] += frames[f]
        envelope[start : start + cfg.fft_size] += w2
    out /= np.maximum(envelope, 1e-8)
    return AudioClip(out, 16000)


def residual(impaired: AudioClip, enhanced: AudioClip) -> AudioClip:
    """Sample-wise impaired minus enhanced, truncated to the shorter clip.

    The difference is deliberately never renormalized: its amplitude
    carries the size of the enhancement discrepancy.
    """
    if impaired.sample_rate != enhanced.sample_rate:
        raise ValueError("sample rate mismatch")
    ratio = len(impaired) / len(enhanced)
    if not (0.99 <= ratio <= 1.01):
        raise ValueError("unaligned enhancement")
    n = min(len(impaired), len(enhanced))
    return AudioClip(impaired.samples[:n] - enhanced.samples[:n],
                     impaired.sample_rate)


def assemble_features(impaired: AudioClip, resid: AudioClip,
                      cfg: StftConfig = StftConfig()) -> FeatureTensor:
    """Stack impaired and residual log-magnitude spectrograms as 2 channels."""
    if impaired.sample_rate != resid.sample_rate:
        raise ValueError("sample rate mismatch")
    if len(impaired) != len(resid):
        raise ValueError("length mismatch between impaired clip and residual")
    chans = [
        log_compress(magnitude(stft(clip, cfg))).values
        for clip in (impaired, resid)
    ]
    return FeatureTensor(np.stack(chans), cfg)


def segmental_snr(reference: AudioClip, test: AudioClip) -> float:
    """Mean per-frame SNR in dB over non-silent 20 ms reference frames.

    Per-frame values are clamped to [-10, 35] dB; a frame with zero error
    sits at the ceiling.
    """
    if reference.sample_rate != test.sample_rate:
        raise ValueError("sample rate mismatch")
    if len(reference) != len(test):
        raise ValueError("length mismatch")
    frame_len = int(round(SEG_FRAME_S * reference.sample_rate))
    n_frames = len(reference) // frame_len
    if n_frames == 0:
        raise ValueError("clip shorter than one 20 ms frame")
    ref = reference.samples[: n_frames * frame_len].reshape(n_frames, frame_len)
    tst = test.samples[: n_frames * frame_len].reshape(n_frames, frame_len)
    ref_energy = np.sum(ref * ref, axis=1)
    active = ref_energy > SEG_SILENCE_ENERGY
    if not active.any():
        raise ValueError("no non-silent frames in reference")
    err_energy = np.sum((ref - tst) ** 2, axis=1)[active]
    ref_energy = ref_energy[active]
    with np.errstate(divide="ignore"):
        snr = 10.0 * np.log10(ref_energy / err_energy)
    snr = np.clip(snr, SEG_SNR_MIN_DB, SEG_SNR_MAX_DB)
    return float(snr.mean())
