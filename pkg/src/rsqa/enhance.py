"""Speech enhancement, generator losses, and residual gating.

The built-in enhancer is an oversubtractive spectral gate: per-bin noise
floors are estimated as a low quantile of the magnitude spectrogram and
bins close to their floor are attenuated.  Externally enhanced files can
be substituted via the manifest's enhanced_path column.

The generator objective combines a waveform L2 term with a perceptual
term that compares band-energy deviation patterns: phi(a, b) is the
per-frame vector of 8-band log-energy differences between a and b, so
the loss measures how differently the enhanced and target signals
deviate from the observed one.

A quality proxy (sigmoid over segmental SNR) gates residuals: when an
enhancer makes a clip strictly worse than the impaired input, the
residual is suppressed to zero rather than fed to the regressor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio_io import AudioClip, CorpusRecord, read_wav
from .dsp import (ComplexSpectrogram, LOG_FLOOR, StftConfig, istft, magnitude,
                  residual, segmental_snr, stft)

N_PERCEPTUAL_BANDS = 8

PROXY_SLOPE = 0.25
PROXY_MIDPOINT_DB = 10.0


@dataclass(frozen=True)
class SpectralGateParams:
    beta: float = 1.5          # oversubtraction factor
    gain_floor: float = 0.05
    noise_quantile: float = 0.10

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if not (0.0 <= self.gain_floor < 1.0):
            raise ValueError("gain_floor must be in [0, 1)")
        if not (0.0 < self.noise_quantile < 1.0):
            raise ValueError("noise_quantile must be in (0, 1)")


@dataclass(frozen=True)
class GeneratorLossReport:
    l2: float
    perceptual: float
    alpha: float
    total: float


def spectral_gate_enhance(clip: AudioClip,
                          params: SpectralGateParams = SpectralGateParams(),
                          config: StftConfig = StftConfig()) -> AudioClip:
    """Attenuate bins near their per-bin noise floor; output length = input."""
    spec = stft(clip, config)
    mag = np.abs(spec.values)
    noise = np.quantile(mag, params.noise_quantile, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = 1.0 - params.beta * noise / mag
    gain = np.where(mag > 0, gain, 0.0)
    gain = np.maximum(params.gain_floor, gain)
    gated = ComplexSpectrogram(spec.values * gain, config)
    recon = istft(gated)
    # the analysis grid covers (frames-1)*hop + fft samples; any remaining
    # tail is shorter than one frame and passes through unenhanced
    out = np.concatenate([recon.samples, clip.samples[len(recon.samples):]])
    return AudioClip(out[: len(clip.samples)], clip.sample_rate)


def external_enhanced(record: CorpusRecord, root: Path) -> AudioClip:
    """Read the pre-enhanced companion file named by the manifest."""
    if not record.enhanced_path:
        raise ValueError(f"no external enhancement for {record.clip_path!r}")
    return read_wav(Path(root) / record.enhanced_path)


def _require_aligned(*clips: AudioClip):
    n = len(clips[0].samples)
    sr = clips[0].sample_rate
    for c in clips[1:]:
        if len(c.samples) != n or c.sample_rate != sr:
            raise ValueError("length mismatch between clips")


def loss_l2(sg: AudioClip, st: AudioClip) -> float:
    """Sum of squared sample differences (squared L2 norm, not a mean)."""
    _require_aligned(sg, st)
    d = sg.samples - st.samples
    return float(np.dot(d, d))


def _band_log_energies(clip: AudioClip, config: StftConfig) -> np.ndarray:
    """(frames, 8) log energies over uniform bands of the magnitude spectrum."""
    mag = magnitude(stft(clip, config)).values
    bands = np.array_split(mag ** 2, N_PERCEPTUAL_BANDS, axis=1)
    energies = np.stack([b.sum(axis=1) for b in bands], axis=1)
    return np.log(energies + LOG_FLOOR)


def perceptual_feature(a: AudioClip, b: AudioClip,
                       config: StftConfig = StftConfig()) -> np.ndarray:
    """phi(a, b): flattened per-frame 8-band log-energy differences."""
    _require_aligned(a, b)
    return (_band_log_energies(a, config) - _band_log_energies(b, config)).ravel()


def loss_perceptual(sg: AudioClip, so: AudioClip, st: AudioClip,
                    config: StftConfig = StftConfig()) -> float:
    """|| phi(st, so) - phi(sg, so) ||^2 over 8 uniform frequency bands."""
    _require_aligned(sg, so, st)
    d = perceptual_feature(st, so, config) - perceptual_feature(sg, so, config)
    return float(np.dot(d, d))


def generator_objective(sg: AudioClip, so: AudioClip, st: AudioClip,
                        alpha: float = 0.5,
                        config: StftConfig = StftConfig()) -> GeneratorLossReport:
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    l2 = loss_l2(sg, st)
    perc = loss_perceptual(sg, so, st, config)
    return GeneratorLossReport(l2=l2, perceptual=perc, alpha=alpha,
                               total=l2 + alpha * perc)


def quality_score_proxy(clip: AudioClip, reference: AudioClip) -> float:
    """Intrusive quality score in (1, 5), monotone in segmental SNR."""
    seg = segmental_snr(reference, clip)
    return 1.0 + 4.0 / (1.0 + math.exp(-PROXY_SLOPE * (seg - PROXY_MIDPOINT_DB)))


def gated_residual(impaired: AudioClip, enhanced: AudioClip,
                   margin: float = 0.0,
                   reference: AudioClip | None = None) -> AudioClip:
    """Residual impaired - enhanced, suppressed to zero when enhancement
    made the clip measurably worse than the impaired input.

    Without a reference (deployment) the gate is bypassed.
    """
    r = residual(impaired, enhanced)
    if reference is None:
        return r
    n = min(len(r.samples), len(reference.samples))
    ref = AudioClip(reference.samples[:n], reference.sample_rate)
    enh_score = quality_score_proxy(AudioClip(enhanced.samples[:n], enhanced.sample_rate), ref)
    imp_score = quality_score_proxy(AudioClip(impaired.samples[:n], impaired.sample_rate), ref)
    if enh_score < imp_score - margin:
        return AudioClip(np.zeros_like(r.samples), r.sample_rate)
    return r
