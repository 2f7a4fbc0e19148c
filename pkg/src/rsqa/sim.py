"""Deterministic synthetic corpus: speech-like clips, impairments, labels.

Clean clips are built from voiced harmonic segments (pitch random walk,
two resonant formant-like emphases), unvoiced noise bursts, and exact-zero
silences under a syllable-rate envelope.  Impairments cover additive
white/pink noise at a target SNR, synthetic-RIR reverberation, packet
loss with boundary fades, and hard clipping.  Labels come from a sigmoid
of segmental SNR against the clean reference, so every (clip, label) pair
is a pure function of the corpus seed and regeneration is byte-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve, lfilter

from .audio_io import (AudioClip, CorpusRecord, Manifest, load_manifest,
                       write_manifest, write_wav)
from .dsp import SEG_SILENCE_ENERGY, segmental_snr

SAMPLE_RATE = 16000
FRAME_LEN = 320  # 20 ms at 16 kHz

LABEL_SLOPE = 0.22
LABEL_MIDPOINT_DB = 8.0

REVERB_TAIL_GAIN = 0.02
FADE_LEN = 32  # 2 ms at 16 kHz

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK64
    return (z ^ (z >> 31)) & _MASK64


@dataclass(frozen=True)
class Condition:
    kind: str  # white | pink | reverb | loss | clip
    lo: float
    hi: float
    weight: float


DEFAULT_CONDITIONS = (
    Condition("white", -5.0, 30.0, 3.0),
    Condition("pink", -5.0, 30.0, 2.0),
    Condition("reverb", 0.2, 1.2, 2.0),
    Condition("loss", 0.05, 0.40, 2.0),
    Condition("clip", 0.2, 0.9, 1.0),
)


@dataclass(frozen=True)
class CorpusConfig:
    n_clips: int
    out_dir: Path
    duration_s: float = 3.0
    seed: int = 0
    conditions: tuple = DEFAULT_CONDITIONS
    chain_prob: float = 0.25

    def __post_init__(self):
        if self.n_clips < 1:
            raise ValueError("n_clips must be >= 1")
        if any(c.weight <= 0 for c in self.conditions):
            raise ValueError("condition weights must be positive")
        if not (0.0 <= self.chain_prob <= 1.0):
            raise ValueError("chain_prob must be in [0, 1]")


# ---- clean-signal generation ------------------------------------------------

def _resonator(x: np.ndarray, freq_hz: float, r: float = 0.97) -> np.ndarray:
    """Second-order resonant emphasis (formant proxy) at freq_hz."""
    w = 2.0 * math.pi * freq_hz / SAMPLE_RATE
    a = [1.0, -2.0 * r * math.cos(w), r * r]
    y = lfilter([1.0 - r], a, x)
    return np.asarray(y)


def gen_clean(seed: int, duration_s: float = 3.0) -> AudioClip:
    """Speech-like clip: voiced/unvoiced segments with exact-zero pauses,
    syllable-rate amplitude modulation, peak-normalized to 0.5.

    Sound and pause runs are laid out on the 20 ms frame grid in cycles of
    one sound group (10..20 frames) followed by one pause (5..11 frames),
    which guarantees >= 12% fully silent frames for any duration.
    """
    if duration_s < 0.5:
        raise ValueError("duration must be >= 0.5 s")
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * SAMPLE_RATE))
    n_frames = n // FRAME_LEN
    out = np.zeros(n)
    f0 = rng.uniform(90.0, 230.0)

    frame = 0
    while frame < n_frames:
        group_end = min(frame + int(rng.integers(10, 21)), n_frames)
        voiced_first = True  # each group opens voiced so the clip is never all-noise
        while frame < group_end:
            voiced = voiced_first or rng.random() < 0.72
            voiced_first = False
            seg_frames = int(rng.integers(4, 11) if voiced else rng.integers(2, 5))
            seg_frames = min(seg_frames, group_end - frame)
            seg_len = seg_frames * FRAME_LEN
            pos = frame * FRAME_LEN

            if voiced:
                f0 = float(np.clip(f0 + rng.normal(0.0, 12.0), 80.0, 250.0))
                drift = np.clip(f0 + np.cumsum(rng.normal(0.0, 0.03, seg_len)),
                                80.0, 250.0)
                phase = 2.0 * math.pi * np.cumsum(drift) / SAMPLE_RATE
                n_harm = max(3, min(12, int(7000.0 / f0)))
                seg = np.zeros(seg_len)
                for k in range(1, n_harm + 1):
                    seg += math.cos(k) / k * np.sin(k * phase)
                for fmt in (rng.uniform(300.0, 900.0), rng.uniform(1100.0, 2500.0)):
                    seg = seg + 2.0 * _resonator(seg, fmt)
            else:
                seg = 0.35 * rng.standard_normal(seg_len)

            ramp = np.minimum(1.0, np.minimum(np.arange(seg_len),
                                              np.arange(seg_len)[::-1]) / FADE_LEN)
            out[pos : pos + seg_len] = seg * ramp
            frame += seg_frames
        frame += int(rng.integers(5, 12))  # inter-group pause, exact zeros

    t = np.arange(n) / SAMPLE_RATE
    syllable = 0.55 + 0.45 * np.sin(
        2.0 * math.pi * rng.uniform(3.5, 4.5) * t + rng.uniform(0, 2 * math.pi))
    out *= syllable
    peak = np.abs(out).max()
    out *= 0.5 / peak
    return AudioClip(out, SAMPLE_RATE)


# ---- impairments ------------------------------------------------------------

def _active_power(x: np.ndarray) -> float:
    n_frames = len(x) // FRAME_LEN
    frames = x[: n_frames * FRAME_LEN].reshape(n_frames, FRAME_LEN)
    energies = (frames ** 2).sum(axis=1)
    active = energies > SEG_SILENCE_ENERGY
    if not active.any():
        raise ValueError("all-silent clip")
    return float(energies[active].sum() / (active.sum() * FRAME_LEN))


def _pink_noise(n: int, rng: np.random.Generator) -> np.ndarray:
    white = rng.standard_normal(n)
    spec = np.fft.rfft(white)
    k = np.arange(len(spec), dtype=float)
    k[0] = 1.0
    return np.fft.irfft(spec / np.sqrt(k), n)


def add_noise_snr(clip: AudioClip, noise_kind: str, snr_db: float,
                  seed: int) -> AudioClip:
    """Additive noise at a target SNR vs active-frame signal power."""
    if noise_kind not in ("white", "pink"):
        raise ValueError(f"unknown noise kind {noise_kind!r}")
    rng = np.random.default_rng(seed)
    n = len(clip.samples)
    noise = rng.standard_normal(n) if noise_kind == "white" else _pink_noise(n, rng)
    p_signal = _active_power(clip.samples)
    p_target = p_signal / 10.0 ** (snr_db / 10.0)
    noise *= math.sqrt(p_target / float(np.mean(noise ** 2)))
    return AudioClip(np.clip(clip.samples + noise, -1.0, 1.0), clip.sample_rate)


def add_reverb(clip: AudioClip, t60_s: float, seed: int) -> AudioClip:
    """Convolve with a synthetic RIR (direct path + decaying noise tail)."""
    if not (0.1 <= t60_s <= 1.5):
        raise ValueError("t60 must be in [0.1, 1.5] s")
    rng = np.random.default_rng(seed)
    tail_len = int(round(1.5 * t60_s * SAMPLE_RATE))
    decay = math.log(1000.0) / t60_s  # 60 dB amplitude decay over t60
    t = np.arange(1, tail_len + 1) / SAMPLE_RATE
    rir = np.concatenate([[1.0],
                          REVERB_TAIL_GAIN * np.exp(-decay * t)
                          * rng.standard_normal(tail_len)])
    wet = fftconvolve(clip.samples, rir)[: len(clip.samples)]
    peak_in = np.abs(clip.samples).max()
    wet *= peak_in / np.abs(wet).max()
    return AudioClip(wet, clip.sample_rate)


def packet_loss(clip: AudioClip, loss_rate: float, seed: int) -> AudioClip:
    """Zero out 20 ms frames independently; 2 ms linear fades at boundaries."""
    if not (0.0 <= loss_rate < 1.0):
        raise ValueError("loss_rate must be in [0, 1)")
    if loss_rate == 0.0:
        return AudioClip(clip.samples.copy(), clip.sample_rate)
    rng = np.random.default_rng(seed)
    n = len(clip.samples)
    n_frames = -(-n // FRAME_LEN)
    lost = rng.random(n_frames) < loss_rate
    lost_samples = np.repeat(lost, FRAME_LEN)[:n]

    # distance (in samples) to the nearest lost sample, then a linear
    # ramp over FADE_LEN: lost -> 0, far-from-loss -> 1
    idx = np.arange(n, dtype=float)
    marked = np.where(lost_samples, idx, -np.inf)
    fwd = idx - np.maximum.accumulate(marked)
    marked = np.where(lost_samples, idx, np.inf)
    bwd = np.minimum.accumulate(marked[::-1])[::-1] - idx
    gain = np.minimum(np.minimum(fwd, bwd) / FADE_LEN, 1.0)
    return AudioClip(clip.samples * gain, clip.sample_rate)


def clip_distortion(clip: AudioClip, threshold: float) -> AudioClip:
    """Hard clamp to +/-threshold, rescaled back to the full range."""
    if not (0.0 < threshold <= 1.0):
        raise ValueError("threshold must be in (0, 1]")
    return AudioClip(np.clip(clip.samples, -threshold, threshold) / threshold,
                     clip.sample_rate)


def pseudo_mos(clean: AudioClip, degraded: AudioClip) -> float:
    """Intrusive label oracle: sigmoid of segmental SNR into [1, 5]."""
    seg = segmental_snr(clean, degraded)
    return 1.0 + 4.0 / (1.0 + math.exp(-LABEL_SLOPE * (seg - LABEL_MIDPOINT_DB)))


# ---- corpus assembly --------------------------------------------------------

def _apply(kind: str, clip: AudioClip, param: float, seed: int) -> AudioClip:
    if kind == "white" or kind == "pink":
        return add_noise_snr(clip, kind, param, seed)
    if kind == "reverb":
        return add_reverb(clip, param, seed)
    if kind == "loss":
        return packet_loss(clip, param, seed)
    if kind == "clip":
        return clip_distortion(clip, param)
    raise ValueError(f"unknown degradation {kind!r}")


def _tag(kind: str, param: float) -> str:
    # coarse parameter quantization so evaluation can group tags
    if kind in ("white", "pink"):
        return f"{kind}_snr{int(round(param / 5.0) * 5)}"
    if kind == "reverb":
        return f"reverb_t60_{round(param * 5.0) / 5.0:.1f}"
    if kind == "loss":
        return f"loss_{round(param * 10.0) / 10.0:.1f}"
    return f"clip_{round(param * 10.0) / 10.0:.1f}"


def build_corpus(config: CorpusConfig) -> Manifest:
    """Generate clips + labels under out_dir; byte-identical per (config)."""
    out = Path(config.out_dir)
    (out / "clean").mkdir(parents=True, exist_ok=True)
    (out / "degraded").mkdir(parents=True, exist_ok=True)

    weights = np.array([c.weight for c in config.conditions], dtype=float)
    weights /= weights.sum()

    records = []
    ref_rows = []
    for i in range(config.n_clips):
        clip_seed = (config.seed ^ _splitmix64(i)) & _MASK64
        clean = gen_clean(clip_seed, config.duration_s)
        rng = np.random.default_rng(_splitmix64(clip_seed ^ 0xC0FFEE))

        n_steps = 2 if rng.random() < config.chain_prob else 1
        picks = rng.choice(len(config.conditions), size=n_steps, replace=False,
                           p=weights)
        degraded = clean
        tags = []
        for j, ci in enumerate(picks):
            cond = config.conditions[int(ci)]
            param = float(rng.uniform(cond.lo, cond.hi))
            degraded = _apply(cond.kind, degraded,
                              param, _splitmix64(clip_seed ^ (j + 1)))
            tags.append(_tag(cond.kind, param))

        mos = pseudo_mos(clean, degraded)
        name = f"{i:04d}.wav"
        write_wav(clean, out / "clean" / name)
        write_wav(degraded, out / "degraded" / name)
        records.append(CorpusRecord(clip_path=f"degraded/{name}", mos=mos,
                                    enhanced_path=None,
                                    condition_tag="+".join(tags)))
        ref_rows.append((f"degraded/{name}", f"clean/{name}"))

    write_manifest(records, out / "manifest.csv")
    with open(out / "clean_ref.csv", "w", newline="") as fh:
        fh.write("degraded_path,clean_path\n")
        for deg, cln in ref_rows:
            fh.write(f"{deg},{cln}\n")
    # reload so returned labels match the on-disk quantization
    return load_manifest(out / "manifest.csv")
