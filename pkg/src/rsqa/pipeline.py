"""Shared clip -> feature pipeline: enhance, gate, residual, spectrogram.

Training, evaluation, and one-shot prediction all call extract_features so
the regressor always sees features produced the same way.  The residual
channel can be ablated (no_residual) in which case enhancement is skipped
and channel 1 is the spectrogram of an all-zero waveform.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio_io import AudioClip, CorpusRecord, read_wav
from .dsp import FeatureTensor, StftConfig, assemble_features
from .enhance import (SpectralGateParams, external_enhanced, gated_residual,
                      spectral_gate_enhance)

ENHANCER_KINDS = ("spectral-gate", "external", "none")


@dataclass(frozen=True)
class EnhancerChoice:
    kind: str = "spectral-gate"
    params: SpectralGateParams = field(default_factory=SpectralGateParams)
    margin: float = 0.0
    no_residual: bool = False

    def __post_init__(self):
        if self.kind not in ENHANCER_KINDS:
            raise ValueError(f"unknown enhancer kind {self.kind!r}")
        if self.kind == "none":  # no enhancer means nothing to subtract
            object.__setattr__(self, "no_residual", True)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "beta": self.params.beta,
                "gain_floor": self.params.gain_floor,
                "noise_quantile": self.params.noise_quantile,
                "margin": self.margin, "no_residual": self.no_residual}

    @classmethod
    def from_dict(cls, d: dict) -> "EnhancerChoice":
        params = SpectralGateParams(beta=d["beta"], gain_floor=d["gain_floor"],
                                    noise_quantile=d["noise_quantile"])
        return cls(kind=d["kind"], params=params, margin=d["margin"],
                   no_residual=d["no_residual"])


def load_clean_refs(path: Path) -> dict:
    """degraded_path -> clean_path map; empty when the file is absent."""
    path = Path(path)
    if not path.exists():
        return {}
    refs = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["degraded_path", "clean_path"]:
            raise ValueError(f"bad clean_ref header in {path}")
        for row in reader:
            if row:
                refs[row[0]] = row[1]
    return refs


def extract_features(record: CorpusRecord, root: Path, choice: EnhancerChoice,
                     stft_config: StftConfig = StftConfig(),
                     clean_refs: dict | None = None) -> FeatureTensor:
    """Impaired + residual feature tensor for one manifest record.

    Gating needs a clean reference; it applies only to records present in
    clean_refs (training/eval on the synthetic corpus).  Deployment-style
    calls pass no refs and the gate is bypassed.
    """
    root = Path(root)
    impaired = read_wav(root / record.clip_path)
    return features_from_clip(impaired, choice, stft_config,
                              record=record, root=root,
                              clean_refs=clean_refs)


def features_from_clip(impaired: AudioClip, choice: EnhancerChoice,
                       stft_config: StftConfig = StftConfig(),
                       record: CorpusRecord | None = None,
                       root: Path | None = None,
                       clean_refs: dict | None = None) -> FeatureTensor:
    if choice.no_residual:
        resid = AudioClip(np.zeros_like(impaired.samples), impaired.sample_rate)
        return assemble_features(impaired, resid, stft_config)

    if choice.kind == "spectral-gate":
        enhanced = spectral_gate_enhance(impaired, choice.params, stft_config)
    else:
        if record is None or root is None:
            raise ValueError("external enhancement needs a manifest record")
        enhanced = external_enhanced(record, root)

    reference = None
    if clean_refs and record is not None and record.clip_path in clean_refs:
        reference = read_wav(Path(root) / clean_refs[record.clip_path])

    resid = gated_residual(impaired, enhanced, choice.margin, reference)
    n = len(resid.samples)
    trimmed = AudioClip(impaired.samples[:n], impaired.sample_rate)
    return assemble_features(trimmed, resid, stft_config)
