import numpy as np
import pytest

from rsqa.audio_io import AudioClip
from rsqa.sim import CorpusConfig, build_corpus


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tone_clip():
    """0.5 s, 1 kHz sine at 16 kHz."""
    t = np.arange(8000) / 16000.0
    return AudioClip(0.4 * np.sin(2 * np.pi * 1000.0 * t), 16000)


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    """Shared 8-clip corpus for pipeline-level tests."""
    out = tmp_path_factory.mktemp("tiny_corpus")
    manifest = build_corpus(CorpusConfig(n_clips=8, out_dir=out, seed=42,
                                         duration_s=0.8))
    return manifest
