"""CNN MOS regressor over two-channel log-spectrogram features.

Four conv blocks (each: two stride-1 3x3 convs, then one conv with
frequency stride 3), all relu, followed by a per-frame FC head and mean
pooling over time.  With 257 input bins the frequency axis traces
257 -> 86 -> 29 -> 10 -> 4, so the head sees 128*4 = 512 features per
frame.  Frame scores are averaged into one utterance score; predictions
are clamped to the MOS range [1, 5] at inference only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .dsp import FeatureTensor

MOS_MIN = 1.0
MOS_MAX = 5.0


@dataclass(frozen=True)
class ModelConfig:
    block_channels: tuple = (16, 32, 64, 128)
    convs_per_block: int = 3
    kernel: int = 3
    freq_stride_last_conv: int = 3
    fc_hidden: int = 128
    dropout_p: float = 0.3
    input_channels: int = 2
    input_bins: int = 257

    def __post_init__(self):
        object.__setattr__(self, "block_channels", tuple(int(c) for c in self.block_channels))
        if self.convs_per_block != 3:
            raise ValueError("blocks are fixed at three convs each")
        if self.fc_hidden != 128:
            raise ValueError("head width is fixed at 128")
        if self.kernel != 3:
            raise ValueError("kernel size is fixed at 3x3")
        if len(self.block_channels) < 1 or any(c < 1 for c in self.block_channels):
            raise ValueError("block_channels must be positive")
        if self.freq_stride_last_conv < 1:
            raise ValueError("freq_stride_last_conv must be >= 1")
        if not (0.0 <= self.dropout_p < 1.0):
            raise ValueError("dropout_p must be in [0, 1)")
        if self.input_channels < 1 or self.input_bins < 1:
            raise ValueError("input dimensions must be positive")

    def freq_sizes(self) -> list:
        """Frequency-bin count after each block (ceil division by the stride)."""
        sizes = [self.input_bins]
        for _ in self.block_channels:
            sizes.append(-(-sizes[-1] // self.freq_stride_last_conv))
        return sizes

    @property
    def flat_per_frame(self) -> int:
        return self.block_channels[-1] * self.freq_sizes()[-1]


def _he_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


class QualityRegressor:
    """Table of conv blocks + FC head, with exact hand-derived backward."""

    def __init__(self, config: ModelConfig = ModelConfig(), seed: int = 0,
                 dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        self.params: list[nn.Parameter] = []
        self._conv_specs = []  # (w_param, b_param, stride_f) in forward order

        c_in = config.input_channels
        for bi, c_out in enumerate(config.block_channels):
            for ci in range(config.convs_per_block):
                stride = config.freq_stride_last_conv if ci == config.convs_per_block - 1 else 1
                w = self._add(f"block{bi}.conv{ci}.w",
                              _he_uniform(rng, (c_out, c_in, 3, 3), c_in * 9))
                b = self._add(f"block{bi}.conv{ci}.b", np.zeros(c_out))
                self._conv_specs.append((w, b, stride))
                c_in = c_out

        n_flat = config.flat_per_frame
        self.fc1_w = self._add("fc1.w", _he_uniform(rng, (config.fc_hidden, n_flat), n_flat))
        self.fc1_b = self._add("fc1.b", np.zeros(config.fc_hidden))
        self.fc2_w = self._add("fc2.w", _he_uniform(rng, (1, config.fc_hidden), config.fc_hidden))
        self.fc2_b = self._add("fc2.b", np.zeros(1))

    def _add(self, name: str, value: np.ndarray) -> nn.Parameter:
        p = nn.Parameter(name, np.asarray(value, dtype=self.dtype))
        self.params.append(p)
        return p

    def parameters(self) -> list:
        return list(self.params)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def num_parameters(self) -> int:
        return sum(p.value.size for p in self.params)

    # ---- forward / backward -------------------------------------------------

    def forward(self, x: np.ndarray, mask: np.ndarray | None = None, *,
                train: bool = False, rng: np.random.Generator | None = None):
        """Score a batch.

        x: (N, 2, T, 257); mask: (N, T) with 1 on real frames, or None for
        all-real.  Returns (scores (N,), cache).  Scores are unclamped so the
        loss gradient is never cut off at the range edges.
        """
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim != 4 or x.shape[1] != self.config.input_channels \
                or x.shape[3] != self.config.input_bins:
            raise ValueError("wrong input shape: expected (N, %d, T, %d)"
                             % (self.config.input_channels, self.config.input_bins))
        n, _, t, _ = x.shape
        if mask is None:
            mask = np.ones((n, t), dtype=self.dtype)
        else:
            mask = np.asarray(mask, dtype=self.dtype)
            if mask.shape != (n, t):
                raise ValueError("mask shape must match (N, T)")

        conv_caches = []
        h = x
        for w, b, stride in self._conv_specs:
            h, ccache = nn.conv2d_forward(h, w.value, b.value, stride_f=stride)
            h, rmask = nn.relu_forward(h)
            conv_caches.append((ccache, rmask))

        # (N, C, T, F) -> per-frame feature rows (N*T, C*F)
        h_shape = h.shape
        flat = h.transpose(0, 2, 1, 3).reshape(n * t, -1)

        z1, fc1_cache = nn.dense_forward(flat, self.fc1_w.value, self.fc1_b.value)
        a1, relu_fc = nn.relu_forward(z1)
        d1, drop_mask = nn.dropout_forward(a1, self.config.dropout_p, train, rng)
        z2, fc2_cache = nn.dense_forward(d1, self.fc2_w.value, self.fc2_b.value)
        frames = z2.reshape(n, t)
        scores, pool_cache = nn.masked_mean_forward(frames, mask)

        cache = {"convs": conv_caches, "h_shape": h_shape, "fc1": fc1_cache,
                 "relu_fc": relu_fc, "drop": drop_mask, "fc2": fc2_cache,
                 "pool": pool_cache, "frames": frames, "nt": (n, t)}
        return scores, cache

    def backward(self, dscores: np.ndarray, cache) -> np.ndarray:
        """Accumulate parameter gradients; returns gradient w.r.t. the input."""
        n, t = cache["nt"]
        dframes = nn.masked_mean_backward(np.asarray(dscores, dtype=self.dtype),
                                          cache["pool"])
        dz2 = dframes.reshape(n * t, 1)
        dd1, dw2, db2 = nn.dense_backward(dz2, cache["fc2"], self.fc2_w.value)
        self.fc2_w.grad += dw2
        self.fc2_b.grad += db2
        da1 = nn.dropout_backward(dd1, cache["drop"], self.config.dropout_p)
        dz1 = nn.relu_backward(da1, cache["relu_fc"])
        dflat, dw1, db1 = nn.dense_backward(dz1, cache["fc1"], self.fc1_w.value)
        self.fc1_w.grad += dw1
        self.fc1_b.grad += db1

        _, c, _, f = cache["h_shape"]
        dh = dflat.reshape(n, t, c, f).transpose(0, 2, 1, 3)
        for (w, b, _), (ccache, rmask) in zip(reversed(self._conv_specs),
                                              reversed(cache["convs"])):
            dh = nn.relu_backward(dh, rmask)
            dh, dw, db = nn.conv2d_backward(dh, ccache)
            w.grad += dw
            b.grad += db
        return dh

    # ---- inference ----------------------------------------------------------

    def frame_scores(self, x: np.ndarray) -> np.ndarray:
        """Per-frame scores (N, T) in eval mode, before pooling."""
        _, cache = self.forward(x, train=False)
        return cache["frames"]

    def predict(self, features: FeatureTensor) -> float:
        """MOS for one clip, clamped to [1, 5]."""
        x = features.values[None]
        scores, _ = self.forward(x, train=False)
        return float(np.clip(scores[0], MOS_MIN, MOS_MAX))

    def predict_batch(self, x: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
        scores, _ = self.forward(x, mask, train=False)
        return np.clip(scores, MOS_MIN, MOS_MAX)

    # ---- state --------------------------------------------------------------

    def state_arrays(self) -> dict:
        """Name -> value view, in stable parameter order."""
        return {p.name: p.value for p in self.params}

    def load_state_arrays(self, arrays: dict):
        for p in self.params:
            if p.name not in arrays:
                raise ValueError(f"missing tensor {p.name!r}")
            a = np.asarray(arrays[p.name], dtype=self.dtype)
            if a.shape != p.value.shape:
                raise ValueError(f"shape mismatch for {p.name!r}: "
                                 f"{a.shape} vs {p.value.shape}")
            p.value[...] = a
