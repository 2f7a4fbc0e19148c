"""MOS regression training: optimizer, seeded loop, checkpointing.

The loop caches features for the whole manifest up front (they never
change across epochs), pads whole clips to the batch maximum with a frame
mask, early-stops on validation RMSE, and snapshots the best-val state.
A checkpoint is self-describing: an 8-byte magic, a JSON header with the
configs, training metadata, and a tensor directory, then a little-endian
float32 payload.  Round trips are bit-exact.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio_io import Manifest
from .dsp import StftConfig
from .metrics import pcc, rmse, srcc
from .model import ModelConfig, QualityRegressor
from .pipeline import EnhancerChoice, extract_features, load_clean_refs

CKPT_MAGIC = b"RSQACKPT"
CKPT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 4
    max_epochs: int = 100
    patience: int = 10
    seed: int = 0
    val_fraction: float = 0.2
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not (0.0 < self.val_fraction < 1.0):
            raise ValueError("val_fraction must be in (0, 1)")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 0:
            raise ValueError("invalid loop sizes")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


def mse_loss(pred: np.ndarray, target: np.ndarray):
    """Mean squared error and its gradient 2(pred-target)/n."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape or pred.size < 1:
        raise ValueError("length mismatch")
    d = pred - target
    return float(np.mean(d * d)), 2.0 * d / d.size


def adam_step(value: np.ndarray, grad: np.ndarray, m: np.ndarray,
              v: np.ndarray, t: int, lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8):
    """One Adam update (in place) with bias correction; t counts from 1."""
    if t < 1:
        raise ValueError("step count starts at 1")
    if grad.shape != value.shape or m.shape != value.shape or v.shape != value.shape:
        raise ValueError("shape mismatch")
    m[...] = beta1 * m + (1.0 - beta1) * grad
    v[...] = beta2 * v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    value -= lr * m_hat / (np.sqrt(v_hat) + eps)


class Adam:
    def __init__(self, params: list, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in params]
        self.v = [np.zeros_like(p.value) for p in params]

    def step(self):
        self.t += 1
        for p, m, v in zip(self.params, self.m, self.v):
            adam_step(p.value, p.grad, m, v, self.t, self.lr,
                      self.beta1, self.beta2, self.eps)

    def state_arrays(self) -> dict:
        out = {}
        for p, m, v in zip(self.params, self.m, self.v):
            out[f"opt.m.{p.name}"] = m
            out[f"opt.v.{p.name}"] = v
        return out


class Sgd:
    def __init__(self, params: list, lr: float):
        self.params = params
        self.lr = lr
        self.t = 0

    def step(self):
        self.t += 1
        for p in self.params:
            p.value -= self.lr * p.grad

    def state_arrays(self) -> dict:
        return {}


@dataclass
class Checkpoint:
    model_config: ModelConfig
    stft_config: StftConfig
    tensors: dict            # name -> float32 ndarray (params + optimizer)
    metadata: dict           # epoch, best_val_rmse, seed, enhancer, ...

    def param_tensors(self) -> dict:
        return {k: v for k, v in self.tensors.items() if not k.startswith("opt.")}


def save_checkpoint(ckpt: Checkpoint, path: Path):
    directory = []
    payload = bytearray()
    for name, arr in ckpt.tensors.items():
        raw = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        directory.append({"name": name, "shape": list(arr.shape),
                          "offset": len(payload), "size": len(raw)})
        payload.extend(raw)
    header = {
        "format_version": CKPT_VERSION,
        "model_config": {
            "block_channels": list(ckpt.model_config.block_channels),
            "convs_per_block": ckpt.model_config.convs_per_block,
            "kernel": ckpt.model_config.kernel,
            "freq_stride_last_conv": ckpt.model_config.freq_stride_last_conv,
            "fc_hidden": ckpt.model_config.fc_hidden,
            "dropout_p": ckpt.model_config.dropout_p,
            "input_channels": ckpt.model_config.input_channels,
            "input_bins": ckpt.model_config.input_bins,
        },
        "stft_config": {"fft_size": ckpt.stft_config.fft_size,
                        "hop": ckpt.stft_config.hop},
        "train": ckpt.metadata,
        "tensors": directory,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(bytes(payload))


def load_checkpoint(path: Path) -> Checkpoint:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != CKPT_MAGIC:
            raise ValueError("bad checkpoint magic")
        (header_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        if header.get("format_version") != CKPT_VERSION:
            raise ValueError(f"unsupported checkpoint version "
                             f"{header.get('format_version')!r}")
        payload = fh.read()
    tensors = {}
    for entry in header["tensors"]:
        off, size = entry["offset"], entry["size"]
        if off + size > len(payload):
            raise ValueError("truncated checkpoint payload")
        n_items = int(np.prod(entry["shape"])) if entry["shape"] else 1
        if n_items * 4 != size:
            raise ValueError(f"tensor {entry['name']!r}: header shape "
                             "inconsistent with payload length")
        arr = np.frombuffer(payload[off : off + size], dtype="<f4")
        tensors[entry["name"]] = arr.reshape(entry["shape"]).copy()
    return Checkpoint(model_config=ModelConfig(**header["model_config"]),
                      stft_config=StftConfig(**header["stft_config"]),
                      tensors=tensors, metadata=header["train"])


def model_from_checkpoint(ckpt: Checkpoint) -> QualityRegressor:
    model = QualityRegressor(ckpt.model_config, seed=0)
    model.load_state_arrays(ckpt.param_tensors())
    return model


def enhancer_from_checkpoint(ckpt: Checkpoint) -> EnhancerChoice:
    return EnhancerChoice.from_dict(ckpt.metadata["enhancer"])


# ---- training loop ----------------------------------------------------------

def _load_features(manifest: Manifest, choice: EnhancerChoice,
                   stft_config: StftConfig):
    refs = load_clean_refs(Path(manifest.root_dir) / "clean_ref.csv")
    feats, labels = [], []
    for rec in manifest.records:
        try:
            ft = extract_features(rec, manifest.root_dir, choice, stft_config,
                                  clean_refs=refs)
        except OSError as exc:
            raise RuntimeError(f"cannot read {rec.clip_path!r}: {exc}") from exc
        feats.append(ft.values.astype(np.float32))
        labels.append(rec.mos)
    return feats, np.array(labels, dtype=np.float64)


def _batch(feats: list, idx: np.ndarray):
    t_max = max(feats[i].shape[1] for i in idx)
    x = np.zeros((len(idx), 2, t_max, feats[idx[0]].shape[2]), dtype=np.float32)
    mask = np.zeros((len(idx), t_max), dtype=np.float32)
    for row, i in enumerate(idx):
        t = feats[i].shape[1]
        x[row, :, :t] = feats[i]
        mask[row, :t] = 1.0
    return x, mask


def _predict_clips(model: QualityRegressor, feats: list, idx) -> np.ndarray:
    out = np.empty(len(idx))
    for row, i in enumerate(idx):
        scores, _ = model.forward(feats[i][None])
        out[row] = scores[0]
    return out


def train(manifest: Manifest, choice: EnhancerChoice, train_config: TrainConfig,
          model_config: ModelConfig = ModelConfig(),
          stft_config: StftConfig = StftConfig(),
          out_path: Path | None = None,
          log_path: Path | None = None) -> Checkpoint:
    """Train the regressor; returns (and optionally writes) the best-val
    checkpoint.  Deterministic given (manifest, configs)."""
    if len(manifest.records) < 5:
        raise ValueError("need at least 5 manifest records")
    feats, labels = _load_features(manifest, choice, stft_config)

    n = len(feats)
    split_rng = np.random.default_rng(train_config.seed)
    perm = split_rng.permutation(n)
    val_n = max(1, int(round(train_config.val_fraction * n)))
    val_idx, train_idx = perm[:val_n], perm[val_n:]
    if len(train_idx) < 1:
        raise ValueError("validation split leaves no training clips")

    model = QualityRegressor(model_config, seed=train_config.seed)
    if train_config.optimizer == "adam":
        opt = Adam(model.parameters(), train_config.lr, train_config.beta1,
                   train_config.beta2, train_config.eps)
    else:
        opt = Sgd(model.parameters(), train_config.lr)
    drop_rng = np.random.default_rng([train_config.seed, 0xD0])

    best_val = math.inf
    best_state = None
    best_epoch = 0
    stale = 0
    log_rows = []
    for epoch in range(1, train_config.max_epochs + 1):
        order = np.random.default_rng([train_config.seed, 0x5F, epoch]) \
            .permutation(train_idx)
        sq_err_sum = 0.0
        for start in range(0, len(order), train_config.batch_size):
            idx = order[start : start + train_config.batch_size]
            x, mask = _batch(feats, idx)
            scores, cache = model.forward(x, mask, train=True, rng=drop_rng)
            loss, dscores = mse_loss(scores, labels[idx])
            sq_err_sum += loss * len(idx)
            model.zero_grad()
            model.backward(dscores, cache)
            opt.step()
        train_loss = sq_err_sum / len(order)
        if not math.isfinite(train_loss):
            raise RuntimeError(f"divergence at epoch {epoch}")

        val_pred = _predict_clips(model, feats, val_idx)
        val_true = labels[val_idx]
        val_rmse = rmse(val_pred, val_true)
        try:
            val_pcc = pcc(val_pred, val_true)
            val_srcc = srcc(val_pred, val_true)
        except ValueError:
            val_pcc = val_srcc = float("nan")
        log_rows.append((epoch, train_loss, val_rmse, val_pcc, val_srcc))

        if val_rmse < best_val:
            best_val = val_rmse
            best_epoch = epoch
            best_state = ({p.name: p.value.copy() for p in model.parameters()},
                          {k: a.copy() for k, a in opt.state_arrays().items()},
                          opt.t)
            stale = 0
        else:
            stale += 1
            if stale > train_config.patience:
                break

    params, opt_state, opt_t = best_state
    tensors = dict(params)
    tensors.update(opt_state)
    metadata = {
        "epoch": best_epoch,
        "epochs_run": log_rows[-1][0],
        "best_val_rmse": best_val,
        "seed": train_config.seed,
        "optimizer": train_config.optimizer,
        "opt_step": opt_t,
        "lr": train_config.lr,
        "batch_size": train_config.batch_size,
        "val_fraction": train_config.val_fraction,
        "enhancer": choice.to_dict(),
    }
    ckpt = Checkpoint(model_config=model_config, stft_config=stft_config,
                      tensors=tensors, metadata=metadata)
    if out_path is not None:
        out_path = Path(out_path)
        save_checkpoint(ckpt, out_path)
        if log_path is None:
            log_path = out_path.parent / "train_log.csv"
    if log_path is not None:
        with open(log_path, "w", newline="") as fh:
            fh.write("epoch,train_loss,val_rmse,val_pcc,val_srcc\n")
            for row in log_rows:
                fh.write("%d,%.8f,%.8f,%.8f,%.8f\n" % row)
    return ckpt
