"""Command-line interface: synth / train / eval / predict / gradcheck.

Exit codes: 0 success, 1 runtime failure, 2 usage error (argparse).
Configuration comes from an optional JSON file with flat dotted keys
("train.lr", "enhancer.beta", ...); command-line flags override file
values.  Unknown config keys are rejected.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .audio_io import load_manifest, read_wav
from .dsp import StftConfig
from .enhance import SpectralGateParams
from .gradcheck import format_table, run_suite
from .metrics import emit_plot_data, evaluate
from .model import ModelConfig
from .pipeline import ENHANCER_KINDS, EnhancerChoice, features_from_clip
from .sim import CorpusConfig, build_corpus
from .train import (TrainConfig, load_checkpoint, model_from_checkpoint, train)

_CONFIG_DEFAULTS = {
    "train.lr": 1e-3,
    "train.batch_size": 4,
    "train.max_epochs": 100,
    "train.patience": 10,
    "train.seed": 0,
    "train.val_fraction": 0.2,
    "train.optimizer": "adam",
    "model.block_channels": [16, 32, 64, 128],
    "model.dropout_p": 0.3,
    "stft.fft_size": 512,
    "stft.hop": 256,
    "enhancer.kind": "spectral-gate",
    "enhancer.beta": 1.5,
    "enhancer.gain_floor": 0.05,
    "enhancer.noise_quantile": 0.10,
    "enhancer.margin": 0.0,
    "enhancer.no_residual": False,
}


class RunConfig:
    """Merged view of the JSON config file and command-line overrides."""

    def __init__(self, path: Path | None = None, overrides: dict | None = None):
        values = dict(_CONFIG_DEFAULTS)
        if path is not None:
            loaded = json.loads(Path(path).read_text())
            unknown = sorted(set(loaded) - set(values))
            if unknown:
                raise ValueError(f"unknown config keys: {', '.join(unknown)}")
            values.update(loaded)
        for key, val in (overrides or {}).items():
            if val is not None:
                values[key] = val
        self.values = values

    def train_config(self) -> TrainConfig:
        v = self.values
        return TrainConfig(lr=v["train.lr"], batch_size=v["train.batch_size"],
                           max_epochs=v["train.max_epochs"],
                           patience=v["train.patience"], seed=v["train.seed"],
                           val_fraction=v["train.val_fraction"],
                           optimizer=v["train.optimizer"])

    def model_config(self) -> ModelConfig:
        return ModelConfig(block_channels=tuple(self.values["model.block_channels"]),
                           dropout_p=self.values["model.dropout_p"])

    def stft_config(self) -> StftConfig:
        return StftConfig(fft_size=self.values["stft.fft_size"],
                          hop=self.values["stft.hop"])

    def enhancer_choice(self) -> EnhancerChoice:
        v = self.values
        params = SpectralGateParams(beta=v["enhancer.beta"],
                                    gain_floor=v["enhancer.gain_floor"],
                                    noise_quantile=v["enhancer.noise_quantile"])
        return EnhancerChoice(kind=v["enhancer.kind"], params=params,
                              margin=v["enhancer.margin"],
                              no_residual=v["enhancer.no_residual"])


def cmd_synth(args) -> int:
    cfg = CorpusConfig(n_clips=args.count, out_dir=Path(args.out),
                       duration_s=args.duration, seed=args.seed)
    manifest = build_corpus(cfg)
    mos = np.array([r.mos for r in manifest.records])
    print(f"manifest: {Path(args.out) / 'manifest.csv'}")
    print(f"clips: {len(mos)}  mos mean: {mos.mean():.3f}  std: {mos.std():.3f}")
    return 0


def cmd_train(args) -> int:
    overrides = {
        "enhancer.kind": args.enhancer,
        "train.seed": args.seed,
    }
    if args.no_residual:
        overrides["enhancer.no_residual"] = True
    run = RunConfig(args.config, overrides)
    manifest = load_manifest(Path(args.manifest))
    ckpt = train(manifest, run.enhancer_choice(), run.train_config(),
                 run.model_config(), run.stft_config(), out_path=Path(args.out))
    print(f"checkpoint: {args.out}")
    print(f"best val RMSE {ckpt.metadata['best_val_rmse']:.4f} "
          f"at epoch {ckpt.metadata['epoch']} "
          f"({ckpt.metadata['epochs_run']} epochs run)")
    return 0


def _fmt_metric(value) -> str:
    return "nan" if value is None else f"{value:.4f}"


def cmd_eval(args) -> int:
    manifest = load_manifest(Path(args.manifest))
    ckpt = load_checkpoint(Path(args.ckpt))
    report = evaluate(manifest, ckpt)
    report.save(Path(args.report))
    if args.plots:
        emit_plot_data(report, Path(args.plots))
    agg = report.aggregate
    print(f"RMSE={_fmt_metric(agg['rmse'])} PCC={_fmt_metric(agg['pcc'])} "
          f"SRCC={_fmt_metric(agg['srcc'])}")
    return 0


def cmd_predict(args) -> int:
    ckpt = load_checkpoint(Path(args.ckpt))
    model = model_from_checkpoint(ckpt)
    run = RunConfig(None, {"enhancer.kind": args.enhancer} if args.enhancer else {})
    choice = run.enhancer_choice()
    clip = read_wav(Path(args.wav))
    features = features_from_clip(clip, choice, ckpt.stft_config)
    print(f"{model.predict(features):.3f}")
    return 0


def cmd_gradcheck(args) -> int:
    rows = run_suite(seed=args.seed)
    print(format_table(rows))
    return 0 if all(r.ok for r in rows) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rsqa",
        description="Residual-guided non-intrusive speech quality assessment.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labeled corpus")
    p.add_argument("--out", required=True, help="output corpus directory")
    p.add_argument("--count", required=True, type=int, help="number of clips")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--duration", type=float, default=3.0, help="clip seconds")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("train", help="train the MOS regressor")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--config", type=Path, default=None, help="JSON config file")
    p.add_argument("--enhancer", choices=ENHANCER_KINDS, default=None)
    p.add_argument("--no-residual", action="store_true",
                   help="ablation: zero residual channel")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--report", required=True, help="output report JSON")
    p.add_argument("--plots", default=None, help="directory for plot CSVs")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("predict", help="predict MOS for one wav file")
    p.add_argument("--wav", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--enhancer", choices=ENHANCER_KINDS, default=None)
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
