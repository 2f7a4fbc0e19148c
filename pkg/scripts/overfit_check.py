#!/usr/bin/env python3
"""Overfit sanity: memorize a tiny synthetic manifest and report train RMSE.

A regressor that cannot drive its training error to ~0 on 8 clips has a bug
somewhere (features, gradients, or the loop); this is the fastest whole-
pipeline smoke test we have.

Example:
    python scripts/overfit_check.py --work /tmp/overfit --epochs 300
"""

import argparse
import math
from pathlib import Path

from rsqa.audio_io import load_manifest
from rsqa.model import ModelConfig
from rsqa.pipeline import EnhancerChoice
from rsqa.sim import CorpusConfig, build_corpus
from rsqa.train import TrainConfig, train


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--work", type=Path, required=True)
    ap.add_argument("--clips", type=int, default=8)
    ap.add_argument("--duration", type=float, default=0.6)
    ap.add_argument("--epochs", type=int, default=300)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--corpus-seed", type=int, default=42)
    args = ap.parse_args()

    args.work.mkdir(parents=True, exist_ok=True)
    corpus = args.work / "corpus"
    if not (corpus / "manifest.csv").exists():
        build_corpus(CorpusConfig(n_clips=args.clips, out_dir=corpus,
                                  seed=args.corpus_seed,
                                  duration_s=args.duration))
    manifest = load_manifest(corpus / "manifest.csv")

    # dropout off: memorization, not generalization, is the point here
    cfg = TrainConfig(lr=args.lr, batch_size=4, max_epochs=args.epochs,
                      patience=args.epochs, seed=args.seed, val_fraction=0.2)
    ckpt = train(manifest, EnhancerChoice(), cfg,
                 model_config=ModelConfig(dropout_p=0.0),
                 out_path=args.work / "overfit.ckpt")

    log = (args.work / "train_log.csv").read_text().splitlines()[1:]
    losses = [float(row.split(",")[1]) for row in log]
    best = math.sqrt(min(losses))
    print(f"epochs run: {len(losses)}  best train RMSE: {best:.4f}  "
          f"final: {math.sqrt(losses[-1]):.4f}")
    print("PASS (< 0.1)" if best < 0.1 else "FAIL (>= 0.1)")
    return 0 if best < 0.1 else 1


if __name__ == "__main__":
    raise SystemExit(main())
