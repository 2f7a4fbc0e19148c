#!/usr/bin/env python3
"""Residual-channel ablation: train with and without the residual input on a
fresh synthetic corpus and compare test-set metrics over several seeds.

Example:
    python scripts/run_ablation.py --work /tmp/ablation --seeds 3 \
        --train-clips 300 --test-clips 100 --duration 1.0 --epochs 8
"""

import argparse
import json
import time
from pathlib import Path

import numpy as np

from rsqa.audio_io import load_manifest
from rsqa.metrics import evaluate
from rsqa.pipeline import EnhancerChoice
from rsqa.sim import CorpusConfig, build_corpus
from rsqa.train import TrainConfig, train


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--work", type=Path, required=True, help="scratch directory")
    ap.add_argument("--seeds", type=int, default=3, help="training seeds to average")
    ap.add_argument("--train-clips", type=int, default=300)
    ap.add_argument("--test-clips", type=int, default=100)
    ap.add_argument("--duration", type=float, default=1.0, help="clip seconds")
    ap.add_argument("--epochs", type=int, default=8)
    ap.add_argument("--batch-size", type=int, default=4)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--corpus-seed", type=int, default=101)
    args = ap.parse_args()

    args.work.mkdir(parents=True, exist_ok=True)
    train_dir = args.work / "train"
    test_dir = args.work / "test"
    if not (train_dir / "manifest.csv").exists():
        print(f"building corpora under {args.work} ...")
        build_corpus(CorpusConfig(n_clips=args.train_clips, out_dir=train_dir,
                                  seed=args.corpus_seed, duration_s=args.duration))
        build_corpus(CorpusConfig(n_clips=args.test_clips, out_dir=test_dir,
                                  seed=args.corpus_seed + 101,
                                  duration_s=args.duration))
    train_man = load_manifest(train_dir / "manifest.csv")
    test_man = load_manifest(test_dir / "manifest.csv")

    results = {"residual": [], "ablation": []}
    for seed in range(args.seeds):
        for label, choice in (("residual", EnhancerChoice()),
                              ("ablation", EnhancerChoice(no_residual=True))):
            cfg = TrainConfig(lr=args.lr, batch_size=args.batch_size,
                              max_epochs=args.epochs, patience=args.epochs,
                              seed=seed)
            t0 = time.time()
            ckpt = train(train_man, choice, cfg)
            report = evaluate(test_man, ckpt)
            agg = report.aggregate
            results[label].append(agg)
            print(f"seed {seed} {label:9s}  rmse {agg['rmse']:.4f}  "
                  f"pcc {agg['pcc']:.4f}  srcc {agg['srcc']:.4f}  "
                  f"({time.time() - t0:.0f}s, best epoch "
                  f"{ckpt.metadata['epoch']})")

    summary = {}
    for label, rows in results.items():
        summary[label] = {k: float(np.mean([r[k] for r in rows]))
                          for k in ("rmse", "pcc", "srcc")}
    d_pcc = summary["residual"]["pcc"] - summary["ablation"]["pcc"]
    d_rmse = summary["ablation"]["rmse"] - summary["residual"]["rmse"]
    print(f"\nmean over {args.seeds} seeds:")
    for label in ("residual", "ablation"):
        s = summary[label]
        print(f"  {label:9s}  rmse {s['rmse']:.4f}  pcc {s['pcc']:.4f}  "
              f"srcc {s['srcc']:.4f}")
    print(f"  delta      rmse {-d_rmse:+.4f}  pcc {d_pcc:+.4f}")

    out = args.work / "ablation.json"
    out.write_text(json.dumps({"summary": summary, "runs": results}, indent=2))
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
