"""Evaluation metrics (RMSE / Pearson / Spearman) and report generation.

Spearman is computed as Pearson over average-tie ranks rather than the
rank-difference shortcut, which is wrong in the presence of ties.  Reports
carry per-clip rows, corpus-level aggregates, and per-condition-tag
aggregates; aggregates that cannot be computed (fewer than two clips, or
zero variance) are recorded as None rather than fabricated.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio_io import Manifest

MOS_LO, MOS_HI = 1.0, 5.0
N_HIST_BINS = 20


def _as_pair(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or x.shape != y.shape:
        raise ValueError("length mismatch")
    return x, y


def rmse(x, y) -> float:
    x, y = _as_pair(x, y)
    if x.size < 1:
        raise ValueError("need at least one pair")
    return float(np.sqrt(np.mean((x - y) ** 2)))


def pcc(x, y) -> float:
    x, y = _as_pair(x, y)
    if x.size < 2:
        raise ValueError("need at least two pairs")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = np.dot(dx, dx)
    sy = np.dot(dy, dy)
    if sx == 0.0 or sy == 0.0:
        raise ValueError("zero variance")
    return float(np.dot(dx, dy) / np.sqrt(sx * sy))


def _average_ranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks; tied values share the mean of the ranks they span."""
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x))
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and x[order[j + 1]] == x[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def srcc(x, y) -> float:
    x, y = _as_pair(x, y)
    if x.size < 2:
        raise ValueError("need at least two pairs")
    return pcc(_average_ranks(x), _average_ranks(y))


# ---- reports ----------------------------------------------------------------

@dataclass(frozen=True)
class EvalRow:
    clip_path: str
    true_mos: float
    predicted_mos: float
    condition_tag: str


@dataclass(frozen=True)
class EvalReport:
    rows: tuple
    aggregate: dict      # {"rmse": float|None, "pcc": ..., "srcc": ...}
    by_condition: dict   # tag -> aggregate-shaped dict

    def to_json(self) -> str:
        return json.dumps({
            "rows": [{"clip_path": r.clip_path, "true_mos": r.true_mos,
                      "predicted_mos": r.predicted_mos,
                      "condition_tag": r.condition_tag} for r in self.rows],
            "aggregate": self.aggregate,
            "by_condition": self.by_condition,
        }, indent=2, sort_keys=True)

    def save(self, path: Path):
        Path(path).write_text(self.to_json() + "\n")


def _aggregate(true_mos: np.ndarray, pred_mos: np.ndarray) -> dict:
    out = {"rmse": None, "pcc": None, "srcc": None}
    for name, fn in (("rmse", rmse), ("pcc", pcc), ("srcc", srcc)):
        try:
            out[name] = fn(true_mos, pred_mos)
        except ValueError:
            pass
    return out


def build_report(rows: list) -> EvalReport:
    true_mos = np.array([r.true_mos for r in rows])
    pred_mos = np.array([r.predicted_mos for r in rows])
    by_cond = {}
    for tag in sorted({r.condition_tag for r in rows}):
        sel = [r for r in rows if r.condition_tag == tag]
        by_cond[tag] = _aggregate(np.array([r.true_mos for r in sel]),
                                  np.array([r.predicted_mos for r in sel]))
    return EvalReport(rows=tuple(rows),
                      aggregate=_aggregate(true_mos, pred_mos),
                      by_condition=by_cond)


def evaluate(manifest: Manifest, checkpoint, choice=None) -> EvalReport:
    """Predict every manifest clip with the checkpoint's own pipeline."""
    from .pipeline import load_clean_refs, extract_features  # avoid cycle
    from .train import enhancer_from_checkpoint, model_from_checkpoint

    model = model_from_checkpoint(checkpoint)
    if choice is None:
        choice = enhancer_from_checkpoint(checkpoint)
    refs = load_clean_refs(Path(manifest.root_dir) / "clean_ref.csv")
    rows = []
    for rec in manifest.records:
        ft = extract_features(rec, manifest.root_dir, choice,
                              checkpoint.stft_config, clean_refs=refs)
        rows.append(EvalRow(clip_path=rec.clip_path, true_mos=rec.mos,
                            predicted_mos=model.predict(ft),
                            condition_tag=rec.condition_tag))
    return build_report(rows)


def emit_plot_data(report: EvalReport, out_dir: Path):
    """scatter.csv (true vs predicted) and hist.csv (20 bins over [1,5])."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "scatter.csv", "w", newline="") as fh:
        fh.write("true_mos,predicted_mos\n")
        for r in report.rows:
            fh.write(f"{r.true_mos:.6f},{r.predicted_mos:.6f}\n")

    true_mos = np.array([r.true_mos for r in report.rows])
    pred_mos = np.array([r.predicted_mos for r in report.rows])
    edges = np.linspace(MOS_LO, MOS_HI, N_HIST_BINS + 1)
    count_true, _ = np.histogram(true_mos, bins=edges)
    count_pred, _ = np.histogram(pred_mos, bins=edges)
    centers = 0.5 * (edges[:-1] + edges[1:])
    with open(out_dir / "hist.csv", "w", newline="") as fh:
        fh.write("bin_center,count_true,count_pred\n")
        for c, ct, cp in zip(centers, count_true, count_pred):
            fh.write(f"{c:.2f},{ct},{cp}\n")
    return out_dir / "scatter.csv", out_dir / "hist.csv"
