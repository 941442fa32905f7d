"""Stratified detection accuracies and ROC AUC from per-sub-path scores."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RunMetrics:
    regime_on: float        # accuracy on base-regime (label 0) sub-paths
    regime_off: float       # accuracy on changed-regime (label 1) sub-paths
    total: float
    auc: float | None
    runtime_seconds: float = 0.0

    def as_dict(self) -> dict:
        return {"regime_on": self.regime_on, "regime_off": self.regime_off,
                "total": self.total, "auc": self.auc,
                "runtime_seconds": self.runtime_seconds}


def rank_auc(scores: np.ndarray, labels: np.ndarray) -> float | None:
    """ROC AUC via average ranks; ties get half credit, one class gives None."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        return None
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores))
    sorted_scores = scores[order]
    i = 0
    r = 1.0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (r + r + (j - i))
        r += j - i + 1
        i = j + 1
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def metrics(scores: np.ndarray, labels: np.ndarray, threshold: float = 0.5,
            runtime_seconds: float = 0.0) -> RunMetrics:
    """Stratified accuracy and AUC of continuous per-sub-path scores.

    A sub-path is predicted changed when its score reaches the threshold.
    Sub-paths with undefined score or label are ignored.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must be aligned")
    ok = np.isfinite(scores) & np.isfinite(labels)
    s, y = scores[ok], labels[ok].astype(int)
    pred = s >= threshold
    on = y == 0
    off = y == 1
    regime_on = float(np.mean(~pred[on])) if on.any() else float("nan")
    regime_off = float(np.mean(pred[off])) if off.any() else float("nan")
    total = float(np.mean(pred == (y == 1))) if len(y) else float("nan")
    return RunMetrics(regime_on, regime_off, total, rank_auc(s, y), runtime_seconds)


def aggregate(rows: list[RunMetrics]) -> dict:
    """Mean and sample std of each metric over repeat runs."""
    def stats(vals):
        vals = [v for v in vals if v is not None and np.isfinite(v)]
        if not vals:
            return {"mean": None, "std": None}
        arr = np.array(vals, dtype=float)
        return {"mean": float(arr.mean()),
                "std": float(arr.std(ddof=1)) if len(arr) > 1 else 0.0}

    return {
        "n_runs": len(rows),
        "regime_on": stats([r.regime_on for r in rows]),
        "regime_off": stats([r.regime_off for r in rows]),
        "total": stats([r.total for r in rows]),
        "auc": stats([r.auc for r in rows]),
        "runtime_seconds": stats([r.runtime_seconds for r in rows]),
    }
