"""Report emission: delimited series, structured reports, rendered figures.

Every experiment writes the same artifact family under its output directory:
``resolved_config.json`` (full provenance), ``report.json`` + ``report.txt``
(structured and human-readable summaries), ``series/*.csv`` (plot-ready
columns), and ``figures/*.png`` rendered from those same series.  All
artifacts except the report's runtime section are bit-reproducible from the
resolved config.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (str, np.str_)):
        return str(x)
    if x is None or (isinstance(x, float) and np.isnan(x)):
        return ""
    return f"{float(x):.12g}"


def write_series(path, columns: dict):
    """Write named equal-length columns as a headed CSV."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(columns)
    arrays = [np.asarray(columns[n]) for n in names]
    n = len(arrays[0])
    if any(len(a) != n for a in arrays):
        raise ValueError("series columns must share their length")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for i in range(n):
            writer.writerow([_fmt(a[i]) for a in arrays])


def _jsonready(obj):
    if isinstance(obj, dict):
        return {k: _jsonready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonready(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        v = float(obj)
        return None if np.isnan(v) else v
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonready(obj.tolist())
    if isinstance(obj, float) and np.isnan(obj):
        return None
    return obj


def write_report(out_dir, report: dict, resolved_config: dict):
    """Emit resolved_config.json, report.json and a readable report.txt."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "resolved_config.json", "w") as fh:
        json.dump(_jsonready(resolved_config), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out_dir / "report.json", "w") as fh:
        json.dump(_jsonready(report), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out_dir / "report.txt", "w") as fh:
        fh.write(_render_text(report))


def _render_text(report: dict, indent: int = 0) -> str:
    lines = []
    pad = "  " * indent
    for key, val in report.items():
        if isinstance(val, dict):
            lines.append(f"{pad}{key}:")
            lines.append(_render_text(val, indent + 1))
        elif isinstance(val, (list, tuple)) and val and isinstance(val[0], dict):
            lines.append(f"{pad}{key}:")
            for item in val:
                lines.append(_render_text(item, indent + 1))
                lines.append(f"{pad}  -")
        else:
            lines.append(f"{pad}{key}: {_jsonready(val)}")
    return "\n".join(line for line in lines if line) + ("\n" if indent == 0 else "")


# ---------------------------------------------------------------------------
# Figures
# ---------------------------------------------------------------------------

def _shade_changes(ax, t, labels):
    labels = np.asarray(labels, dtype=float)
    on = False
    start = 0.0
    for i in range(len(labels)):
        if labels[i] >= 0.5 and not on:
            on, start = True, t[i]
        elif labels[i] < 0.5 and on:
            ax.axvspan(start, t[i], color="tab:red", alpha=0.15, lw=0)
            on = False
    if on:
        ax.axvspan(start, t[-1], color="tab:red", alpha=0.15, lw=0)


def fig_path(path_png, t, values, labels=None, title="Evaluated path"):
    fig, ax = plt.subplots(figsize=(9, 3.2))
    vals = np.atleast_2d(np.asarray(values).T).T
    for c in range(min(vals.shape[1], 6)):
        ax.plot(t, vals[:, c], lw=0.7)
    if labels is not None:
        _shade_changes(ax, t, labels)
    ax.set_xlabel("time")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path_png, dpi=110)
    plt.close(fig)


def fig_scores(path_png, index, scores: dict, thresholds: dict | None = None,
               title="Detector scores", logy=False):
    fig, ax = plt.subplots(figsize=(9, 3.2))
    for name, series in scores.items():
        ax.plot(index, series, lw=0.9, label=name)
    if thresholds:
        for name, thr in thresholds.items():
            thr = np.asarray(thr, dtype=float)
            if thr.ndim == 0:
                ax.axhline(float(thr), ls="--", lw=0.8, color="k", label=name)
            else:
                ax.plot(index, thr, ls="--", lw=0.8, color="k", label=name)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel("ensemble index")
    ax.legend(loc="upper right", fontsize=8)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path_png, dpi=110)
    plt.close(fig)


def fig_fractions(path_png, fractions, labels=None, title="Per-sub-path exceedance"):
    fig, ax = plt.subplots(figsize=(9, 2.8))
    fr = np.asarray(fractions, dtype=float)
    idx = np.arange(len(fr))
    ax.bar(idx, np.nan_to_num(fr), width=1.0, color="tab:blue", alpha=0.8)
    if labels is not None:
        _shade_changes(ax, idx, labels)
    ax.set_ylim(0, 1.05)
    ax.set_xlabel("sub-path index")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path_png, dpi=110)
    plt.close(fig)


def fig_clusters(path_png, t, price, subpath_labels, subpath_len,
                 title="Cluster membership"):
    fig, (ax0, ax1) = plt.subplots(2, 1, figsize=(9, 4.4), sharex=True,
                                   height_ratios=[2, 1])
    ax0.plot(t, price, lw=0.7, color="tab:blue")
    ax0.set_title(title)
    lab = np.asarray(subpath_labels, dtype=float)
    centers = (np.arange(len(lab)) + 0.5) * subpath_len
    tt = np.interp(centers, np.arange(len(t)), t)
    ax1.plot(tt, lab, lw=0.9, color="tab:gray")
    ax1.set_ylabel("avg label")
    ax1.set_xlabel("time")
    fig.tight_layout()
    fig.savefig(path_png, dpi=110)
    plt.close(fig)
