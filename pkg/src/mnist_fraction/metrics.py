"""Confusion matrix and precision/recall/F1 summaries."""
from __future__ import annotations

import json

import numpy as np

from .idx_io import write_pgm


class LabelOutOfRange(ValueError):
    pass


def confusion(y_true, y_pred, n_classes: int) -> np.ndarray:
    """``counts[t, p]``: rows are true classes, columns predictions."""
    y_true = np.asarray(y_true, dtype=np.int64).ravel()
    y_pred = np.asarray(y_pred, dtype=np.int64).ravel()
    if y_true.shape != y_pred.shape:
        raise ValueError("y_true and y_pred lengths differ")
    for arr in (y_true, y_pred):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise LabelOutOfRange(f"labels must lie in 0..{n_classes - 1}")
    flat = np.bincount(y_true * n_classes + y_pred, minlength=n_classes * n_classes)
    return flat.reshape(n_classes, n_classes)


def _safe_div(num, den):
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den > 0)
    return out


def summarize(cm) -> dict:
    """Accuracy, per-class P/R/F1 and their macro / support-weighted means.

    Undefined ratios (empty row or column) count as 0.
    """
    cm = np.asarray(cm, dtype=np.int64)
    total = cm.sum()
    if total < 1:
        raise ValueError("confusion matrix is empty")
    tp = np.diag(cm).astype(np.float64)
    support = cm.sum(axis=1)
    predicted = cm.sum(axis=0)
    precision = _safe_div(tp, predicted)
    recall = _safe_div(tp, support)
    f1 = _safe_div(2 * precision * recall, precision + recall)
    weights = support / total
    per_class = [
        {"class": c, "precision": float(precision[c]), "recall": float(recall[c]),
         "f1": float(f1[c]), "support": int(support[c])}
        for c in range(len(cm))
    ]
    return {
        "accuracy": float(tp.sum() / total),
        "per_class": per_class,
        "macro": {"precision": float(precision.mean()), "recall": float(recall.mean()),
                  "f1": float(f1.mean())},
        "weighted": {"precision": float(weights @ precision), "recall": float(weights @ recall),
                     "f1": float(weights @ f1)},
        "support": int(total),
    }


def report_json(cm) -> str:
    cm = np.asarray(cm)
    return json.dumps({**summarize(cm), "confusion": cm.tolist()}, indent=2)


def format_report(summary: dict, digits: int = 2) -> str:
    """Plain-text table of the per-class metrics and averages."""
    lines = [f"{'class':>12} {'precision':>9} {'recall':>9} {'f1':>9} {'support':>8}"]
    for row in summary["per_class"]:
        lines.append(f"{row['class']:>12} {row['precision']:>9.{digits}f} {row['recall']:>9.{digits}f}"
                     f" {row['f1']:>9.{digits}f} {row['support']:>8}")
    lines.append("")
    lines.append(f"{'accuracy':>12} {'':>9} {'':>9} {summary['accuracy']:>9.{digits}f} {summary['support']:>8}")
    for name in ("macro", "weighted"):
        avg = summary[name]
        lines.append(f"{name + ' avg':>12} {avg['precision']:>9.{digits}f} {avg['recall']:>9.{digits}f}"
                     f" {avg['f1']:>9.{digits}f} {summary['support']:>8}")
    return "\n".join(lines)


def heatmap_pgm(cm, cell: int = 16) -> bytes:
    """Row-normalized confusion heatmap (dark = frequent) as a PGM image."""
    cm = np.asarray(cm, dtype=np.float64)
    rows = cm.sum(axis=1, keepdims=True)
    frac = np.divide(cm, rows, out=np.zeros_like(cm), where=rows > 0)
    img = (255 - np.round(frac * 255)).astype(np.uint8)
    return write_pgm(np.kron(img, np.ones((cell, cell), dtype=np.uint8)))
