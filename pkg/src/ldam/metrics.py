"""Multilabel precision, recall, and ROC AUC with micro/macro averaging.

Micro averaging pools counts (or score/label pairs) across all labels
before computing a metric; macro computes per label and averages.  AUC is
rank-based with midrank tie handling, which coincides exactly with
trapezoidal integration of the ROC curve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, MetricsError

__all__ = [
    "MetricsReport",
    "PerLabelMetrics",
    "confusion_counts",
    "precision_recall",
    "roc_auc",
    "evaluate_predictions",
    "render_table",
    "write_report_csv",
    "write_per_label_csv",
]


@dataclass
class PerLabelMetrics:
    precision: float
    recall: float
    auc: float | None
    support: int


@dataclass
class MetricsReport:
    micro_precision: float
    macro_precision: float
    micro_recall: float
    macro_recall: float
    micro_auc: float
    macro_auc: float
    per_label: list[PerLabelMetrics]


def _check_pair(y_hat: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    y_hat = np.asarray(y_hat, dtype=np.float64)
    y = np.asarray(y)
    if y_hat.shape != y.shape or y_hat.ndim != 2:
        raise DimensionError(f"scores {y_hat.shape} and labels {y.shape} must be equal 2-D shapes")
    return y_hat, y


def confusion_counts(y_hat: np.ndarray, y: np.ndarray,
                     threshold: float = 0.5) -> np.ndarray:
    """Per-label (TP, FP, FN, TN) rows; predicted positive iff score >= threshold."""
    y_hat, y = _check_pair(y_hat, y)
    if not 0.0 < threshold < 1.0:
        raise MetricsError(f"threshold must lie in (0, 1), got {threshold}")
    pred = y_hat >= threshold
    pos = y == 1
    counts = np.empty((y.shape[1], 4), dtype=np.int64)
    counts[:, 0] = (pred & pos).sum(axis=0)
    counts[:, 1] = (pred & ~pos).sum(axis=0)
    counts[:, 2] = (~pred & pos).sum(axis=0)
    counts[:, 3] = (~pred & ~pos).sum(axis=0)
    return counts


def precision_recall(counts: np.ndarray, averaging: str) -> tuple[float, float]:
    """Precision/recall from (TP, FP, FN, TN) rows.

    Conventions: a label with zero predicted positives has precision 0; a
    label with zero actual positives is excluded from macro recall.  With
    no predicted positives anywhere, precision is 0 by the same rule.
    """
    counts = np.asarray(counts)
    tp, fp, fn = counts[:, 0], counts[:, 1], counts[:, 2]
    if averaging == "micro":
        pred_pos = tp.sum() + fp.sum()
        actual_pos = tp.sum() + fn.sum()
        precision = float(tp.sum() / pred_pos) if pred_pos else 0.0
        recall = float(tp.sum() / actual_pos) if actual_pos else 0.0
        return precision, recall
    if averaging == "macro":
        with np.errstate(invalid="ignore"):
            per_p = np.where(tp + fp > 0, tp / np.maximum(tp + fp, 1), 0.0)
        has_pos = tp + fn > 0
        if not has_pos.any():
            raise MetricsError("macro recall undefined: no label has a positive sample")
        per_r = tp[has_pos] / (tp + fn)[has_pos]
        return float(per_p.mean()), float(per_r.mean())
    raise MetricsError(f"averaging must be 'micro' or 'macro', got {averaging!r}")


def _midranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    _, inverse, counts = np.unique(x, return_inverse=True, return_counts=True)
    csum = np.concatenate(([0], np.cumsum(counts)))
    mid = csum[:-1] + (counts + 1) / 2.0
    return mid[inverse]


def _auc_binary(scores: np.ndarray, y: np.ndarray) -> float:
    """Rank-statistic AUC of one binary problem; needs both classes."""
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricsError("AUC undefined: only one class present")
    ranks = _midranks(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def roc_auc(scores: np.ndarray, y: np.ndarray, averaging: str) -> float:
    """Micro pools every (sample, label) pair into one ranking problem;
    macro averages per-label AUC over labels that carry both classes."""
    scores, y = _check_pair(scores, y)
    if averaging == "micro":
        return _auc_binary(scores.ravel(), y.ravel())
    if averaging == "macro":
        vals = []
        for j in range(y.shape[1]):
            col = y[:, j]
            if 0 < col.sum() < col.size:
                vals.append(_auc_binary(scores[:, j], col))
        if not vals:
            raise MetricsError("macro AUC undefined: no label carries both classes")
        return float(np.mean(vals))
    raise MetricsError(f"averaging must be 'micro' or 'macro', got {averaging!r}")


def evaluate_predictions(y_hat: np.ndarray, y: np.ndarray,
                         threshold: float = 0.5) -> MetricsReport:
    y_hat, y = _check_pair(y_hat, y)
    counts = confusion_counts(y_hat, y, threshold)
    micro_p, micro_r = precision_recall(counts, "micro")
    macro_p, macro_r = precision_recall(counts, "macro")
    per_label = []
    for j in range(y.shape[1]):
        tp, fp, fn, _ = counts[j]
        p = float(tp / (tp + fp)) if tp + fp else 0.0
        r = float(tp / (tp + fn)) if tp + fn else 0.0
        col = y[:, j]
        auc = _auc_binary(y_hat[:, j], col) if 0 < col.sum() < col.size else None
        per_label.append(PerLabelMetrics(precision=p, recall=r, auc=auc,
                                         support=int(col.sum())))
    return MetricsReport(
        micro_precision=micro_p,
        macro_precision=macro_p,
        micro_recall=micro_r,
        macro_recall=macro_r,
        micro_auc=roc_auc(y_hat, y, "micro"),
        macro_auc=roc_auc(y_hat, y, "macro"),
        per_label=per_label,
    )


_COLUMNS = ["Micro Precision", "Macro Precision", "Micro Recall",
            "Macro Recall", "Micro ROC AUC", "Macro ROC AUC"]


def _row_values(report: MetricsReport) -> list[float]:
    return [report.micro_precision, report.macro_precision, report.micro_recall,
            report.macro_recall, report.micro_auc, report.macro_auc]


def render_table(report: MetricsReport) -> str:
    """Fixed-width table with the usual column order."""
    vals = [f"{v:.4f}" for v in _row_values(report)]
    widths = [max(len(c), len(v)) for c, v in zip(_COLUMNS, vals)]
    header = " | ".join(c.ljust(w) for c, w in zip(_COLUMNS, widths))
    rule = "-+-".join("-" * w for w in widths)
    body = " | ".join(v.ljust(w) for v, w in zip(vals, widths))
    return "\n".join((header, rule, body))


def write_report_csv(report: MetricsReport, path) -> None:
    """One row per averaging mode."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("averaging,precision,recall,roc_auc\n")
        fh.write(f"micro,{report.micro_precision!r},{report.micro_recall!r},{report.micro_auc!r}\n")
        fh.write(f"macro,{report.macro_precision!r},{report.macro_recall!r},{report.macro_auc!r}\n")


def write_per_label_csv(report: MetricsReport, label_names: list[str], path) -> None:
    if len(label_names) != len(report.per_label):
        raise DimensionError("label name count does not match per-label rows")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("label,precision,recall,auc,support\n")
        for name, row in zip(label_names, report.per_label):
            auc = "" if row.auc is None else repr(row.auc)
            fh.write(f"\"{name}\",{row.precision!r},{row.recall!r},{auc},{row.support}\n")
