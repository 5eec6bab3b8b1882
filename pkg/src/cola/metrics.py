"""Multi-class evaluation: confusion matrices, PRF tables, reports.

Predictions that could not be mapped to any class land in a dedicated
``unmatched`` overflow column instead of being dropped: the mapping
failure rate is itself a result.  Zero-denominator precision/recall/F1
are defined as 0.  Macro averages are unweighted class means; weighted
averages are support-weighted.  Both appear in the JSON report because
summary tables in the wild rarely say which they used.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are actual classes, columns are predicted classes."""

    classes: tuple
    counts: np.ndarray  # (C, C) ints
    unmatched: np.ndarray  # (C,) ints, per actual class

    @property
    def total(self) -> int:
        return int(self.counts.sum() + self.unmatched.sum())

    def accuracy(self) -> float:
        """Micro accuracy: trace over total."""
        total = self.total
        return float(np.trace(self.counts)) / total if total else 0.0

    def merged(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        """Add counts from another shard over the same classes."""
        if self.classes != other.classes:
            raise ValueError("cannot merge confusion matrices over different classes")
        return ConfusionMatrix(
            classes=self.classes,
            counts=self.counts + other.counts,
            unmatched=self.unmatched + other.unmatched,
        )


@dataclass(frozen=True)
class PrfTable:
    classes: tuple
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    macro_precision: float
    macro_recall: float
    macro_f1: float
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float


def mcq_accuracy(predictions: Sequence[int | None], gold: Sequence[int]) -> float:
    """Fraction of exactly-matching choice indices; None counts as wrong."""
    if len(predictions) != len(gold):
        raise ValueError(f"length mismatch: {len(predictions)} predictions vs {len(gold)} gold")
    if not gold:
        return 0.0
    return sum(1 for p, g in zip(predictions, gold) if p == g) / len(gold)


def confusion_matrix(
    pred_labels: Sequence[str | None],
    gold_labels: Sequence[str],
    classes: Sequence[str],
) -> ConfusionMatrix:
    """Tally actual x predicted counts.

    Predictions outside ``classes`` (including None) land in the
    unmatched column; a gold label outside ``classes`` is an error.
    """
    if len(pred_labels) != len(gold_labels):
        raise ValueError("pred_labels and gold_labels must have equal length")
    classes = tuple(classes)
    index = {c: i for i, c in enumerate(classes)}
    counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
    unmatched = np.zeros(len(classes), dtype=np.int64)
    for pred, gold in zip(pred_labels, gold_labels):
        if gold not in index:
            raise ValueError(f"gold label {gold!r} not in classes")
        gi = index[gold]
        if pred in index:
            counts[gi, index[pred]] += 1
        else:
            unmatched[gi] += 1
    return ConfusionMatrix(classes=classes, counts=counts, unmatched=unmatched)


def _safe_div(num: np.ndarray, denom: np.ndarray) -> np.ndarray:
    out = np.zeros_like(num, dtype=np.float64)
    np.divide(num, denom, out=out, where=denom > 0)
    return out


def per_class_prf(cm: ConfusionMatrix) -> PrfTable:
    """Per-class and averaged precision/recall/F1.

    For class c: precision = TP/(TP+FP) over real predicted columns
    (unmatched predictions are nobody's false positives), recall =
    TP/(TP+FN) where unmatched predictions of actual-c items count as
    misses.
    """
    tp = np.diag(cm.counts).astype(np.float64)
    fp = cm.counts.sum(axis=0).astype(np.float64) - tp
    support = cm.counts.sum(axis=1) + cm.unmatched
    fn = support.astype(np.float64) - tp
    precision = _safe_div(tp, tp + fp)
    recall = _safe_div(tp, tp + fn)
    f1 = _safe_div(2.0 * precision * recall, precision + recall)
    total = float(support.sum())
    weights = support / total if total else np.zeros_like(support, dtype=np.float64)
    return PrfTable(
        classes=cm.classes,
        precision=precision,
        recall=recall,
        f1=f1,
        support=support.astype(np.int64),
        macro_precision=float(precision.mean()),
        macro_recall=float(recall.mean()),
        macro_f1=float(f1.mean()),
        weighted_precision=float(np.dot(weights, precision)),
        weighted_recall=float(np.dot(weights, recall)),
        weighted_f1=float(np.dot(weights, f1)),
    )


def report_dict(
    cm: ConfusionMatrix | None = None,
    prf: PrfTable | None = None,
    accuracy: float | None = None,
) -> dict:
    """Machine-readable report payload."""
    report: dict = {}
    if accuracy is not None:
        report["accuracy"] = accuracy
    if cm is not None:
        report["classes"] = list(cm.classes)
        report["matrix"] = cm.counts.tolist()
        report["unmatched"] = cm.unmatched.tolist()
    if prf is not None:
        report["per_class"] = {
            "p": [float(v) for v in prf.precision],
            "r": [float(v) for v in prf.recall],
            "f1": [float(v) for v in prf.f1],
            "support": [int(v) for v in prf.support],
        }
        report["macro"] = {
            "p": prf.macro_precision, "r": prf.macro_recall, "f1": prf.macro_f1,
        }
        report["weighted"] = {
            "p": prf.weighted_precision, "r": prf.weighted_recall, "f1": prf.weighted_f1,
        }
    return report


def render_text_table(
    cm: ConfusionMatrix | None = None,
    prf: PrfTable | None = None,
    accuracy: float | None = None,
) -> str:
    """Human-readable summary table."""
    lines = []
    if accuracy is not None:
        lines.append(f"accuracy: {accuracy:.4f}")
    if prf is not None:
        width = max((len(c) for c in prf.classes), default=5)
        width = max(width, len("class"))
        lines.append(f"{'class':<{width}}  {'prec':>7}  {'recall':>7}  {'f1':>7}  {'support':>7}")
        for i, cls in enumerate(prf.classes):
            lines.append(
                f"{cls:<{width}}  {prf.precision[i]:>7.4f}  {prf.recall[i]:>7.4f}  "
                f"{prf.f1[i]:>7.4f}  {int(prf.support[i]):>7d}"
            )
        lines.append(
            f"{'macro':<{width}}  {prf.macro_precision:>7.4f}  {prf.macro_recall:>7.4f}  "
            f"{prf.macro_f1:>7.4f}  {int(prf.support.sum()):>7d}"
        )
        lines.append(
            f"{'weighted':<{width}}  {prf.weighted_precision:>7.4f}  "
            f"{prf.weighted_recall:>7.4f}  {prf.weighted_f1:>7.4f}  "
            f"{int(prf.support.sum()):>7d}"
        )
    if cm is not None:
        lines.append("")
        lines.append("confusion matrix (rows actual, columns predicted, last column unmatched):")
        header = ["actual\\pred"] + list(cm.classes) + ["unmatched"]
        colw = max(len(h) for h in header)
        lines.append("  ".join(f"{h:>{colw}}" for h in header))
        for i, cls in enumerate(cm.classes):
            row = [cls] + [str(int(v)) for v in cm.counts[i]] + [str(int(cm.unmatched[i]))]
            lines.append("  ".join(f"{v:>{colw}}" for v in row))
    return "\n".join(lines) + "\n"


def render_confusion_svg(cm: ConfusionMatrix) -> str:
    """Standalone SVG heatmap of the confusion matrix.

    One cell per actual/predicted pair plus the unmatched overflow
    column; fill intensity scales with count.
    """
    cell = 48
    label_w = max(90, 8 * max((len(c) for c in cm.classes), default=0) + 10)
    label_h = 70
    n = len(cm.classes)
    cols = n + 1  # trailing unmatched column
    width = label_w + cols * cell + 10
    height = label_h + n * cell + 10
    full = np.concatenate([cm.counts, cm.unmatched[:, None]], axis=1)
    peak = max(1, int(full.max()))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        '<style>text{font-family:monospace;font-size:11px}</style>',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    col_names = list(cm.classes) + ["unmatched"]
    for j, name in enumerate(col_names):
        x = label_w + j * cell + cell / 2
        parts.append(
            f'<text x="{x}" y="{label_h - 8}" text-anchor="end" '
            f'transform="rotate(-45 {x} {label_h - 8})">{name}</text>'
        )
    for i, name in enumerate(cm.classes):
        y = label_h + i * cell + cell / 2 + 4
        parts.append(f'<text x="{label_w - 6}" y="{y}" text-anchor="end">{name}</text>')
        for j in range(cols):
            value = int(full[i, j])
            shade = 255 - round(200 * value / peak)
            x = label_w + j * cell
            y0 = label_h + i * cell
            parts.append(
                f'<rect x="{x}" y="{y0}" width="{cell}" height="{cell}" '
                f'fill="rgb({shade},{shade},255)" stroke="#888"/>'
            )
            parts.append(
                f'<text x="{x + cell / 2}" y="{y0 + cell / 2 + 4}" '
                f'text-anchor="middle">{value}</text>'
            )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_report(
    cm: ConfusionMatrix | None,
    prf: PrfTable | None,
    accuracy: float | None,
    out_dir: str | Path,
) -> dict[str, Path]:
    """Write report.json, report.txt, and (when a matrix is present)
    confusion_matrix.svg under ``out_dir``; returns the file paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {}
    report = report_dict(cm, prf, accuracy)
    files["json"] = out / "report.json"
    files["json"].write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    files["txt"] = out / "report.txt"
    files["txt"].write_text(render_text_table(cm, prf, accuracy), encoding="utf-8")
    if cm is not None:
        files["svg"] = out / "confusion_matrix.svg"
        files["svg"].write_text(render_confusion_svg(cm), encoding="utf-8")
    return files
