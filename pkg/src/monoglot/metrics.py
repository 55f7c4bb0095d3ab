"""Classification metrics and comparison-table rendering.

Conventions are pinned for determinism: precision/recall/F1 are 0 when their
denominator is 0, and table averages round half-up to two decimals through
exact decimal arithmetic (binary floats round .xx5 cases the wrong way).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Iterable, Mapping, Sequence

import numpy as np


class MetricsError(Exception):
    pass


@dataclass(frozen=True)
class ConfusionMatrix:
    """K x K counts; rows are gold labels, columns are predictions."""

    labels: tuple[str, ...]
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    per_class: dict[str, dict[str, float]]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    micro_precision: float
    micro_recall: float
    micro_f1: float
    subset_accuracy: float | None = None
    mean_per_label_accuracy: float | None = None
    per_label_accuracy: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "accuracy": self.accuracy,
            "per_class": self.per_class,
            "macro": {"precision": self.macro_precision, "recall": self.macro_recall,
                      "f1": self.macro_f1},
            "micro": {"precision": self.micro_precision, "recall": self.micro_recall,
                      "f1": self.micro_f1},
        }
        if self.subset_accuracy is not None:
            d["subset_accuracy"] = self.subset_accuracy
            d["mean_per_label_accuracy"] = self.mean_per_label_accuracy
            d["per_label_accuracy"] = self.per_label_accuracy
        return d


def confusion_matrix(
    gold: Sequence[str], pred: Sequence[str], label_set: Sequence[str]
) -> ConfusionMatrix:
    if len(gold) != len(pred):
        raise MetricsError(f"length mismatch: {len(gold)} gold vs {len(pred)} predictions")
    if not gold:
        raise MetricsError("no examples")
    labels = tuple(label_set)
    index = {name: i for i, name in enumerate(labels)}
    counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for g, p in zip(gold, pred):
        if g not in index:
            raise MetricsError(f"unknown gold label {g!r}")
        if p not in index:
            raise MetricsError(f"unknown predicted label {p!r}")
        counts[index[g], index[p]] += 1
    return ConfusionMatrix(labels=labels, counts=counts)


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


def metrics_from_confusion(cm: ConfusionMatrix) -> MetricsReport:
    if cm.total == 0:
        raise MetricsError("empty confusion matrix")
    counts = cm.counts
    accuracy = float(np.trace(counts)) / cm.total
    per_class = {}
    tps = fps = fns = 0
    for i, name in enumerate(cm.labels):
        tp = int(counts[i, i])
        fp = int(counts[:, i].sum()) - tp
        fn = int(counts[i, :].sum()) - tp
        p, r, f1 = _prf(tp, fp, fn)
        per_class[name] = {"precision": p, "recall": r, "f1": f1}
        tps += tp
        fps += fp
        fns += fn
    micro_p, micro_r, micro_f1 = _prf(tps, fps, fns)
    k = len(cm.labels)
    return MetricsReport(
        accuracy=accuracy,
        per_class=per_class,
        macro_precision=sum(v["precision"] for v in per_class.values()) / k,
        macro_recall=sum(v["recall"] for v in per_class.values()) / k,
        macro_f1=sum(v["f1"] for v in per_class.values()) / k,
        micro_precision=micro_p,
        micro_recall=micro_r,
        micro_f1=micro_f1,
    )


def multilabel_metrics(
    gold: Sequence[Iterable[str]],
    pred: Sequence[Iterable[str]],
    label_set: Sequence[str],
) -> MetricsReport:
    """Subset accuracy plus per-label binary metrics and their means."""
    if len(gold) != len(pred):
        raise MetricsError(f"length mismatch: {len(gold)} gold vs {len(pred)} predictions")
    if not gold:
        raise MetricsError("no examples")
    labels = tuple(label_set)
    known = set(labels)
    gold_sets = [frozenset(g) for g in gold]
    pred_sets = [frozenset(p) for p in pred]
    for s in (*gold_sets, *pred_sets):
        extra = s - known
        if extra:
            raise MetricsError(f"unknown label(s) {sorted(extra)}")

    n = len(gold_sets)
    subset_accuracy = sum(1 for g, p in zip(gold_sets, pred_sets) if g == p) / n
    per_class = {}
    per_label_accuracy = {}
    tps = fps = fns = 0
    for name in labels:
        tp = sum(1 for g, p in zip(gold_sets, pred_sets) if name in g and name in p)
        fp = sum(1 for g, p in zip(gold_sets, pred_sets) if name not in g and name in p)
        fn = sum(1 for g, p in zip(gold_sets, pred_sets) if name in g and name not in p)
        tn = n - tp - fp - fn
        p, r, f1 = _prf(tp, fp, fn)
        per_class[name] = {"precision": p, "recall": r, "f1": f1}
        per_label_accuracy[name] = (tp + tn) / n
        tps += tp
        fps += fp
        fns += fn
    micro_p, micro_r, micro_f1 = _prf(tps, fps, fns)
    k = len(labels)
    mean_acc = sum(per_label_accuracy.values()) / k
    return MetricsReport(
        accuracy=mean_acc,  # headline number for multilabel: mean per-label accuracy
        per_class=per_class,
        macro_precision=sum(v["precision"] for v in per_class.values()) / k,
        macro_recall=sum(v["recall"] for v in per_class.values()) / k,
        macro_f1=sum(v["f1"] for v in per_class.values()) / k,
        micro_precision=micro_p,
        micro_recall=micro_r,
        micro_f1=micro_f1,
        subset_accuracy=subset_accuracy,
        mean_per_label_accuracy=mean_acc,
        per_label_accuracy=per_label_accuracy,
    )


def average_accuracy(task_accuracies: Sequence[float]) -> float:
    """Arithmetic mean rounded half-up to 2 decimals.

    Values go through their shortest decimal representation, so printed
    inputs like 81.67 average exactly (86.175 -> 86.18, not the 86.17 that
    binary-float rounding would give).
    """
    if not task_accuracies:
        raise MetricsError("no task accuracies")
    total = sum(Decimal(str(v)) for v in task_accuracies)
    mean = total / Decimal(len(task_accuracies))
    return float(mean.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def _format_cell(v: float) -> str:
    # shortest float repr: parses back to the identical value
    return str(float(v))


def render_report(
    entries: Mapping[str, Mapping[str, float]],
    format: str = "markdown",
    columns: Sequence[str] | None = None,
    sizes: Mapping[str, str] | None = None,
) -> str:
    """Model-by-task accuracy table with a computed Average column.

    Every row must cover the same task columns. Markdown output bold-marks
    each column's maximum (ties all bolded); CSV is plain values.
    """
    if not entries:
        raise MetricsError("no rows")
    models = list(entries)
    tasks = set(entries[models[0]])
    for m in models:
        if set(entries[m]) != tasks:
            raise MetricsError(f"ragged rows: model {m!r} covers different tasks")
    cols = list(columns) if columns is not None else sorted(tasks)
    if set(cols) != tasks:
        raise MetricsError("columns must match the task set")

    averages = {m: average_accuracy([entries[m][c] for c in cols]) for m in models}
    col_max = {c: max(entries[m][c] for m in models) for c in cols}
    avg_max = max(averages.values())

    if format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        head = ["Model"] + (["Size"] if sizes else []) + cols + ["Average"]
        writer.writerow(head)
        for m in models:
            row = [m] + ([sizes.get(m, "")] if sizes else [])
            row += [_format_cell(entries[m][c]) for c in cols]
            row.append(_format_cell(averages[m]))
            writer.writerow(row)
        return buf.getvalue()

    if format != "markdown":
        raise MetricsError(f"unknown format {format!r}")

    def td(value: float, is_max: bool) -> str:
        text = _format_cell(value)
        return f"**{text}**" if is_max else text

    head = ["Model"] + (["Size"] if sizes else []) + cols + ["Average"]
    lines = ["| " + " | ".join(head) + " |",
             "|" + "|".join(["---"] * len(head)) + "|"]
    for m in models:
        row = [m] + ([sizes.get(m, "")] if sizes else [])
        row += [td(entries[m][c], entries[m][c] == col_max[c]) for c in cols]
        row.append(td(averages[m], averages[m] == avg_max))
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"
