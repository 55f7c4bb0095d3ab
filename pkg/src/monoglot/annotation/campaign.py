"""Dual-annotator, two-stage labeling campaigns.

Every item is labeled independently by exactly two annotators. Stage 1 is
binary (fake/real or toxic/non-toxic); toxic items get a stage-2 category
subset. An item receives a final label only when both annotators' stage-1
labels agree; otherwise it is discarded. Agreed-toxic items resolve stage 2
to the intersection of the two category sets.

State is an append-only JSONL log: replaying it reconstructs the campaign
exactly, which is the crash-recovery story.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

from ..heads import TOXICITY_CATEGORIES

TASKS = ("fakenews", "toxicity")
STAGE1_LABELS = {"fakenews": ("fake", "real"), "toxicity": ("toxic", "non-toxic")}


class AnnotationError(Exception):
    pass


class ValidationError(AnnotationError):
    """Record violates the protocol (bad label, stage2 without toxic, ...)."""


class ConflictError(AnnotationError):
    """Duplicate submission for the same (item, annotator)."""


@dataclass(frozen=True)
class AnnotationItem:
    id: str
    text: str
    task: str
    source: str = ""

    def __post_init__(self) -> None:
        if self.task not in TASKS:
            raise ValidationError(f"unknown task {self.task!r}")
        if not self.text:
            raise ValidationError(f"item {self.id!r} has empty text")

    def to_dict(self) -> dict:
        return {"id": self.id, "text": self.text, "task": self.task, "source": self.source}


@dataclass(frozen=True)
class AnnotationRecord:
    item_id: str
    annotator_id: str
    stage1: str
    stage2: frozenset[str] | None = None
    timestamp: str = ""

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "annotator_id": self.annotator_id,
            "stage1": self.stage1,
            "stage2": sorted(self.stage2) if self.stage2 is not None else None,
            "timestamp": self.timestamp,
        }

    @staticmethod
    def from_dict(d: dict) -> "AnnotationRecord":
        stage2 = d.get("stage2")
        return AnnotationRecord(
            item_id=str(d["item_id"]),
            annotator_id=str(d["annotator_id"]),
            stage1=d["stage1"],
            stage2=frozenset(stage2) if stage2 is not None else None,
            timestamp=d.get("timestamp", ""),
        )


@dataclass(frozen=True)
class ResolvedLabel:
    item_id: str
    status: str  # retained | discarded
    stage1: str | None = None
    stage2: frozenset[str] | None = None


def _validate_record(record: AnnotationRecord, item: AnnotationItem) -> None:
    allowed = STAGE1_LABELS[item.task]
    if record.stage1 not in allowed:
        raise ValidationError(
            f"stage1 must be one of {allowed} for task {item.task!r}, got {record.stage1!r}"
        )
    if record.stage2 is not None:
        if item.task != "toxicity" or record.stage1 != "toxic":
            raise ValidationError("stage2 is only valid for toxic stage-1 labels")
        unknown = record.stage2 - set(TOXICITY_CATEGORIES)
        if unknown:
            raise ValidationError(f"unknown toxicity categories {sorted(unknown)}")


class Campaign:
    """In-memory campaign state backed by an append-only record log.

    Submissions are serialized through a single lock; reads see a consistent
    snapshot under the same lock.
    """

    def __init__(
        self,
        items: Sequence[AnnotationItem],
        annotators: Sequence[str],
        log_path: str | Path | None = None,
    ):
        if not items:
            raise AnnotationError("campaign needs at least one item")
        if len(annotators) != 2 or len(set(annotators)) != 2:
            raise AnnotationError("the protocol requires exactly two distinct annotators")
        self.items: dict[str, AnnotationItem] = {}
        for item in items:
            if item.id in self.items:
                raise AnnotationError(f"duplicate item id {item.id!r}")
            self.items[item.id] = item
        self.item_order = [item.id for item in items]
        self.annotators = tuple(annotators)
        self.records: dict[tuple[str, str], AnnotationRecord] = {}
        self.log_path = Path(log_path) if log_path is not None else None
        self._lock = threading.Lock()
        if self.log_path is not None and self.log_path.exists():
            self._replay(self.log_path)

    def _replay(self, path: Path) -> None:
        for line in path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            self._store(AnnotationRecord.from_dict(json.loads(line)), replaying=True)

    def _store(self, record: AnnotationRecord, replaying: bool = False) -> AnnotationRecord:
        if record.annotator_id not in self.annotators:
            raise AnnotationError(f"unknown annotator {record.annotator_id!r}")
        item = self.items.get(record.item_id)
        if item is None:
            raise AnnotationError(f"unknown item {record.item_id!r}")
        key = (record.item_id, record.annotator_id)
        if key in self.records:
            raise ConflictError(
                f"item {record.item_id!r} already labeled by {record.annotator_id!r}"
            )
        _validate_record(record, item)
        if not record.timestamp and not replaying:
            record = AnnotationRecord(
                record.item_id, record.annotator_id, record.stage1, record.stage2,
                timestamp=datetime.now(timezone.utc).isoformat(),
            )
        self.records[key] = record
        if self.log_path is not None and not replaying:
            with open(self.log_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")
        return record

    def submit_label(self, record: AnnotationRecord) -> AnnotationRecord:
        with self._lock:
            return self._store(record)

    def next_item(self, annotator_id: str) -> AnnotationItem | None:
        """Lowest-ordinal item this annotator has not labeled, or None."""
        if annotator_id not in self.annotators:
            raise AnnotationError(f"unknown annotator {annotator_id!r}")
        with self._lock:
            for item_id in self.item_order:
                if (item_id, annotator_id) not in self.records:
                    return self.items[item_id]
        return None

    def progress(self) -> dict:
        with self._lock:
            per = {
                a: sum(1 for (_i, ann) in self.records if ann == a)
                for a in self.annotators
            }
        return {"items_total": len(self.item_order), "annotators": per}

    def all_records(self) -> list[AnnotationRecord]:
        with self._lock:
            return list(self.records.values())

    def complete_pairs(self) -> dict[str, tuple[AnnotationRecord, AnnotationRecord]]:
        """item_id -> (record by annotator 1, record by annotator 2)."""
        a1, a2 = self.annotators
        with self._lock:
            out = {}
            for item_id in self.item_order:
                r1 = self.records.get((item_id, a1))
                r2 = self.records.get((item_id, a2))
                if r1 is not None and r2 is not None:
                    out[item_id] = (r1, r2)
        return out


def load_campaign(
    items_path: str | Path,
    annotators: Sequence[str],
    log_path: str | Path | None = None,
) -> Campaign:
    """Build a campaign from an items JSONL file, replaying any existing log."""
    items = []
    for lineno, line in enumerate(Path(items_path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        rec = json.loads(line)
        items.append(AnnotationItem(
            id=str(rec["id"]), text=rec["text"], task=rec["task"],
            source=str(rec.get("source", "")),
        ))
    return Campaign(items, annotators, log_path)


def resolve_agreement(
    records: Iterable[AnnotationRecord],
) -> tuple[list[ResolvedLabel], dict]:
    """Apply the agreement rule to double-labeled items.

    Equal stage-1 labels retain the item with that label; unequal labels
    discard it. Retained toxic items get the intersection of the two stage-2
    sets (an empty intersection keeps the item toxic with no categories).
    Items without exactly two records are reported as incomplete.
    """
    by_item: dict[str, list[AnnotationRecord]] = {}
    order: list[str] = []
    for rec in records:
        if rec.item_id not in by_item:
            order.append(rec.item_id)
        by_item.setdefault(rec.item_id, []).append(rec)

    resolved: list[ResolvedLabel] = []
    incomplete: list[str] = []
    for item_id in order:
        pair = by_item[item_id]
        if len(pair) != 2:
            incomplete.append(item_id)
            continue
        r1, r2 = pair
        if r1.stage1 != r2.stage1:
            resolved.append(ResolvedLabel(item_id=item_id, status="discarded"))
            continue
        stage2 = None
        if r1.stage1 == "toxic":
            stage2 = (r1.stage2 or frozenset()) & (r2.stage2 or frozenset())
        resolved.append(ResolvedLabel(
            item_id=item_id, status="retained", stage1=r1.stage1, stage2=stage2,
        ))
    summary = {
        "retained": sum(1 for r in resolved if r.status == "retained"),
        "discarded": sum(1 for r in resolved if r.status == "discarded"),
        "incomplete": len(incomplete),
    }
    return resolved, summary


def agreement_stats(pairs: dict[str, tuple[AnnotationRecord, AnnotationRecord]]) -> dict:
    """Raw agreement rate and Cohen's kappa over stage-1 labels.

    kappa corrects for chance using each annotator's marginal label
    frequencies; when expected agreement is 1 (both annotators constant on
    the same label) kappa is undefined and reported as None.
    """
    if not pairs:
        raise AnnotationError("no fully double-labeled items")
    n = len(pairs)
    labels1 = [r1.stage1 for r1, _ in pairs.values()]
    labels2 = [r2.stage1 for _, r2 in pairs.values()]
    agreed = sum(1 for a, b in zip(labels1, labels2) if a == b)
    p_o = agreed / n
    label_set = sorted(set(labels1) | set(labels2))
    p_e = sum(
        (labels1.count(l) / n) * (labels2.count(l) / n) for l in label_set
    )
    if p_e >= 1.0:
        kappa = None
    else:
        kappa = (p_o - p_e) / (1.0 - p_e)
    return {
        "complete_items": n,
        "raw_agreement_rate": p_o,
        "cohen_kappa": kappa,
        "kappa_undefined": kappa is None,
    }


def export_dataset(
    resolved: Sequence[ResolvedLabel],
    items: dict[str, AnnotationItem],
    task: str,
) -> dict[str, list[dict]]:
    """Fine-tuning JSONL rows for retained items, ordered by item id.

    fakenews -> {"binary": [...]}. toxicity -> {"binary": [...],
    "multilabel": [...]} where the multilabel rows cover retained toxic items
    with their final category sets.
    """
    if task not in TASKS:
        raise AnnotationError(f"unknown task {task!r}")
    retained = sorted(
        (r for r in resolved if r.status == "retained" and items[r.item_id].task == task),
        key=lambda r: r.item_id,
    )
    binary = [
        {"id": r.item_id, "text": items[r.item_id].text, "label": r.stage1}
        for r in retained
    ]
    if task == "fakenews":
        return {"binary": binary}
    multilabel = [
        {"id": r.item_id, "text": items[r.item_id].text,
         "labels": sorted(r.stage2 or frozenset())}
        for r in retained
        if r.stage1 == "toxic"
    ]
    return {"binary": binary, "multilabel": multilabel}


def rows_to_jsonl(rows: Sequence[dict]) -> str:
    return "".join(json.dumps(row, ensure_ascii=False) + "\n" for row in rows)
