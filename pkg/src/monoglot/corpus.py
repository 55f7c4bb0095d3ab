"""Corpus ingestion, normalization, deduplication, and statistics.

Heterogeneous text sources (JSONL, plain text, CSV) are adapted into a shared
title-text-url document template, cleaned into a restricted character set,
deduplicated by exact normalized content, and summarized as corpus statistics.

Pipeline order matters: sentence segmentation relies on punctuation and runs
on text that still carries its original casing, so the canonical order is
segment -> normalize -> dedup -> stats.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import re
import unicodedata
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Iterator, Sequence


class CorpusError(Exception):
    """Raised for malformed records, duplicate ids, or unreadable sources."""


@dataclass(frozen=True)
class Document:
    """One corpus item in the shared title-text-url template."""

    id: str
    text: str
    title: str | None = None
    url: str | None = None
    source: str = ""

    def __post_init__(self) -> None:
        if not self.id:
            raise CorpusError("document id must be non-empty")


@dataclass(frozen=True)
class NormConfig:
    """Text normalization knobs.

    The allowed character set is letters (including diacritics and the
    apostrophe, which is a word character in the target orthography), digits,
    whitespace, and basic punctuation. Whitespace is always allowed, and the
    set is closed under the normalization itself (lowercasing a letter yields
    a letter), so normalization is idempotent.
    """

    lowercase: bool = True
    collapse_whitespace: bool = True
    unicode_nfc: bool = True
    extra_punctuation: str = ".,;:!?'\"()-"

    def allows(self, ch: str) -> bool:
        if ch.isspace():
            return True
        cat = unicodedata.category(ch)
        if cat.startswith("L") or cat == "Nd":
            return True
        return ch in self.extra_punctuation


@dataclass(frozen=True)
class CorpusStats:
    """Item/sentence/token counts for a corpus (whitespace-word tokens)."""

    items: int = 0
    sentences: int = 0
    tokens: int = 0
    unique_words: int = 0

    def to_dict(self) -> dict:
        return {
            "items": self.items,
            "sentences": self.sentences,
            "tokens": self.tokens,
            "unique_words": self.unique_words,
        }


_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+")
_WS_RUN = re.compile(r"\s+")

JSONL_FIELDS = ("id", "title", "text", "url", "source")


def ingest_source(
    path: str | Path,
    format: str,
    source: str,
    *,
    on_error: str = "abort",
    plain_text_blocks: bool = False,
) -> Iterator[Document]:
    """Yield Documents from a file, preserving input order.

    format is one of "jsonl", "plain-text", "csv". Plain text yields one
    document per file, or one per blank-line-separated block when
    ``plain_text_blocks`` is set. ``on_error`` is "abort" (raise on the first
    malformed record) or "skip" (drop it).
    """
    path = Path(path)
    if on_error not in ("abort", "skip"):
        raise ValueError(f"on_error must be 'abort' or 'skip', got {on_error!r}")
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CorpusError(f"cannot read {path}: {exc}") from exc

    if format == "jsonl":
        yield from _ingest_jsonl(raw, source, path, on_error)
    elif format == "plain-text":
        yield from _ingest_plain(raw, source, path, plain_text_blocks)
    elif format == "csv":
        yield from _ingest_csv(raw, source, path, on_error)
    else:
        raise ValueError(f"unknown format {format!r}")


def _record_error(msg: str, on_error: str) -> bool:
    """Return True when the record should be skipped, else raise."""
    if on_error == "skip":
        return True
    raise CorpusError(msg)


def _ingest_jsonl(raw: str, source: str, path: Path, on_error: str) -> Iterator[Document]:
    for lineno, line in enumerate(raw.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            if _record_error(f"{path}:{lineno}: invalid JSON: {exc}", on_error):
                continue
        if not isinstance(rec, dict) or "text" not in rec:
            if _record_error(f"{path}:{lineno}: record missing 'text' field", on_error):
                continue
        doc_id = str(rec.get("id") or f"{path.stem}-{lineno:06d}")
        yield Document(
            id=doc_id,
            text=str(rec["text"]),
            title=rec.get("title") or None,
            url=rec.get("url") or None,
            source=str(rec.get("source") or source),
        )


def _ingest_plain(raw: str, source: str, path: Path, blocks: bool) -> Iterator[Document]:
    if blocks:
        chunks = [b for b in re.split(r"\n\s*\n", raw) if b.strip()]
        for i, chunk in enumerate(chunks, start=1):
            yield Document(id=f"{path.stem}-{i:06d}", text=chunk.strip(), source=source)
    elif raw.strip():
        yield Document(id=path.stem, text=raw.strip(), source=source)


def _ingest_csv(raw: str, source: str, path: Path, on_error: str) -> Iterator[Document]:
    reader = csv.DictReader(io.StringIO(raw))
    if reader.fieldnames is None:
        return
    if "text" not in reader.fieldnames:
        raise CorpusError(f"{path}: CSV header has no 'text' column")
    for lineno, row in enumerate(reader, start=2):
        text = row.get("text")
        if text is None or text == "":
            if _record_error(f"{path}:{lineno}: row missing 'text' value", on_error):
                continue
        yield Document(
            id=str(row.get("id") or f"{path.stem}-{lineno:06d}"),
            text=text,
            title=row.get("title") or None,
            url=row.get("url") or None,
            source=str(row.get("source") or source),
        )


def normalize_text(text: str, cfg: NormConfig = NormConfig()) -> str:
    """Normalize one string: NFC, lowercase, character filter, whitespace collapse.

    Disallowed characters become a single space; whitespace runs collapse to
    one space; the result is stripped. Idempotent.
    """
    if cfg.unicode_nfc:
        text = unicodedata.normalize("NFC", text)
    if cfg.lowercase:
        text = text.lower()
    text = "".join(ch if cfg.allows(ch) else " " for ch in text)
    if cfg.collapse_whitespace:
        text = _WS_RUN.sub(" ", text)
    return text.strip()


def normalize_document(doc: Document, cfg: NormConfig = NormConfig()) -> Document:
    """Normalize a document's text (and title, when present)."""
    title = normalize_text(doc.title, cfg) if doc.title else None
    return replace(doc, text=normalize_text(doc.text, cfg), title=title or None)


def segment_sentences(text: str) -> list[str]:
    """Split text into sentences on terminal punctuation followed by whitespace.

    A trailing fragment without terminal punctuation is its own sentence.
    Never returns empty sentences.
    """
    if not text.strip():
        return []
    parts = _SENTENCE_SPLIT.split(text)
    return [p.strip() for p in parts if p.strip()]


def _content_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def dedup(docs: Iterable[Document]) -> Iterator[Document]:
    """Keep the first occurrence of each distinct text (exact content hash)."""
    seen: set[str] = set()
    for doc in docs:
        h = _content_hash(doc.text)
        if h in seen:
            continue
        seen.add(h)
        yield doc


def dedup_sentences(docs: Iterable[Document]) -> Iterator[Document]:
    """Sentence-level dedup: drop sentences seen earlier in the stream.

    Documents whose every sentence was already seen are dropped entirely.
    """
    seen: set[str] = set()
    for doc in docs:
        kept = []
        for sent in segment_sentences(doc.text):
            h = _content_hash(sent)
            if h in seen:
                continue
            seen.add(h)
            kept.append(sent)
        if kept:
            yield replace(doc, text=" ".join(kept))


def merge_corpora(sources: Sequence[tuple[str, Iterable[Document]]]) -> Iterator[Document]:
    """Concatenate document streams in declared order.

    Ids are re-qualified as "<source_tag>/<id>" so they stay unique across
    sources; a duplicate qualified id is a hard error.
    """
    seen: set[str] = set()
    for tag, docs in sources:
        for doc in docs:
            qid = f"{tag}/{doc.id}"
            if qid in seen:
                raise CorpusError(f"duplicate qualified id {qid!r}")
            seen.add(qid)
            yield replace(doc, id=qid, source=tag or doc.source)


@dataclass
class NormalizeReport:
    """Counts from a normalization pass (dropped = empty after cleaning)."""

    kept: int = 0
    dropped_empty: int = 0


def normalize_corpus(
    docs: Iterable[Document],
    cfg: NormConfig = NormConfig(),
    report: NormalizeReport | None = None,
) -> Iterator[Document]:
    """Normalize a stream, dropping documents that clean down to nothing."""
    for doc in docs:
        norm = normalize_document(doc, cfg)
        if not norm.text:
            if report is not None:
                report.dropped_empty += 1
            continue
        if report is not None:
            report.kept += 1
        yield norm


def corpus_stats(docs: Iterable[Document]) -> CorpusStats:
    """Count items, sentences, whitespace tokens, and distinct words."""
    items = sentences = tokens = 0
    words: set[str] = set()
    for doc in docs:
        items += 1
        sentences += len(segment_sentences(doc.text))
        ws = doc.text.split()
        tokens += len(ws)
        words.update(ws)
    return CorpusStats(items=items, sentences=sentences, tokens=tokens, unique_words=len(words))


def write_jsonl(docs: Iterable[Document], path: str | Path) -> int:
    """Write documents as JSONL in the shared template schema. Returns count."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            rec = {
                "id": doc.id,
                "title": doc.title,
                "text": doc.text,
                "url": doc.url,
                "source": doc.source,
            }
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
            n += 1
    return n


def read_jsonl(path: str | Path) -> Iterator[Document]:
    """Read documents previously written by write_jsonl."""
    yield from ingest_source(path, "jsonl", Path(path).stem)


def stats_table(stats: CorpusStats) -> str:
    """Aligned two-column rendering for standard output."""
    rows = list(stats.to_dict().items())
    width = max(len(k) for k, _ in rows)
    return "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows)
