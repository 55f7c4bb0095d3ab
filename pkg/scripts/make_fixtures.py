#!/usr/bin/env python3
"""Regenerate the committed test fixtures (deterministic).

Run from the repo root:  python scripts/make_fixtures.py
"""

from __future__ import annotations

import json
import random
from pathlib import Path

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"

SUBJECTS = ["dadka", "ardayda", "hooyada", "wiilka", "gabadha", "odayga", "shaqaalaha"]
VERBS = ["tagay", "arkay", "keenay", "qoray", "akhriyay", "dhisay", "gaday"]
OBJECTS = ["buugga", "wararka", "guriga", "magaalada", "suuqa", "dugsiga", "caanaha"]
TIMES = ["maanta", "shalay", "berri", "sanadkan", "caawa"]
TAILS = ["si fiican", "si degdeg ah", "wax badan", "mar kale"]


def make_pretrain_corpus(path: Path, n_docs: int = 50) -> None:
    rng = random.Random(101)
    rows = []
    for i in range(n_docs):
        n_sent = rng.choice([1, 1, 2])
        sents = []
        for _ in range(n_sent):
            words = [rng.choice(SUBJECTS), rng.choice(TIMES), rng.choice(VERBS),
                     rng.choice(OBJECTS)]
            if rng.random() < 0.5:
                words.append(rng.choice(TAILS))
            sents.append(" ".join(words) + ".")
        rows.append({
            "id": f"doc-{i:03d}",
            "title": None,
            "text": " ".join(sents),
            "url": None,
            "source": "fixture",
        })
    _write_jsonl(path, rows)


FAKE_WORDS = ["been", "fidmad", "khiyaano", "warxumo", "fekrad"]
REAL_WORDS = ["run", "xaqiiq", "caddayn", "dhab", "sugan"]


def make_binary_fixture(path: Path, n: int = 32) -> None:
    """Linearly separable fake/real set: label-specific vocabularies."""
    rng = random.Random(202)
    rows = []
    for i in range(n):
        label = "fake" if i % 2 == 0 else "real"
        pool = FAKE_WORDS if label == "fake" else REAL_WORDS
        words = [rng.choice(pool) for _ in range(3)]
        filler = [rng.choice(SUBJECTS), rng.choice(VERBS)]
        text = " ".join([words[0], filler[0], words[1], filler[1], words[2]])
        rows.append({"id": f"bin-{i:03d}", "text": text, "label": label})
    _write_jsonl(path, rows)


TOPIC_WORDS = {
    "ciyaaraha": ["kubadda", "tartanka", "garoonka", "ciyaartoy"],
    "siyaasadda": ["doorashada", "baarlamaanka", "xukuumadda", "madaxweyne"],
    "ganacsiga": ["suuqa", "lacagta", "ganacsade", "badeecada"],
}


def make_multiclass_fixture(path: Path, per_class: int = 12) -> None:
    rng = random.Random(303)
    rows = []
    i = 0
    for label, pool in TOPIC_WORDS.items():
        for _ in range(per_class):
            words = [rng.choice(pool) for _ in range(3)] + [rng.choice(VERBS)]
            rng.shuffle(words)
            rows.append({"id": f"topic-{i:03d}", "text": " ".join(words), "label": label})
            i += 1
    _write_jsonl(path, rows)


CATEGORY_WORDS = {
    "abuse": ["caay", "af-lagaado"],
    "insult": ["doqon", "nacas"],
    "threat": ["hanjabaad", "waan-ku-dili"],
}


def make_multilabel_fixture(path: Path, n: int = 30) -> None:
    rng = random.Random(404)
    rows = []
    cats = sorted(CATEGORY_WORDS)
    for i in range(n):
        chosen = sorted(rng.sample(cats, k=rng.choice([0, 1, 1, 2])))
        words = [w for c in chosen for w in CATEGORY_WORDS[c]]
        words += [rng.choice(SUBJECTS), rng.choice(VERBS)]
        rng.shuffle(words)
        rows.append({"id": f"tox-{i:03d}", "text": " ".join(words), "labels": chosen})
    _write_jsonl(path, rows)


def make_campaign_items(path: Path, n_fakenews: int = 10, n_toxicity: int = 10) -> None:
    rng = random.Random(505)
    rows = []
    for i in range(n_fakenews):
        rows.append({
            "id": f"fn-{i:03d}",
            "text": f"war {rng.choice(SUBJECTS)} {rng.choice(VERBS)} {rng.choice(OBJECTS)}",
            "task": "fakenews",
            "source": "channel-a" if i % 2 == 0 else "channel-b",
        })
    for i in range(n_toxicity):
        rows.append({
            "id": f"tx-{i:03d}",
            "text": f"faallo {rng.choice(SUBJECTS)} {rng.choice(OBJECTS)}",
            "task": "toxicity",
            "source": "topic-constitution",
        })
    _write_jsonl(path, rows)


def _write_jsonl(path: Path, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    print(f"wrote {path} ({len(rows)} rows)")


if __name__ == "__main__":
    make_pretrain_corpus(FIXTURES / "pretrain_corpus.jsonl")
    make_binary_fixture(FIXTURES / "binary_separable.jsonl")
    make_multiclass_fixture(FIXTURES / "topics_multiclass.jsonl")
    make_multilabel_fixture(FIXTURES / "toxicity_multilabel.jsonl")
    make_campaign_items(FIXTURES / "campaign_items.jsonl")
