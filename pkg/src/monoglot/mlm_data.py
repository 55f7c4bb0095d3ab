"""Fixed-length model inputs and masked-language-model corruption.

Sequences are [CLS] + tokens + [SEP] padded to a fixed length. Masking selects
non-special attended positions independently and corrupts them with the
standard 80/10/10 mask/random/keep split. Randomness is a seeded PCG64 stream
derived per sequence from (seed, sequence index), which makes batches
byte-identical across runs, platforms, and worker schedules.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .wordpiece import CLS_ID, MASK_ID, PAD_ID, SEP_ID

IGNORE_LABEL = -100
NUM_SPECIALS = 5  # ids 0..4 are reserved


@dataclass(frozen=True)
class InputSequence:
    """One fixed-length input: token ids, attention mask, segment ids."""

    ids: tuple[int, ...]
    attention_mask: tuple[int, ...]
    type_ids: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.ids)


@dataclass(frozen=True)
class MaskingPolicy:
    """Selection probability, corruption split, and seed for MLM sampling."""

    select_prob: float = 0.15
    mask_frac: float = 0.8
    random_frac: float = 0.1
    keep_frac: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.select_prob <= 1.0:
            raise ValueError("select_prob must be in [0, 1]")
        total = self.mask_frac + self.random_frac + self.keep_frac
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"mask/random/keep fractions must sum to 1, got {total}")
        if min(self.mask_frac, self.random_frac, self.keep_frac) < 0:
            raise ValueError("corruption fractions must be non-negative")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


@dataclass(frozen=True)
class MaskedBatch:
    """Corrupted inputs plus aligned labels (originals at selected positions,
    IGNORE_LABEL elsewhere)."""

    inputs: tuple[InputSequence, ...]
    labels: tuple[tuple[int, ...], ...]

    def __len__(self) -> int:
        return len(self.inputs)

    def num_labeled(self) -> int:
        return sum(1 for row in self.labels for v in row if v != IGNORE_LABEL)

    def to_json(self) -> str:
        return json.dumps(
            {
                "inputs": [
                    {
                        "ids": list(s.ids),
                        "attention_mask": list(s.attention_mask),
                        "type_ids": list(s.type_ids),
                    }
                    for s in self.inputs
                ],
                "labels": [list(row) for row in self.labels],
            }
        )

    @staticmethod
    def from_json(raw: str) -> "MaskedBatch":
        data = json.loads(raw)
        seqs = tuple(
            InputSequence(
                ids=tuple(s["ids"]),
                attention_mask=tuple(s["attention_mask"]),
                type_ids=tuple(s["type_ids"]),
            )
            for s in data["inputs"]
        )
        return MaskedBatch(inputs=seqs, labels=tuple(tuple(r) for r in data["labels"]))


def build_sequences(sentences: Sequence[Sequence[int]], max_len: int) -> list[InputSequence]:
    """Wrap token-id lists as [CLS] + ids (truncated to max_len-2) + [SEP] + pads."""
    if max_len < 3:
        raise ValueError(f"max_len must be >= 3, got {max_len}")
    out = []
    for sent in sentences:
        body = list(sent)[: max_len - 2]
        ids = [CLS_ID] + body + [SEP_ID]
        n_real = len(ids)
        ids += [PAD_ID] * (max_len - n_real)
        mask = [1] * n_real + [0] * (max_len - n_real)
        out.append(
            InputSequence(ids=tuple(ids), attention_mask=tuple(mask), type_ids=(0,) * max_len)
        )
    return out


def _sequence_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def apply_masking(
    seqs: Sequence[InputSequence],
    policy: MaskingPolicy,
    vocab_size: int,
    *,
    index_offset: int = 0,
) -> MaskedBatch:
    """Corrupt sequences per the policy; labels record the original ids.

    Each sequence draws from its own (seed, offset+index) substream, so the
    result does not depend on batch composition order or parallelism.
    ``index_offset`` lets callers keep per-sequence streams stable when a
    corpus is masked in chunks.
    """
    if vocab_size <= NUM_SPECIALS:
        raise ValueError("vocab_size must exceed the special-token count")
    inputs = []
    labels = []
    for i, seq in enumerate(seqs):
        rng = _sequence_rng(policy.seed, index_offset + i)
        L = len(seq)
        # fixed-length draws keep the stream layout-independent
        select_draw = rng.random(L)
        action_draw = rng.random(L)
        random_ids = rng.integers(NUM_SPECIALS, vocab_size, size=L)

        ids = np.array(seq.ids, dtype=np.int64)
        eligible = (np.array(seq.attention_mask) == 1) & (ids >= NUM_SPECIALS)
        selected = eligible & (select_draw < policy.select_prob)

        row_labels = np.full(L, IGNORE_LABEL, dtype=np.int64)
        row_labels[selected] = ids[selected]

        new_ids = ids.copy()
        to_mask = selected & (action_draw < policy.mask_frac)
        to_random = (
            selected
            & ~to_mask
            & (action_draw < policy.mask_frac + policy.random_frac)
        )
        new_ids[to_mask] = MASK_ID
        new_ids[to_random] = random_ids[to_random]

        inputs.append(
            InputSequence(
                ids=tuple(int(v) for v in new_ids),
                attention_mask=seq.attention_mask,
                type_ids=seq.type_ids,
            )
        )
        labels.append(tuple(int(v) for v in row_labels))
    return MaskedBatch(inputs=tuple(inputs), labels=tuple(labels))


def batch_arrays(batch: MaskedBatch) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(ids, attention_mask, labels) as int64 arrays of shape (B, L)."""
    ids = np.array([s.ids for s in batch.inputs], dtype=np.int64)
    mask = np.array([s.attention_mask for s in batch.inputs], dtype=np.int64)
    labels = np.array(batch.labels, dtype=np.int64)
    return ids, mask, labels
