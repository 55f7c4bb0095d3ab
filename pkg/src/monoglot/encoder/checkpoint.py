"""Checkpoint container and its bit-exact file format.

Layout: one line of JSON (config, tensor manifest, vocabulary fingerprint,
training metadata, optional task head spec), then the raw little-endian
float32 tensor blob concatenated in manifest order. Parameters live in
float32, so save -> load reproduces forward outputs bit for bit.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from ..wordpiece import SubwordVocabulary, serialize_vocab
from .model import ModelConfig

FORMAT_NAME = "monoglot-checkpoint"
FORMAT_VERSION = 1


class CheckpointError(Exception):
    """Malformed checkpoint file or fingerprint mismatch."""


def vocab_fingerprint(vocab: SubwordVocabulary | bytes | str | Path) -> str:
    """SHA-256 of the canonical vocabulary file content."""
    if isinstance(vocab, SubwordVocabulary):
        data = serialize_vocab(vocab)
    elif isinstance(vocab, bytes):
        data = vocab
    else:
        data = Path(vocab).read_bytes()
    return hashlib.sha256(data).hexdigest()


@dataclass
class EncoderCheckpoint:
    config: ModelConfig
    params: dict[str, np.ndarray]
    vocab_fingerprint: str
    training_meta: dict = field(default_factory=dict)
    task_spec: dict | None = None  # present on fine-tuned task checkpoints


def save_checkpoint(ckpt: EncoderCheckpoint, path: str | Path) -> None:
    manifest = [{"name": name, "shape": list(t.shape)} for name, t in ckpt.params.items()]
    header = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "config": ckpt.config.to_dict(),
        "manifest": manifest,
        "vocab_fingerprint": ckpt.vocab_fingerprint,
        "training_meta": ckpt.training_meta,
    }
    if ckpt.task_spec is not None:
        header["task_spec"] = ckpt.task_spec
    blob = b"".join(
        np.ascontiguousarray(ckpt.params[m["name"]], dtype="<f4").tobytes()
        for m in manifest
    )
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        fh.write(blob)


def load_checkpoint(
    path: str | Path,
    vocab: SubwordVocabulary | str | None = None,
) -> EncoderCheckpoint:
    """Load a checkpoint, refusing a vocabulary fingerprint mismatch.

    ``vocab`` may be the vocabulary itself or its fingerprint string; when
    given, it must match the fingerprint recorded at save time.
    """
    raw = Path(path).read_bytes()
    newline = raw.find(b"\n")
    if newline < 0:
        raise CheckpointError(f"{path}: missing header line")
    try:
        header = json.loads(raw[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable header: {exc}") from exc
    if header.get("format") != FORMAT_NAME:
        raise CheckpointError(f"{path}: not a {FORMAT_NAME} file")

    if vocab is not None:
        expected = vocab if isinstance(vocab, str) else vocab_fingerprint(vocab)
        if expected != header["vocab_fingerprint"]:
            raise CheckpointError(
                "vocabulary fingerprint mismatch: checkpoint was saved with "
                f"{header['vocab_fingerprint'][:12]}..., supplied vocabulary is "
                f"{expected[:12]}..."
            )

    blob = raw[newline + 1:]
    manifest = header["manifest"]
    expected_bytes = sum(int(np.prod(m["shape"])) for m in manifest) * 4
    if len(blob) != expected_bytes:
        raise CheckpointError(
            f"{path}: tensor blob is {len(blob)} bytes, manifest expects {expected_bytes}"
        )
    params: dict[str, np.ndarray] = {}
    offset = 0
    for m in manifest:
        shape = tuple(m["shape"])
        count = int(np.prod(shape))
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
        params[m["name"]] = arr.reshape(shape).copy()
        offset += count * 4
    return EncoderCheckpoint(
        config=ModelConfig.from_dict(header["config"]),
        params=params,
        vocab_fingerprint=header["vocab_fingerprint"],
        training_meta=header.get("training_meta", {}),
        task_spec=header.get("task_spec"),
    )


def checkpoints_equal(a: EncoderCheckpoint, b: EncoderCheckpoint) -> bool:
    if a.config != b.config or a.vocab_fingerprint != b.vocab_fingerprint:
        return False
    if set(a.params) != set(b.params):
        return False
    return all(np.array_equal(a.params[k], b.params[k]) for k in a.params)
