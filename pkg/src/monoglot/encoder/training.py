"""Masked-LM pretraining loop: seeded batching, linear warmup/decay, Adam.

Fully deterministic per seed: batch sampling, per-step masking, and dropout
each draw from their own substream derived from (seed, stream tag, step).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import IO, Sequence

import numpy as np

from ..mlm_data import InputSequence, MaskedBatch, MaskingPolicy, apply_masking
from .checkpoint import EncoderCheckpoint
from .model import ModelConfig, NoMaskedPositions, compute_gradients, init_model
from .optim import adam_step, init_adam, linear_schedule_lr

_BATCH_STREAM, _MASK_STREAM, _DROPOUT_STREAM = 11, 13, 17


@dataclass(frozen=True)
class PretrainSchedule:
    steps: int
    batch_size: int = 16
    lr: float = 1e-3
    warmup_frac: float = 0.1
    log_every: int = 10

    def __post_init__(self) -> None:
        if self.steps < 0 or self.batch_size < 1:
            raise ValueError("steps must be >= 0 and batch_size >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")


def _stream_seed(seed: int, tag: int, step: int) -> int:
    return int(np.random.SeedSequence([seed, tag, step]).generate_state(1)[0])


def pretrain(
    sequences: Sequence[InputSequence],
    cfg: ModelConfig,
    policy: MaskingPolicy,
    schedule: PretrainSchedule,
    seed: int,
    vocab_fingerprint: str,
    log_stream: IO[str] | None = None,
) -> tuple[EncoderCheckpoint, list[dict]]:
    """Run masked-batch training and return (checkpoint, per-step history).

    On a non-finite loss the run aborts and the checkpoint holds the last
    good parameters, with the divergence step recorded in training_meta.
    History rows are {"step", "loss", "lr"}; every ``log_every``-th row is
    also written to ``log_stream`` as line-delimited JSON.
    """
    if not sequences:
        raise ValueError("no input sequences")
    params = init_model(cfg, seed)
    state = init_adam(params, lr=schedule.lr)
    sampler = np.random.default_rng(np.random.SeedSequence([seed, _BATCH_STREAM]))
    history: list[dict] = []
    meta: dict = {"seed": seed, "steps": 0, "final_loss": None, "skipped_batches": 0}

    last_good = {k: v.copy() for k, v in params.items()}
    for step in range(schedule.steps):
        idx = sampler.choice(
            len(sequences),
            size=schedule.batch_size,
            replace=len(sequences) < schedule.batch_size,
        )
        batch_seqs = [sequences[int(i)] for i in idx]
        step_policy = replace(policy, seed=_stream_seed(policy.seed, _MASK_STREAM, step))
        batch: MaskedBatch = apply_masking(batch_seqs, step_policy, cfg.vocab_size)

        lr = linear_schedule_lr(step, schedule.steps, schedule.lr, schedule.warmup_frac)
        rng = np.random.default_rng(np.random.SeedSequence([seed, _DROPOUT_STREAM, step]))
        try:
            loss, grads = compute_gradients(cfg, params, batch, train_mode=True, rng=rng)
        except NoMaskedPositions:
            meta["skipped_batches"] += 1
            continue
        if not np.isfinite(loss):
            meta["diverged_at_step"] = step
            params = last_good
            break

        last_good = {k: v.copy() for k, v in params.items()}
        params = adam_step(params, grads, state, lr=lr)
        row = {"step": step, "loss": loss, "lr": lr}
        history.append(row)
        meta["steps"] = step + 1
        meta["final_loss"] = loss
        if log_stream is not None and step % schedule.log_every == 0:
            log_stream.write(json.dumps(row) + "\n")

    ckpt = EncoderCheckpoint(
        config=cfg,
        params=params,
        vocab_fingerprint=vocab_fingerprint,
        training_meta=meta,
    )
    return ckpt, history


def smoothed_loss(history: Sequence[dict], window: int = 20) -> tuple[float, float]:
    """(initial, final) mean loss over the first/last ``window`` steps."""
    losses = [row["loss"] for row in history]
    if not losses:
        raise ValueError("empty history")
    w = min(window, len(losses))
    return float(np.mean(losses[:w])), float(np.mean(losses[-w:]))
