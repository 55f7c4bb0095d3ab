"""Classification heads on top of a pretrained encoder checkpoint.

Covers the three task shapes: binary, multi-class (softmax over the hidden
state at the [CLS] position) and multi-label (per-label sigmoid). Fine-tuning
updates every weight with Adam and keeps the best-validation epoch. A seeded
random search stands in for heavier hyperparameter tooling.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .encoder.checkpoint import CheckpointError, EncoderCheckpoint
from .encoder.model import (
    ModelConfig,
    encoder_backward,
    encoder_forward,
    init_linear,
    softmax,
    _dropout_scale,
    _apply_scale,
)
from .encoder.optim import adam_step, init_adam
from .mlm_data import InputSequence, build_sequences
from .wordpiece import SubwordVocabulary, encode
from .encoder.checkpoint import vocab_fingerprint

TASK_KINDS = ("binary", "multiclass", "multilabel")

# Stage-2 toxicity categories; the stage-1 toxic/non-toxic flag is a separate
# binary task, not a seventh category.
TOXICITY_CATEGORIES = ("abuse", "obscene", "insult", "identity-hate", "severe-toxic", "threat")


class TaskError(Exception):
    """Invalid task spec, labels outside the spec, or empty training data."""


@dataclass(frozen=True)
class TaskSpec:
    kind: str
    labels: tuple[str, ...]
    thresholds: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in TASK_KINDS:
            raise TaskError(f"kind must be one of {TASK_KINDS}, got {self.kind!r}")
        if len(self.labels) < 2:
            raise TaskError("need at least 2 labels")
        if self.kind == "binary" and len(self.labels) != 2:
            raise TaskError("binary task needs exactly 2 labels")
        if len(set(self.labels)) != len(self.labels):
            raise TaskError("label names must be unique")
        if not self.thresholds:
            object.__setattr__(self, "thresholds", (0.5,) * len(self.labels))
        if len(self.thresholds) != len(self.labels):
            raise TaskError("one threshold per label")
        if any(not 0.0 < t < 1.0 for t in self.thresholds):
            raise TaskError("thresholds must lie in (0, 1)")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "labels": list(self.labels),
                "thresholds": list(self.thresholds)}

    @staticmethod
    def from_dict(d: dict) -> "TaskSpec":
        return TaskSpec(kind=d["kind"], labels=tuple(d["labels"]),
                        thresholds=tuple(d.get("thresholds") or ()))


def toxicity_multilabel_spec() -> TaskSpec:
    return TaskSpec(kind="multilabel", labels=TOXICITY_CATEGORIES)


@dataclass(frozen=True)
class LabeledExample:
    id: str
    text: str
    label: str | frozenset[str]


def read_labeled_jsonl(path: str | Path) -> list[LabeledExample]:
    """{"id","text","label"} rows, or {"id","text","labels":[...]} for multilabel."""
    out = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        rec = json.loads(line)
        if "labels" in rec:
            label: str | frozenset = frozenset(rec["labels"])
        elif "label" in rec:
            label = rec["label"]
        else:
            raise TaskError(f"{path}:{lineno}: record has neither 'label' nor 'labels'")
        out.append(LabeledExample(id=str(rec["id"]), text=rec["text"], label=label))
    return out


def write_labeled_jsonl(examples: Iterable[LabeledExample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            if isinstance(ex.label, frozenset):
                rec = {"id": ex.id, "text": ex.text, "labels": sorted(ex.label)}
            else:
                rec = {"id": ex.id, "text": ex.text, "label": ex.label}
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


@dataclass(frozen=True)
class FineTuneConfig:
    lr: float = 3e-4
    batch_size: int = 8
    epochs: int = 20
    seed: int = 0
    dropout_prob: float = 0.1
    patience: int = 0  # 0 disables early stopping
    max_len: int = 64

    def __post_init__(self) -> None:
        if self.lr <= 0 or self.batch_size < 1 or self.epochs < 0 or self.max_len < 3:
            raise TaskError("invalid fine-tune config")


@dataclass
class TaskModel:
    """Encoder copy plus a linear head; immutable once fine-tuned."""

    config: ModelConfig
    params: dict[str, np.ndarray]  # encoder tensors + head.weight / head.bias
    spec: TaskSpec
    vocab_fingerprint: str
    training_meta: dict = field(default_factory=dict)


def attach_head(ckpt: EncoderCheckpoint, spec: TaskSpec, seed: int) -> TaskModel:
    """Copy the encoder weights and attach a freshly initialized head."""
    rng = np.random.default_rng(seed)
    params = {k: v.copy() for k, v in ckpt.params.items() if not k.startswith("mlm.")}
    params["head.weight"] = init_linear((ckpt.config.hidden_dim, len(spec.labels)), rng)
    params["head.bias"] = np.zeros(len(spec.labels), dtype=np.float32)
    return TaskModel(
        config=ckpt.config,
        params=params,
        spec=spec,
        vocab_fingerprint=ckpt.vocab_fingerprint,
    )


def encode_texts(
    texts: Sequence[str],
    vocab: SubwordVocabulary,
    max_len: int,
    expected_fingerprint: str | None = None,
) -> list[InputSequence]:
    """Encode raw texts into model inputs, checking the vocabulary binding."""
    if expected_fingerprint is not None:
        actual = vocab_fingerprint(vocab)
        if actual != expected_fingerprint:
            raise CheckpointError(
                "vocabulary fingerprint mismatch: model expects "
                f"{expected_fingerprint[:12]}..., supplied vocabulary is {actual[:12]}..."
            )
    return build_sequences([encode(t, vocab) for t in texts], max_len)


def _forward_pooled(model: TaskModel, ids, mask, train_mode=False, rng=None):
    hidden, cache = encoder_forward(model.config, model.params, ids, mask, train_mode, rng)
    pooled = hidden[:, 0, :]  # [CLS] position
    pooled_scale = _dropout_scale(pooled.shape, model.config.dropout_prob, train_mode, rng)
    pooled_d = _apply_scale(pooled, pooled_scale)
    w = np.asarray(model.params["head.weight"], dtype=np.float64)
    b = np.asarray(model.params["head.bias"], dtype=np.float64)
    logits = pooled_d @ w + b
    return logits, {"cache": cache, "pooled_d": pooled_d, "pooled_scale": pooled_scale, "w": w}


def _probs_from_logits(kind: str, logits: np.ndarray) -> np.ndarray:
    if kind == "multilabel":
        return 1.0 / (1.0 + np.exp(-logits))
    return softmax(logits)


def forward_classify(
    model: TaskModel,
    seqs: Sequence[InputSequence],
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Per-example probabilities: softmax (single-label) or sigmoid (multilabel)."""
    ids = np.array([s.ids for s in seqs], dtype=np.int64)
    mask = np.array([s.attention_mask for s in seqs], dtype=np.int64)
    logits, _ = _forward_pooled(model, ids, mask, train_mode, rng)
    return _probs_from_logits(model.spec.kind, logits)


def classification_loss(kind: str, logits: np.ndarray, targets: np.ndarray):
    """Loss and d_logits. Single-label: mean cross-entropy over examples with
    integer targets. Multilabel: mean per-label binary cross-entropy with a
    0/1 target matrix."""
    B = logits.shape[0]
    if kind == "multilabel":
        # stable BCE on logits: log(1+exp(-|z|)) + max(z,0) - z*y
        z = logits
        loss = float(np.mean(np.log1p(np.exp(-np.abs(z))) + np.maximum(z, 0.0) - z * targets))
        probs = 1.0 / (1.0 + np.exp(-z))
        d_logits = (probs - targets) / targets.size
        return loss, d_logits
    zmax = logits.max(axis=-1, keepdims=True)
    logsumexp = zmax[:, 0] + np.log(np.exp(logits - zmax).sum(axis=-1))
    loss = float((logsumexp - logits[np.arange(B), targets]).mean())
    probs = softmax(logits)
    probs[np.arange(B), targets] -= 1.0
    return loss, probs / B


def _targets_for(spec: TaskSpec, examples: Sequence[LabeledExample]) -> np.ndarray:
    index = {name: i for i, name in enumerate(spec.labels)}
    if spec.kind == "multilabel":
        t = np.zeros((len(examples), len(spec.labels)), dtype=np.float64)
        for r, ex in enumerate(examples):
            if not isinstance(ex.label, frozenset):
                raise TaskError(f"example {ex.id}: multilabel task needs a label set")
            for name in ex.label:
                if name not in index:
                    raise TaskError(f"example {ex.id}: unknown label {name!r}")
                t[r, index[name]] = 1.0
        return t
    t = np.zeros(len(examples), dtype=np.int64)
    for r, ex in enumerate(examples):
        if not isinstance(ex.label, str) or ex.label not in index:
            raise TaskError(f"example {ex.id}: unknown label {ex.label!r}")
        t[r] = index[ex.label]
    return t


def _classifier_gradients(model: TaskModel, ids, mask, targets, train_mode, rng):
    logits, fwd = _forward_pooled(model, ids, mask, train_mode, rng)
    loss, d_logits = classification_loss(model.spec.kind, logits, targets)
    grads: dict[str, np.ndarray] = {}
    grads["head.weight"] = fwd["pooled_d"].T @ d_logits
    grads["head.bias"] = d_logits.sum(axis=0)
    d_pooled = _apply_scale(d_logits @ fwd["w"].T, fwd["pooled_scale"])
    d_hidden = np.zeros_like(fwd["cache"]["hidden"])
    d_hidden[:, 0, :] = d_pooled
    grads.update(encoder_backward(model.config, fwd["cache"], d_hidden))
    return loss, grads


def evaluate_metric(model: TaskModel, seqs, examples: Sequence[LabeledExample]) -> float:
    """Validation metric: accuracy (single-label) or mean per-label accuracy."""
    probs = forward_classify(model, seqs)
    targets = _targets_for(model.spec, examples)
    if model.spec.kind == "multilabel":
        preds = probs >= np.asarray(model.spec.thresholds)
        return float((preds == (targets > 0.5)).mean())
    return float((probs.argmax(axis=1) == targets).mean())


def finetune(
    model: TaskModel,
    train: Sequence[LabeledExample],
    val: Sequence[LabeledExample],
    vocab: SubwordVocabulary,
    cfg: FineTuneConfig,
) -> tuple[TaskModel, list[dict]]:
    """Fine-tune all weights; return the best-validation model and history.

    History rows are {"epoch", "train_loss", "val_metric"} (val_metric absent
    when no validation examples are supplied, in which case the final epoch's
    weights are returned). Deterministic per cfg.seed. The input model is not
    mutated.
    """
    if not train:
        raise TaskError("empty training set")
    if cfg.epochs == 0:
        return TaskModel(model.config, {k: v.copy() for k, v in model.params.items()},
                         model.spec, model.vocab_fingerprint, dict(model.training_meta)), []

    run_cfg = replace(model.config, dropout_prob=cfg.dropout_prob)
    work = TaskModel(run_cfg, {k: v.copy() for k, v in model.params.items()},
                     model.spec, model.vocab_fingerprint)
    train_seqs = encode_texts([ex.text for ex in train], vocab, cfg.max_len,
                              model.vocab_fingerprint)
    train_ids = np.array([s.ids for s in train_seqs], dtype=np.int64)
    train_mask = np.array([s.attention_mask for s in train_seqs], dtype=np.int64)
    targets = _targets_for(model.spec, train)
    val_seqs = encode_texts([ex.text for ex in val], vocab, cfg.max_len) if val else []

    state = init_adam(work.params, lr=cfg.lr)
    shuffler = np.random.default_rng(np.random.SeedSequence([cfg.seed, 23]))
    history: list[dict] = []
    best_metric = -math.inf
    best_params = None
    best_epoch = -1
    since_best = 0

    for epoch in range(cfg.epochs):
        order = shuffler.permutation(len(train))
        epoch_losses = []
        for start in range(0, len(train), cfg.batch_size):
            sel = order[start:start + cfg.batch_size]
            rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 29, epoch, start]))
            loss, grads = _classifier_gradients(
                work, train_ids[sel], train_mask[sel], targets[sel],
                train_mode=True, rng=rng,
            )
            if not np.isfinite(loss):
                raise TaskError(f"non-finite loss at epoch {epoch}")
            work.params = adam_step(work.params, grads, state)
            epoch_losses.append(loss)
        row = {"epoch": epoch, "train_loss": float(np.mean(epoch_losses))}
        if val:
            metric = evaluate_metric(work, val_seqs, val)
            row["val_metric"] = metric
            if metric > best_metric:
                best_metric = metric
                best_params = {k: v.copy() for k, v in work.params.items()}
                best_epoch = epoch
                since_best = 0
            else:
                since_best += 1
        history.append(row)
        if val and cfg.patience > 0 and since_best >= cfg.patience:
            break

    final_params = best_params if best_params is not None else work.params
    meta = {"best_epoch": best_epoch if val else len(history) - 1,
            "epochs_run": len(history)}
    if val:
        meta["best_val_metric"] = best_metric
    result = TaskModel(model.config, final_params, model.spec,
                       model.vocab_fingerprint, meta)
    return result, history


def predict(
    model: TaskModel,
    texts: Sequence[str],
    vocab: SubwordVocabulary,
    max_len: int = 64,
) -> list[str] | list[frozenset[str]]:
    """Argmax label names (ties break to the first label in spec order), or
    thresholded label sets for multilabel."""
    seqs = encode_texts(texts, vocab, max_len, model.vocab_fingerprint)
    probs = forward_classify(model, seqs)
    if model.spec.kind == "multilabel":
        th = np.asarray(model.spec.thresholds)
        return [
            frozenset(name for j, name in enumerate(model.spec.labels) if row[j] >= th[j])
            for row in probs
        ]
    return [model.spec.labels[int(i)] for i in probs.argmax(axis=1)]


def split_dataset(
    examples: Sequence[LabeledExample],
    ratios: tuple[float, float, float],
    seed: int,
    stratify: bool = True,
) -> tuple[list[LabeledExample], list[LabeledExample], list[LabeledExample]]:
    """Deterministic (train, val, test) split, stratified by label (or by the
    toxic/non-toxic flag for multilabel sets)."""
    if abs(sum(ratios) - 1.0) > 1e-9 or any(r < 0 for r in ratios):
        raise TaskError("ratios must be non-negative and sum to 1")
    parts = sum(1 for r in ratios if r > 0)

    def key(ex: LabeledExample) -> str:
        if isinstance(ex.label, frozenset):
            return "toxic" if ex.label else "non-toxic"
        return ex.label

    groups: dict[str, list[int]] = {}
    for i, ex in enumerate(examples):
        groups.setdefault(key(ex) if stratify else "", []).append(i)

    rng = np.random.default_rng(seed)
    splits: tuple[list[int], list[int], list[int]] = ([], [], [])
    for gkey in sorted(groups):
        idx = groups[gkey]
        if stratify and len(idx) < parts:
            raise TaskError(
                f"class {gkey!r} has {len(idx)} examples, fewer than the {parts} split parts"
            )
        perm = rng.permutation(len(idx))
        counts = _allocate(len(idx), ratios)
        pos = 0
        for s in range(3):
            for j in perm[pos:pos + counts[s]]:
                splits[s].append(idx[int(j)])
            pos += counts[s]
    return tuple([examples[i] for i in sorted(part)] for part in splits)  # type: ignore[return-value]


def _allocate(n: int, ratios: tuple[float, float, float]) -> list[int]:
    counts = [int(math.floor(r * n)) for r in ratios]
    remainder = n - sum(counts)
    fracs = sorted(
        range(3), key=lambda i: (-(ratios[i] * n - math.floor(ratios[i] * n)), i)
    )
    for i in range(remainder):
        counts[fracs[i % 3]] += 1
    return counts


@dataclass(frozen=True)
class SearchSpace:
    lr_range: tuple[float, float] = (1e-4, 1e-3)  # log-uniform
    batch_sizes: tuple[int, ...] = (4, 8, 16)
    epochs_choices: tuple[int, ...] = (5, 10, 20)

    def __post_init__(self) -> None:
        if self.lr_range[0] <= 0 or self.lr_range[0] > self.lr_range[1]:
            raise TaskError("invalid lr_range")


def random_search(
    ckpt: EncoderCheckpoint,
    spec: TaskSpec,
    train: Sequence[LabeledExample],
    val: Sequence[LabeledExample],
    vocab: SubwordVocabulary,
    space: SearchSpace,
    trials: int,
    seed: int,
    max_len: int = 64,
) -> tuple[FineTuneConfig, list[dict]]:
    """Seeded random search over fine-tune configs; argmax validation metric.

    Ties go to the earliest trial. Trial seeds derive from (seed, trial), so
    results do not depend on execution order.
    """
    if trials < 1:
        raise TaskError("trials must be >= 1")
    if not val:
        raise TaskError("random search needs validation examples")
    log: list[dict] = []
    best: tuple[float, int, FineTuneConfig] | None = None
    for trial in range(trials):
        rng = np.random.default_rng(np.random.SeedSequence([seed, trial]))
        lo, hi = space.lr_range
        lr = float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
        cfg = FineTuneConfig(
            lr=lr,
            batch_size=int(rng.choice(space.batch_sizes)),
            epochs=int(rng.choice(space.epochs_choices)),
            seed=int(np.random.SeedSequence([seed, trial, 31]).generate_state(1)[0]),
            max_len=max_len,
        )
        model = attach_head(ckpt, spec, seed=cfg.seed)
        try:
            tuned, history = finetune(model, train, val, vocab, cfg)
            metric = tuned.training_meta.get("best_val_metric", -math.inf)
            log.append({"trial": trial, "config": asdict(cfg), "val_metric": metric})
        except TaskError as exc:
            log.append({"trial": trial, "config": asdict(cfg), "error": str(exc)})
            continue
        if best is None or metric > best[0]:
            best = (metric, trial, cfg)
    if best is None:
        raise TaskError(f"all {trials} trials failed: {json.dumps(log)}")
    return best[2], log
