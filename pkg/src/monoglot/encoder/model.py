"""Compact bidirectional transformer encoder with an MLM head.

Pure NumPy, post-layer-norm block layout, GELU feed-forward, tied output
projection. Forward and backward are written by hand; every gradient is exact
and verified against central finite differences in the test suite.

Conventions: (B, L, D) = batch, sequence, hidden; (B, H, L, dh) per head.
Parameters are stored float32; all arithmetic runs in float64 so loss
reductions and gradient checks are meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.special import erf
from scipy.stats import truncnorm

from ..mlm_data import IGNORE_LABEL, MaskedBatch, batch_arrays

LN_EPS = 1e-12
INIT_STD = 0.02
NUM_TYPE_EMBEDDINGS = 2  # always type 0 here; kept for layout compatibility


class NoMaskedPositions(Exception):
    """Batch carries no labeled positions; the loss average is undefined."""


class GradientError(Exception):
    """Non-finite loss or gradient; carries the offending tensor name."""


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    hidden_dim: int = 128
    num_layers: int = 2
    num_heads: int = 2
    ff_dim: int = 512
    max_positions: int = 128
    dropout_prob: float = 0.1

    def __post_init__(self) -> None:
        if self.hidden_dim % self.num_heads != 0:
            raise ValueError(
                f"hidden_dim {self.hidden_dim} not divisible by num_heads {self.num_heads}"
            )
        if min(self.vocab_size, self.hidden_dim, self.num_layers, self.num_heads,
               self.ff_dim, self.max_positions) <= 0:
            raise ValueError("all size fields must be positive")
        if not 0.0 <= self.dropout_prob < 1.0:
            raise ValueError("dropout_prob must be in [0, 1)")

    @property
    def head_dim(self) -> int:
        return self.hidden_dim // self.num_heads

    def to_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "hidden_dim": self.hidden_dim,
            "num_layers": self.num_layers,
            "num_heads": self.num_heads,
            "ff_dim": self.ff_dim,
            "max_positions": self.max_positions,
            "dropout_prob": self.dropout_prob,
        }

    @staticmethod
    def from_dict(d: Mapping) -> "ModelConfig":
        return ModelConfig(**{k: d[k] for k in (
            "vocab_size", "hidden_dim", "num_layers", "num_heads",
            "ff_dim", "max_positions", "dropout_prob")})


def desk_config(vocab_size: int, **overrides) -> ModelConfig:
    """Small preset that trains and gradient-checks in seconds."""
    base = dict(hidden_dim=128, num_layers=2, num_heads=2, ff_dim=512,
                max_positions=128, dropout_prob=0.1)
    base.update(overrides)
    return ModelConfig(vocab_size=vocab_size, **base)


def production_config(vocab_size: int = 70000) -> ModelConfig:
    """~126M-parameter preset. Config only; never trained in CI."""
    return ModelConfig(vocab_size=vocab_size, hidden_dim=768, num_layers=10,
                       num_heads=12, ff_dim=3072, max_positions=512,
                       dropout_prob=0.1)


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Canonical tensor manifest: name -> shape, in serialization order."""
    D, F, V = cfg.hidden_dim, cfg.ff_dim, cfg.vocab_size
    shapes: dict[str, tuple[int, ...]] = {
        "embeddings.token": (V, D),
        "embeddings.position": (cfg.max_positions, D),
        "embeddings.type": (NUM_TYPE_EMBEDDINGS, D),
        "embeddings.norm.scale": (D,),
        "embeddings.norm.offset": (D,),
    }
    for i in range(cfg.num_layers):
        p = f"layers.{i}"
        for proj in ("query", "key", "value", "output"):
            shapes[f"{p}.attention.{proj}.weight"] = (D, D)
            shapes[f"{p}.attention.{proj}.bias"] = (D,)
        shapes[f"{p}.attention.norm.scale"] = (D,)
        shapes[f"{p}.attention.norm.offset"] = (D,)
        shapes[f"{p}.ffn.intermediate.weight"] = (D, F)
        shapes[f"{p}.ffn.intermediate.bias"] = (F,)
        shapes[f"{p}.ffn.output.weight"] = (F, D)
        shapes[f"{p}.ffn.output.bias"] = (D,)
        shapes[f"{p}.ffn.norm.scale"] = (D,)
        shapes[f"{p}.ffn.norm.offset"] = (D,)
    shapes["mlm.transform.weight"] = (D, D)
    shapes["mlm.transform.bias"] = (D,)
    shapes["mlm.norm.scale"] = (D,)
    shapes["mlm.norm.offset"] = (D,)
    shapes["mlm.output_bias"] = (V,)
    return shapes


def num_parameters(cfg: ModelConfig) -> int:
    return sum(int(np.prod(s)) for s in param_shapes(cfg).values())


def init_model(cfg: ModelConfig, seed: int) -> dict[str, np.ndarray]:
    """Truncated-normal (+/-2 sigma, std 0.02) weights, zero biases, unit norms.

    Deterministic per seed: tensors are drawn in manifest order from one PCG64
    stream, with the truncation applied through the inverse CDF so no
    rejection loop perturbs the stream.
    """
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith(".scale"):
            params[name] = np.ones(shape, dtype=np.float32)
        elif name.endswith((".bias", ".offset", "output_bias")):
            params[name] = np.zeros(shape, dtype=np.float32)
        else:
            u = rng.random(shape)
            params[name] = (truncnorm.ppf(u, -2.0, 2.0) * INIT_STD).astype(np.float32)
    return params


def init_linear(shape: tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    """Same truncated-normal init used for a freshly attached head."""
    return (truncnorm.ppf(rng.random(shape), -2.0, 2.0) * INIT_STD).astype(np.float32)


# -------------------------- primitives --------------------------


def gelu(x: np.ndarray) -> np.ndarray:
    return x * 0.5 * (1.0 + erf(x / np.sqrt(2.0)))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    cdf = 0.5 * (1.0 + erf(x / np.sqrt(2.0)))
    pdf = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
    return cdf + x * pdf


def layer_norm(x: np.ndarray, scale: np.ndarray, offset: np.ndarray):
    """Returns (y, cache). Normalizes the last axis."""
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    inv_sigma = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (x - mu) * inv_sigma
    return xhat * scale + offset, (xhat, inv_sigma)


def layer_norm_backward(dy: np.ndarray, cache, scale: np.ndarray):
    """Returns (dx, dscale, doffset)."""
    xhat, inv_sigma = cache
    dxhat = dy * scale
    m1 = dxhat.mean(axis=-1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
    dx = (dxhat - m1 - xhat * m2) * inv_sigma
    axes = tuple(range(dy.ndim - 1))
    return dx, (dy * xhat).sum(axis=axes), dy.sum(axis=axes)


def softmax(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _dropout_scale(shape, prob: float, train: bool, rng) -> np.ndarray | None:
    """Inverted-dropout multiplier, or None when inactive."""
    if not train or prob <= 0.0:
        return None
    keep = rng.random(shape) >= prob
    return keep.astype(np.float64) / (1.0 - prob)


def _apply_scale(x: np.ndarray, scale: np.ndarray | None) -> np.ndarray:
    return x if scale is None else x * scale


def _p64(params: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}


# -------------------------- forward --------------------------


def encoder_forward(
    cfg: ModelConfig,
    params: Mapping[str, np.ndarray],
    ids: np.ndarray,
    attention_mask: np.ndarray,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
):
    """Run the encoder stack. Returns (hidden (B,L,D) float64, cache).

    The cache holds every intermediate the backward pass needs, plus the
    per-layer attention probabilities for inspection.
    """
    if train_mode and cfg.dropout_prob > 0.0 and rng is None:
        raise ValueError("train_mode with dropout requires an rng")
    B, L = ids.shape
    if L > cfg.max_positions:
        raise ValueError(f"sequence length {L} exceeds max_positions {cfg.max_positions}")
    if ids.min() < 0 or ids.max() >= cfg.vocab_size:
        raise ValueError("token id out of range for config vocab_size")
    p = _p64(params)
    H, dh = cfg.num_heads, cfg.head_dim
    inv_sqrt_dh = 1.0 / np.sqrt(dh)

    emb = p["embeddings.token"][ids] + p["embeddings.position"][:L] + p["embeddings.type"][0]
    x0, ln_emb_cache = layer_norm(emb, p["embeddings.norm.scale"], p["embeddings.norm.offset"])
    emb_scale = _dropout_scale(x0.shape, cfg.dropout_prob, train_mode, rng)
    hidden = _apply_scale(x0, emb_scale)

    # additive key mask: 0 where attended, -inf where padding
    key_bias = np.where(attention_mask[:, None, None, :] == 1, 0.0, -np.inf)

    layers = []
    for i in range(cfg.num_layers):
        pre = f"layers.{i}"
        Hin = hidden
        q2 = Hin @ p[f"{pre}.attention.query.weight"] + p[f"{pre}.attention.query.bias"]
        k2 = Hin @ p[f"{pre}.attention.key.weight"] + p[f"{pre}.attention.key.bias"]
        v2 = Hin @ p[f"{pre}.attention.value.weight"] + p[f"{pre}.attention.value.bias"]
        q = q2.reshape(B, L, H, dh).transpose(0, 2, 1, 3)
        k = k2.reshape(B, L, H, dh).transpose(0, 2, 1, 3)
        v = v2.reshape(B, L, H, dh).transpose(0, 2, 1, 3)

        scores = (q @ k.transpose(0, 1, 3, 2)) * inv_sqrt_dh + key_bias
        probs = softmax(scores)  # masked keys are exactly 0
        probs_scale = _dropout_scale(probs.shape, cfg.dropout_prob, train_mode, rng)
        probs_d = _apply_scale(probs, probs_scale)
        ctx = (probs_d @ v).transpose(0, 2, 1, 3).reshape(B, L, cfg.hidden_dim)
        attn = ctx @ p[f"{pre}.attention.output.weight"] + p[f"{pre}.attention.output.bias"]
        attn_scale = _dropout_scale(attn.shape, cfg.dropout_prob, train_mode, rng)
        res1 = Hin + _apply_scale(attn, attn_scale)
        h1, ln1_cache = layer_norm(
            res1, p[f"{pre}.attention.norm.scale"], p[f"{pre}.attention.norm.offset"]
        )

        u = h1 @ p[f"{pre}.ffn.intermediate.weight"] + p[f"{pre}.ffn.intermediate.bias"]
        g = gelu(u)
        f_out = g @ p[f"{pre}.ffn.output.weight"] + p[f"{pre}.ffn.output.bias"]
        ffn_scale = _dropout_scale(f_out.shape, cfg.dropout_prob, train_mode, rng)
        res2 = h1 + _apply_scale(f_out, ffn_scale)
        hidden, ln2_cache = layer_norm(
            res2, p[f"{pre}.ffn.norm.scale"], p[f"{pre}.ffn.norm.offset"]
        )

        layers.append({
            "Hin": Hin, "q": q, "k": k, "v": v,
            "attn_probs": probs, "probs_scale": probs_scale,
            "probs_d": probs_d, "ctx": ctx, "attn_scale": attn_scale,
            "ln1": ln1_cache, "h1": h1, "u": u, "g": g,
            "ffn_scale": ffn_scale, "ln2": ln2_cache,
        })

    cache = {
        "ids": ids, "attention_mask": attention_mask, "params64": p,
        "emb_scale": emb_scale, "ln_emb": ln_emb_cache, "layers": layers,
        "hidden": hidden,
    }
    return hidden, cache


def encoder_backward(cfg: ModelConfig, cache: dict, d_hidden: np.ndarray) -> dict[str, np.ndarray]:
    """Backprop from a gradient on the final hidden states.

    Returns gradients for embedding and layer tensors only (the MLM head has
    its own backward). Shapes match param_shapes; dtype float64.
    """
    p = cache["params64"]
    ids = cache["ids"]
    B, L = ids.shape
    H, dh = cfg.num_heads, cfg.head_dim
    inv_sqrt_dh = 1.0 / np.sqrt(dh)
    grads: dict[str, np.ndarray] = {}

    dH = d_hidden
    for i in reversed(range(cfg.num_layers)):
        pre = f"layers.{i}"
        lc = cache["layers"][i]

        d_res2, grads[f"{pre}.ffn.norm.scale"], grads[f"{pre}.ffn.norm.offset"] = (
            layer_norm_backward(dH, lc["ln2"], p[f"{pre}.ffn.norm.scale"])
        )
        dh1 = d_res2.copy()
        d_fout = _apply_scale(d_res2, lc["ffn_scale"])
        g_flat = lc["g"].reshape(B * L, cfg.ff_dim)
        grads[f"{pre}.ffn.output.weight"] = g_flat.T @ d_fout.reshape(B * L, cfg.hidden_dim)
        grads[f"{pre}.ffn.output.bias"] = d_fout.sum(axis=(0, 1))
        dg = d_fout @ p[f"{pre}.ffn.output.weight"].T
        du = dg * gelu_grad(lc["u"])
        h1_flat = lc["h1"].reshape(B * L, cfg.hidden_dim)
        grads[f"{pre}.ffn.intermediate.weight"] = h1_flat.T @ du.reshape(B * L, cfg.ff_dim)
        grads[f"{pre}.ffn.intermediate.bias"] = du.sum(axis=(0, 1))
        dh1 += du @ p[f"{pre}.ffn.intermediate.weight"].T

        d_res1, grads[f"{pre}.attention.norm.scale"], grads[f"{pre}.attention.norm.offset"] = (
            layer_norm_backward(dh1, lc["ln1"], p[f"{pre}.attention.norm.scale"])
        )
        dHin = d_res1.copy()
        d_attn = _apply_scale(d_res1, lc["attn_scale"])
        ctx_flat = lc["ctx"].reshape(B * L, cfg.hidden_dim)
        grads[f"{pre}.attention.output.weight"] = ctx_flat.T @ d_attn.reshape(B * L, cfg.hidden_dim)
        grads[f"{pre}.attention.output.bias"] = d_attn.sum(axis=(0, 1))
        d_ctx2 = d_attn @ p[f"{pre}.attention.output.weight"].T
        d_ctx = d_ctx2.reshape(B, L, H, dh).transpose(0, 2, 1, 3)

        d_probs_d = d_ctx @ lc["v"].transpose(0, 1, 3, 2)
        d_v = lc["probs_d"].transpose(0, 1, 3, 2) @ d_ctx
        d_probs = _apply_scale(d_probs_d, lc["probs_scale"])
        probs = lc["attn_probs"]
        d_scores = (d_probs - (d_probs * probs).sum(axis=-1, keepdims=True)) * probs
        d_q = (d_scores @ lc["k"]) * inv_sqrt_dh
        d_k = (d_scores.transpose(0, 1, 3, 2) @ lc["q"]) * inv_sqrt_dh

        hin_flat = lc["Hin"].reshape(B * L, cfg.hidden_dim)
        for name, dmat in (("query", d_q), ("key", d_k), ("value", d_v)):
            d2 = dmat.transpose(0, 2, 1, 3).reshape(B, L, cfg.hidden_dim)
            grads[f"{pre}.attention.{name}.weight"] = hin_flat.T @ d2.reshape(B * L, cfg.hidden_dim)
            grads[f"{pre}.attention.{name}.bias"] = d2.sum(axis=(0, 1))
            dHin += d2 @ p[f"{pre}.attention.{name}.weight"].T
        dH = dHin

    d_x0 = _apply_scale(dH, cache["emb_scale"])
    d_emb, grads["embeddings.norm.scale"], grads["embeddings.norm.offset"] = (
        layer_norm_backward(d_x0, cache["ln_emb"], p["embeddings.norm.scale"])
    )
    d_tok = np.zeros_like(p["embeddings.token"])
    np.add.at(d_tok, ids, d_emb)
    grads["embeddings.token"] = d_tok
    d_pos = np.zeros_like(p["embeddings.position"])
    d_pos[:L] = d_emb.sum(axis=0)
    grads["embeddings.position"] = d_pos
    d_typ = np.zeros_like(p["embeddings.type"])
    d_typ[0] = d_emb.sum(axis=(0, 1))
    grads["embeddings.type"] = d_typ
    return grads


def mlm_head_forward(cfg: ModelConfig, params64: Mapping[str, np.ndarray], hidden: np.ndarray):
    """Transform + layer-norm + tied output projection. Returns (logits, cache)."""
    t1 = hidden @ params64["mlm.transform.weight"] + params64["mlm.transform.bias"]
    g = gelu(t1)
    th, ln_cache = layer_norm(g, params64["mlm.norm.scale"], params64["mlm.norm.offset"])
    logits = th @ params64["embeddings.token"].T + params64["mlm.output_bias"]
    return logits, {"hidden": hidden, "t1": t1, "ln": ln_cache, "th": th}


def mlm_head_backward(cfg: ModelConfig, params64, head_cache, d_logits: np.ndarray):
    """Returns (d_hidden, head grads incl. the tied token-embedding term)."""
    B, L, V = d_logits.shape
    D = cfg.hidden_dim
    grads: dict[str, np.ndarray] = {}
    dl_flat = d_logits.reshape(B * L, V)
    th_flat = head_cache["th"].reshape(B * L, D)
    grads["embeddings.token"] = dl_flat.T @ th_flat  # tied projection term
    grads["mlm.output_bias"] = dl_flat.sum(axis=0)
    d_th = d_logits @ params64["embeddings.token"]
    dg, grads["mlm.norm.scale"], grads["mlm.norm.offset"] = layer_norm_backward(
        d_th, head_cache["ln"], params64["mlm.norm.scale"]
    )
    dt1 = dg * gelu_grad(head_cache["t1"])
    h_flat = head_cache["hidden"].reshape(B * L, D)
    grads["mlm.transform.weight"] = h_flat.T @ dt1.reshape(B * L, D)
    grads["mlm.transform.bias"] = dt1.sum(axis=(0, 1))
    d_hidden = dt1 @ params64["mlm.transform.weight"].T
    return d_hidden, grads


def mlm_loss(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy over labeled positions. Returns (loss, d_logits).

    Raises NoMaskedPositions when no position carries a label.
    """
    labeled = labels != IGNORE_LABEL
    n = int(labeled.sum())
    if n == 0:
        raise NoMaskedPositions("batch has no labeled positions")
    z = logits[labeled]  # (N, V)
    y = labels[labeled]
    zmax = z.max(axis=-1, keepdims=True)
    logsumexp = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=-1))
    loss = float((logsumexp - z[np.arange(n), y]).mean())
    d_logits = np.zeros_like(logits)
    probs = np.exp(z - zmax)
    probs /= probs.sum(axis=-1, keepdims=True)
    probs[np.arange(n), y] -= 1.0
    d_logits[labeled] = probs / n
    return loss, d_logits


def forward_mlm(
    cfg: ModelConfig,
    params: Mapping[str, np.ndarray],
    batch: MaskedBatch,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
):
    """Full forward pass. Returns (logits (B,L,V), mean loss)."""
    ids, mask, labels = batch_arrays(batch)
    hidden, cache = encoder_forward(cfg, params, ids, mask, train_mode, rng)
    logits, _ = mlm_head_forward(cfg, cache["params64"], hidden)
    loss, _ = mlm_loss(logits, labels)
    return logits, loss


def compute_gradients(
    cfg: ModelConfig,
    params: Mapping[str, np.ndarray],
    batch: MaskedBatch,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
):
    """Exact gradients of the MLM loss for every parameter tensor.

    Returns (loss, grads). Raises NoMaskedPositions for unlabeled batches and
    GradientError (naming the tensor) if anything non-finite appears.
    """
    for name, tensor in params.items():
        if not np.isfinite(tensor).all():
            raise GradientError(f"non-finite values in parameter {name!r}")
    ids, mask, labels = batch_arrays(batch)
    hidden, cache = encoder_forward(cfg, params, ids, mask, train_mode, rng)
    logits, head_cache = mlm_head_forward(cfg, cache["params64"], hidden)
    loss, d_logits = mlm_loss(logits, labels)
    if not np.isfinite(loss):
        raise GradientError("non-finite loss")
    d_hidden, head_grads = mlm_head_backward(cfg, cache["params64"], head_cache, d_logits)
    grads = encoder_backward(cfg, cache, d_hidden)
    grads["embeddings.token"] += head_grads.pop("embeddings.token")
    grads.update(head_grads)
    for name, g in grads.items():
        if not np.isfinite(g).all():
            raise GradientError(f"non-finite gradient for {name!r}")
    return loss, grads
