"""Bias-corrected Adam with decoupled weight decay, float64 moment state.

Parameters stay float32 between steps (the checkpoint storage dtype); the
update itself runs in float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def init_adam(params: Mapping[str, np.ndarray], lr: float, weight_decay: float = 0.0) -> AdamState:
    state = AdamState(lr=lr, weight_decay=weight_decay)
    for name, p in params.items():
        state.m[name] = np.zeros(p.shape, dtype=np.float64)
        state.v[name] = np.zeros(p.shape, dtype=np.float64)
    return state


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    lr: float | None = None,
) -> dict[str, np.ndarray]:
    """One update over every tensor. Returns new params; mutates state.

    ``lr`` overrides the state's base rate for this step (schedules). Weight
    decay is decoupled (applied directly to the parameter, scaled by lr) and
    skipped for biases and layer-norm tensors.
    """
    rate = state.lr if lr is None else lr
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    out: dict[str, np.ndarray] = {}
    for name, p in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name!r}")
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        update = (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        p64 = np.asarray(p, dtype=np.float64)
        if state.weight_decay > 0.0 and _decayable(name):
            update = update + state.weight_decay * p64
        out[name] = (p64 - rate * update).astype(np.float32)
    return out


def _decayable(name: str) -> bool:
    return not name.endswith((".bias", ".scale", ".offset", "output_bias"))


def linear_schedule_lr(step: int, total_steps: int, base_lr: float, warmup_frac: float) -> float:
    """Linear warmup to base_lr, then linear decay to 0 at total_steps."""
    if total_steps <= 0:
        return base_lr
    warmup = max(1, int(round(total_steps * warmup_frac)))
    if step < warmup:
        return base_lr * (step + 1) / warmup
    if total_steps == warmup:
        return base_lr
    return base_lr * max(0, total_steps - step) / (total_steps - warmup)
