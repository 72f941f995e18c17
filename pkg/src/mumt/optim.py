"""Optimizers over ParamSets: plain SGD, Adam, Adam with linear warmup.

Every step requires a grad on every parameter (a missing grad means the
training loop forgot a backward or a parameter is dead — both bugs worth
surfacing). Grads are zeroed after a successful step. Optional global-norm
clipping happens inside the step so all training paths share one rule.
"""

from __future__ import annotations

import numpy as np

from .params import ParamSet


def global_grad_norm(params: ParamSet) -> float:
    total = 0.0
    for _, t in params.items():
        if t.grad is not None:
            total += float((t.grad.astype(np.float64) ** 2).sum())
    return float(np.sqrt(total))


def clip_global_norm(params: ParamSet, max_norm: float) -> float:
    """Scale all grads so their joint L2 norm is at most ``max_norm``.

    Returns the pre-clip norm. The scale factor is computed in f32 so the
    update path stays bit-reproducible.
    """
    norm = global_grad_norm(params)
    if norm > max_norm and norm > 0.0:
        factor = np.float32(max_norm) / np.float32(norm)
        for _, t in params.items():
            t.grad *= factor
    return norm


def _require_grads(params: ParamSet, who: str) -> None:
    missing = [name for name, t in params.items() if t.grad is None]
    if missing:
        raise ValueError(f"{who}: missing grad for {missing[:3]}{'...' if len(missing) > 3 else ''}")


class Sgd:
    """Stateless gradient descent; the inner-adaptation optimizer."""

    def __init__(self, lr: float, clip_norm: float | None = None):
        if lr < 0:
            raise ValueError(f"Sgd: lr must be >= 0, got {lr}")
        self.lr = lr
        self.clip_norm = clip_norm

    def step(self, params: ParamSet) -> None:
        _require_grads(params, "Sgd.step")
        if self.clip_norm is not None:
            clip_global_norm(params, self.clip_norm)
        lr = np.float32(self.lr)
        for _, t in params.items():
            t.data -= lr * t.grad
        params.zero_grads()


class Adam:
    """Adam with bias correction and optional linear lr warmup.

    With warmup_steps = w the effective lr at step t (1-based) is
    lr * min(1, t / w); w = 0 disables warmup.
    """

    def __init__(
        self,
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        warmup_steps: int = 0,
        clip_norm: float | None = None,
    ):
        if lr <= 0:
            raise ValueError(f"Adam: lr must be > 0, got {lr}")
        if warmup_steps < 0:
            raise ValueError(f"Adam: warmup_steps must be >= 0, got {warmup_steps}")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.warmup_steps = warmup_steps
        self.clip_norm = clip_norm
        self.step_count = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def effective_lr(self, step: int) -> float:
        if self.warmup_steps > 0:
            return self.lr * min(1.0, step / self.warmup_steps)
        return self.lr

    def step(self, params: ParamSet) -> None:
        _require_grads(params, "Adam.step")
        if self.clip_norm is not None:
            clip_global_norm(params, self.clip_norm)
        self.step_count += 1
        t = self.step_count
        lr = np.float32(self.effective_lr(t))
        b1 = np.float32(self.beta1)
        b2 = np.float32(self.beta2)
        eps = np.float32(self.eps)
        c1 = np.float32(1.0 - self.beta1**t)
        c2 = np.float32(1.0 - self.beta2**t)
        for name, p in params.items():
            g = p.grad
            m = self._m.get(name)
            v = self._v.get(name)
            if m is None:
                m = np.zeros_like(p.data)
                v = np.zeros_like(p.data)
            m = b1 * m + (np.float32(1.0) - b1) * g
            v = b2 * v + (np.float32(1.0) - b2) * (g * g)
            self._m[name] = m
            self._v[name] = v
            mhat = m / c1
            vhat = v / c2
            p.data -= lr * mhat / (np.sqrt(vhat) + eps)
        params.zero_grads()
