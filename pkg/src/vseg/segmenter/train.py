"""Deterministic Dice-loss training loop with Adam and cosine-annealed LR.

The learning rate follows a cosine between lr_max and lr_min that restarts
every anneal_period_epochs (warm restarts): lr(0) = lr_max, the midpoint of
each period sits at (lr_max + lr_min) / 2, and lr(period) = lr_max again.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dice import DEFAULT_SMOOTHING
from .masks import MaskStack
from .unet import ToyUNet


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 300
    lr_max: float = 1e-5
    lr_min: float = 1e-6
    anneal_period_epochs: int = 25
    batch_size: int = 8
    seed: int = 0
    dice_smoothing: float = DEFAULT_SMOOTHING

    def __post_init__(self):
        if min(self.epochs, self.anneal_period_epochs, self.batch_size) < 1:
            raise ValueError("epochs, anneal period and batch size must be >= 1")
        if not 0 < self.lr_min < self.lr_max:
            raise ValueError(f"need 0 < lr_min < lr_max, got {self.lr_min}, {self.lr_max}")


def learning_rate(epoch: int, cfg: TrainConfig) -> float:
    """Cosine-annealed LR with warm restarts every anneal_period_epochs."""
    phase = (epoch % cfg.anneal_period_epochs) / cfg.anneal_period_epochs
    return cfg.lr_min + (cfg.lr_max - cfg.lr_min) * (1.0 + math.cos(math.pi * phase)) / 2.0


class Adam:
    def __init__(self, params: dict[str, np.ndarray], beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float):
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for name, g in grads.items():
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            params[name] -= lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def _to_arrays(dataset) -> tuple[np.ndarray, np.ndarray]:
    images, targets = [], []
    side = None
    for image, target in dataset:
        img = np.asarray(image, dtype=np.float64)
        tgt = target.masks if isinstance(target, MaskStack) else np.asarray(target, float)
        if img.ndim != 2 or img.shape[0] != img.shape[1]:
            raise ValueError(f"images must be square, got shape {img.shape}")
        if side is None:
            side = img.shape[0]
        if img.shape[0] != side or tgt.shape[-2:] != (side, side):
            raise ValueError("all images and targets must share one geometry")
        images.append(img)
        targets.append(tgt)
    if not images:
        raise ValueError("empty training dataset")
    return np.stack(images)[:, None], np.stack(targets)


def train(
    model: ToyUNet,
    dataset,
    cfg: TrainConfig | None = None,
    log_every: int = 0,
    epoch_hook=None,
) -> tuple[ToyUNet, list[float]]:
    """Train in place on (image, target-mask) pairs; returns (model, loss trace).

    Deterministic for a fixed cfg.seed: initialization is the model's, batch
    order comes from a dedicated generator, and accumulation order is fixed.
    epoch_hook(epoch, model), when given, runs after each epoch's updates.
    """
    cfg = cfg or TrainConfig()
    x, t = _to_arrays(dataset)
    model._check_side(x.shape[2])
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(model.params)
    trace: list[float] = []
    for epoch in range(cfg.epochs):
        lr = learning_rate(epoch, cfg)
        order = rng.permutation(len(x))
        losses = []
        for lo in range(0, len(x), cfg.batch_size):
            sel = order[lo : lo + cfg.batch_size]
            loss, grads = model.loss_and_grads(x[sel], t[sel], cfg.dice_smoothing)
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}")
            opt.step(model.params, grads, lr)
            losses.append(loss)
        trace.append(float(np.mean(losses)))
        if log_every and (epoch % log_every == 0 or epoch == cfg.epochs - 1):
            print(f"epoch {epoch:4d}  lr {lr:.3g}  dice loss {trace[-1]:.4f}", flush=True)
        if epoch_hook is not None:
            epoch_hook(epoch, model)
    return model, trace
