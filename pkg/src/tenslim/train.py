"""Distillation fine-tuning: KD loss, momentum SGD, and the prune/train loop."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteLogits, ShapeMismatch
from .model import ReferenceModel, backward, forward
from .prune import PruneSchedule, global_magnitude_prune, pooled_sparsity


@dataclass
class DistillConfig:
    alpha: float = 0.9
    temperature: float = 3.0
    epochs: int = 50
    batch_size: int = 32
    base_lr: float = 0.1
    momentum: float = 0.9
    decay_factor: float = 0.7
    decay_every_epochs: int = 5

    def __post_init__(self):
        if not 0 <= self.alpha <= 1:
            raise ShapeMismatch("alpha must be in [0, 1]")
        if self.temperature <= 0:
            raise ShapeMismatch("temperature must be positive")


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def kd_loss(student_logits, teacher_logits, labels, alpha: float, T: float):
    """Distillation loss and its gradient w.r.t. the student logits.

    loss = alpha * CE(student, labels)
         + (1 - alpha) * T^2 * KL(softmax(student/T) || softmax(teacher/T)),
    averaged over the batch.  Returns (loss, grad, ce_term, kd_term).
    """
    s = np.atleast_2d(np.asarray(student_logits, dtype=np.float64))
    t = np.atleast_2d(np.asarray(teacher_logits, dtype=np.float64))
    y = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if s.shape != t.shape:
        raise ShapeMismatch(f"logit shapes differ: {s.shape} vs {t.shape}")
    if not (np.isfinite(s).all() and np.isfinite(t).all()):
        raise NonFiniteLogits("non-finite logits")
    b = s.shape[0]

    log_ps = _log_softmax(s)
    ce = -log_ps[np.arange(b), y].mean()
    d_ce = np.exp(log_ps)
    d_ce[np.arange(b), y] -= 1.0
    d_ce /= b

    logp = _log_softmax(s / T)
    logq = _log_softmax(t / T)
    p = np.exp(logp)
    kl_rows = (p * (logp - logq)).sum(axis=-1)
    kd = T * T * kl_rows.mean()
    # d/ds_i of KL(p||q) with p = softmax(s/T): (1/T) p_i (log p/q - KL)
    d_kd = T * p * (logp - logq - kl_rows[:, None]) / b

    loss = alpha * ce + (1.0 - alpha) * kd
    grad = alpha * d_ce + (1.0 - alpha) * d_kd
    return float(loss), grad, float(ce), float(kd)


class MomentumSGD:
    """Plain momentum SGD: v <- mu*v + g; w <- w - lr*v (in place)."""

    def __init__(self, momentum: float):
        self.momentum = momentum
        self.velocity: dict = {}

    def step(self, trainables, grads: dict, lr: float) -> None:
        for key, arr in trainables:
            g = grads.get(key)
            if g is None:
                continue
            v = self.velocity.get(key)
            if v is None:
                v = np.zeros_like(arr)
                self.velocity[key] = v
            v *= self.momentum
            v += g
            arr -= lr * v


def evaluate(model: ReferenceModel, x: np.ndarray, y: np.ndarray,
             batch_size: int = 256) -> float:
    hits = 0
    for lo in range(0, len(x), batch_size):
        logits, _ = forward(model, x[lo:lo + batch_size])
        hits += int((logits.argmax(axis=-1) == y[lo:lo + batch_size]).sum())
    return hits / len(x)


def finetune(student: ReferenceModel, teacher: ReferenceModel | None,
             data: dict, cfg: DistillConfig, schedule: PruneSchedule | None,
             seed: int = 0, optimizer: "MomentumSGD | None" = None) -> list:
    """Run the prune/train loop and return per-epoch log records.

    Each epoch: advance the cubic schedule and globally prune the sparse
    residuals, then train one epoch of distillation batches.  A prune event
    is skipped while the pool is already sparser than the schedule (which
    happens right after masked initialization).
    """
    x_train, y_train = data["x_train"], data["y_train"]
    x_val, y_val = data["x_val"], data["y_val"]
    rng = np.random.default_rng(seed)
    opt = optimizer if optimizer is not None else MomentumSGD(cfg.momentum)
    layers = student.compressed_layers()
    log = []

    for epoch in range(1, cfg.epochs + 1):
        sparsity = pooled_sparsity(layers)
        if schedule is not None and layers:
            s_t = schedule.sparsity_at(min(epoch, schedule.total_steps))
            if s_t > sparsity:
                global_magnitude_prune(layers, s_t)
                sparsity = pooled_sparsity(layers)
                # newly masked entries are frozen: kill their momentum too
                for key, p in student.params.items():
                    v = opt.velocity.get(f"{key}/sparse")
                    if v is not None:
                        v *= p.mask
        lr = cfg.base_lr * cfg.decay_factor ** (
            (epoch - 1) // cfg.decay_every_epochs)

        order = rng.permutation(len(x_train))
        epoch_loss = ce_sum = kd_sum = 0.0
        batches = 0
        for lo in range(0, len(order), cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            xb, yb = x_train[idx], y_train[idx]
            logits, cache = forward(student, xb)
            if teacher is not None and cfg.alpha < 1.0:
                t_logits, _ = forward(teacher, xb)
            else:
                t_logits = logits  # unused when alpha == 1
            loss, d_logits, ce, kd = kd_loss(
                logits, t_logits, yb, cfg.alpha, cfg.temperature)
            grads = backward(student, cache, d_logits)
            opt.step(student.trainables(), grads, lr)
            epoch_loss += loss
            ce_sum += ce
            kd_sum += kd
            batches += 1

        log.append({
            "epoch": epoch,
            "loss": epoch_loss / max(batches, 1),
            "ce_term": ce_sum / max(batches, 1),
            "kd_term": kd_sum / max(batches, 1),
            "sparsity": pooled_sparsity(layers),
            "lr": lr,
            "val_accuracy": evaluate(student, x_val, y_val),
        })
    return log


def train_teacher(model: ReferenceModel, data: dict, cfg: DistillConfig,
                  seed: int = 0) -> list:
    """Plain cross-entropy pretraining of the dense reference model."""
    plain = DistillConfig(
        alpha=1.0, temperature=cfg.temperature, epochs=cfg.epochs,
        batch_size=cfg.batch_size, base_lr=cfg.base_lr,
        momentum=cfg.momentum, decay_factor=cfg.decay_factor,
        decay_every_epochs=cfg.decay_every_epochs)
    return finetune(model, None, data, plain, None, seed=seed)
