"""Gradient-sign adversarial example generation.

Untargeted FGSM ascends the loss on the true label,

    x_adv = x + eps * sign(grad_x loss(x, y_true)),

targeted FGSM descends the loss on the requested adversarial label, and
BIM iterates smaller signed steps with projection back onto the
l-infinity eps-ball around the original input.  sign(0) = 0, so dead
coordinates are never perturbed.  RF amplitudes are unbounded reals, so
no valid-signal box clipping is applied.

Adversarial vectors are emitted in the dataset's f32 precision, rounded
toward the original value where f32 quantization would otherwise land a
coordinate an ulp outside the ball, so ||x_adv - x||_inf <= eps holds
exactly in any wider precision.
"""

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .model import Model, input_gradient

KIND_FGSM = "fgsm"
KIND_BIM = "bim"


@dataclass
class AttackConfig:
    kind: str = KIND_FGSM
    epsilon: float = 0.1
    steps: int = 1
    step_size: float | None = None  # BIM only; defaults to epsilon / steps
    targeted: bool = False
    target: int | None = None

    def __post_init__(self):
        if self.kind not in (KIND_FGSM, KIND_BIM):
            raise ValueError(f"unknown attack kind {self.kind!r}")
        if not math.isfinite(self.epsilon) or self.epsilon < 0.0:
            raise ValueError("epsilon must be finite and >= 0")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.kind == KIND_BIM and self.step_size is None:
            self.step_size = self.epsilon / self.steps
        if self.kind == KIND_BIM and not self.step_size > 0.0:
            raise ValueError("step_size must be > 0 for BIM")
        if self.targeted and self.target is None:
            raise ValueError("targeted mode requires a target label")

    def describe(self) -> str:
        mode = f"targeted={self.target}" if self.targeted else "untargeted"
        if self.kind == KIND_BIM:
            return f"bim eps={self.epsilon} steps={self.steps} step_size={self.step_size} {mode}"
        return f"fgsm eps={self.epsilon} {mode}"


def _quantize_into_ball(x_adv64: np.ndarray, x32: np.ndarray, eps: float) -> np.ndarray:
    """Cast to f32, nudging any coordinate the cast pushed past the ball
    boundary one ulp back toward the original value."""
    out = x_adv64.astype(np.float32)
    over = np.abs(out.astype(np.float64) - x32.astype(np.float64)) > eps
    while np.any(over):
        out[over] = np.nextafter(out[over], x32[over])
        over = np.abs(out.astype(np.float64) - x32.astype(np.float64)) > eps
    return out


def _gradient_labels(cfg: AttackConfig, labels: np.ndarray) -> np.ndarray:
    if cfg.targeted:
        return np.full_like(labels, cfg.target)
    return labels


def fgsm_batch(m: Model, x: np.ndarray, labels, cfg: AttackConfig) -> np.ndarray:
    """Vectorized FGSM over a batch of f32 input vectors."""
    if cfg.kind != KIND_FGSM:
        raise ValueError("fgsm_batch requires an FGSM config")
    x = np.asarray(x, dtype=np.float32)
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    grad = input_gradient(m, x, _gradient_labels(cfg, labels))
    direction = -1.0 if cfg.targeted else 1.0
    x_adv = x.astype(np.float64) + direction * cfg.epsilon * np.sign(grad, dtype=np.float64)
    return _quantize_into_ball(x_adv, x, cfg.epsilon)


def fgsm(m: Model, x, label, cfg: AttackConfig) -> np.ndarray:
    """Single-step gradient-sign attack on one input vector."""
    x = np.asarray(x, dtype=np.float32)
    return fgsm_batch(m, x[None, :], [int(label)], cfg)[0]


def bim_batch(m: Model, x: np.ndarray, labels, cfg: AttackConfig) -> np.ndarray:
    """Iterated signed steps, each projected onto the eps-ball around x."""
    if cfg.kind != KIND_BIM:
        raise ValueError("bim_batch requires a BIM config")
    x = np.asarray(x, dtype=np.float32)
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    grad_labels = _gradient_labels(cfg, labels)
    direction = -1.0 if cfg.targeted else 1.0
    x0 = x.astype(np.float64)
    cur = x0.copy()
    for _ in range(cfg.steps):
        grad = input_gradient(m, cur.astype(np.float32), grad_labels)
        cur = cur + direction * cfg.step_size * np.sign(grad, dtype=np.float64)
        cur = x0 + np.clip(cur - x0, -cfg.epsilon, cfg.epsilon)
    return _quantize_into_ball(cur, x, cfg.epsilon)


def bim(m: Model, x, label, cfg: AttackConfig) -> np.ndarray:
    x = np.asarray(x, dtype=np.float32)
    return bim_batch(m, x[None, :], [int(label)], cfg)[0]


def attack_dataset(m: Model, ds: Dataset, cfg: AttackConfig, batch_size: int = 256) -> Dataset:
    """Attack every record, preserving labels and SNR metadata; the output
    provenance records the attack configuration."""
    if len(ds) == 0:
        raise ValueError("cannot attack an empty dataset")
    perturb = fgsm_batch if cfg.kind == KIND_FGSM else bim_batch
    out = np.empty_like(ds.vectors)
    for start in range(0, len(ds), batch_size):
        stop = min(start + batch_size, len(ds))
        out[start:stop] = perturb(
            m, ds.vectors[start:stop], ds.labels[start:stop].astype(np.int64), cfg
        )
    provenance = f"attack[{cfg.describe()}] on ({ds.provenance or 'unnamed'})"
    return Dataset(out, ds.labels.copy(), ds.snrs.copy(), provenance=provenance)
