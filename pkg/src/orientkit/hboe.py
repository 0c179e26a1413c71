"""Orientation prediction head: 72-way softmax, Gaussian-target loss, decoding,
and the desk-scale trainer."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .bins import GaussianTargetParams, target_distribution
from .geometry import N_BINS, BIN_WIDTH_DEG
from .nnet import Adam, DenseNet

log = logging.getLogger(__name__)

PROB_SUM_TOL = 1e-6
CE_EPS = 1e-12


class TrainingDiverged(RuntimeError):
    """Raised when the training loss becomes NaN or infinite."""


def validate_prob_dist(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape != (N_BINS,):
        raise ValueError(f"probability vector must have shape ({N_BINS},), got {p.shape}")
    if np.any(p < 0):
        raise ValueError("probabilities must be non-negative")
    if abs(float(p.sum()) - 1.0) >= PROB_SUM_TOL:
        raise ValueError(f"probabilities must sum to 1 (got {p.sum()!r})")
    return p


def softmax72(logits: np.ndarray) -> np.ndarray:
    """Stable softmax over the 72 bins; output satisfies the ProbDist72 contract."""
    z = np.asarray(logits, dtype=float)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def hboe_loss(p, l_gt: int, sigma: float) -> float:
    """Sum of squared differences between p and the circular Gaussian target."""
    p = validate_prob_dist(p)
    phi = target_distribution(l_gt, GaussianTargetParams(sigma=sigma))
    return float(np.sum((p - phi) ** 2))


def hboe_loss_from_logits(logits: Var, l_gt, sigma: float) -> Var:
    """Graph version of the loss, from logits; supports batched (N, 72) input."""
    logits = ad.as_var(logits)
    p = ad.softmax(logits, axis=-1)
    if np.ndim(l_gt) == 0:
        phi = target_distribution(int(l_gt), GaussianTargetParams(sigma=sigma))
    else:
        phi = np.stack(
            [target_distribution(int(l), GaussianTargetParams(sigma=sigma)) for l in l_gt]
        )
    diff = p - phi
    return (diff * diff).sum()


def hboe_loss_grad(p_logits, l_gt: int, sigma: float) -> np.ndarray:
    """Analytic gradient of the Gaussian-target loss w.r.t. the logits."""
    logits = Var(np.asarray(p_logits, dtype=float))
    loss = hboe_loss_from_logits(logits, l_gt, sigma)
    loss.backward()
    return logits.grad


def cross_entropy_loss(p, l_gt: int) -> float:
    """-log p[l_gt]; comparison baseline. Zero probability is clamped and logged."""
    p = validate_prob_dist(p)
    value = p[int(l_gt)]
    if value <= CE_EPS:
        log.warning("cross_entropy_loss: probability at bin %d clamped to %g", l_gt, CE_EPS)
        value = CE_EPS
    return float(-np.log(value))


def cross_entropy_from_logits(logits: Var, l_gt: int) -> Var:
    """Stable graph cross-entropy: logsumexp(z) - z[l_gt]."""
    logits = ad.as_var(logits)
    return ad.logsumexp(logits, axis=-1) - logits[int(l_gt)]


def cross_entropy_grad(p_logits, l_gt: int) -> np.ndarray:
    logits = Var(np.asarray(p_logits, dtype=float))
    loss = cross_entropy_from_logits(logits, l_gt)
    loss.backward()
    return logits.grad


def decode(p, rule: str = "argmax") -> float:
    """Decode a 72-bin distribution to a continuous angle in degrees.

    argmax: center of the highest bin, ties broken by lowest index.
    cmean:  circular mean of the bin centers weighted by p.
    """
    p = validate_prob_dist(p)
    if rule == "argmax":
        return float(int(np.argmax(p)) * BIN_WIDTH_DEG)
    if rule == "cmean":
        angles = np.radians(np.arange(N_BINS) * BIN_WIDTH_DEG)
        y = float(np.sum(p * np.sin(angles)))
        x = float(np.sum(p * np.cos(angles)))
        return float(np.degrees(np.arctan2(y, x)) % 360.0)
    raise ValueError(f"unknown decode rule: {rule!r} (expected 'argmax' or 'cmean')")


def decode_batch(probs: np.ndarray, rule: str = "argmax") -> np.ndarray:
    return np.array([decode(p, rule=rule) for p in probs])


@dataclass
class TrainConfig:
    """Hyperparameters for the orientation-head trainer."""

    lr: float = 1e-3
    epochs: int = 80
    batch_size: int = 64
    sigma: float = 4.0
    seed: int = 0
    hidden: int = 128
    checkpoint_every: int = 0  # 0: only final

    def __post_init__(self):
        if not self.lr >= 0:
            raise ValueError("lr must be non-negative")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")

    def to_dict(self) -> dict:
        return {
            "lr": self.lr,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "sigma": self.sigma,
            "seed": self.seed,
            "hidden": self.hidden,
        }


def make_model(input_dim: int, cfg: TrainConfig) -> DenseNet:
    return DenseNet.init([input_dim, cfg.hidden, N_BINS], seed=cfg.seed)


@dataclass
class TrainResult:
    model: DenseNet
    loss_trace: list[float] = field(default_factory=list)  # per-step batch losses
    epoch_losses: list[float] = field(default_factory=list)


def _batch_targets(bins: np.ndarray, sigma: float) -> np.ndarray:
    table = np.stack(
        [target_distribution(l, GaussianTargetParams(sigma=sigma)) for l in range(N_BINS)]
    )
    return table[bins]


def train_hboe(
    features: np.ndarray,
    bins: np.ndarray,
    model: DenseNet,
    cfg: TrainConfig,
    checkpoint_cb=None,
) -> TrainResult:
    """Minibatch Adam on the Gaussian-target loss. Deterministic per seed.

    features: (N, F) float array; bins: (N,) int array of ground-truth bins.
    checkpoint_cb(epoch, model) fires every cfg.checkpoint_every epochs when set.
    """
    features = np.asarray(features, dtype=float)
    bins = np.asarray(bins, dtype=int)
    n = features.shape[0]
    if n == 0:
        raise ValueError("empty training set")

    target_table = np.stack(
        [target_distribution(l, GaussianTargetParams(sigma=cfg.sigma)) for l in range(N_BINS)]
    )
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(lr=cfg.lr)
    result = TrainResult(model=model)

    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            x = Var(features[idx])
            params = [Var(p) for p in model.parameters()]
            logits = model.forward(x, params=params)
            p = ad.softmax(logits, axis=-1)
            diff = p - target_table[bins[idx]]
            loss = (diff * diff).sum() * (1.0 / len(idx))
            value = float(loss.value)
            if not np.isfinite(value):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, step {start // cfg.batch_size}: {value}"
                )
            loss.backward()
            opt.step(model.parameters(), [pv.grad for pv in params])
            result.loss_trace.append(value)
            epoch_loss += value * len(idx)
        result.epoch_losses.append(epoch_loss / n)
        if checkpoint_cb is not None and cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
            checkpoint_cb(epoch, model)
    return result


def predict_probs(model: DenseNet, features: np.ndarray) -> np.ndarray:
    return softmax72(model.predict(features))


def predict_angles(model: DenseNet, features: np.ndarray, rule: str = "argmax") -> np.ndarray:
    return decode_batch(predict_probs(model, features), rule=rule)
