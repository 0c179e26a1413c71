"""Dense networks and a from-scratch Adam optimizer shared by both trainers."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Var

CHECKPOINT_VERSION = 1


class Adam:
    """Bias-corrected Adam. Defaults: beta1=0.9, beta2=0.999, eps=1e-8."""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m: list[np.ndarray] | None = None
        self._v: list[np.ndarray] | None = None

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if self._m is None:
            self._m = [np.zeros_like(p) for p in params]
            self._v = [np.zeros_like(p) for p in params]
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self._m, self._v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


@dataclass
class DenseNet:
    """Plain fully connected network with tanh hidden activations.

    The final layer is linear; heads apply softmax themselves.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    seed: int

    @classmethod
    def init(cls, layer_sizes: list[int], seed: int) -> "DenseNet":
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            scale = np.sqrt(2.0 / (fan_in + fan_out))
            weights.append(rng.normal(0.0, scale, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights=weights, biases=biases, seed=seed)

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def forward(self, x: Var, params: list[Var] | None = None) -> Var:
        """Forward pass returning logits. `params` overrides stored arrays
        with graph Vars during training."""
        if params is None:
            params = [Var(p) for p in self.parameters()]
        h = ad.as_var(x)
        n_layers = len(self.weights)
        for i in range(n_layers):
            w, b = params[2 * i], params[2 * i + 1]
            h = h @ w + b
            if i < n_layers - 1:
                h = ad.tanh(h)
        return h

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.forward(Var(np.asarray(x, dtype=float))).value

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.parameters())


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def save_checkpoint(path, net: DenseNet, config: dict, extra: dict | None = None) -> None:
    """Versioned JSON checkpoint: layer sizes, parameters, seed, config hash."""
    payload = {
        "version": CHECKPOINT_VERSION,
        "layer_sizes": net.layer_sizes,
        "seed": net.seed,
        "config": config,
        "config_hash": config_hash(config),
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }
    if extra:
        payload["extra"] = extra
    with open(path, "w") as f:
        json.dump(payload, f)


def load_checkpoint(path) -> tuple[DenseNet, dict, dict]:
    """Returns (net, config, extra)."""
    with open(path) as f:
        payload = json.load(f)
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version: {payload.get('version')!r}")
    net = DenseNet(
        weights=[np.asarray(w, dtype=float) for w in payload["weights"]],
        biases=[np.asarray(b, dtype=float) for b in payload["biases"]],
        seed=int(payload["seed"]),
    )
    return net, payload.get("config", {}), payload.get("extra", {})
