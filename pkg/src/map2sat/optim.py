"""Adam with bias correction, one state object per parameter store."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import ParamStore


class TrainingDiverged(RuntimeError):
    """Raised when gradients or losses stop being finite."""


@dataclass
class AdamConfig:
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    epsilon: float = 1e-7

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError(f"betas must be in [0, 1): {self.beta1}, {self.beta2}")


@dataclass
class AdamState:
    """First/second moment accumulators and step counter for one store."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0

    @classmethod
    def for_store(cls, store: ParamStore) -> "AdamState":
        return cls(
            m={name: np.zeros_like(p.data) for name, p in store.items()},
            v={name: np.zeros_like(p.data) for name, p in store.items()},
            t=0,
        )


def adam_step(store: ParamStore, state: AdamState, cfg: AdamConfig) -> None:
    """Apply one Adam update from the accumulated gradients, then zero them.

    p -= lr * m_hat / (sqrt(v_hat) + eps), with m_hat, v_hat the
    bias-corrected moments.
    """
    state.t += 1
    b1, b2 = cfg.beta1, cfg.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for name, p in store.items():
        g = p.grad
        if not np.isfinite(g).all():
            raise TrainingDiverged(
                f"non-finite gradient in {name!r} at optimizer step {state.t}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p.data -= (cfg.lr / bc1) * m / (np.sqrt(v / bc2) + cfg.epsilon)
        g[...] = 0.0
