"""SGD and Adam over a :class:`ParameterStore`."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from lsdgnn.errors import ConfigError, ContractError
from lsdgnn.numerics.tensor import ParameterStore


@dataclass
class OptimizerConfig:
    kind: str = "adam"
    learning_rate: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ConfigError(f"optimizer kind must be 'sgd' or 'adam', got {self.kind!r}")
        if not self.learning_rate >= 0:
            raise ConfigError(f"learning_rate must be non-negative, got {self.learning_rate}")
        for name in ("beta1", "beta2"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ConfigError(f"{name} must lie in (0, 1), got {v}")
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")


class Optimizer:
    """Applies one update per :meth:`step`, visiting parameters in store order.

    Adam keeps first/second moment buffers keyed by parameter name.
    """

    def __init__(self, config: OptimizerConfig):
        self.config = config
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, store: ParameterStore) -> None:
        for name, p in store.items():
            if p.grad is None:
                raise ContractError(f"parameter {name!r} has no gradient; call backward() first")
        cfg = self.config
        self.t += 1
        lr = cfg.learning_rate
        if cfg.kind == "sgd":
            for p in store.values():
                p.data = p.data - lr * p.grad
        else:
            b1, b2 = cfg.beta1, cfg.beta2
            c1 = 1.0 - b1 ** self.t
            c2 = 1.0 - b2 ** self.t
            for name, p in store.items():
                g = p.grad
                m = self.m.get(name)
                if m is None:
                    m = np.zeros_like(g)
                    v = np.zeros_like(g)
                else:
                    v = self.v[name]
                m = b1 * m + (1.0 - b1) * g
                v = b2 * v + (1.0 - b2) * g * g
                self.m[name], self.v[name] = m, v
                p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + cfg.epsilon)
        store.zero_grad()


def optimizer_step(store: ParameterStore, config: OptimizerConfig, state: Optimizer | None = None) -> Optimizer:
    """Functional wrapper: one update, returns the (possibly new) optimizer state."""
    opt = state if state is not None else Optimizer(config)
    opt.step(store)
    return opt
