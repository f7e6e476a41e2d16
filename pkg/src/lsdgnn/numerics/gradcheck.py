"""Central finite-difference verification of tape gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from lsdgnn.errors import CheckError, ContractError
from lsdgnn.numerics.tensor import ParameterStore, Tensor, backward


@dataclass
class ParamCheck:
    name: str
    checked: int
    max_rel_error: float
    flagged: list[tuple[int, float, float]] = field(default_factory=list)  # (flat index, tape, numeric)


@dataclass
class GradCheckReport:
    params: list[ParamCheck]
    tolerance: float

    @property
    def max_rel_error(self) -> float:
        return max((p.max_rel_error for p in self.params), default=0.0)

    @property
    def ok(self) -> bool:
        return all(not p.flagged for p in self.params)

    def summary(self) -> str:
        lines = [f"{p.name:<40s} n={p.checked:<5d} max_rel={p.max_rel_error:.3e}" for p in self.params]
        lines.append(f"overall max_rel={self.max_rel_error:.3e} tol={self.tolerance:g} ok={self.ok}")
        return "\n".join(lines)


def relative_error(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-8)


def finite_difference_check(
    loss_fn: Callable[[], Tensor],
    store: ParameterStore,
    epsilon: float = 1e-5,
    tolerance: float = 1e-6,
    max_per_tensor: int | None = None,
    seed: int = 0,
) -> GradCheckReport:
    """Compare tape gradients of ``loss_fn()`` with central differences.

    ``loss_fn`` rebuilds the loss from the current parameter values each call.
    With ``max_per_tensor`` set, a seeded subsample of that many elements
    (at least 32) is probed per tensor; otherwise every element is.
    """
    if not 1e-7 <= epsilon <= 1e-3:
        raise ContractError(f"epsilon {epsilon} outside [1e-7, 1e-3]")
    if max_per_tensor is not None and max_per_tensor < 32:
        raise ContractError("subsample must probe at least 32 elements per tensor")

    store.zero_grad()
    loss = loss_fn()
    base = loss.item()
    if loss_fn().item() != base:
        raise CheckError("loss_fn is not deterministic: two evaluations at the same point differ")
    backward(loss, store)
    tape = {name: p.grad.copy() for name, p in store.items()}
    store.zero_grad()

    rng = np.random.default_rng(seed)
    results = []
    for name, p in store.items():
        flat = p.data.reshape(-1)  # view: edits write through
        n = flat.size
        if max_per_tensor is None or n <= max_per_tensor:
            idx = np.arange(n)
        else:
            idx = np.sort(rng.choice(n, size=max_per_tensor, replace=False))
        g_tape = tape[name].reshape(-1)
        check = ParamCheck(name=name, checked=len(idx), max_rel_error=0.0)
        for k in idx:
            orig = flat[k]
            flat[k] = orig + epsilon
            f_plus = loss_fn().item()
            flat[k] = orig - epsilon
            f_minus = loss_fn().item()
            flat[k] = orig
            numeric = (f_plus - f_minus) / (2.0 * epsilon)
            err = relative_error(g_tape[k], numeric)
            check.max_rel_error = max(check.max_rel_error, err)
            if err > tolerance:
                check.flagged.append((int(k), float(g_tape[k]), float(numeric)))
        results.append(check)
    return GradCheckReport(params=results, tolerance=tolerance)
