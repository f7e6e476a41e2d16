"""Dense float64 tensors that record a tape for reverse-mode differentiation."""

from __future__ import annotations

from collections import OrderedDict
from typing import Callable, Iterator, Sequence

import numpy as np

from lsdgnn.errors import ContractError, DomainError

# Flip on to assert finiteness after every recorded op (slow).
DEBUG = False

BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class Tensor:
    """A float64 array, optionally participating in the gradient tape.

    Leaf tensors with ``requires_grad`` receive ``.grad`` after
    :func:`backward`. Non-leaf tensors keep a reference to their parents and a
    closure mapping the upstream gradient to one gradient per parent.
    """

    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_backward", "_acc")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: BackwardFn | None = None
        self._acc: np.ndarray | None = None

    @classmethod
    def from_op(cls, data: np.ndarray, parents: Sequence[Tensor], backward_fn: BackwardFn) -> Tensor:
        """Wrap the result of an op. ``backward_fn(g)`` returns a gradient per parent."""
        out = cls.__new__(cls)
        out.data = data if data.dtype == np.float64 else data.astype(np.float64)
        out.grad = None
        out.name = None
        out._acc = None
        if DEBUG and not np.all(np.isfinite(out.data)):
            raise DomainError(f"non-finite values produced by {backward_fn.__qualname__}")
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward_fn
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward = None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    # Operator sugar; implementations live in ops.
    def __add__(self, other):
        from lsdgnn.numerics import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from lsdgnn.numerics import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from lsdgnn.numerics import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from lsdgnn.numerics import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from lsdgnn.numerics import ops
        return ops.scale(self, -1.0)

    def __matmul__(self, other):
        from lsdgnn.numerics import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from lsdgnn.numerics import ops
        return ops.take(self, index)

    @property
    def T(self) -> Tensor:
        from lsdgnn.numerics import ops
        return ops.transpose(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor, store: ParameterStore | None = None) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf.

    When ``store`` is given, its parameters that do not influence ``loss``
    get an explicit zero gradient.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if loss.requires_grad:
        order = _topological_order(loss)
        loss._acc = np.ones_like(loss.data)
        for node in reversed(order):
            g = node._acc
            if g is None:
                continue
            node._acc = None
            if node._backward is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                parent._acc = pg if parent._acc is None else parent._acc + pg
    if store is not None:
        for param in store.values():
            if param.grad is None:
                param.grad = np.zeros_like(param.data)


class ParameterStore:
    """Ordered name -> Tensor map of trainable parameters."""

    def __init__(self):
        self._entries: OrderedDict[str, Tensor] = OrderedDict()

    def add(self, name: str, value) -> Tensor:
        if name in self._entries:
            raise ContractError(f"duplicate parameter name {name!r}")
        t = Tensor(value, requires_grad=True, name=name)
        self._entries[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __iter__(self) -> Iterator[str]:
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def names(self) -> list[str]:
        return list(self._entries)

    def values(self):
        return self._entries.values()

    def items(self):
        return self._entries.items()

    def zero_grad(self) -> None:
        for p in self._entries.values():
            p.grad = None

    def num_elements(self) -> int:
        return sum(p.size for p in self._entries.values())

    def state_dict(self) -> OrderedDict[str, np.ndarray]:
        return OrderedDict((k, v.data.copy()) for k, v in self._entries.items())

    def load_state_dict(self, state) -> None:
        missing = set(self._entries) - set(state)
        extra = set(state) - set(self._entries)
        if missing or extra:
            raise ContractError(f"parameter mismatch: missing={sorted(missing)} unexpected={sorted(extra)}")
        for name, value in state.items():
            value = np.asarray(value, dtype=np.float64)
            if value.shape != self._entries[name].shape:
                raise ContractError(
                    f"parameter {name!r}: shape {value.shape} != expected {self._entries[name].shape}"
                )
            self._entries[name].data = value.copy()
