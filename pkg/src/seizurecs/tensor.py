"""Dense float64 tensors with reverse-mode differentiation.

Every primitive in :mod:`seizurecs.functional` records a :class:`Node` on
its output when any input requires a gradient. The graph is rebuilt on
each forward pass and walked in reverse topological order by
:func:`backward`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError

BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


@dataclass(eq=False)
class Node:
    """One executed primitive: its inputs and the adjoint that maps the
    output gradient to one gradient per input (``None`` where not needed)."""

    op: str
    inputs: tuple["Tensor", ...]
    backward: BackwardFn


class Tensor:
    """A float64 array that can take part in a differentiation graph."""

    __array_priority__ = 1000  # keep ndarray <op> Tensor dispatching to Tensor

    def __init__(self, data, requires_grad: bool = False, _node: Node | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._node = _node

    # -- array-like conveniences ------------------------------------------
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
        return self._node is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __len__(self) -> int:
        return len(self.data)

    # -- operators, delegated to functional --------------------------------
    def __add__(self, other):
        from . import functional as F

        return F.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import functional as F

        return F.sub(self, other)

    def __rsub__(self, other):
        from . import functional as F

        return F.add(F.neg(self), other)

    def __mul__(self, other):
        from . import functional as F

        return F.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import functional as F

        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not supported")
        return F.mul(self, 1.0 / float(other))

    def __neg__(self):
        from . import functional as F

        return F.neg(self)

    def __matmul__(self, other):
        from . import functional as F

        return F.matmul(self, other)

    def sum(self):
        from . import functional as F

        return F.sum(self)

    def mean(self):
        from . import functional as F

        return F.mean(self)

    def reshape(self, *shape):
        from . import functional as F

        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return F.reshape(self, shape)

    def transpose(self, *axes):
        from . import functional as F

        return F.transpose(self, axes or None)

    @property
    def T(self):
        return self.transpose()

    def backward(self) -> None:
        backward(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_result(data: np.ndarray, inputs: Iterable[Tensor], op: str, backward_fn: BackwardFn) -> Tensor:
    """Wrap ``data`` as the output of primitive ``op``.

    A graph node is only recorded when at least one input requires a
    gradient; otherwise the result is a plain constant.
    """
    inputs = tuple(inputs)
    if any(t.requires_grad for t in inputs):
        return Tensor(data, requires_grad=True, _node=Node(op, inputs, backward_fn))
    return Tensor(data)


class Graph:
    """The executed operations reachable from ``output``, in topological
    order (every node after the producers of its inputs)."""

    def __init__(self, output: Tensor):
        self.output = output
        self.tensors = _topological_tensors(output)

    @property
    def nodes(self) -> list[Node]:
        return [t._node for t in self.tensors if t._node is not None]

    def __len__(self) -> int:
        return len(self.nodes)


def _topological_tensors(root: Tensor) -> list[Tensor]:
    # iterative DFS; deep decoders would overflow Python's recursion limit
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        t, expanded = stack.pop()
        if expanded:
            order.append(t)
            continue
        if id(t) in seen:
            continue
        seen.add(id(t))
        stack.append((t, True))
        if t._node is not None:
            for parent in reversed(t._node.inputs):
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(t) into ``t.grad`` for every reachable tensor
    that requires a gradient."""
    if loss.size != 1:
        raise ContractError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("loss does not depend on any tensor that requires a gradient")

    order = _topological_tensors(loss)
    pending: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for t in reversed(order):
        g = pending.pop(id(t), None)
        if g is None:
            continue
        t.grad = g if t.grad is None else t.grad + g
        if t._node is None:
            continue
        grads = t._node.backward(g)
        for parent, pg in zip(t._node.inputs, grads):
            if pg is None or not parent.requires_grad:
                continue
            if pg.shape != parent.shape:
                raise ContractError(
                    f"adjoint of {t._node.op} produced shape {pg.shape} for input of shape {parent.shape}"
                )
            key = id(parent)
            pending[key] = pg if key not in pending else pending[key] + pg


def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    scale = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return np.abs(analytic - numeric) / scale


def grad_check(
    f: Callable[[Tensor], Tensor],
    point,
    h: float = 1e-5,
    indices: Sequence[int] | None = None,
) -> float:
    """Compare the analytic gradient of scalar ``f`` at ``point`` against
    central differences.

    Returns the max over checked coordinates of
    ``|analytic - numeric| / max(1, |analytic|, |numeric|)``. ``indices``
    restricts the check to those flat coordinates.
    """
    base = np.array(as_tensor(point).data, dtype=np.float64)
    x = Tensor(base.copy(), requires_grad=True)
    out = f(x)
    if out.requires_grad:
        backward(out)
        analytic = x.grad.reshape(-1)
    else:
        analytic = np.zeros(base.size)

    flat = base.reshape(-1)
    coords = range(flat.size) if indices is None else indices
    worst = 0.0
    for i in coords:
        plus = flat.copy()
        plus[i] += h
        minus = flat.copy()
        minus[i] -= h
        fp = f(Tensor(plus.reshape(base.shape))).item()
        fm = f(Tensor(minus.reshape(base.shape))).item()
        numeric = (fp - fm) / (2 * h)
        worst = max(worst, float(_relative_error(analytic[i], numeric)))
    return worst


def grad_check_tensors(
    loss_fn: Callable[[], Tensor],
    tensors: Sequence[Tensor],
    h: float = 1e-5,
    max_coords: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Gradient check over several leaf tensors that ``loss_fn`` closes over.

    Each tensor is perturbed in place and restored. With ``max_coords``
    set, at most that many coordinates per tensor are checked, drawn
    without replacement from ``rng``.
    """
    for t in tensors:
        t.zero_grad()
    loss = loss_fn()
    backward(loss)
    analytic = [np.zeros(t.shape) if t.grad is None else t.grad.copy() for t in tensors]

    rng = rng or np.random.default_rng(0)
    worst = 0.0
    for t, a in zip(tensors, analytic):
        flat = t.data.reshape(-1)
        if max_coords is None or flat.size <= max_coords:
            coords = np.arange(flat.size)
        else:
            coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        a = a.reshape(-1)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + h
            fp = loss_fn().item()
            flat[i] = orig - h
            fm = loss_fn().item()
            flat[i] = orig
            numeric = (fp - fm) / (2 * h)
            worst = max(worst, float(_relative_error(a[i], numeric)))
    return worst
