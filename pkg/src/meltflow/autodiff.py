"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every operation records its inputs and a backward closure on the output
tensor; ``backward()`` replays the reachable records once, in reverse
creation order (creation order is a topological order of the graph).
The op set is exactly what the bundled network architectures need:
broadcasting arithmetic, (stacked) matmul, elementwise activations,
row softmax, causal dilated 1-d convolution, dropout, reductions and
shape surgery.
"""

from __future__ import annotations

import itertools
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DimensionError, NumericsError, ParameterError

_NODE_COUNTER = itertools.count()

# When True, ops do not record tape entries (inference mode).
_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable tape recording inside the context (pure inference)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def _check_finite(arr: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NumericsError(f"{op} produced non-finite values")
    return arr


class Tensor:
    """N-d float64 array participating in a differentiation graph.

    ``grad`` is populated by ``backward()`` for every tensor with
    ``requires_grad`` reachable from the loss. ``node_id`` identifies the
    tensor within its graph; ids increase in creation order.
    """

    __slots__ = ("data", "grad", "requires_grad", "node_id", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        _check_finite(arr, "tensor construction")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.node_id = next(_NODE_COUNTER)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.size == 1 else _not_scalar(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self) -> None:
        self.grad = None

    # -- graph construction --------------------------------------------------

    def _attach(self, parents: Sequence["Tensor"], backward: Callable[[np.ndarray], None]) -> None:
        if _GRAD_ENABLED and any(p.requires_grad for p in parents):
            self.requires_grad = True
            self._parents = tuple(parents)
            self._backward = backward

    def backward(self) -> None:
        """Populate ``grad`` on every reachable tensor that requires it.

        The loss must be a scalar; d(loss)/d(loss) is seeded with 1.
        """
        if self.size != 1:
            _not_scalar(self)
        order = _topo_order(self)
        self.grad = np.ones_like(self.data)
        for node in order:
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operator sugar --------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return index(self, key)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], (tuple, list)) else shape)

    def swapaxes(self, a: int, b: int):
        return swapaxes(self, a, b)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)


def _not_scalar(t: Tensor):
    raise DimensionError(f"expected a scalar tensor, got shape {t.shape}")


def _topo_order(root: Tensor) -> list[Tensor]:
    """Reachable nodes of the tape, most recent first (reverse topological)."""
    seen: set[int] = set()
    nodes: list[Tensor] = []
    stack = [root]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        nodes.append(node)
        stack.extend(node._parents)
    nodes.sort(key=lambda n: n.node_id, reverse=True)
    return nodes


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    # Gradients are never mutated in place, so aliasing the incoming array is safe.
    if not t.requires_grad:
        return
    t.grad = g if t.grad is None else t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum gradient over axes that were broadcast in the forward pass."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# -- arithmetic ------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(_check_finite(a.data + b.data, "add"))

    def backward(g: np.ndarray) -> None:
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(g, b.data.shape))

    out._attach((a, b), backward)
    return out


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(_check_finite(a.data - b.data, "sub"))

    def backward(g: np.ndarray) -> None:
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(-g, b.data.shape))

    out._attach((a, b), backward)
    return out


def neg(a) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(-a.data)

    def backward(g: np.ndarray) -> None:
        _accumulate(a, -g)

    out._attach((a,), backward)
    return out


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(_check_finite(a.data * b.data, "mul"))

    def backward(g: np.ndarray) -> None:
        _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    out._attach((a, b), backward)
    return out


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    with np.errstate(divide="raise", invalid="raise"):
        try:
            data = a.data / b.data
        except FloatingPointError as exc:
            raise NumericsError(f"div produced non-finite values: {exc}") from exc
    out = Tensor(_check_finite(data, "div"))

    def backward(g: np.ndarray) -> None:
        _accumulate(a, _unbroadcast(g / b.data, a.data.shape))
        _accumulate(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    out._attach((a, b), backward)
    return out


def sqrt(a) -> Tensor:
    a = _as_tensor(a)
    with np.errstate(invalid="raise"):
        try:
            root = np.sqrt(a.data)
        except FloatingPointError as exc:
            raise NumericsError(f"sqrt of negative input: {exc}") from exc
    out = Tensor(root)

    def backward(g: np.ndarray) -> None:
        _accumulate(a, g * 0.5 / root)

    out._attach((a,), backward)
    return out


# -- linear algebra ----------------------------------------------------------


def matmul(a, b) -> Tensor:
    """Matrix product with numpy's stacked-matmul semantics (ndim >= 2)."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(
            f"matmul requires operands of ndim >= 2, got {a.data.shape} and {b.data.shape}"
        )
    if a.data.shape[-1] != b.data.shape[-2]:
        raise DimensionError(
            f"matmul inner extents disagree: {a.data.shape} x {b.data.shape}"
        )
    out = Tensor(_check_finite(a.data @ b.data, "matmul"))

    def backward(g: np.ndarray) -> None:
        _accumulate(a, _unbroadcast(g @ b.data.swapaxes(-1, -2), a.data.shape))
        _accumulate(b, _unbroadcast(a.data.swapaxes(-1, -2) @ g, b.data.shape))

    out._attach((a, b), backward)
    return out


# -- nonlinearities ---------------------------------------------------------

_ACTIVATION_KINDS = ("sigmoid", "tanh", "relu")


def activation(x, kind: str) -> Tensor:
    """Elementwise sigmoid / tanh / relu with analytic backward."""
    x = _as_tensor(x)
    if kind == "sigmoid":
        with np.errstate(over="ignore"):
            data = np.where(
                x.data >= 0,
                1.0 / (1.0 + np.exp(-np.abs(x.data))),
                np.exp(-np.abs(x.data)) / (1.0 + np.exp(-np.abs(x.data))),
            )
    elif kind == "tanh":
        data = np.tanh(x.data)
    elif kind == "relu":
        data = np.maximum(x.data, 0.0)
    else:
        raise ParameterError(f"unknown activation kind {kind!r}; expected one of {_ACTIVATION_KINDS}")
    out = Tensor(_check_finite(data, kind))

    def backward(g: np.ndarray) -> None:
        if kind == "sigmoid":
            local = data * (1.0 - data)
        elif kind == "tanh":
            local = 1.0 - data * data
        else:
            local = (x.data > 0).astype(np.float64)
        _accumulate(x, g * local)

    out._attach((x,), backward)
    return out


def sigmoid(x) -> Tensor:
    return activation(x, "sigmoid")


def tanh(x) -> Tensor:
    return activation(x, "tanh")


def relu(x) -> Tensor:
    return activation(x, "relu")


def softmax_rows(x) -> Tensor:
    """Softmax along the last axis, stabilised by max subtraction."""
    x = _as_tensor(x)
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(_check_finite(data, "softmax_rows"))

    def backward(g: np.ndarray) -> None:
        inner = (g * data).sum(axis=-1, keepdims=True)
        _accumulate(x, data * (g - inner))

    out._attach((x,), backward)
    return out


# -- causal convolution -------------------------------------------------------


def conv1d_causal(x, w, dilation: int) -> Tensor:
    """Dilated causal 1-d convolution.

    ``x`` is (time, channels) or (batch, time, channels); ``w`` is
    (kernel, channels, filters). The time axis is zero-padded on the left
    by (kernel - 1) * dilation, so output at time t only sees inputs at
    times <= t and the output length equals the input length.
    """
    if not isinstance(dilation, (int, np.integer)) or dilation < 1:
        raise ParameterError(f"dilation must be a positive integer, got {dilation!r}")
    x, w = _as_tensor(x), _as_tensor(w)
    if w.ndim != 3:
        raise DimensionError(f"conv weight must be (kernel, channels, filters), got {w.data.shape}")
    if x.ndim not in (2, 3):
        raise DimensionError(f"conv input must be 2-d or 3-d, got {x.data.shape}")
    k, c_in, _ = w.data.shape
    if k < 1:
        raise ParameterError(f"kernel size must be >= 1, got {k}")
    if x.data.shape[-1] != c_in:
        raise DimensionError(
            f"conv channel mismatch: input {x.data.shape} vs weight {w.data.shape}"
        )

    batched = x.ndim == 3
    x3 = x.data if batched else x.data[None]
    n_time = x3.shape[1]
    pad = (k - 1) * dilation
    xpad = np.pad(x3, ((0, 0), (pad, 0), (0, 0)))
    data = np.zeros((x3.shape[0], n_time, w.data.shape[2]))
    for j in range(k):
        data += xpad[:, j * dilation : j * dilation + n_time, :] @ w.data[j]
    out = Tensor(_check_finite(data if batched else data[0], "conv1d_causal"))

    def backward(g: np.ndarray) -> None:
        g3 = g if batched else g[None]
        gx_pad = np.zeros_like(xpad)
        gw = np.zeros_like(w.data)
        for j in range(k):
            sl = slice(j * dilation, j * dilation + n_time)
            gx_pad[:, sl, :] += g3 @ w.data[j].T
            gw[j] = np.einsum("btc,btf->cf", xpad[:, sl, :], g3)
        gx = gx_pad[:, pad:, :]
        _accumulate(x, gx if batched else gx[0])
        _accumulate(w, gw)

    out._attach((x, w), backward)
    return out


# -- dropout -----------------------------------------------------------------


def dropout(x, rate: float, rng: np.random.Generator, training: bool) -> Tensor:
    """Inverted dropout: scale kept units by 1/(1-rate) while training."""
    if not 0.0 <= rate < 1.0:
        raise ParameterError(f"dropout rate must lie in [0, 1), got {rate}")
    x = _as_tensor(x)
    if not training or rate == 0.0:
        return x
    mask = (rng.random(x.data.shape) >= rate) / (1.0 - rate)
    out = Tensor(x.data * mask)

    def backward(g: np.ndarray) -> None:
        _accumulate(x, g * mask)

    out._attach((x,), backward)
    return out


# -- reductions and shape surgery ---------------------------------------------


def tsum(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    out = Tensor(x.data.sum(axis=axis, keepdims=keepdims))

    def backward(g: np.ndarray) -> None:
        if axis is None:
            _accumulate(x, np.broadcast_to(g, x.data.shape))
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(x, np.broadcast_to(g, x.data.shape))

    out._attach((x,), backward)
    return out


def tmean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    count = x.data.size if axis is None else x.data.shape[axis]
    return mul(tsum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(x, shape) -> Tensor:
    x = _as_tensor(x)
    out = Tensor(x.data.reshape(shape))

    def backward(g: np.ndarray) -> None:
        _accumulate(x, g.reshape(x.data.shape))

    out._attach((x,), backward)
    return out


def swapaxes(x, a: int, b: int) -> Tensor:
    x = _as_tensor(x)
    out = Tensor(x.data.swapaxes(a, b))

    def backward(g: np.ndarray) -> None:
        _accumulate(x, g.swapaxes(a, b))

    out._attach((x,), backward)
    return out


def index(x, key) -> Tensor:
    """Basic indexing/slicing; backward scatters into a zero gradient."""
    x = _as_tensor(x)
    out = Tensor(np.array(x.data[key]))

    def backward(g: np.ndarray) -> None:
        gx = np.zeros_like(x.data)
        np.add.at(gx, key, g)
        _accumulate(x, gx)

    out._attach((x,), backward)
    return out


def concat(tensors: Iterable, axis: int = 0) -> Tensor:
    parts = [_as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([p.data for p in parts], axis=axis))
    offsets = np.cumsum([p.data.shape[axis] for p in parts])[:-1]

    def backward(g: np.ndarray) -> None:
        for part, piece in zip(parts, np.split(g, offsets, axis=axis)):
            _accumulate(part, piece)

    out._attach(tuple(parts), backward)
    return out


# -- verification -------------------------------------------------------------


def gradient_check(f: Callable[[Tensor], Tensor], x, h: float = 1e-5) -> float:
    """Max relative disagreement between analytic and central-difference grads.

    ``f`` must map a tensor to a scalar tensor. The relative error per
    coordinate is |analytic - numeric| / max(1, |analytic|); the maximum
    over coordinates is returned.
    """
    if h <= 0:
        raise ParameterError(f"finite-difference step must be positive, got {h}")
    base = np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64).copy()

    probe = Tensor(base.copy(), requires_grad=True)
    loss = f(probe)
    if not isinstance(loss, Tensor) or loss.size != 1:
        raise DimensionError("gradient_check requires a scalar-valued function")
    loss.backward()
    analytic = probe.grad if probe.grad is not None else np.zeros_like(base)

    worst = 0.0
    flat = base.reshape(-1)
    for i in range(flat.size):
        bumped = flat.copy()
        bumped[i] += h
        hi = f(Tensor(bumped.reshape(base.shape))).item()
        bumped[i] -= 2 * h
        lo = f(Tensor(bumped.reshape(base.shape))).item()
        numeric = (hi - lo) / (2 * h)
        a = analytic.reshape(-1)[i]
        worst = max(worst, abs(a - numeric) / max(1.0, abs(a)))
    return worst
