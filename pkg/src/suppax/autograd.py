"""Minimal reverse-mode autodiff over dense float64 tensors.

Just enough machinery to train small MLPs and GAN pairs: matmul, bias
add, relu, sigmoid, column concat, and two stabilized losses. The graph
is dynamic: every forward pass builds a fresh DAG of Tensor nodes, and
``backward`` walks it once in reverse topological order.

Conventions (fixed for reproducibility):
  * everything is float64;
  * the ReLU subgradient at exactly 0 is 0;
  * softmax / binary cross-entropy are computed in log-stabilized form.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "matmul",
    "add_bias",
    "relu",
    "sigmoid",
    "concat",
    "mean",
    "softmax_cross_entropy",
    "bce_logits",
    "grad_check",
]


class Tensor:
    """A dense array plus the bookkeeping needed for reverse-mode AD.

    ``grad`` is lazily allocated by ``backward`` and has the same shape
    as ``data``. Graph edges live in ``_prev``; each op installs a
    ``_backward`` closure that scatters the output gradient to its
    inputs.
    """

    __slots__ = ("data", "grad", "requires_grad", "_prev", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor values must be finite")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._prev: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def detach(self) -> "Tensor":
        """A new leaf holding the same values, cut off from the graph."""
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self) -> None:
        """Populate ``grad`` on every reachable tensor that requires it.

        The receiver must be scalar (shape () or (1,...)-squeezable to a
        single element); raises otherwise.
        """
        if self.data.size != 1:
            raise ValueError(
                f"backward requires a scalar loss, got shape {self.data.shape}"
            )
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._prev:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None:
                node._backward()


def _make(data: np.ndarray, prev: tuple[Tensor, ...]) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = any(p.requires_grad for p in prev)
    out._prev = prev if out.requires_grad else ()
    out._backward = None
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.data.shape} @ {b.data.shape}")
    out = _make(a.data @ b.data, (a, b))

    def _backward():
        if a.requires_grad:
            a._accumulate(out.grad @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ out.grad)

    if out.requires_grad:
        out._backward = _backward
    return out


def add_bias(a: Tensor, b: Tensor) -> Tensor:
    """Row-broadcast add: (n, d) + (d,) -> (n, d)."""
    if a.data.ndim != 2 or b.data.shape != (a.data.shape[1],):
        raise ValueError(f"bias shape mismatch: {a.data.shape} + {b.data.shape}")
    out = _make(a.data + b.data, (a, b))

    def _backward():
        if a.requires_grad:
            a._accumulate(out.grad)
        if b.requires_grad:
            b._accumulate(out.grad.sum(axis=0))

    if out.requires_grad:
        out._backward = _backward
    return out


def relu(a: Tensor) -> Tensor:
    out = _make(np.maximum(a.data, 0.0), (a,))

    def _backward():
        if a.requires_grad:
            # subgradient at the kink pinned to 0
            a._accumulate(out.grad * (a.data > 0.0))

    if out.requires_grad:
        out._backward = _backward
    return out


def sigmoid(a: Tensor) -> Tensor:
    # split by sign so neither branch exponentiates a large positive value
    x = a.data
    s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                 np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    out = _make(s, (a,))

    def _backward():
        if a.requires_grad:
            a._accumulate(out.grad * s * (1.0 - s))

    if out.requires_grad:
        out._backward = _backward
    return out


def concat(a: Tensor, b: Tensor) -> Tensor:
    """Columnwise concat of (n, p) and (n, q); backward splits the grad."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[0] != b.data.shape[0]:
        raise ValueError(f"concat batch mismatch: {a.data.shape} ++ {b.data.shape}")
    p = a.data.shape[1]
    out = _make(np.concatenate([a.data, b.data], axis=1), (a, b))

    def _backward():
        if a.requires_grad:
            a._accumulate(out.grad[:, :p])
        if b.requires_grad:
            b._accumulate(out.grad[:, p:])

    if out.requires_grad:
        out._backward = _backward
    return out


def mean(a: Tensor) -> Tensor:
    out = _make(np.asarray(a.data.mean()), (a,))

    def _backward():
        if a.requires_grad:
            a._accumulate(np.full_like(a.data, out.grad / a.data.size))

    if out.requires_grad:
        out._backward = _backward
    return out


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean of -log softmax(logits)[label] over the batch, max-stabilized."""
    z = logits.data
    if z.ndim != 2:
        raise ValueError("logits must be (batch, classes)")
    y = np.asarray(labels)
    n, c = z.shape
    if y.shape != (n,):
        raise ValueError(f"labels must have shape ({n},), got {y.shape}")
    if y.min() < 0 or y.max() >= c:
        raise IndexError(f"label out of range [0, {c})")
    zmax = z.max(axis=1, keepdims=True)
    shifted = z - zmax
    logsum = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logsum
    loss = -logp[np.arange(n), y].mean()
    if not np.isfinite(loss):
        raise FloatingPointError("non-finite cross-entropy loss")
    out = _make(np.asarray(loss), (logits,))

    def _backward():
        if logits.requires_grad:
            p = np.exp(logp)
            p[np.arange(n), y] -= 1.0
            logits._accumulate(out.grad * p / n)

    if out.requires_grad:
        out._backward = _backward
    return out


def _softplus(x: np.ndarray) -> np.ndarray:
    # log(1 + e^x) without overflow for large |x|
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def bce_logits(logits: Tensor, targets) -> Tensor:
    """Mean of t*softplus(-z) + (1-t)*softplus(z) over all elements."""
    z = logits.data
    t = np.asarray(targets, dtype=np.float64)
    if t.shape != z.shape:
        raise ValueError(f"bce shape mismatch: {z.shape} vs {t.shape}")
    loss = (t * _softplus(-z) + (1.0 - t) * _softplus(z)).mean()
    if not np.isfinite(loss):
        raise FloatingPointError("non-finite BCE loss")
    out = _make(np.asarray(loss), (logits,))

    def _backward():
        if logits.requires_grad:
            s = np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))),
                         np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))
            logits._accumulate(out.grad * (s - t) / z.size)

    if out.requires_grad:
        out._backward = _backward
    return out


def grad_check(f, point: Tensor, h: float = 1e-5) -> float:
    """Worst relative error between backward and central finite differences.

    ``f`` maps a Tensor to a scalar Tensor. The relative error at each
    coordinate uses denominator max(|analytic|, |numeric|, 1e-8).
    """
    if h <= 0:
        raise ValueError("h must be positive")
    x = Tensor(point.data.copy(), requires_grad=True)
    f(x).backward()
    analytic = x.grad if x.grad is not None else np.zeros_like(x.data)

    flat = point.data.copy().ravel()
    worst = 0.0
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f(Tensor(flat.reshape(point.data.shape))).data)
        flat[i] = orig - h
        fm = float(f(Tensor(flat.reshape(point.data.shape))).data)
        flat[i] = orig
        numeric = (fp - fm) / (2.0 * h)
        a = analytic.ravel()[i]
        err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
        worst = max(worst, err)
    return worst
