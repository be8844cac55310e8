"""Reverse-mode autograd engine over dense numpy arrays.

A Tensor wraps one float32/float64 ndarray. Ops build a graph of parent
links and vector-Jacobian closures; backward() walks it once in reverse
topological order, accumulating into the .grad of leaf tensors. Gradients
accumulate additively across backward calls until cleared.

Learned tensors default to single precision; passing float64 data keeps
everything in double (ops never mix the two silently).
"""

from __future__ import annotations

import contextlib

import numpy as np

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block (inference mode)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _coerce(data, dtype=None) -> np.ndarray:
    arr = np.asarray(data, dtype=dtype)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float32)
    return arr


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad=False, dtype=None):
        self.data = _coerce(data, dtype)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._vjp = None

    # -- construction of graph nodes -------------------------------------

    @staticmethod
    def _node(data: np.ndarray, parents: tuple, vjp) -> "Tensor":
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._vjp = vjp
        else:
            out.requires_grad = False
            out._parents = ()
            out._vjp = None
        return out

    # -- basic introspection ----------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    # -- backward ----------------------------------------------------------

    def backward(self, seed=None):
        """Accumulate d(self)/d(leaf) into every reachable leaf's .grad.

        self must be scalar unless an explicit seed gradient is given.
        """
        if seed is None:
            if self.data.size != 1:
                raise ValueError("backward() without seed requires a scalar")
            seed = np.ones_like(self.data)
        else:
            seed = np.asarray(seed, dtype=self.data.dtype)
            if seed.shape != self.data.shape:
                raise ValueError("seed gradient shape mismatch")
        if not self.requires_grad:
            return

        # iterative DFS topological order over grad-requiring nodes
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad:
                    stack.append((p, False))

        grads: dict[int, np.ndarray] = {id(self): seed}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._vjp is None:
                if node.grad is None:
                    node.grad = np.zeros_like(node.data)
                node.grad += g
                continue
            for parent, pg in zip(node._parents, node._vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                acc = grads.get(id(parent))
                grads[id(parent)] = pg if acc is None else acc + pg

    # -- elementwise arithmetic ---------------------------------------------

    def _wrap_other(self, other) -> "Tensor":
        # python scalars adopt this tensor's dtype; mixed f32/f64 tensors
        # promote through numpy (grad checks rely on f64 upcasting)
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.dtype))

    def __add__(self, other):
        other = self._wrap_other(other)
        a, b = self, other
        out = a.data + b.data

        def vjp(g):
            return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

        return Tensor._node(out, (a, b), vjp)

    __radd__ = __add__

    def __mul__(self, other):
        other = self._wrap_other(other)
        a, b = self, other
        out = a.data * b.data

        def vjp(g):
            return (
                _unbroadcast(g * b.data, a.data.shape),
                _unbroadcast(g * a.data, b.data.shape),
            )

        return Tensor._node(out, (a, b), vjp)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        other = self._wrap_other(other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __truediv__(self, other):
        other = self._wrap_other(other)
        a, b = self, other
        out = a.data / b.data

        def vjp(g):
            return (
                _unbroadcast(g / b.data, a.data.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape),
            )

        return Tensor._node(out, (a, b), vjp)

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, float)):
            raise TypeError("only constant exponents are supported")
        a = self
        c = float(exponent)
        out = a.data ** c

        def vjp(g):
            return (g * c * a.data ** (c - 1.0),)

        return Tensor._node(out, (a,), vjp)

    # -- matmul --------------------------------------------------------------

    def __matmul__(self, other):
        if not isinstance(other, Tensor):
            other = Tensor(np.asarray(other, dtype=self.dtype))
        a, b = self, other
        out = a.data @ b.data

        def vjp(g):
            ga = g @ np.swapaxes(b.data, -1, -2)
            gb = np.swapaxes(a.data, -1, -2) @ g
            return _unbroadcast_matmul(ga, a.data.shape), _unbroadcast_matmul(gb, b.data.shape)

        return Tensor._node(out, (a, b), vjp)

    # -- shape ops -------------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a = self
        out = a.data.reshape(shape)

        def vjp(g):
            return (g.reshape(a.data.shape),)

        return Tensor._node(out, (a,), vjp)

    def transpose(self, axes):
        a = self
        axes = tuple(axes)
        inv = tuple(np.argsort(axes))
        out = a.data.transpose(axes)

        def vjp(g):
            return (g.transpose(inv),)

        return Tensor._node(out, (a,), vjp)

    def __getitem__(self, key):
        _check_basic_index(key)
        a = self
        out = a.data[key].copy()

        def vjp(g):
            buf = np.zeros_like(a.data)
            buf[key] += g
            return (buf,)

        return Tensor._node(out, (a,), vjp)

    # -- reductions ---------------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        a = self
        out = a.data.sum(axis=axis, keepdims=keepdims)
        out = np.asarray(out)

        def vjp(g):
            gg = np.asarray(g)
            if axis is not None and not keepdims:
                gg = np.expand_dims(gg, axis)
            return (np.broadcast_to(gg, a.data.shape).copy(),)

        return Tensor._node(out, (a,), vjp)

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else np.prod(
            [self.data.shape[ax] for ax in np.atleast_1d(axis)]
        )
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(n))

    # -- pointwise transcendentals --------------------------------------------

    def exp(self):
        a = self
        out = np.exp(a.data)

        def vjp(g):
            return (g * out,)

        return Tensor._node(out, (a,), vjp)

    def log(self):
        a = self
        out = np.log(a.data)

        def vjp(g):
            return (g / a.data,)

        return Tensor._node(out, (a,), vjp)


class Param(Tensor):
    """A named learnable Tensor (requires_grad always on)."""

    __slots__ = ("name",)

    def __init__(self, data, name="", dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)
        self.name = name


def tensor(data, requires_grad=False, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)


# -- initializers -------------------------------------------------------------


def kaiming_uniform(rng: np.random.Generator, shape, fan_in: int, dtype=np.float32):
    """He-style uniform fan-in init, U(-sqrt(6/fan_in), +sqrt(6/fan_in))."""
    bound = float(np.sqrt(6.0 / fan_in))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def normal_init(rng: np.random.Generator, shape, std=0.02, dtype=np.float32):
    return (rng.standard_normal(shape) * std).astype(dtype)


# -- helpers ------------------------------------------------------------------


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back to the operand's shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _unbroadcast_matmul(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce batched-matmul gradients for 2-d operands used with batches."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    return g


def _check_basic_index(key):
    items = key if isinstance(key, tuple) else (key,)
    for item in items:
        if isinstance(item, (np.ndarray, list)):
            raise TypeError("advanced indexing is not differentiable here")
