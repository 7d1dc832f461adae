"""Dense float64 tensors with reverse-mode automatic differentiation.

Graphs are recorded as operations run (define-by-run). Each node keeps its
operands and a vector-Jacobian product written with tensor operations, so the
reverse pass can itself be recorded when ``create_graph=True`` and then
differentiated a second time. The gradient penalty of WGAN-GP relies on this.

Node ids come from a process-wide counter, so an operand always has a smaller
id than any node built from it.
"""
import itertools
import threading
from contextlib import contextmanager
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

LOG_FLOOR = 1e-7

_ids = itertools.count()
_mode = threading.local()


class TensorError(Exception):
    """Base class for errors raised while building or differentiating graphs."""


class ShapeError(TensorError, ValueError):
    def __init__(self, op: str, operands: Sequence["Tensor"], detail: str = ""):
        desc = ", ".join(f"{t.shape} [node {t.node_id}]" for t in operands)
        msg = f"{op}: incompatible operand shapes {desc}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
        self.op = op
        self.nodes = tuple(t.node_id for t in operands)


class NonFiniteError(TensorError, FloatingPointError):
    def __init__(self, op: str, node_id: int):
        super().__init__(f"{op} produced a non-finite value at node {node_id}")
        self.op = op
        self.node_id = node_id


class GraphError(TensorError):
    pass


def is_grad_enabled() -> bool:
    return getattr(_mode, "enabled", True)


@contextmanager
def grad_mode(enabled: bool):
    prev = is_grad_enabled()
    _mode.enabled = enabled
    try:
        yield
    finally:
        _mode.enabled = prev


def no_grad():
    """Context manager that stops recording operations."""
    return grad_mode(False)


class Tensor:
    """An immutable float64 array that may take part in gradient tracking.

    Parameters
    ----------
    data : array-like
        Values; copied and converted to float64.
    requires_grad : bool
        Whether gradients with respect to this tensor are wanted.
    name : str, optional
        Label used in error messages and parameter maps.
    """

    __slots__ = ("data", "requires_grad", "name", "op", "node_id", "_parents", "_vjp")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.name = name
        self.op = "leaf"
        self.node_id = next(_ids)
        self._parents: Tuple["Tensor", ...] = ()
        self._vjp = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({np.array2string(self.data, precision=6)}{flag})"

    def __len__(self):
        return len(self.data)

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

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p):
        return power(self, p)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


VJP = Callable[[Tensor, Tuple[bool, ...], Tensor], Tuple[Optional[Tensor], ...]]


def _make(op: str, data: np.ndarray, parents: Tuple[Tensor, ...], vjp: VJP) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.name = None
    out.op = op
    out.node_id = next(_ids)
    if not np.isfinite(data).all():
        raise NonFiniteError(op, out.node_id)
    track = is_grad_enabled() and any(p.requires_grad for p in parents)
    out.requires_grad = track
    out._parents = parents if track else ()
    out._vjp = vjp if track else None
    return out


def _check_elementwise(op: str, a: Tensor, b: Tensor):
    # only a leading batch axis may be broadcast
    sa, sb = a.shape, b.shape
    if sa == sb or sa == () or sb == ():
        return
    if len(sa) == len(sb) + 1 and sa[1:] == sb:
        return
    if len(sb) == len(sa) + 1 and sb[1:] == sa:
        return
    raise ShapeError(op, (a, b), "only a leading batch axis broadcasts")


def _sum_to(x: Tensor, shape: Tuple[int, ...]) -> Tensor:
    """Reduce ``x`` by summation so that it has ``shape`` (inverse of broadcasting)."""
    if x.shape == shape:
        return x
    lead = x.ndim - len(shape)
    axes = tuple(range(lead)) + tuple(
        i + lead for i, s in enumerate(shape) if s == 1 and x.shape[i + lead] != 1
    )
    data = x.data.sum(axis=axes, keepdims=True).reshape(shape)
    src = x.shape

    def vjp(g, needs, out):
        return (_broadcast_to(g, src),)

    return _make("sum_to", data, (x,), vjp)


def _broadcast_to(x: Tensor, shape: Tuple[int, ...]) -> Tensor:
    if x.shape == shape:
        return x
    data = np.ascontiguousarray(np.broadcast_to(x.data, shape))
    src = x.shape

    def vjp(g, needs, out):
        return (_sum_to(g, src),)

    return _make("broadcast", data, (x,), vjp)


def broadcast_to(x, shape) -> Tensor:
    return _broadcast_to(as_tensor(x), tuple(shape))


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise("add", a, b)

    def vjp(g, needs, out):
        return (_sum_to(g, a.shape) if needs[0] else None,
                _sum_to(g, b.shape) if needs[1] else None)

    return _make("add", a.data + b.data, (a, b), vjp)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise("sub", a, b)

    def vjp(g, needs, out):
        return (_sum_to(g, a.shape) if needs[0] else None,
                _sum_to(neg(g), b.shape) if needs[1] else None)

    return _make("sub", a.data - b.data, (a, b), vjp)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise("mul", a, b)

    def vjp(g, needs, out):
        return (_sum_to(mul(g, b), a.shape) if needs[0] else None,
                _sum_to(mul(g, a), b.shape) if needs[1] else None)

    return _make("mul", a.data * b.data, (a, b), vjp)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise("div", a, b)

    def vjp(g, needs, out):
        ga = _sum_to(div(g, b), a.shape) if needs[0] else None
        gb = _sum_to(neg(div(mul(g, a), mul(b, b))), b.shape) if needs[1] else None
        return ga, gb

    return _make("div", a.data / b.data, (a, b), vjp)


def neg(x) -> Tensor:
    x = as_tensor(x)
    return _make("neg", -x.data, (x,), lambda g, needs, out: (neg(g),))


def power(x, p: float) -> Tensor:
    x = as_tensor(x)
    p = float(p)

    def vjp(g, needs, out):
        return (mul(g, mul(p, power(x, p - 1.0))),)

    return _make("power", np.power(x.data, p), (x,), vjp)


def square(x) -> Tensor:
    x = as_tensor(x)
    return _make("square", x.data * x.data, (x,), lambda g, needs, out: (mul(g, mul(2.0, x)),))


def sqrt(x) -> Tensor:
    x = as_tensor(x)
    return _make("sqrt", np.sqrt(x.data), (x,), lambda g, needs, out: (div(mul(0.5, g), out),))


def exp(x) -> Tensor:
    x = as_tensor(x)
    with np.errstate(over="ignore"):
        data = np.exp(x.data)
    return _make("exp", data, (x,), lambda g, needs, out: (mul(g, out),))


def _log_raw(x: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        data = np.log(x.data)
    return _make("log", data, (x,), lambda g, needs, out: (div(g, x),))


def log(x) -> Tensor:
    """Natural log with its argument clamped to ``[LOG_FLOOR, inf)``."""
    return _log_raw(clip(x, LOG_FLOOR, None))


def clip(x, lo: Optional[float] = None, hi: Optional[float] = None) -> Tensor:
    x = as_tensor(x)
    keep = np.ones(x.shape, dtype=bool)
    if lo is not None:
        keep &= x.data >= lo
    if hi is not None:
        keep &= x.data <= hi
    mask = Tensor(keep.astype(np.float64))
    data = np.clip(x.data, lo, hi) if (lo is not None or hi is not None) else x.data.copy()
    return _make("clip", data, (x,), lambda g, needs, out: (mul(g, mask),))


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = Tensor((x.data > 0).astype(np.float64))
    return _make("relu", x.data * mask.data, (x,), lambda g, needs, out: (mul(g, mask),))


def leaky_relu(x, slope: float = 0.2) -> Tensor:
    x = as_tensor(x)
    factor = Tensor(np.where(x.data > 0, 1.0, slope))
    return _make("leaky_relu", x.data * factor.data, (x,), lambda g, needs, out: (mul(g, factor),))


def tanh(x) -> Tensor:
    x = as_tensor(x)
    return _make("tanh", np.tanh(x.data), (x,),
                 lambda g, needs, out: (mul(g, sub(1.0, mul(out, out))),))


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    d = x.data
    # split by sign so neither branch overflows
    e = np.exp(-np.abs(d))
    data = np.where(d >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _make("sigmoid", data, (x,),
                 lambda g, needs, out: (mul(g, mul(out, sub(1.0, out))),))


def softmax(x) -> Tensor:
    """Softmax over the last axis of a 2-D tensor."""
    x = as_tensor(x)
    if x.ndim != 2:
        raise ShapeError("softmax", (x,), "expects a 2-D tensor")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=1, keepdims=True)

    def vjp(g, needs, out):
        inner = sum_(mul(g, out), axis=1, keepdims=True)
        return (mul(out, sub(g, _broadcast_to(inner, out.shape))),)

    return _make("softmax", data, (x,), vjp)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", (a, b), "inner dimensions must agree")

    def vjp(g, needs, out):
        return (matmul(g, transpose(b)) if needs[0] else None,
                matmul(transpose(a), g) if needs[1] else None)

    return _make("matmul", a.data @ b.data, (a, b), vjp)


def transpose(x) -> Tensor:
    x = as_tensor(x)
    if x.ndim != 2:
        raise ShapeError("transpose", (x,), "expects a 2-D tensor")
    return _make("transpose", np.ascontiguousarray(x.data.T), (x,),
                 lambda g, needs, out: (transpose(g),))


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    src = x.shape
    try:
        data = x.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError("reshape", (x,), str(exc)) from None
    return _make("reshape", data, (x,), lambda g, needs, out: (reshape(g, src),))


def sum_(x, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    src = x.shape
    data = x.data.sum(axis=axis, keepdims=keepdims)
    if axis is None:
        kshape = (1,) * x.ndim
    else:
        ax = axis % x.ndim
        kshape = tuple(1 if i == ax else s for i, s in enumerate(src))

    def vjp(g, needs, out):
        return (_broadcast_to(reshape(g, kshape), src),)

    return _make("sum", np.asarray(data, dtype=np.float64), (x,), vjp)


def mean(x, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    count = x.size if axis is None else x.shape[axis]
    return mul(sum_(x, axis=axis, keepdims=keepdims), 1.0 / count)


def _slice(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    index = [slice(None)] * x.ndim
    index[axis] = slice(start, stop)
    total = x.shape[axis]
    data = np.ascontiguousarray(x.data[tuple(index)])
    return _make("slice", data, (x,), lambda g, needs, out: (_pad(g, axis, start, total),))


def _pad(x: Tensor, axis: int, start: int, total: int) -> Tensor:
    width = [(0, 0)] * x.ndim
    width[axis] = (start, total - start - x.shape[axis])
    stop = start + x.shape[axis]
    return _make("pad", np.pad(x.data, width), (x,),
                 lambda g, needs, out: (_slice(g, axis, start, stop),))


def take(x, start: int, stop: int, axis: int = 1) -> Tensor:
    """Contiguous slice ``[start, stop)`` along ``axis``."""
    return _slice(as_tensor(x), axis, start, stop)


def concat(tensors: Sequence, axis: int = 1) -> Tensor:
    ts = tuple(as_tensor(t) for t in tensors)
    if not ts:
        raise ValueError("concat needs at least one tensor")
    ref = ts[0]
    for t in ts[1:]:
        if t.ndim != ref.ndim or any(
            s != r for i, (s, r) in enumerate(zip(t.shape, ref.shape)) if i != axis % ref.ndim
        ):
            raise ShapeError("concat", ts, f"mismatch off axis {axis}")
    bounds = np.cumsum([0] + [t.shape[axis] for t in ts])

    def vjp(g, needs, out):
        return tuple(
            _slice(g, axis, int(bounds[i]), int(bounds[i + 1])) if needs[i] else None
            for i in range(len(ts))
        )

    data = np.concatenate([t.data for t in ts], axis=axis)
    return _make("concat", data, ts, vjp)


def _topo_order(root: Tensor) -> List[Tensor]:
    order: List[Tensor] = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def grad(output: Tensor, inputs: Sequence[Tensor], grad_output=None,
         create_graph: bool = False) -> List[Tensor]:
    """Reverse-mode gradients of ``output`` with respect to each of ``inputs``.

    With ``create_graph=True`` the returned gradients are themselves recorded
    and can be differentiated again.
    Inputs that ``output`` does not depend on receive zeros.
    """
    if grad_output is None:
        if output.size != 1:
            raise GraphError(f"output must be scalar, got shape {output.shape}")
        seed = Tensor(np.ones(output.shape))
    else:
        seed = as_tensor(grad_output)
        if seed.shape != output.shape:
            raise ShapeError("grad", (output, seed), "grad_output must match output")

    inputs = list(inputs)
    wanted = {id(t) for t in inputs}
    grads: Dict[int, Tensor] = {}
    if output.requires_grad:
        order = _topo_order(output)
        needed: Dict[int, bool] = {}
        for node in order:
            needed[id(node)] = id(node) in wanted or any(needed.get(id(p), False) for p in node._parents)
        grads[id(output)] = seed
        with grad_mode(create_graph):
            for node in reversed(order):
                g = grads.get(id(node))
                if g is None or not node._parents or not needed[id(node)]:
                    continue
                needs = tuple(p.requires_grad and needed.get(id(p), False) for p in node._parents)
                for p, pg, need in zip(node._parents, node._vjp(g, needs, node), needs):
                    if not need or pg is None:
                        continue
                    prev = grads.get(id(p))
                    grads[id(p)] = pg if prev is None else add(prev, pg)
    elif id(output) in wanted:
        grads[id(output)] = seed

    result = []
    for t in inputs:
        g = grads.get(id(t))
        result.append(Tensor(np.zeros(t.shape)) if g is None else g)
    return result


def backward(output: Tensor, params: Mapping[str, Tensor]) -> Dict[str, Tensor]:
    """Gradient map ``name -> d output / d param`` for a scalar ``output``."""
    names = list(params)
    gs = grad(output, [params[n] for n in names])
    return dict(zip(names, gs))


def input_gradient(fn: Callable[[Tensor], Tensor], x) -> Tensor:
    """Per-row gradient of a row-scalar network ``fn`` with respect to its input.

    The result stays on the graph, so a loss built from it (e.g. a gradient
    penalty) can be differentiated with respect to the network parameters.
    """
    x = as_tensor(x)
    if not x.requires_grad:
        x = Tensor(x.data, requires_grad=True)
    out = fn(x)
    rows = x.shape[0]
    if out.shape not in ((rows,), (rows, 1)):
        raise GraphError(f"network must emit one scalar per row, got shape {out.shape}")
    return grad(sum_(out), [x], create_graph=True)[0]


def parameters_finite(params: Iterable[Tensor]) -> bool:
    return all(np.isfinite(p.data).all() for p in params)
