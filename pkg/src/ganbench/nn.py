"""Multilayer perceptrons, Adam / RMSprop, and weight clipping."""
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import tensor as T
from .tensor import Tensor

ACTIVATIONS = ("relu", "leaky_relu", "tanh", "sigmoid", "softmax", "linear")
DEFAULT_LEAKY_SLOPE = 0.2


def parse_activation(name: str) -> Tuple[str, float]:
    """Split ``"leaky_relu:0.1"`` into ``("leaky_relu", 0.1)``."""
    kind, _, arg = name.partition(":")
    kind = kind.strip().lower()
    if kind not in ACTIVATIONS:
        raise ValueError(f"unknown activation {name!r}; expected one of {ACTIVATIONS}")
    slope = float(arg) if arg else DEFAULT_LEAKY_SLOPE
    return kind, slope


def activate(x: Tensor, name: str) -> Tensor:
    kind, slope = parse_activation(name)
    if kind == "relu":
        return T.relu(x)
    if kind == "leaky_relu":
        return T.leaky_relu(x, slope)
    if kind == "tanh":
        return T.tanh(x)
    if kind == "sigmoid":
        return T.sigmoid(x)
    if kind == "softmax":
        return T.softmax(x)
    return x


@dataclass(frozen=True)
class MlpSpec:
    """Layer layout of a perceptron.

    ``hidden`` and ``output`` hold ``(width, activation)`` pairs; an activation
    is one of :data:`ACTIVATIONS`, optionally with a slope suffix such as
    ``"leaky_relu:0.2"``.
    """

    input_dim: int
    hidden: Tuple[Tuple[int, str], ...] = ()
    output: Tuple[int, str] = (1, "linear")
    init_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple((int(w), str(a)) for w, a in self.hidden))
        object.__setattr__(self, "output", (int(self.output[0]), str(self.output[1])))

    @property
    def layers(self) -> Tuple[Tuple[int, str], ...]:
        return self.hidden + (self.output,)

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden": [list(h) for h in self.hidden],
            "output": list(self.output),
            "init_seed": self.init_seed,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "MlpSpec":
        return cls(int(d["input_dim"]), tuple(tuple(h) for h in d["hidden"]),
                   tuple(d["output"]), int(d["init_seed"]))


class Mlp:
    """Dense feed-forward network; calling it maps ``(batch, input_dim)`` to ``(batch, out)``.

    Parameters are Glorot-uniform weights ``W<i>`` of shape ``(fan_in, fan_out)``
    and zero biases ``b<i>``, drawn from ``spec.init_seed``.
    """

    def __init__(self, spec: MlpSpec, prefix: str = ""):
        if spec.input_dim <= 0:
            raise ValueError(f"input_dim must be positive, got {spec.input_dim}")
        for width, act in spec.layers:
            if width <= 0:
                raise ValueError(f"layer widths must be positive, got {width}")
            parse_activation(act)
        self.spec = spec
        self.prefix = prefix
        rng = np.random.default_rng(spec.init_seed)
        self.params: Dict[str, Tensor] = {}
        fan_in = spec.input_dim
        for i, (width, _) in enumerate(spec.layers):
            limit = np.sqrt(6.0 / (fan_in + width))
            w = rng.uniform(-limit, limit, size=(fan_in, width))
            self.params[f"{prefix}W{i}"] = Tensor(w, requires_grad=True, name=f"{prefix}W{i}")
            self.params[f"{prefix}b{i}"] = Tensor(np.zeros(width), requires_grad=True, name=f"{prefix}b{i}")
            fan_in = width

    @property
    def input_dim(self) -> int:
        return self.spec.input_dim

    @property
    def output_dim(self) -> int:
        return self.spec.output[0]

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def __call__(self, x) -> Tensor:
        h = T.as_tensor(x)
        if h.ndim != 2 or h.shape[1] != self.input_dim:
            raise T.ShapeError("mlp input", (h,), f"expected (batch, {self.input_dim})")
        for i, (_, act) in enumerate(self.spec.layers):
            h = T.matmul(h, self.params[f"{self.prefix}W{i}"]) + self.params[f"{self.prefix}b{i}"]
            h = activate(h, act)
        return h

    def get_weights(self) -> Dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.params.items()}

    def set_weights(self, weights: Mapping[str, np.ndarray]):
        for k, p in self.params.items():
            w = np.asarray(weights[k], dtype=np.float64)
            if w.shape != p.shape:
                raise ValueError(f"{k}: expected shape {p.shape}, got {w.shape}")
            p.data = w.copy()


def build_mlp(spec: MlpSpec, prefix: str = "") -> Mlp:
    return Mlp(spec, prefix=prefix)


def _sign(direction: str) -> float:
    if direction == "descend":
        return -1.0
    if direction == "ascend":
        return 1.0
    raise ValueError(f"direction must be 'ascend' or 'descend', got {direction!r}")


def _grad_array(grads: Mapping, name: str) -> np.ndarray:
    try:
        g = grads[name]
    except KeyError:
        raise KeyError(f"missing gradient for parameter {name!r}") from None
    return g.data if isinstance(g, Tensor) else np.asarray(g, dtype=np.float64)


@dataclass
class OptimizerState:
    """Per-parameter accumulators and the step counter ``t``."""

    first: Dict[str, np.ndarray] = field(default_factory=dict)
    second: Dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


class Adam:
    """Adam with bias correction. ``step`` ascends or descends the given gradients."""

    def __init__(self, params: Mapping[str, Tensor], lr: float = 2e-4, beta1: float = 0.5,
                 beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ValueError("lr must be positive")
        self.params = dict(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.state = OptimizerState(
            first={k: np.zeros(p.shape) for k, p in self.params.items()},
            second={k: np.zeros(p.shape) for k, p in self.params.items()},
        )

    def step(self, grads: Mapping, direction: str = "descend"):
        sign = _sign(direction)
        garrs = {k: _grad_array(grads, k) for k in self.params}
        st = self.state
        st.t += 1
        c1 = 1.0 - self.beta1 ** st.t
        c2 = 1.0 - self.beta2 ** st.t
        for k, p in self.params.items():
            g = garrs[k]
            st.first[k] = self.beta1 * st.first[k] + (1.0 - self.beta1) * g
            st.second[k] = self.beta2 * st.second[k] + (1.0 - self.beta2) * g * g
            m_hat = st.first[k] / c1
            v_hat = st.second[k] / c2
            p.data = p.data + sign * self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class RMSprop:
    """RMSprop: ``s <- decay*s + (1-decay)*g^2``, update ``lr * g / (sqrt(s) + eps)``."""

    def __init__(self, params: Mapping[str, Tensor], lr: float = 5e-5, decay: float = 0.9,
                 eps: float = 1e-8):
        if lr <= 0:
            raise ValueError("lr must be positive")
        self.params = dict(params)
        self.lr, self.decay, self.eps = lr, decay, eps
        self.state = OptimizerState(second={k: np.zeros(p.shape) for k, p in self.params.items()})

    def step(self, grads: Mapping, direction: str = "descend"):
        sign = _sign(direction)
        garrs = {k: _grad_array(grads, k) for k in self.params}
        st = self.state
        st.t += 1
        for k, p in self.params.items():
            g = garrs[k]
            st.second[k] = self.decay * st.second[k] + (1.0 - self.decay) * g * g
            p.data = p.data + sign * self.lr * g / (np.sqrt(st.second[k]) + self.eps)


def make_optimizer(kind: str, params: Mapping[str, Tensor], lr: float, beta1: float = 0.5,
                   beta2: float = 0.999, eps: float = 1e-8, decay: float = 0.9):
    kind = kind.lower()
    if kind == "adam":
        return Adam(params, lr=lr, beta1=beta1, beta2=beta2, eps=eps)
    if kind == "rmsprop":
        return RMSprop(params, lr=lr, decay=decay, eps=eps)
    raise ValueError(f"unknown optimizer {kind!r}; expected 'adam' or 'rmsprop'")


def clip_weights(params: Mapping[str, Tensor], c: float) -> Mapping[str, Tensor]:
    """Clamp every parameter element into ``[-c, c]``."""
    if c <= 0:
        raise ValueError("clip bound must be positive")
    for p in params.values():
        p.data = np.clip(p.data, -c, c)
    return params


def max_abs_weight(params: Mapping[str, Tensor]) -> float:
    return max(float(np.abs(p.data).max()) for p in params.values())
