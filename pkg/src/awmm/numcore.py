"""Small float64 neural-network engine with hand-written gradients.

Arrays are plain ``numpy.ndarray`` objects in float64. Layers cache what
they need during ``forward`` and accumulate parameter gradients during
``backward``; call ``zero_grad`` between optimisation steps.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, NumericError, StateError

RELU = "relu"
IDENTITY = "identity"


def as_tensor(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def check_finite(name: str, x: np.ndarray) -> None:
    if not np.all(np.isfinite(x)):
        raise NumericError(f"non-finite values in {name}")


class Dense:
    """Fully connected layer ``act(x @ W + b)``."""

    def __init__(self, in_dim: int, out_dim: int, activation: str = RELU,
                 rng: np.random.Generator | None = None, init: str = "he"):
        if activation not in (RELU, IDENTITY):
            raise ValueError(f"unknown activation {activation!r}")
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.activation = activation
        if init == "zeros":
            self.W = np.zeros((in_dim, out_dim))
        elif init == "he":
            if rng is None:
                rng = np.random.default_rng(0)
            # He-scaled uniform: Var = 2 / fan_in
            limit = np.sqrt(6.0 / in_dim)
            self.W = rng.uniform(-limit, limit, size=(in_dim, out_dim))
        else:
            raise ValueError(f"unknown init {init!r}")
        self.b = np.zeros(out_dim)
        self.dW = np.zeros_like(self.W)
        self.db = np.zeros_like(self.b)
        self._cache = None

    def params(self) -> dict[str, np.ndarray]:
        return {"W": self.W, "b": self.b}

    def grads(self) -> dict[str, np.ndarray]:
        return {"W": self.dW, "b": self.db}

    def zero_grad(self) -> None:
        self.dW[...] = 0.0
        self.db[...] = 0.0

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = as_tensor(x)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise DimensionError(
                f"expected input [batch x {self.in_dim}], got {list(x.shape)}")
        z = x @ self.W + self.b
        if self.activation == RELU:
            out = np.maximum(z, 0.0)
        else:
            out = z
        self._cache = (x, z)
        return out

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise StateError("backward called before forward")
        x, z = self._cache
        grad_out = as_tensor(grad_out)
        if grad_out.shape != z.shape:
            raise DimensionError(
                f"upstream gradient shape {list(grad_out.shape)} != output {list(z.shape)}")
        if self.activation == RELU:
            dz = grad_out * (z > 0.0)
        else:
            dz = grad_out
        self.dW += x.T @ dz
        self.db += dz.sum(axis=0)
        return dz @ self.W.T

    def __deepcopy__(self, memo):
        new = Dense.__new__(Dense)
        new.in_dim, new.out_dim, new.activation = self.in_dim, self.out_dim, self.activation
        new.W, new.b = self.W.copy(), self.b.copy()
        new.dW, new.db = self.dW.copy(), self.db.copy()
        new._cache = None
        return new


class LayerStack:
    """A sequence of ``Dense`` layers run in order."""

    def __init__(self, layers: list[Dense]):
        for a, b in zip(layers, layers[1:]):
            if a.out_dim != b.in_dim:
                raise DimensionError(f"layer dims {a.out_dim} -> {b.in_dim} do not chain")
        self.layers = list(layers)

    @classmethod
    def mlp(cls, sizes: list[int], rng: np.random.Generator,
            final_activation: str = RELU) -> "LayerStack":
        layers = []
        for i, (a, b) in enumerate(zip(sizes, sizes[1:])):
            act = final_activation if i == len(sizes) - 2 else RELU
            layers.append(Dense(a, b, act, rng=rng))
        return cls(layers)

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def forward(self, x: np.ndarray) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            grad_out = layer.backward(grad_out)
        return grad_out

    def zero_grad(self) -> None:
        for layer in self.layers:
            layer.zero_grad()

    def named_params(self, prefix: str) -> dict[str, np.ndarray]:
        out = {}
        for i, layer in enumerate(self.layers):
            for k, v in layer.params().items():
                out[f"{prefix}.{i}.{k}"] = v
        return out

    def named_grads(self, prefix: str) -> dict[str, np.ndarray]:
        out = {}
        for i, layer in enumerate(self.layers):
            for k, v in layer.grads().items():
                out[f"{prefix}.{i}.{k}"] = v
        return out

    def num_params(self) -> int:
        return sum(p.size for layer in self.layers for p in layer.params().values())


def forward(stack: LayerStack, x: np.ndarray) -> np.ndarray:
    return stack.forward(x)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    logits = as_tensor(logits)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    logits = as_tensor(logits)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, labels) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its gradient w.r.t. the logits."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or logits.shape[0] == 0:
        raise ValueError("softmax_cross_entropy needs a non-empty [batch x classes] array")
    if labels.shape != (logits.shape[0],):
        raise DimensionError(f"labels shape {labels.shape} != ({logits.shape[0]},)")
    if labels.min() < 0 or labels.max() >= logits.shape[1]:
        raise ValueError("label index out of range")
    n = logits.shape[0]
    logp = log_softmax(logits)
    rows = np.arange(n)
    loss = -logp[rows, labels].mean()
    grad = np.exp(logp)
    grad[rows, labels] -= 1.0
    grad /= n
    return float(loss), grad


@dataclass
class OptimizerState:
    """SGD or Adam, keyed by parameter name.

    Adam uses the bias-corrected update with beta1=0.9, beta2=0.999, eps=1e-8.
    """

    kind: str = "adam"
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.kind!r}")
        if not self.learning_rate > 0:
            raise ValueError("learning rate must be positive")

    def copy(self) -> "OptimizerState":
        return OptimizerState(self.kind, self.learning_rate, self.beta1, self.beta2,
                              self.eps, self.step_count,
                              {k: v.copy() for k, v in self.m.items()},
                              {k: v.copy() for k, v in self.v.items()})


def optimizer_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
                   state: OptimizerState) -> dict[str, np.ndarray]:
    """Update ``params`` in place (and return them).

    Gradient ascent is obtained by passing negated gradients.
    """
    for name, g in grads.items():
        if name not in params:
            raise KeyError(f"gradient for unknown parameter {name!r}")
        if g.shape != params[name].shape:
            raise DimensionError(f"{name}: gradient shape {g.shape} != {params[name].shape}")
        check_finite(f"gradient {name}", g)

    lr = state.learning_rate
    if state.kind == "sgd":
        for name, g in grads.items():
            params[name] -= lr * g
        state.step_count += 1
        return params

    state.step_count += 1
    t = state.step_count
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, g in grads.items():
        if name not in state.m:
            state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        params[name] -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


def save_tensors(path, tensors: dict[str, np.ndarray], extra: dict | None = None) -> None:
    """Write named tensors as JSON (name, shape, row-major values).

    Floats are written with ``repr`` precision, so loading is exact.
    """
    payload = {
        "tensors": [
            {"name": k, "shape": list(v.shape), "values": [float(x) for x in v.ravel()]}
            for k, v in sorted(tensors.items())
        ]
    }
    if extra:
        payload["meta"] = extra
    with open(path, "w") as f:
        json.dump(payload, f, indent=1, sort_keys=True)
        f.write("\n")


def load_tensors(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path) as f:
        payload = json.load(f)
    out = {}
    for rec in payload["tensors"]:
        arr = np.asarray(rec["values"], dtype=np.float64)
        shape = tuple(rec["shape"])
        if arr.size != int(np.prod(shape, dtype=np.int64)):
            raise DimensionError(f"{rec['name']}: {arr.size} values for shape {list(shape)}")
        out[rec["name"]] = arr.reshape(shape)
    return out, payload.get("meta", {})
