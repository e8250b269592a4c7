"""Small dense feed-forward networks with exact backpropagation in numpy."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import DimensionMismatchError, PhylabError, Rng, as_rng, write_json

ACTIVATIONS = ("linear", "relu", "softmax")
LOG_FLOOR = 1e-12


def softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class DenseLayer:
    W: np.ndarray  # out x in
    b: np.ndarray  # out
    activation: str = "linear"
    capture: bool = False

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise PhylabError(f"unknown activation {self.activation!r}")
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64).reshape(-1)
        if self.W.shape[0] != self.b.shape[0]:
            raise DimensionMismatchError("bias length must equal output width")

    @property
    def n_in(self) -> int:
        return self.W.shape[1]

    @property
    def n_out(self) -> int:
        return self.W.shape[0]

    @property
    def n_params(self) -> int:
        return self.W.size + self.b.size

    @classmethod
    def init(cls, n_in: int, n_out: int, activation: str, rng: Rng, capture=False) -> "DenseLayer":
        # He-uniform for relu, Glorot-uniform otherwise
        if activation == "relu":
            limit = math.sqrt(6.0 / n_in)
        else:
            limit = math.sqrt(6.0 / (n_in + n_out))
        W = rng.uniform(-limit, limit, size=(n_out, n_in))
        return cls(W, np.zeros(n_out), activation, capture)


@dataclass
class PowerNormLayer:
    """Rescales a batch so that its mean squared row norm equals ``p_av``."""

    p_av: float
    capture: bool = False
    n_params = 0

    def forward(self, x):
        return power_normalize(x, self.p_av)


@dataclass
class Network:
    layers: list = field(default_factory=list)

    def __post_init__(self):
        prev = None
        for l in self.layers:
            if isinstance(l, DenseLayer):
                if prev is not None and l.n_in != prev:
                    raise DimensionMismatchError(f"layer expects {l.n_in} inputs, previous emits {prev}")
                prev = l.n_out
        for l in self.dense[:-1]:
            if l.activation == "softmax":
                raise PhylabError("softmax is only allowed on the final layer")

    @property
    def dense(self) -> list[DenseLayer]:
        return [l for l in self.layers if isinstance(l, DenseLayer)]

    @property
    def n_in(self) -> int:
        return self.dense[0].n_in

    @property
    def n_out(self) -> int:
        return self.dense[-1].n_out

    def copy(self) -> "Network":
        out = []
        for l in self.layers:
            if isinstance(l, DenseLayer):
                out.append(DenseLayer(l.W.copy(), l.b.copy(), l.activation, l.capture))
            else:
                out.append(PowerNormLayer(l.p_av, l.capture))
        return Network(out)

    def __call__(self, x):
        return forward(self, x)[0]

    # -- serialisation ---------------------------------------------------

    def to_dict(self, meta: dict | None = None) -> dict:
        layers = []
        for l in self.layers:
            if isinstance(l, DenseLayer):
                layers.append({"in": l.n_in, "out": l.n_out, "act": l.activation,
                               "W": l.W.tolist(), "b": l.b.tolist()})
        meta = dict(meta or {})
        meta["power_norm"] = [
            {"after_dense": sum(isinstance(x, DenseLayer) for x in self.layers[:i]), "p_av": l.p_av}
            for i, l in enumerate(self.layers) if isinstance(l, PowerNormLayer)
        ]
        meta["capture"] = [i for i, l in enumerate(self.dense) if l.capture]
        return {"layers": layers, "meta": meta}

    @classmethod
    def from_dict(cls, d: dict) -> "Network":
        meta = d.get("meta", {})
        capture = set(meta.get("capture", []))
        dense = [DenseLayer(np.array(l["W"], dtype=np.float64).reshape(l["out"], l["in"]),
                            np.array(l["b"], dtype=np.float64), l["act"], i in capture)
                 for i, l in enumerate(d["layers"])]
        layers = list(dense)
        for pn in sorted(meta.get("power_norm", []), key=lambda p: -p["after_dense"]):
            layers.insert(pn["after_dense"], PowerNormLayer(pn["p_av"]))
        return cls(layers)

    def save(self, path, meta=None) -> None:
        write_json(path, self.to_dict(meta))

    @classmethod
    def load(cls, path) -> "Network":
        return cls.from_dict(json.loads(Path(path).read_text()))


def build_network(widths, activations, rng: Rng | int | None = None, capture=False) -> Network:
    """Dense stack with ``len(widths) - 1`` layers; ``activations`` per layer."""
    rng = as_rng(rng)
    if isinstance(activations, str):
        activations = [activations] * (len(widths) - 1)
    layers = [DenseLayer.init(a, b, act, rng, capture)
              for a, b, act in zip(widths[:-1], widths[1:], activations)]
    return Network(layers)


def count_params(net: Network) -> int:
    return sum(l.n_params for l in net.layers)


# --------------------------------------------------------------------------
# Forward / losses / backward
# --------------------------------------------------------------------------


def power_normalize(x: np.ndarray, p_av: float = 1.0) -> np.ndarray:
    energy = float(np.sum(x * x))
    if energy == 0.0:
        raise PhylabError("cannot power-normalise an all-zero batch")
    return x * math.sqrt(p_av * x.shape[0] / energy)


def _activate(z, act):
    if act == "relu":
        return np.maximum(z, 0.0)
    if act == "softmax":
        return softmax(z)
    return z


def _run(net: Network, batch: np.ndarray):
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.n_in:
        raise DimensionMismatchError(f"batch shape {x.shape} does not match input width {net.n_in}")
    inputs, captured = [], []
    for l in net.layers:
        inputs.append(x)
        if isinstance(l, DenseLayer):
            x = _activate(x @ l.W.T + l.b, l.activation)
        else:
            x = power_normalize(x, l.p_av)
        if l.capture:
            captured.append(x)
    return x, captured, inputs


def forward(net: Network, batch: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Output of the stack and the activations of capture-enabled layers."""
    out, captured, _ = _run(net, batch)
    return out, captured


def cross_entropy_loss(pred: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log-probability of the true class.

    ``labels`` may be one-hot rows or integer class indices.
    """
    pred = np.asarray(pred)
    labels = np.asarray(labels)
    idx = labels.argmax(axis=1) if labels.ndim == 2 else labels.astype(int)
    p = np.maximum(pred[np.arange(pred.shape[0]), idx], LOG_FLOOR)
    return float(-np.mean(np.log(p)))


def mse_loss(pred: np.ndarray, target: np.ndarray) -> float:
    pred, target = np.asarray(pred), np.asarray(target)
    if pred.shape != target.shape:
        raise DimensionMismatchError(f"shape mismatch {pred.shape} vs {target.shape}")
    return float(np.mean((pred - target) ** 2))


def loss_value(pred, targets, loss_kind: str) -> float:
    if loss_kind == "cross_entropy":
        return cross_entropy_loss(pred, targets)
    if loss_kind == "mse":
        return mse_loss(pred, targets)
    raise PhylabError(f"unknown loss {loss_kind!r}")


def backward(net: Network, batch, targets, loss_kind: str, return_input_grad: bool = False):
    """Exact gradients of the mean-reduced loss.

    Returns ``(grads, loss)`` where ``grads`` holds one ``(dW, db)`` tuple per
    dense layer, in layer order.
    """
    out_act = net.dense[-1].activation
    if (loss_kind == "cross_entropy") != (out_act == "softmax"):
        raise PhylabError(f"loss {loss_kind!r} cannot be paired with a {out_act!r} output layer")
    out, _, inputs = _run(net, batch)
    targets = np.asarray(targets, dtype=np.float64)
    B = out.shape[0]
    if loss_kind == "cross_entropy":
        if targets.ndim == 1:
            targets = np.eye(out.shape[1])[targets.astype(int)]
        loss = cross_entropy_loss(out, targets)
        delta = (out - targets) / B  # gradient w.r.t. softmax pre-activation
    else:
        loss = mse_loss(out, targets)
        delta = 2.0 * (out - targets) / out.size
    grads, grad_in = _backprop(net, inputs, delta)
    if return_input_grad:
        return grads, loss, grad_in
    return grads, loss


def backward_from(net: Network, batch, grad_out):
    """Backpropagate an upstream gradient ``dL/d(output)``.

    Used to chain networks, e.g. encoder -> channel -> decoder.  The output
    layer must not be softmax.  Returns ``(grads, dL/d(batch))``.
    """
    if net.dense[-1].activation == "softmax":
        raise PhylabError("backward_from does not support a softmax output")
    _, _, inputs = _run(net, batch)
    return _backprop(net, inputs, np.asarray(grad_out, dtype=np.float64))


def _backprop(net: Network, inputs, delta):
    grads = []
    for i in range(len(net.layers) - 1, -1, -1):
        l, x = net.layers[i], inputs[i]
        if isinstance(l, DenseLayer):
            if l.activation == "relu":
                delta = delta * (x @ l.W.T + l.b > 0)
            # softmax delta already w.r.t. pre-activation
            grads.append((delta.T @ x, delta.sum(axis=0)))
            delta = delta @ l.W
        else:
            energy = float(np.sum(x * x))
            s = math.sqrt(l.p_av * x.shape[0] / energy)
            delta = s * delta - s * x * (np.sum(delta * x) / energy)
    grads.reverse()
    return grads, delta


def grad_norm(grads) -> float:
    return math.sqrt(sum(float(np.sum(dW**2) + np.sum(db**2)) for dW, db in grads))


# --------------------------------------------------------------------------
# Optimisers
# --------------------------------------------------------------------------


def sgd_step(net: Network, grads, lr: float) -> Network:
    for l, (dW, db) in zip(net.dense, grads):
        l.W -= lr * dW
        l.b -= lr * db
    return net


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list | None = None
    v: list | None = None


def adam_step(net: Network, grads, lr: float, state: AdamState | None = None):
    state = AdamState() if state is None else state
    if state.m is None:
        state.m = [(np.zeros_like(dW), np.zeros_like(db)) for dW, db in grads]
        state.v = [(np.zeros_like(dW), np.zeros_like(db)) for dW, db in grads]
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1, c2 = 1.0 - b1**state.t, 1.0 - b2**state.t
    for k, (l, g) in enumerate(zip(net.dense, grads)):
        new_m, new_v = [], []
        for p, gp, mp, vp in zip((l.W, l.b), g, state.m[k], state.v[k]):
            mp = b1 * mp + (1 - b1) * gp
            vp = b2 * vp + (1 - b2) * gp * gp
            p -= lr * (mp / c1) / (np.sqrt(vp / c2) + state.eps)
            new_m.append(mp)
            new_v.append(vp)
        state.m[k], state.v[k] = tuple(new_m), tuple(new_v)
    return net, state
