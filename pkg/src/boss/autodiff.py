"""Layer-wise reverse-mode differentiation over dense networks, plus ADAM.

Values are float64 numpy arrays. A graph is an ordered list of layers; the
forward pass caches every layer input so that ``backward`` can walk the list in
reverse and emit exact parameter and input gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from boss.errors import NumericError, StateError, StructuralError

LAYER_KINDS = ("dense", "relu", "sigmoid", "softmax")


def softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


class Layer:
    """One layer of a dense network.

    ``dense`` layers own ``weights`` of shape ``(out_dim, in_dim)`` and a
    ``bias`` of shape ``(out_dim,)``; activation layers have neither and keep
    ``in_dim == out_dim``. A frozen layer still propagates gradients to its
    input but never reports parameter gradients.
    """

    def __init__(self, kind, in_dim, out_dim=None, weights=None, bias=None, frozen=False):
        if kind not in LAYER_KINDS:
            raise StructuralError(f"unknown layer kind {kind!r}")
        out_dim = in_dim if out_dim is None else out_dim
        if in_dim < 1 or out_dim < 1:
            raise StructuralError(f"layer dims must be positive, got {in_dim}->{out_dim}")
        self.kind = kind
        self.in_dim = int(in_dim)
        self.out_dim = int(out_dim)
        self.frozen = frozen
        if kind == "dense":
            if weights is None:
                weights = np.zeros((out_dim, in_dim))
            if bias is None:
                bias = np.zeros(out_dim)
            self.weights = np.array(weights, dtype=np.float64)
            self.bias = np.array(bias, dtype=np.float64)
            if self.weights.shape != (out_dim, in_dim):
                raise StructuralError(
                    f"dense weights have shape {self.weights.shape}, expected {(out_dim, in_dim)}"
                )
            if self.bias.shape != (out_dim,):
                raise StructuralError(f"dense bias has shape {self.bias.shape}, expected {(out_dim,)}")
        else:
            if in_dim != out_dim:
                raise StructuralError(f"{kind} layer must preserve width, got {in_dim}->{out_dim}")
            if weights is not None or bias is not None:
                raise StructuralError(f"{kind} layer takes no parameters")
            self.weights = None
            self.bias = None

    @classmethod
    def dense(cls, in_dim, out_dim, rng=None, weights=None, bias=None):
        """Dense layer; He/Glorot-style uniform init when ``rng`` is given."""
        if weights is None and rng is not None:
            limit = np.sqrt(6.0 / (in_dim + out_dim))
            weights = rng.uniform(-limit, limit, size=(out_dim, in_dim))
            bias = np.zeros(out_dim)
        return cls("dense", in_dim, out_dim, weights=weights, bias=bias)

    @property
    def params(self):
        if self.kind == "dense":
            return [self.weights, self.bias]
        return []

    def forward(self, x):
        if self.kind == "dense":
            return x @ self.weights.T + self.bias
        if self.kind == "relu":
            return np.maximum(x, 0.0)
        if self.kind == "sigmoid":
            return expit(x)
        return softmax(x)

    def backward(self, x, y, grad_out):
        """Return ``(grad_in, [param grads])`` given cached input ``x`` and output ``y``."""
        if self.kind == "dense":
            return grad_out @ self.weights, [grad_out.T @ x, grad_out.sum(axis=0)]
        if self.kind == "relu":
            return grad_out * (x > 0.0), []
        if self.kind == "sigmoid":
            return grad_out * y * (1.0 - y), []
        inner = (grad_out * y).sum(axis=-1, keepdims=True)
        return y * (grad_out - inner), []

    def copy(self):
        return Layer(self.kind, self.in_dim, self.out_dim,
                     weights=None if self.weights is None else self.weights.copy(),
                     bias=None if self.bias is None else self.bias.copy(),
                     frozen=self.frozen)

    def __repr__(self):
        return f"Layer({self.kind}, {self.in_dim}->{self.out_dim}{', frozen' if self.frozen else ''})"


@dataclass
class Gradients:
    params: list
    input: np.ndarray


class ComputeGraph:
    """Ordered stack of layers with cached activations."""

    def __init__(self, layers):
        self.layers = list(layers)
        if not self.layers:
            raise StructuralError("a graph needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise StructuralError(f"{prev!r} cannot feed {nxt!r}")
        for layer in self.layers[:-1]:
            if layer.kind == "softmax":
                raise StructuralError("softmax is only allowed as the final layer")
        self._cache = None

    @property
    def in_dim(self):
        return self.layers[0].in_dim

    @property
    def out_dim(self):
        return self.layers[-1].out_dim

    @classmethod
    def concat(cls, first, second):
        """Graph computing ``second(first(x))``; shares layer objects with both."""
        if first.layers[-1].kind == "softmax":
            raise StructuralError("cannot stack a graph after a softmax output")
        return cls(first.layers + second.layers)

    def parameters(self, include_frozen=False):
        """Parameter arrays in layer order; frozen layers are skipped by default."""
        out = []
        for layer in self.layers:
            if include_frozen or not layer.frozen:
                out.extend(layer.params)
        return out

    def freeze(self):
        for layer in self.layers:
            layer.frozen = True
        return self

    def forward(self, x, cache=True):
        """Run the stack; ``cache=False`` leaves the graph untouched (safe to share)."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        batch = x[None, :] if single else x
        if batch.ndim != 2 or batch.shape[1] != self.in_dim:
            raise StructuralError(f"input of shape {x.shape} does not match in_dim {self.in_dim}")
        inputs, outputs = [], []
        h = batch
        for i, layer in enumerate(self.layers):
            inputs.append(h)
            h = layer.forward(h)
            if not np.all(np.isfinite(h)):
                raise NumericError(f"non-finite activation after layer {i} ({layer.kind})")
            outputs.append(h)
        if cache:
            self._cache = (inputs, outputs, single)
        return h[0] if single else h

    def backward(self, output_grad):
        """Propagate ``output_grad`` (dLoss/dOutput) back through the cached pass."""
        if self._cache is None:
            raise StateError("backward called before forward")
        inputs, outputs, single = self._cache
        g = np.asarray(output_grad, dtype=np.float64)
        g = g[None, :] if single and g.ndim == 1 else g
        if g.shape != outputs[-1].shape:
            raise StructuralError(f"output_grad shape {g.shape} != output shape {outputs[-1].shape}")
        grads = []
        for layer, x, y in zip(reversed(self.layers), reversed(inputs), reversed(outputs)):
            g, pgrads = layer.backward(x, y, g)
            if not layer.frozen:
                grads = pgrads + grads
        return Gradients(params=grads, input=g[0] if single else g)

    def copy(self):
        return ComputeGraph([layer.copy() for layer in self.layers])


@dataclass
class AdamState:
    lr: float = 0.025
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params, grads, state):
    """Bias-corrected ADAM update, applied in place to ``params``."""
    if len(params) != len(grads):
        raise StructuralError(f"{len(params)} params but {len(grads)} grads")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    if len(state.m) != len(params):
        raise StructuralError("optimizer state tracks a different parameter list")
    for p, g, m in zip(params, grads, state.m):
        if p.shape != g.shape or p.shape != m.shape:
            raise StructuralError(f"param {p.shape} / grad {g.shape} / state {m.shape} mismatch")
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params
