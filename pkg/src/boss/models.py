"""Classifier and generator networks, the classifier trainer, and model files."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from boss.autodiff import LAYER_KINDS, AdamState, ComputeGraph, Layer, adam_step
from boss.errors import SchemaError, StructuralError, UnsupportedLayerError
from boss.metrics import LOG_EPS

FORMAT_VERSION = 1
DEFAULT_CLASSIFIER_HIDDEN = (256, 128)
DEFAULT_GENERATOR_HIDDEN = (128, 256)
DEFAULT_LATENT_DIM = 100


@dataclass
class Dataset:
    """Images flattened to rows of ``x`` in [0, 1], integer ``labels``."""

    x: np.ndarray
    labels: np.ndarray
    image_shape: tuple | None = None
    source: str = ""
    num_classes: int | None = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.x.ndim != 2 or len(self.x) != len(self.labels):
            raise StructuralError(f"x {self.x.shape} and labels {self.labels.shape} disagree")
        if self.num_classes is None:
            self.num_classes = int(self.labels.max()) + 1 if len(self.labels) else 0
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise StructuralError("labels fall outside [0, num_classes)")

    def __len__(self):
        return len(self.labels)

    @property
    def dim(self):
        return self.x.shape[1]


class ClassifierModel:
    """Frozen network ending in a softmax over ``M`` classes."""

    def __init__(self, graph, train_accuracy=None):
        if graph.layers[-1].kind != "softmax":
            raise StructuralError("a classifier graph must end in softmax")
        self.graph = graph.freeze()
        self.train_accuracy = train_accuracy

    @property
    def M(self):
        return self.graph.out_dim

    @property
    def N(self):
        return self.graph.in_dim

    def predict(self, x):
        """Output PMF for one input (any shape holding N values) or a batch of rows."""
        x = np.asarray(x, dtype=np.float64)
        batch = x.ndim == 2 and x.shape[1] == self.N and x.size != self.N
        return self.graph.forward(x if batch else np.ravel(x), cache=False)

    def label(self, x):
        return int(np.argmax(self.predict(np.ravel(x))))

    def accuracy(self, data):
        probs = self.graph.forward(data.x, cache=False)
        return float(np.mean(np.argmax(probs, axis=1) == data.labels))


class GeneratorModel:
    """Network from a latent ``Q``-vector to ``N`` pixels in [0, 1]."""

    def __init__(self, graph):
        if graph.layers[-1].kind != "sigmoid":
            raise StructuralError("a generator graph must end in sigmoid")
        self.graph = graph

    @property
    def Q(self):
        return self.graph.in_dim

    @property
    def N(self):
        return self.graph.out_dim

    def __call__(self, z):
        return self.graph.forward(z)

    def copy(self):
        return GeneratorModel(self.graph.copy())


def mlp(dims, rng, final="softmax"):
    """Dense/relu stack over ``dims`` with ``final`` as the output activation."""
    if len(dims) < 2:
        raise StructuralError("mlp needs at least input and output dims")
    layers = []
    for i, (a, b) in enumerate(zip(dims, dims[1:])):
        layers.append(Layer.dense(a, b, rng=rng))
        layers.append(Layer(final if i == len(dims) - 2 else "relu", b))
    return ComputeGraph(layers)


def default_arch(n, m):
    return [n, *DEFAULT_CLASSIFIER_HIDDEN, m]


def train_classifier(data, arch=None, epochs=20, lr=1e-3, seed=0, batch_size=64):
    """Fit a softmax classifier with cross-entropy and ADAM.

    ``arch`` is either a list of widths ``[N, h1, ..., M]`` (initialized from
    ``seed``) or a list of layers whose current weights are the starting
    point. Deterministic given ``seed``.
    """
    if len(data) == 0:
        raise StructuralError("cannot train on an empty dataset")
    rng = np.random.default_rng(seed)
    if arch is None:
        arch = default_arch(data.dim, data.num_classes)
    if all(isinstance(a, (int, np.integer)) for a in arch):
        graph = mlp(list(arch), rng)
    else:
        graph = ComputeGraph([layer.copy() for layer in arch])
        for layer in graph.layers:
            layer.frozen = False
    if graph.layers[-1].kind != "softmax":
        raise StructuralError("classifier architecture must end in softmax")
    if graph.in_dim != data.dim:
        raise StructuralError(f"arch expects {graph.in_dim} inputs, data has {data.dim}")
    if graph.out_dim < data.num_classes:
        raise StructuralError(f"arch has {graph.out_dim} outputs for {data.num_classes} classes")

    params = graph.parameters()
    state = AdamState(lr=lr)
    onehot = np.eye(graph.out_dim)[data.labels]
    n = len(data)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            probs = graph.forward(data.x[idx])
            grad = -onehot[idx] / (probs + LOG_EPS) / len(idx)
            adam_step(params, graph.backward(grad).params, state)
    model = ClassifierModel(graph)
    model.train_accuracy = model.accuracy(data)
    return model


def build_generator(Q=DEFAULT_LATENT_DIM, N=784, hidden=DEFAULT_GENERATOR_HIDDEN, seed=0):
    if Q < 1 or N < 1:
        raise StructuralError(f"latent and output dims must be positive, got Q={Q}, N={N}")
    rng = np.random.default_rng(seed)
    return GeneratorModel(mlp([Q, *hidden, N], rng, final="sigmoid"))


def predict(model, x):
    return model.predict(x)


def _layer_to_dict(layer):
    d = {"kind": layer.kind, "in_dim": layer.in_dim, "out_dim": layer.out_dim}
    if layer.kind == "dense":
        d["weights"] = layer.weights.ravel().tolist()
        d["bias"] = layer.bias.tolist()
    return d


def _layer_from_dict(d):
    try:
        kind = d["kind"]
        in_dim, out_dim = int(d["in_dim"]), int(d["out_dim"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed layer entry: {exc}") from exc
    if kind not in LAYER_KINDS:
        raise UnsupportedLayerError(f"unsupported layer kind {kind!r}")
    if kind != "dense":
        return Layer(kind, in_dim, out_dim)
    w = np.asarray(d.get("weights"), dtype=np.float64)
    b = np.asarray(d.get("bias"), dtype=np.float64)
    if w.size != in_dim * out_dim or b.shape != (out_dim,):
        raise SchemaError(f"dense layer {in_dim}->{out_dim} carries {w.size} weights, {b.size} biases")
    return Layer("dense", in_dim, out_dim, weights=w.reshape(out_dim, in_dim), bias=b)


def model_to_dict(model):
    doc = {"format_version": FORMAT_VERSION,
           "model": "classifier" if isinstance(model, ClassifierModel) else "generator",
           "N": model.N if isinstance(model, ClassifierModel) else model.Q,
           "M": model.M if isinstance(model, ClassifierModel) else model.N,
           "layers": [_layer_to_dict(layer) for layer in model.graph.layers]}
    if isinstance(model, ClassifierModel) and model.train_accuracy is not None:
        doc["train_accuracy"] = model.train_accuracy
    return doc


def model_from_dict(doc):
    if not isinstance(doc, dict):
        raise SchemaError("model document must be an object")
    if doc.get("format_version") != FORMAT_VERSION:
        raise SchemaError(f"unsupported format_version {doc.get('format_version')!r}")
    for key in ("M", "N", "layers"):
        if key not in doc:
            raise SchemaError(f"model document is missing {key!r}")
    try:
        graph = ComputeGraph([_layer_from_dict(d) for d in doc["layers"]])
    except StructuralError as exc:
        raise SchemaError(str(exc)) from exc
    if (graph.in_dim, graph.out_dim) != (doc["N"], doc["M"]):
        raise SchemaError(f"layers map {graph.in_dim}->{graph.out_dim}, header says {doc['N']}->{doc['M']}")
    kind = doc.get("model", "classifier")
    try:
        if kind == "classifier":
            return ClassifierModel(graph, train_accuracy=doc.get("train_accuracy"))
        if kind == "generator":
            return GeneratorModel(graph)
    except StructuralError as exc:
        raise SchemaError(str(exc)) from exc
    raise SchemaError(f"unknown model type {kind!r}")


def save_model(model, path):
    Path(path).write_text(json.dumps(model_to_dict(model)))


def load_model(path):
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not a valid model file ({exc})") from exc
    return model_from_dict(doc)


def uniform_latent(Q, seed):
    """The single latent vector z ~ U[0, 1]^Q used by one synthesis."""
    return np.random.default_rng(seed).uniform(0.0, 1.0, size=Q)
