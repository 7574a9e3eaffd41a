"""Generative synthesis loop with a dynamically weighted output loss.

A fresh copy of the generator is fitted to a single fixed latent vector ``z``.
Each outer iteration takes ``inner_steps`` ADAM steps on

    mse(g(z), x_d) + sum_v lambda_v * xent(p_v(g(z)), p_d_v)

then re-reads ``x = g(z)``, measures ``d`` (1 - SSIM, or MSE for non-images)
and the JS distances ``D_v``, and reweights every ``lambda_v``. The loop stops
as soon as ``d < delta_s`` and every ``D_v < delta_c_v``, or after
``max_iters`` iterations.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from boss.autodiff import AdamState, ComputeGraph, adam_step
from boss.errors import ConfigError, NumericError, StructuralError
from boss.metrics import (check_pmf, cross_entropy, cross_entropy_grad, d_distance, fmt,
                          js_distance, mse, mse_grad)
from boss.models import uniform_latent

log = logging.getLogger(__name__)

DEFAULT_LAMBDA0 = 0.001
DEFAULT_LR = 0.025
DEFAULT_MAX_ITERS = 3000
D_FLOOR = 1e-8


@dataclass
class SynthesisSpec:
    x_d: np.ndarray
    p_d: np.ndarray
    delta_s: float
    delta_c: float
    lambda0: float = DEFAULT_LAMBDA0
    max_iters: int = DEFAULT_MAX_ITERS
    inner_steps: int = 1
    seed: int = 0
    lr: float = DEFAULT_LR

    def __post_init__(self):
        self.x_d = np.asarray(self.x_d, dtype=np.float64)
        self.p_d = check_pmf(self.p_d, "p_d")
        if not (0.0 <= self.delta_s <= 1.0 and 0.0 <= self.delta_c <= 1.0):
            raise ConfigError(f"thresholds must lie in [0, 1], got {self.delta_s}, {self.delta_c}")
        if self.max_iters < 1 or self.inner_steps < 1:
            raise ConfigError("max_iters and inner_steps must be at least 1")
        if self.lambda0 <= 0:
            raise ConfigError(f"lambda0 must be positive, got {self.lambda0}")

    @property
    def image_shape(self):
        return self.x_d.shape if self.x_d.ndim == 2 else None


@dataclass
class TraceRow:
    tau: int
    d: float
    Ds: tuple
    lambdas: tuple

    @property
    def D(self):
        return self.Ds[0]

    @property
    def lam(self):
        return self.lambdas[0]


@dataclass
class SynthesisResult:
    x: np.ndarray
    status: str
    iterations: int
    trace: list = field(default_factory=list)
    d: float = float("nan")
    D: float = float("nan")
    Ds: tuple = ()
    error: str | None = None

    @property
    def satisfied(self):
        return self.status == "satisfied"

    def trace_csv(self):
        """``tau,d,D,lambda`` for one model; ``tau,d,D_1..D_V,lambda_1..lambda_V`` for V > 1."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        v = len(self.trace[0].Ds) if self.trace else max(len(self.Ds), 1)
        if v == 1:
            w.writerow(["tau", "d", "D", "lambda"])
        else:
            w.writerow(["tau", "d", *[f"D_{i + 1}" for i in range(v)],
                        *[f"lambda_{i + 1}" for i in range(v)]])
        for row in self.trace:
            w.writerow([row.tau, fmt(row.d), *map(fmt, row.Ds), *map(fmt, row.lambdas)])
        return buf.getvalue()


@dataclass
class Head:
    """One frozen classifier with its own target, threshold and loss weight."""

    classifier: object
    p_d: np.ndarray
    delta_c: float
    lambda0: float = DEFAULT_LAMBDA0


def lambda_update(lam, lambda0, delta_c, D):
    """relu(lam - lambda0 * r * sign(r - 1)) with r = delta_c / D.

    Grows the weight while the output is farther than ``delta_c`` from its
    target and shrinks it once the target is met; never goes negative.
    """
    ratio = delta_c / max(D, D_FLOOR)
    return max(lam - lambda0 * ratio * float(np.sign(ratio - 1.0)), 0.0)


def _loss_and_grads(gen_graph, heads, graphs, z, x_d, lambdas):
    x = gen_graph.forward(z)
    loss = mse(x, x_d)
    x_grad = mse_grad(x, x_d)
    for head, graph, lam in zip(heads, graphs, lambdas):
        p_hat = graph.forward(x)
        loss += lam * cross_entropy(p_hat, head.p_d)
        x_grad = x_grad + lam * graph.backward(cross_entropy_grad(p_hat, head.p_d)).input
    if not np.isfinite(loss):
        raise NumericError("non-finite synthesis loss")
    return loss, gen_graph.backward(x_grad).params


def total_loss(generator, classifier, z, x_d, p_d, lam):
    """Joint loss and its gradient w.r.t. the generator parameters.

    Returns ``(loss, grads)`` with ``grads`` ordered like
    ``generator.graph.parameters()``. The classifier is only read.
    """
    head = Head(classifier, check_pmf(p_d, "p_d"), 0.0)
    return _loss_and_grads(generator.graph, [head], [ComputeGraph(classifier.graph.layers)],
                           z, np.ravel(x_d), [lam])


def run_heads(x_d, heads, generator, delta_s, max_iters=DEFAULT_MAX_ITERS, inner_steps=1,
              seed=0, lr=DEFAULT_LR, image_shape=None, early_exit=True):
    """Shared synthesis loop for one or more classifier heads.

    With ``early_exit=False`` the loop always runs ``max_iters`` iterations
    (useful for plotting full traces); the status still reports whether the
    final iterate meets both thresholds.
    """
    x_d_flat = np.ravel(x_d)
    if image_shape is None and np.ndim(x_d) == 2:
        image_shape = np.shape(x_d)
    for head in heads:
        if head.classifier.N != generator.N:
            raise StructuralError(f"classifier takes {head.classifier.N} inputs, "
                                  f"generator emits {generator.N}")
        if len(head.p_d) != head.classifier.M:
            raise StructuralError(f"p_d has {len(head.p_d)} entries for {head.classifier.M} classes")
    if x_d_flat.size != generator.N:
        raise StructuralError(f"x_d has {x_d_flat.size} entries, generator emits {generator.N}")

    gen = generator.copy()
    # fresh caches over the shared frozen layers
    graphs = [ComputeGraph(h.classifier.graph.layers) for h in heads]
    z = uniform_latent(gen.Q, seed)
    params = gen.graph.parameters()
    state = AdamState(lr=lr)
    lambdas = [h.lambda0 for h in heads]
    trace = []
    x = gen.graph.forward(z, cache=False)
    status, error = "budget_exhausted", None
    d, Ds = float("nan"), ()
    try:
        for tau in range(1, max_iters + 1):
            for _ in range(inner_steps):
                _, grads = _loss_and_grads(gen.graph, heads, graphs, z, x_d_flat, lambdas)
                adam_step(params, grads, state)
            x = gen.graph.forward(z, cache=False)
            d = d_distance(x, x_d_flat, image_shape)
            Ds = tuple(js_distance(h.classifier.predict(x), h.p_d) for h in heads)
            trace.append(TraceRow(tau, d, Ds, tuple(lambdas)))
            lambdas = [lambda_update(lam, h.lambda0, h.delta_c, D)
                       for lam, h, D in zip(lambdas, heads, Ds)]
            met = d < delta_s and all(D < h.delta_c for D, h in zip(Ds, heads))
            status = "satisfied" if met else "budget_exhausted"
            if met and early_exit:
                break
    except NumericError as exc:
        error = f"iteration {len(trace) + 1}: {exc}"
        log.warning("synthesis aborted at %s", error)
    out = x.reshape(image_shape) if image_shape is not None else x
    return SynthesisResult(x=out, status=status, iterations=len(trace), trace=trace,
                           d=d, D=Ds[0] if Ds else float("nan"), Ds=Ds, error=error)


def synthesize(spec, classifier, generator, early_exit=True):
    """Synthesize an input close to ``spec.x_d`` whose prediction is close to ``spec.p_d``."""
    head = Head(classifier, spec.p_d, spec.delta_c, spec.lambda0)
    return run_heads(spec.x_d, [head], generator, spec.delta_s, spec.max_iters,
                     spec.inner_steps, spec.seed, spec.lr, spec.image_shape, early_exit)
