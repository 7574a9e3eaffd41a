"""Synthesis against several frozen classifiers at once, one weight per model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from boss.autodiff import ComputeGraph
from boss.engine import (DEFAULT_LR, DEFAULT_MAX_ITERS, Head, _loss_and_grads, lambda_update,
                         run_heads)
from boss.errors import ConfigError, StructuralError
from boss.metrics import check_pmf


@dataclass
class EnsembleSpec:
    x_d: np.ndarray
    heads: list
    delta_s: float
    max_iters: int = DEFAULT_MAX_ITERS
    inner_steps: int = 1
    seed: int = 0
    lr: float = DEFAULT_LR

    def __post_init__(self):
        self.x_d = np.asarray(self.x_d, dtype=np.float64)
        if not self.heads:
            raise ConfigError("an ensemble needs at least one classifier")
        dims = {h.classifier.N for h in self.heads}
        if len(dims) != 1:
            raise StructuralError(f"classifiers disagree on input dim: {sorted(dims)}")
        for h in self.heads:
            h.p_d = check_pmf(h.p_d, "p_d")
            if len(h.p_d) != h.classifier.M:
                raise StructuralError(f"p_d has {len(h.p_d)} entries for {h.classifier.M} classes")
            if h.lambda0 <= 0 or not 0.0 <= h.delta_c <= 1.0:
                raise ConfigError(f"bad head settings lambda0={h.lambda0}, delta_c={h.delta_c}")

    @property
    def image_shape(self):
        return self.x_d.shape if self.x_d.ndim == 2 else None


def total_loss_ensemble(generator, spec, z, lambdas):
    """Joint ensemble loss and its generator-parameter gradient."""
    graphs = [ComputeGraph(h.classifier.graph.layers) for h in spec.heads]
    return _loss_and_grads(generator.graph, spec.heads, graphs, z, np.ravel(spec.x_d), lambdas)


def lambda_update_v(lam_v, lambda0_v, delta_c_v, D_v):
    return lambda_update(lam_v, lambda0_v, delta_c_v, D_v)


def synthesize_ensemble(spec, generator):
    """Run the loop until every model meets its own threshold (or the budget runs out)."""
    return run_heads(spec.x_d, spec.heads, generator, spec.delta_s, spec.max_iters,
                     spec.inner_steps, spec.seed, spec.lr, spec.image_shape)


__all__ = ["EnsembleSpec", "Head", "lambda_update_v", "synthesize_ensemble", "total_loss_ensemble"]
