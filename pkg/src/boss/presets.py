"""Desired output distributions for the attack and boundary-sample presets."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from boss.engine import DEFAULT_LAMBDA0, DEFAULT_LR, DEFAULT_MAX_ITERS, SynthesisSpec
from boss.errors import ConfigError

VARIANTS = ("targeted", "confidence", "boundary", "uniform", "ensemble_targets")
DEFAULT_DELTA_C = 0.2
# similarity threshold I >= 0.85, expressed as d = 1 - I
DEFAULT_DELTA_S = 0.15


def pd_targeted(t, M):
    if not 0 <= t < M:
        raise ConfigError(f"target {t} outside [0, {M})")
    p = np.zeros(M)
    p[t] = 1.0
    return p


def pd_boundary(B, M):
    labels = sorted(set(int(b) for b in B))
    if not labels:
        raise ConfigError("boundary label set must be non-empty")
    if labels[0] < 0 or labels[-1] >= M:
        raise ConfigError(f"boundary labels {labels} outside [0, {M})")
    p = np.zeros(M)
    p[labels] = 1.0 / len(labels)
    return p


def pd_uniform(M):
    return pd_boundary(range(M), M)


def pd_confidence(c_d, f_star, M):
    if M < 2:
        raise ConfigError("confidence reduction needs at least two classes")
    if not 0.0 <= c_d < 1.0:
        raise ConfigError(f"c_d must lie in [0, 1), got {c_d}")
    if not 0 <= f_star < M:
        raise ConfigError(f"predicted label {f_star} outside [0, {M})")
    p = np.full(M, (1.0 - c_d) / (M - 1))
    p[f_star] = c_d
    return p


def random_target(true_label, M, rng):
    """Uniform draw from every label except ``true_label``."""
    choices = [m for m in range(M) if m != true_label]
    return int(rng.choice(choices))


@dataclass
class AttackPreset:
    variant: str
    t: int | None = None
    c_d: float | None = None
    B: tuple | None = None
    targets: tuple | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown preset variant {self.variant!r}")
        if self.variant == "targeted" and self.t is None:
            raise ConfigError("targeted preset needs a target label t")
        if self.variant == "confidence" and self.c_d is None:
            raise ConfigError("confidence preset needs c_d")
        if self.variant == "boundary" and not self.B:
            raise ConfigError("boundary preset needs a label set B")
        if self.variant == "ensemble_targets" and not self.targets:
            raise ConfigError("ensemble_targets preset needs one target per model")

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        try:
            variant = d.pop("variant")
        except KeyError as exc:
            raise ConfigError("preset needs a 'variant'") from exc
        b = d.pop("B", None)
        targets = d.pop("targets", None)
        unknown = set(d) - {"t", "c_d"}
        if unknown:
            raise ConfigError(f"unknown preset keys {sorted(unknown)}")
        return cls(variant, t=d.get("t"), c_d=d.get("c_d"),
                   B=tuple(b) if b is not None else None,
                   targets=tuple(targets) if targets is not None else None)

    def pmf(self, M, f_star=None):
        if self.variant == "targeted":
            return pd_targeted(self.t, M)
        if self.variant == "boundary":
            return pd_boundary(self.B, M)
        if self.variant == "uniform":
            return pd_uniform(M)
        if self.variant == "confidence":
            if f_star is None:
                raise ConfigError("confidence preset needs the predicted label of x_d")
            return pd_confidence(self.c_d, f_star, M)
        raise ConfigError("ensemble_targets yields one pmf per model; use pmfs()")

    def pmfs(self, Ms):
        if self.variant != "ensemble_targets":
            raise ConfigError(f"{self.variant} preset has a single pmf")
        if len(self.targets) != len(Ms):
            raise ConfigError(f"{len(self.targets)} targets for {len(Ms)} models")
        return [pd_targeted(t, M) for t, M in zip(self.targets, Ms)]


def make_spec(preset, x_d, classifier, delta_s=DEFAULT_DELTA_S, delta_c=DEFAULT_DELTA_C,
              lambda0=DEFAULT_LAMBDA0, max_iters=DEFAULT_MAX_ITERS, inner_steps=1, seed=0,
              lr=DEFAULT_LR):
    """Bind a preset to a datum and classifier, resolving the predicted label when needed."""
    if isinstance(preset, dict):
        preset = AttackPreset.from_dict(preset)
    if np.size(x_d) != classifier.N:
        raise ConfigError(f"x_d has {np.size(x_d)} entries, classifier takes {classifier.N}")
    f_star = classifier.label(x_d)
    if preset.variant == "targeted" and preset.t == f_star:
        warnings.warn(f"target {preset.t} is already the predicted label of x_d; "
                      "the attack is degenerate", stacklevel=2)
    p_d = preset.pmf(classifier.M, f_star=f_star)
    return SynthesisSpec(x_d=x_d, p_d=p_d, delta_s=delta_s, delta_c=delta_c, lambda0=lambda0,
                         max_iters=max_iters, inner_steps=inner_steps, seed=seed, lr=lr)
