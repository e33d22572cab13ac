"""Adam with a piecewise-constant learning-rate schedule, plus coefficient
clipping and parameter-of-interest gradient weighting for inverse runs."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

__all__ = [
    "AdamState",
    "LrSchedule",
    "ParamBounds",
    "NonFiniteGradientError",
    "DEFAULT_LR_BOUNDARIES",
    "DEFAULT_LR_VALUES",
    "adam_step",
    "lr_at",
    "clip_params",
    "apply_poi_weight",
]

# Segmented rate: [0,100) -> 1e-2, [100,1000) -> 1e-3, [1000,2500) -> 5e-4, then 1e-4.
DEFAULT_LR_BOUNDARIES = (100, 1000, 2500)
DEFAULT_LR_VALUES = (1e-2, 1e-3, 5e-4, 1e-4)


class NonFiniteGradientError(ArithmeticError):
    """An optimizer step was rejected because the gradient is not finite."""


@dataclass
class AdamState:
    m: np.ndarray
    s: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def init(cls, n_params: int, beta1: float = 0.9, beta2: float = 0.999,
             eps: float = 1e-8) -> "AdamState":
        return cls(m=np.zeros(n_params), s=np.zeros(n_params),
                   beta1=beta1, beta2=beta2, eps=eps)


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray,
              lr) -> tuple[AdamState, np.ndarray]:
    """One bias-corrected Adam update; returns new state and parameters.

    ``lr`` may be a scalar or a per-entry array (used for differential
    network/coefficient learning rates).
    """
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != np.shape(params):
        raise ValueError("gradient and parameter shapes differ")
    if not np.all(np.isfinite(grads)):
        bad = int(np.flatnonzero(~np.isfinite(grads))[0])
        raise NonFiniteGradientError(f"non-finite gradient entry at index {bad}")
    step = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    s = state.beta2 * state.s + (1.0 - state.beta2) * grads * grads
    m_hat = m / (1.0 - state.beta1 ** step)
    s_hat = s / (1.0 - state.beta2 ** step)
    new_params = params - lr * m_hat / (np.sqrt(s_hat) + state.eps)
    return replace(state, m=m, s=s, step=step), new_params


@dataclass(frozen=True)
class LrSchedule:
    boundaries: tuple[int, ...] = DEFAULT_LR_BOUNDARIES
    values: tuple[float, ...] = DEFAULT_LR_VALUES

    def __post_init__(self):
        if len(self.values) != len(self.boundaries) + 1:
            raise ValueError("need exactly one more rate than boundaries")
        if any(b2 <= b1 for b1, b2 in zip(self.boundaries, self.boundaries[1:])):
            raise ValueError("boundaries must be strictly increasing")
        if any(v <= 0 for v in self.values):
            raise ValueError("learning rates must be positive")


def lr_at(schedule: LrSchedule, iteration: int) -> float:
    """Active segment's rate; a boundary iteration belongs to the later segment."""
    if iteration < 0:
        raise ValueError("iteration must be >= 0")
    idx = int(np.searchsorted(schedule.boundaries, iteration, side="right"))
    return schedule.values[idx]


@dataclass(frozen=True)
class ParamBounds:
    lo: np.ndarray
    hi: np.ndarray
    poi_weight: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "lo", np.atleast_1d(np.asarray(self.lo, dtype=np.float64)))
        object.__setattr__(self, "hi", np.atleast_1d(np.asarray(self.hi, dtype=np.float64)))
        if np.any(self.lo >= self.hi):
            raise ValueError("bounds require lo < hi")
        if self.poi_weight < 1.0:
            raise ValueError("poi_weight must be >= 1")


def clip_params(v: np.ndarray, bounds: ParamBounds) -> np.ndarray:
    """Entrywise clamp of the inversion coefficients to [lo, hi]."""
    return np.clip(np.asarray(v, dtype=np.float64), bounds.lo, bounds.hi)


def apply_poi_weight(grads: np.ndarray, poi_indices: Sequence[int],
                     poi_weight: float) -> np.ndarray:
    """Scale the gradient entries of the parameters of interest; others untouched."""
    out = np.array(grads, dtype=np.float64, copy=True)
    idx = np.asarray(poi_indices, dtype=int)
    if idx.size and (idx.min() < 0 or idx.max() >= out.size):
        raise IndexError("parameter-of-interest index out of range")
    out[idx] *= poi_weight
    return out
