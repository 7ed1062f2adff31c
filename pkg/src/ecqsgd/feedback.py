"""Error-compensation state for quantized gradient exchange.

Each worker keeps a running vector ``h`` of past quantization error. Before
quantizing, the local gradient is compensated to ``g + alpha * h``; after
transmitting, the state decays and absorbs the fresh error:
``h' = beta * h + (g - g_tilde)``. Unrolling that recursion, ``h`` at step t
equals ``-sum_{t'} (beta - alpha)^(t-1-t') * eps^(t')`` where
``eps = g_tilde - (g + alpha * h)`` is the per-step quantization error; the
closed form is exposed as an independent oracle for the incremental update.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "FeedbackConfig",
    "FeedbackState",
    "compensate",
    "update_error",
    "reconstruct_error_history",
]


@dataclass(frozen=True)
class FeedbackConfig:
    """Compensation coefficient alpha (>= 0) and decay factor beta in [0, 1]."""

    alpha: float
    beta: float

    def __post_init__(self) -> None:
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")


@dataclass(frozen=True)
class FeedbackState:
    """Accumulated quantization error of one worker."""

    h: np.ndarray
    iteration: int = 0

    @staticmethod
    def zeros(dim: int) -> "FeedbackState":
        return FeedbackState(h=np.zeros(dim), iteration=0)


def compensate(g: np.ndarray, state: FeedbackState, cfg: FeedbackConfig) -> np.ndarray:
    """Return ``g + alpha * h`` without touching the state."""
    g = np.asarray(g, dtype=np.float64)
    if g.shape != state.h.shape:
        raise ValueError(
            f"dimension mismatch: gradient {g.shape} vs state {state.h.shape}"
        )
    if cfg.alpha == 0.0:
        return g.copy()
    return g + cfg.alpha * state.h


def update_error(
    state: FeedbackState,
    g: np.ndarray,
    g_tilde: np.ndarray,
    cfg: FeedbackConfig,
) -> FeedbackState:
    """Advance the state one step: ``h' = beta * h + (g - g_tilde)``."""
    g = np.asarray(g, dtype=np.float64)
    g_tilde = np.asarray(g_tilde, dtype=np.float64)
    if g.shape != state.h.shape or g_tilde.shape != state.h.shape:
        raise ValueError("dimension mismatch between state, gradient and transmission")
    return FeedbackState(
        h=cfg.beta * state.h + (g - g_tilde),
        iteration=state.iteration + 1,
    )


def reconstruct_error_history(
    errors: Sequence[np.ndarray], cfg: FeedbackConfig, dim: int | None = None
) -> np.ndarray:
    """Closed-form ``h`` after the given per-step quantization errors.

    ``errors[t']`` must be ``g_tilde - (g + alpha * h)`` as observed at step
    t'. Returns ``-sum_{t'} (beta - alpha)^(t-1-t') * errors[t']`` with
    t = len(errors); an empty history gives the zero start state. Serves as
    an independent check of the incremental update.
    """
    if not len(errors):
        return np.zeros(dim if dim is not None else 0)
    t = len(errors)
    q = cfg.beta - cfg.alpha
    out = np.zeros_like(np.asarray(errors[0], dtype=np.float64))
    for t_prime, eps in enumerate(errors):
        out -= q ** (t - 1 - t_prime) * np.asarray(eps, dtype=np.float64)
    return out
