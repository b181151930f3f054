"""Exponential weights over a fixed finite expert set, with an anytime learning rate.

Weights live in the natural-log domain with max-subtraction normalization, so
distributions stay finite for arbitrarily long games and arbitrarily large
cumulative losses.  The same engine drives each phase of the packing learner
and the accuracy-grid meta-learner.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from .core import (
    GameTrajectory,
    LossOracle,
    TrajectoryRecorder,
    normalize_rng,
    sample_categorical,
)


@dataclass
class HedgeState:
    """Log-domain weight vector plus the 1-based round counter of this instance."""

    log_weights: np.ndarray
    t: int = 1

    @property
    def num_experts(self) -> int:
        return int(self.log_weights.size)

    @classmethod
    def fresh(cls, num_experts: int) -> "HedgeState":
        """Initial state: unit weight (zero log-weight) on every expert."""
        if num_experts < 1:
            raise ValueError(f"need at least one expert, got {num_experts}")
        return cls(log_weights=np.zeros(num_experts, dtype=np.float64), t=1)


def learning_rate(t: int, num_experts: int) -> float:
    """Anytime step size ``sqrt(8 ln(K) / t)``; zero for a single expert."""
    if t < 1:
        raise ValueError(f"round index must be >= 1, got {t}")
    if num_experts < 1:
        raise ValueError(f"expert count must be >= 1, got {num_experts}")
    return math.sqrt(8.0 * math.log(num_experts) / t)


def distribution(state: HedgeState) -> np.ndarray:
    """Probability vector proportional to the weights, normalized stably."""
    shifted = state.log_weights - state.log_weights.max()
    p = np.exp(shifted)
    p /= p.sum()
    return p


def update(state: HedgeState, losses: np.ndarray) -> HedgeState:
    """Multiply each weight by ``exp(-eta_t * loss)`` and advance the round clock."""
    losses = np.asarray(losses, dtype=np.float64)
    if losses.shape != state.log_weights.shape:
        raise ValueError(
            f"losses have shape {losses.shape}, state has {state.log_weights.shape}"
        )
    eta = learning_rate(state.t, state.num_experts)
    return HedgeState(log_weights=state.log_weights - eta * losses, t=state.t + 1)


def hedge_regret_bound(horizon: int, num_experts: int) -> float:
    """Worst-case expected-regret guarantee ``4 sqrt(T ln K)`` of this learner."""
    if horizon < 1 or num_experts < 1:
        raise ValueError("horizon and expert count must be >= 1")
    return 4.0 * math.sqrt(horizon * math.log(num_experts))


def play_hedge(
    oracle: LossOracle,
    horizon: int | None = None,
    rng: int | np.random.Generator = 0,
) -> GameTrajectory:
    """Run exponential weights for ``horizon`` rounds against ``oracle``.

    Each round samples an expert from the current distribution (one uniform
    draw), records the incurred loss, then updates on the full loss vector.
    """
    T = oracle.horizon() if horizon is None else int(horizon)
    if T < 1 or T > oracle.horizon():
        raise ValueError(f"horizon must be in [1, {oracle.horizon()}], got {T}")
    K = oracle.num_experts()
    if K is None:
        raise ValueError("plain exponential weights needs a finite expert set")
    gen, seed = normalize_rng(rng)

    state = HedgeState.fresh(K)
    recorder = TrajectoryRecorder(T)
    for t in range(1, T + 1):
        # Sampling is scale-invariant, so the unnormalized weights suffice.
        weights = np.exp(state.log_weights - state.log_weights.max())
        i = sample_categorical(weights, gen)
        row = oracle.losses(t)
        recorder.add(t, i, float(row[i]), K, 1)
        state = update(state, row)

    extras: dict[str, Any] = {"algorithm": "hedge", "num_experts": K}
    return recorder.finish(seed, extras)
