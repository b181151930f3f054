"""Accuracy-grid meta-learner: hedge over packing learners run at halving accuracies.

``R = ceil(log2 T)`` copies of the packing learner run side by side with
accuracies ``1, 1/2, 1/4, ...``; an exponential-weights layer treats the
copies as meta-experts and plays the action of whichever copy it samples.
Under full information every copy observes the losses regardless of the
meta-choice, so each copy's trajectory is identical to a standalone run with
the same derived stream.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from . import hedge, many_experts
from .core import GameTrajectory, LossOracle, TrajectoryRecorder, game_rng, sample_categorical

FEEDBACK_MODES = ("expected", "realized")


@dataclass(frozen=True)
class EpsilonGrid:
    """Halving accuracy ladder ``epsilon_r = 2**(1 - r)`` for ``r = 1 .. R``."""

    levels: tuple[tuple[int, float], ...]

    @property
    def num_levels(self) -> int:
        return len(self.levels)

    @property
    def epsilons(self) -> tuple[float, ...]:
        return tuple(eps for _, eps in self.levels)


def build_grid(horizon: int) -> EpsilonGrid:
    """Grid of ``ceil(log2 T)`` accuracies starting at 1 and halving."""
    if horizon < 2:
        raise ValueError(f"horizon must be >= 2 to build a grid, got {horizon}")
    num_levels = (horizon - 1).bit_length()  # == ceil(log2(horizon))
    return EpsilonGrid(tuple((r, 2.0 ** (1 - r)) for r in range(1, num_levels + 1)))


@dataclass
class MetaState:
    """Grid, per-copy packing states, and the meta-level hedge."""

    grid: EpsilonGrid
    copies: list[many_experts.PackingState]
    meta: hedge.HedgeState
    feedback_mode: str = "expected"

    def __post_init__(self) -> None:
        if self.feedback_mode not in FEEDBACK_MODES:
            raise ValueError(f"feedback_mode must be one of {FEEDBACK_MODES}")
        if len(self.copies) != self.grid.num_levels or self.meta.num_experts != self.grid.num_levels:
            raise ValueError("copies and meta weights must both match the grid size")


def play_meta(
    oracle: LossOracle,
    horizon: int | None = None,
    seed: int = 0,
    feedback_mode: str = "expected",
) -> GameTrajectory:
    """Run the accuracy grid for ``horizon`` rounds from one master seed.

    Copy ``r`` draws from the stream ``game_rng(seed, r)`` and the meta layer
    from ``game_rng(seed, 0)``, so any copy can be replayed standalone.  The
    meta hedge updates on each copy's expected loss by default
    (``feedback_mode="expected"``); ``"realized"`` feeds it the copies'
    sampled losses instead.

    The returned trajectory records the actually played expert per round; its
    extras carry the full per-copy trajectories and running totals.
    """
    T = oracle.horizon() if horizon is None else int(horizon)
    if T < 2 or T > oracle.horizon():
        raise ValueError(f"horizon must be in [2, {oracle.horizon()}], got {T}")
    grid = build_grid(T)
    R = grid.num_levels

    state = MetaState(
        grid=grid,
        copies=[many_experts.PackingState.fresh(eps) for _, eps in grid.levels],
        meta=hedge.HedgeState.fresh(R),
        feedback_mode=feedback_mode,
    )
    meta_gen = game_rng(seed, 0)
    copy_gens = [game_rng(seed, r) for r, _ in grid.levels]

    recorder = TrajectoryRecorder(T)
    copy_recorders = [TrajectoryRecorder(T) for _ in range(R)]
    chosen_copy = np.empty(T, dtype=np.int64)
    copy_cumulative = np.empty((T, R), dtype=np.float64)
    running = np.zeros(R, dtype=np.float64)

    for t in range(1, T + 1):
        chosen = np.empty(R, dtype=np.int64)
        realized = np.empty(R, dtype=np.float64)
        expected = np.empty(R, dtype=np.float64)
        for r in range(R):
            state.copies[r], chosen_r, incurred_r, mean_r = many_experts._advance(
                state.copies[r], t, oracle, copy_gens[r]
            )
            chosen[r] = chosen_r
            realized[r] = incurred_r
            expected[r] = mean_r
            copy_recorders[r].add(
                t, chosen_r, incurred_r, int(state.copies[r].active.size), state.copies[r].phase
            )
        running += realized
        copy_cumulative[t - 1] = running

        r_star = sample_categorical(
            np.exp(state.meta.log_weights - state.meta.log_weights.max()), meta_gen
        )
        chosen_copy[t - 1] = r_star
        recorder.add(t, int(chosen[r_star]), float(realized[r_star]), R, 1)

        feedback = expected if state.feedback_mode == "expected" else realized
        state.meta = hedge.update(state.meta, feedback)

    copy_trajectories = []
    for r in range(R):
        copy = state.copies[r]
        copy_trajectories.append(
            copy_recorders[r].finish(
                None,
                {
                    "algorithm": "many_experts",
                    "epsilon": grid.epsilons[r],
                    "initial_expert": 0,
                    "final_active": [int(i) for i in copy.active],
                    "admitted_at": list(copy.admitted_at),
                    "final_packing": int(copy.active.size),
                    "num_phases": copy.phase,
                    "restarts": list(copy.restarts),
                },
            )
        )

    extras: dict[str, Any] = {
        "algorithm": "meta_tuner",
        "num_copies": R,
        "epsilons": list(grid.epsilons),
        "feedback_mode": state.feedback_mode,
        "chosen_copy": chosen_copy,
        "copy_cumulative": copy_cumulative,
        "copies": copy_trajectories,
    }
    return recorder.finish(seed, extras)
