"""Exponential weights for very large expert sets via an online packing.

The learner keeps a small active set ``S`` that it grows into a
``2*epsilon``-separated packing of the observed loss sequence: whenever some
expert sits farther than ``2*epsilon`` from every member of ``S`` at the
current round, it is admitted and the inner exponential-weights engine is
restarted over the enlarged set with a fresh learning-rate clock.  Between
restarts the learner behaves exactly like plain exponential weights on ``S``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from . import hedge
from .core import (
    ExpertId,
    GameTrajectory,
    LossOracle,
    TrajectoryRecorder,
    normalize_rng,
    sample_categorical,
)


@dataclass
class PackingState:
    """Active set, phase bookkeeping, and the inner hedge of the packing learner.

    ``active`` is ordered by admission.  ``restarts`` records one
    ``(phase_start, active_size)`` pair per phase; sizes are strictly
    increasing because every restart admits at least one expert.
    ``admitted_at[j]`` is the round at which ``active[j]`` joined (0 for the
    seed expert), which certifies the pairwise separation of the packing.
    """

    active: np.ndarray
    phase: int
    phase_start: int
    inner: hedge.HedgeState
    epsilon: float
    restarts: list[tuple[int, int]] = field(default_factory=list)
    admitted_at: list[int] = field(default_factory=list)

    @classmethod
    def fresh(cls, epsilon: float, initial_expert: ExpertId = 0) -> "PackingState":
        if not (0.0 < epsilon <= 1.0):
            raise ValueError(f"epsilon must be in (0, 1], got {epsilon}")
        if initial_expert < 0:
            raise ValueError(f"initial expert id must be non-negative, got {initial_expert}")
        return cls(
            active=np.array([initial_expert], dtype=np.int64),
            phase=1,
            phase_start=0,
            inner=hedge.HedgeState.fresh(1),
            epsilon=float(epsilon),
            restarts=[(0, 1)],
            admitted_at=[0],
        )


def expand_packing(
    state: PackingState, t: int, oracle: LossOracle
) -> tuple[PackingState, list[ExpertId]]:
    """Admit uncovered experts at round ``t`` until every expert is covered.

    Repeatedly asks the oracle for the smallest-index expert whose round-``t``
    loss differs by more than ``2 * epsilon`` from every active expert; each
    admission can cover further candidates, so the query is re-run after every
    append.  Returns the (possibly unchanged) state and the admitted ids.
    """
    threshold = 2.0 * state.epsilon
    added: list[ExpertId] = []
    active = state.active
    while True:
        j = oracle.uncovered_expert(t, active, threshold)
        if j is None:
            break
        active = np.append(active, np.int64(j))
        added.append(int(j))
    if not added:
        return state, []
    new_state = replace(
        state,
        active=active,
        admitted_at=state.admitted_at + [t] * len(added),
    )
    return new_state, added


def restart(state: PackingState, t: int) -> PackingState:
    """Reset the inner hedge over the enlarged active set and open a new phase.

    All weights return to 1 and the inner round clock returns to 1, so the
    first post-restart step size is finite by construction.
    """
    size = int(state.active.size)
    inner = hedge.HedgeState.fresh(size)
    assert inner.t == 1
    return replace(
        state,
        phase=state.phase + 1,
        phase_start=t,
        inner=inner,
        restarts=state.restarts + [(t, size)],
    )


def packing_regret_bound(
    final_packing: int, phases: int, epsilon: float, horizon: int
) -> float:
    """Per-run regret guarantee ``2*eps*T + 2*p + 8*sqrt(T * K_p * ln K_p)``.

    ``final_packing`` and ``phases`` are the observed active-set size and phase
    count of a finished run.
    """
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    if not (1 <= phases <= final_packing):
        raise ValueError(
            f"need 1 <= phases <= final_packing, got phases={phases}, final_packing={final_packing}"
        )
    if epsilon <= 0.0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    return (
        2.0 * epsilon * horizon
        + 2.0 * phases
        + 8.0 * math.sqrt(horizon * final_packing * math.log(final_packing))
    )


def _advance(
    state: PackingState, t: int, oracle: LossOracle, gen: np.random.Generator
) -> tuple[PackingState, ExpertId, float, float]:
    """One round: sample from the pre-expansion distribution, then grow/update.

    Returns ``(state, chosen expert, incurred loss, expected loss)`` where the
    expected loss is taken under the sampling distribution; the meta-learner
    consumes it as low-variance feedback.
    """
    p = hedge.distribution(state.inner)
    idx = sample_categorical(p, gen)
    row = oracle.losses(t, state.active)
    chosen = int(state.active[idx])
    incurred = float(row[idx])
    mean_loss = float(p @ row)

    state, added = expand_packing(state, t, oracle)
    if added:
        # The losses of the restart round update nothing: weights reset after it.
        state = restart(state, t)
    else:
        state = replace(state, inner=hedge.update(state.inner, row))
    return state, chosen, incurred, mean_loss


def play_many_experts(
    oracle: LossOracle,
    horizon: int | None = None,
    epsilon: float = 0.5,
    rng: int | np.random.Generator = 0,
    initial_expert: ExpertId = 0,
) -> GameTrajectory:
    """Run the packing learner for ``horizon`` rounds at accuracy ``epsilon``.

    The trajectory records the phase and active-set size at the end of every
    round; its extras expose the final packing, the phase count, and the
    admission certificate.
    """
    T = oracle.horizon() if horizon is None else int(horizon)
    if T < 1 or T > oracle.horizon():
        raise ValueError(f"horizon must be in [1, {oracle.horizon()}], got {T}")
    num_experts = oracle.num_experts()
    if num_experts is not None and not (0 <= initial_expert < num_experts):
        raise ValueError(
            f"initial expert {initial_expert} out of range for {num_experts} experts"
        )
    gen, seed = normalize_rng(rng)

    state = PackingState.fresh(epsilon, initial_expert)
    recorder = TrajectoryRecorder(T)
    for t in range(1, T + 1):
        state, chosen, incurred, _ = _advance(state, t, oracle, gen)
        recorder.add(t, chosen, incurred, int(state.active.size), state.phase)

    extras: dict[str, Any] = {
        "algorithm": "many_experts",
        "epsilon": epsilon,
        "initial_expert": int(initial_expert),
        "final_active": [int(i) for i in state.active],
        "admitted_at": list(state.admitted_at),
        "final_packing": int(state.active.size),
        "num_phases": state.phase,
        "restarts": list(state.restarts),
    }
    return recorder.finish(seed, extras)
