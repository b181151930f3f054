"""Shared vocabulary for expert games: loss access, randomness, trajectories.

Conventions used throughout the package:

* experts are integer ids ``0 .. K-1`` within one environment instance;
* rounds are 1-based (``t = 1 .. T``), matching the learning-rate clocks;
* every loss lies in ``[-1, 1]``, enforced at the environment boundary;
* all randomness flows through named ``numpy`` PCG64 streams so that any
  game is bit-reproducible from its seed.
"""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

logger = logging.getLogger(__name__)

ExpertId = int

ALGORITHMS = ("hedge", "many_experts", "meta_tuner")

#: Overshoot past the [-1, 1] boundary tolerated (and clamped) as rounding noise.
BOUNDARY_SLACK = 1e-12


def game_rng(*key: int) -> np.random.Generator:
    """Independent PCG64 stream keyed by a tuple of integers.

    Distinct keys give statistically independent streams, so a single master
    seed can drive many reproducible games: ``game_rng(seed, game_id)``.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))


def normalize_rng(rng: int | np.random.Generator) -> tuple[np.random.Generator, int | None]:
    """Accept a seed or a ready generator; return ``(generator, seed if known)``.

    An integer seed is mapped to the game's default stream ``game_rng(seed, 0)``.
    """
    if isinstance(rng, (int, np.integer)):
        return game_rng(int(rng), 0), int(rng)
    if isinstance(rng, np.random.Generator):
        return rng, None
    raise TypeError(f"rng must be an int seed or a numpy Generator, got {type(rng)!r}")


def sample_categorical(weights: Sequence[float] | np.ndarray, rng: np.random.Generator) -> ExpertId:
    """Draw an index with probability proportional to its weight.

    Consumes exactly one uniform draw from ``rng``.  Weights need not be
    normalized; zero-weight indices are never returned.

    Raises:
        ValueError: on empty, negative, non-finite, or all-zero weights
            ("degenerate distribution").
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("degenerate distribution: weights must be a non-empty vector")
    # NaN fails the >= comparison, so this also rejects non-finite weights.
    if not (float(w.min()) >= 0.0 and float(w.max()) < np.inf):
        raise ValueError("degenerate distribution: weights must be finite and non-negative")
    cumulative = w.cumsum()
    total = float(cumulative[-1])
    if total <= 0.0:
        raise ValueError("degenerate distribution: no positive mass")
    u = rng.random() * total
    return int(cumulative.searchsorted(u, side="right"))


def expected_loss(distribution: Sequence[float] | np.ndarray, losses: Sequence[float] | np.ndarray) -> float:
    """Mean loss of a randomized choice: the inner product ``sum_i p(i) * l(i)``."""
    p = np.asarray(distribution, dtype=np.float64)
    l = np.asarray(losses, dtype=np.float64)
    if p.shape != l.shape:
        raise ValueError(f"length mismatch: distribution has {p.shape}, losses have {l.shape}")
    if abs(float(p.sum()) - 1.0) > 1e-9:
        raise ValueError("distribution must sum to 1 within 1e-9")
    return float(p @ l)


def validate_loss_matrix(matrix: np.ndarray) -> np.ndarray:
    """Check a realized loss matrix against the ``[-1, 1]`` contract.

    Values that graze the boundary by less than ``BOUNDARY_SLACK`` (products
    and additive noise can overshoot by an ulp) are clamped with a logged
    warning; anything farther out is a hard error.
    """
    m = np.ascontiguousarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"loss matrix must be 2-D (rounds x experts), got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("loss matrix contains non-finite values")
    overshoot = float(np.abs(m).max(initial=0.0)) - 1.0
    if overshoot > BOUNDARY_SLACK:
        raise ValueError(f"loss values exceed [-1, 1] by {overshoot:.3g}")
    if overshoot > 0.0:
        logger.warning("clamping losses grazing the [-1, 1] boundary by %.3g", overshoot)
        m = np.clip(m, -1.0, 1.0)
    return m


@dataclass
class GameConfig:
    """Parameters of one seeded game."""

    T: int
    epsilon: float = 1.0
    seed: int = 0
    algorithm: str = "hedge"

    def __post_init__(self) -> None:
        if self.T < 1:
            raise ValueError(f"T must be >= 1, got {self.T}")
        if not (0.0 < self.epsilon <= 1.0):
            raise ValueError(f"epsilon must be in (0, 1], got {self.epsilon}")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")


@dataclass
class GameTrajectory:
    """Per-round record of one game; the unit of analysis.

    All per-round fields are parallel arrays of length ``T``.  ``packing_size``
    and ``phase`` are the active-set size and phase index at the end of each
    round (constant for plain exponential weights).
    """

    t: np.ndarray
    chosen: np.ndarray
    incurred: np.ndarray
    cumulative: np.ndarray
    packing_size: np.ndarray
    phase: np.ndarray
    seed: int | None = None
    extras: dict[str, Any] = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.t.size)

    @property
    def learner_cumulative(self) -> float:
        return float(self.cumulative[-1]) if len(self) else 0.0

    def validate(self) -> None:
        """Assert the trajectory's internal invariants."""
        n = len(self)
        for name in ("chosen", "incurred", "cumulative", "packing_size", "phase"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"trajectory field {name} is not aligned with t")
        if n == 0:
            return
        if abs(float(self.incurred.sum()) - self.learner_cumulative) > 1e-9:
            raise ValueError("cumulative loss does not match the sum of incurred losses")
        if np.any(np.diff(self.packing_size) < 0):
            raise ValueError("packing_size must be non-decreasing over rounds")


class TrajectoryRecorder:
    """Preallocated builder for :class:`GameTrajectory` (hot path)."""

    __slots__ = ("_t", "_chosen", "_incurred", "_cumulative", "_packing", "_phase", "_i", "_running")

    def __init__(self, horizon: int) -> None:
        self._t = np.empty(horizon, dtype=np.int64)
        self._chosen = np.empty(horizon, dtype=np.int64)
        self._incurred = np.empty(horizon, dtype=np.float64)
        self._cumulative = np.empty(horizon, dtype=np.float64)
        self._packing = np.empty(horizon, dtype=np.int64)
        self._phase = np.empty(horizon, dtype=np.int64)
        self._i = 0
        self._running = 0.0

    def add(self, t: int, chosen: int, incurred: float, packing_size: int, phase: int) -> None:
        i = self._i
        self._t[i] = t
        self._chosen[i] = chosen
        self._incurred[i] = incurred
        self._running += incurred
        self._cumulative[i] = self._running
        self._packing[i] = packing_size
        self._phase[i] = phase
        self._i = i + 1

    def finish(self, seed: int | None, extras: dict[str, Any] | None = None) -> GameTrajectory:
        if self._i != self._t.size:
            raise RuntimeError(f"recorded {self._i} rounds, expected {self._t.size}")
        return GameTrajectory(
            t=self._t,
            chosen=self._chosen,
            incurred=self._incurred,
            cumulative=self._cumulative,
            packing_size=self._packing,
            phase=self._phase,
            seed=seed,
            extras=dict(extras or {}),
        )


class LossOracle(ABC):
    """Loss access for one environment instance.

    The interface deliberately includes :meth:`uncovered_expert` so that large
    or structured expert sets can answer coverage queries without enumerating
    every expert; the dense implementations in :mod:`packhedge.environments`
    fall back to a vectorized linear scan.
    """

    @abstractmethod
    def horizon(self) -> int:
        """Number of rounds the environment defines."""

    @abstractmethod
    def num_experts(self) -> int | None:
        """Number of experts, or ``None`` when the set is not enumerable."""

    @abstractmethod
    def loss(self, t: int, i: ExpertId) -> float:
        """Loss of expert ``i`` at round ``t`` (1-based), deterministic per instance."""

    def losses(self, t: int, experts: np.ndarray | Sequence[int] | None = None) -> np.ndarray:
        """Loss vector at round ``t`` for ``experts`` (default: all experts)."""
        if experts is None:
            k = self.num_experts()
            if k is None:
                raise ValueError("cannot enumerate losses of an unbounded expert set")
            experts = range(k)
        return np.array([self.loss(t, int(i)) for i in experts], dtype=np.float64)

    def uncovered_expert(
        self, t: int, active: Sequence[ExpertId] | np.ndarray, threshold: float
    ) -> ExpertId | None:
        """Smallest-index expert farther than ``threshold`` from every active expert at round ``t``.

        Returns ``None`` when every expert is within ``threshold`` of some
        member of ``active``.
        """
        row = self.losses(t)
        reference = row[np.asarray(active, dtype=np.int64)]
        gap = np.abs(row[:, None] - reference[None, :]).min(axis=1)
        mask = gap > threshold
        idx = int(np.argmax(mask))
        return idx if mask[idx] else None

    def column_sums(self) -> np.ndarray:
        """Cumulative loss of every expert over the full horizon."""
        k = self.num_experts()
        if k is None:
            raise ValueError("cannot sum losses of an unbounded expert set")
        total = np.zeros(k, dtype=np.float64)
        for t in range(1, self.horizon() + 1):
            total += self.losses(t)
        return total

    def to_matrix(self, max_entries: int = 50_000_000) -> np.ndarray:
        """Materialize the full ``T x K`` loss matrix (guarded by ``max_entries``)."""
        k = self.num_experts()
        if k is None:
            raise ValueError("cannot materialize an unbounded expert set")
        if self.horizon() * k > max_entries:
            raise ValueError(
                f"matrix of {self.horizon()} x {k} entries exceeds the {max_entries} entry guard"
            )
        return np.vstack([self.losses(t) for t in range(1, self.horizon() + 1)])
