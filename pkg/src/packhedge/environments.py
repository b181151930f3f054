"""Seeded loss environments: matrix oracles, structured generators, and export.

Every generator is a pure function of its parameters and seed, exposes its
ground-truth structure (cluster rows, low-rank factors, dictionary, flip
times, true means) for analysis, and enforces the ``[-1, 1]`` loss contract.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import matrix_io
from .core import ExpertId, LossOracle, game_rng, validate_loss_matrix

logger = logging.getLogger(__name__)

KINDS = (
    "finite_matrix",
    "clustered_binary",
    "low_rank",
    "sparse_dictionary",
    "bounded_variation",
    "iid_stochastic",
)

NOISE_KINDS = ("none", "uniform", "sign")

_REQUIRED: dict[str, tuple[str, ...]] = {
    "finite_matrix": ("path",),
    "clustered_binary": ("T", "K", "N", "seed"),
    "low_rank": ("T", "K", "d", "epsilon_noise", "seed"),
    "sparse_dictionary": ("T", "K", "n", "k", "epsilon_noise", "seed"),
    "bounded_variation": ("T", "K", "seed"),
    "iid_stochastic": ("T", "K", "means", "seed"),
}


@dataclass
class EnvironmentSpec:
    """Declarative description of one environment instance."""

    kind: str
    parameters: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"environment.kind must be one of {KINDS}, got {self.kind!r}")
        missing = [p for p in _REQUIRED[self.kind] if p not in self.parameters]
        if missing:
            raise ValueError(
                f"environment.{missing[0]}: required for kind {self.kind!r} and missing"
            )

    def as_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "parameters": dict(self.parameters)}


class MatrixOracle(LossOracle):
    """Dense ``T x K`` loss matrix with vectorized coverage queries."""

    def __init__(
        self,
        matrix: np.ndarray,
        spec: EnvironmentSpec | None = None,
        ground_truth: dict[str, np.ndarray] | None = None,
    ) -> None:
        self._m = validate_loss_matrix(matrix)
        self.spec = spec
        self.ground_truth = dict(ground_truth or {})
        self._column_sums: np.ndarray | None = None

    def horizon(self) -> int:
        return int(self._m.shape[0])

    def num_experts(self) -> int:
        return int(self._m.shape[1])

    def loss(self, t: int, i: ExpertId) -> float:
        return float(self._m[t - 1, i])

    def losses(self, t: int, experts: np.ndarray | Sequence[int] | None = None) -> np.ndarray:
        row = self._m[t - 1]
        if experts is None:
            return row
        return row[np.asarray(experts, dtype=np.int64)]

    def uncovered_expert(
        self, t: int, active: Sequence[ExpertId] | np.ndarray, threshold: float
    ) -> ExpertId | None:
        row = self._m[t - 1]
        reference = row[np.asarray(active, dtype=np.int64)]
        gap = np.abs(row[:, None] - reference[None, :]).min(axis=1)
        mask = gap > threshold
        idx = int(np.argmax(mask))
        return idx if mask[idx] else None

    def column_sums(self) -> np.ndarray:
        if self._column_sums is None:
            self._column_sums = self._m.sum(axis=0)
        return self._column_sums

    def to_matrix(self, max_entries: int = 50_000_000) -> np.ndarray:
        if self._m.size > max_entries:
            raise ValueError(f"matrix of {self._m.size} entries exceeds the {max_entries} guard")
        return self._m


class ClusteredBinaryOracle(LossOracle):
    """Experts grouped into clusters sharing identical +/-1 loss rows.

    Stores only the ``N x T`` distinct rows plus a cluster assignment, so
    coverage queries and column sums cost ``O(N)`` instead of ``O(K)`` while
    answering exactly as a dense linear scan would.
    """

    def __init__(
        self, rows: np.ndarray, assignment: np.ndarray, spec: EnvironmentSpec | None = None
    ) -> None:
        self._rows = np.ascontiguousarray(rows, dtype=np.float64)
        self._assign = np.ascontiguousarray(assignment, dtype=np.int64)
        n = self._rows.shape[0]
        if self._assign.min(initial=0) < 0 or self._assign.max(initial=-1) >= n:
            raise ValueError("assignment references a missing cluster row")
        # Smallest expert id per cluster; answers "first uncovered expert" queries.
        self._first_expert = np.full(n, self._assign.size, dtype=np.int64)
        np.minimum.at(self._first_expert, self._assign, np.arange(self._assign.size))
        if np.any(self._first_expert == self._assign.size):
            raise ValueError("every cluster must have at least one expert")
        self.spec = spec
        self.ground_truth = {"rows": self._rows, "assignment": self._assign}
        self._cluster_sums = self._rows.sum(axis=1)

    @property
    def num_clusters(self) -> int:
        return int(self._rows.shape[0])

    def horizon(self) -> int:
        return int(self._rows.shape[1])

    def num_experts(self) -> int:
        return int(self._assign.size)

    def loss(self, t: int, i: ExpertId) -> float:
        return float(self._rows[self._assign[i], t - 1])

    def losses(self, t: int, experts: np.ndarray | Sequence[int] | None = None) -> np.ndarray:
        col = self._rows[:, t - 1]
        if experts is None:
            return col[self._assign]
        return col[self._assign[np.asarray(experts, dtype=np.int64)]]

    def uncovered_expert(
        self, t: int, active: Sequence[ExpertId] | np.ndarray, threshold: float
    ) -> ExpertId | None:
        # Cluster mates share every loss, so scanning representatives is exact.
        col = self._rows[:, t - 1]
        reference = col[self._assign[np.asarray(active, dtype=np.int64)]]
        gap = np.abs(col[:, None] - reference[None, :]).min(axis=1)
        mask = gap > threshold
        if not mask.any():
            return None
        return int(self._first_expert[mask].min())

    def column_sums(self) -> np.ndarray:
        return self._cluster_sums[self._assign]

    def to_matrix(self, max_entries: int = 50_000_000) -> np.ndarray:
        if self.horizon() * self.num_experts() > max_entries:
            raise ValueError("clustered matrix too large to materialize")
        return self._rows[self._assign].T.copy()


def _distinct_binary_rows(num_rows: int, horizon: int, rng: np.random.Generator) -> np.ndarray:
    """``num_rows`` distinct +/-1 rows of length ``horizon``."""
    if horizon <= 20:
        patterns = rng.choice(2**horizon, size=num_rows, replace=False)
        bits = (patterns[:, None] >> np.arange(horizon)[None, :]) & 1
        return bits.astype(np.float64) * 2.0 - 1.0
    seen: set[bytes] = set()
    rows: list[np.ndarray] = []
    while len(rows) < num_rows:
        candidate = rng.integers(0, 2, size=horizon).astype(np.float64) * 2.0 - 1.0
        key = candidate.tobytes()
        if key not in seen:
            seen.add(key)
            rows.append(candidate)
    return np.vstack(rows)


def make_clustered_binary(T: int, K: int, N: int, seed: int) -> ClusteredBinaryOracle:
    """K experts, each copying one of N distinct +/-1 loss rows; no empty cluster.

    The realized matrix has exactly ``N`` distinct columns, so its exact-match
    cover has size ``N`` by construction.
    """
    if T < 1 or K < 1:
        raise ValueError("T and K must be >= 1")
    if N < 1 or N > K:
        raise ValueError(f"N must satisfy 1 <= N <= K, got N={N}, K={K}")
    if N > 2**T:
        raise ValueError(f"too many distinct binary rows: N={N} exceeds 2**T={2**T}")
    rng = game_rng(seed)
    rows = _distinct_binary_rows(N, T, rng)
    assignment = np.concatenate(
        [rng.permutation(N), rng.integers(0, N, size=K - N)]
    ).astype(np.int64)
    spec = EnvironmentSpec("clustered_binary", {"T": T, "K": K, "N": N, "seed": seed})
    return ClusteredBinaryOracle(rows, assignment, spec)


def make_low_rank(T: int, K: int, d: int, epsilon_noise: float, seed: int) -> MatrixOracle:
    """Rank-``d`` product plus entrywise noise of magnitude ``epsilon_noise``.

    Factor entries are uniform on ``[-1, 1]``; the product is globally rescaled
    into ``[-(1 - eps), 1 - eps]`` so the noisy sum stays in range (the final
    clip is a safety net only).  Ground truth exposes ``U``, ``W``, ``E``.
    """
    if not (1 <= d <= min(T, K)):
        raise ValueError(f"d must satisfy 1 <= d <= min(T, K), got d={d}")
    if not (0.0 <= epsilon_noise <= 0.25):
        raise ValueError(f"epsilon_noise must be in [0, 0.25], got {epsilon_noise}")
    rng = game_rng(seed)
    U = rng.uniform(-1.0, 1.0, size=(T, d))
    W = rng.uniform(-1.0, 1.0, size=(d, K))
    product = U @ W
    peak = float(np.abs(product).max())
    if peak > 0.0:
        scale = (1.0 - epsilon_noise) / peak
        W *= scale
        product *= scale
    E = rng.uniform(-epsilon_noise, epsilon_noise, size=(T, K)) if epsilon_noise > 0 else np.zeros((T, K))
    L = np.clip(product + E, -1.0, 1.0)
    residual = float(np.abs(L - product).max())
    if residual > epsilon_noise + 1e-12:
        raise AssertionError(f"structure residual {residual} exceeds epsilon_noise")
    spec = EnvironmentSpec(
        "low_rank", {"T": T, "K": K, "d": d, "epsilon_noise": epsilon_noise, "seed": seed}
    )
    return MatrixOracle(L, spec, {"U": U, "W": W, "E": E})


def make_sparse_dictionary(
    T: int, K: int, n: int, k: int, epsilon_noise: float, seed: int
) -> MatrixOracle:
    """Losses near ``D @ V`` for a dictionary ``D`` and k-sparse codes ``V``.

    Rows of the ``T x n`` dictionary are rescaled to 1-norm at most 1; each of
    the ``K`` code columns has ``k`` nonzeros, uniform on ``[-1, 1]``, on a
    uniformly chosen support.  Ground truth exposes ``D``, ``V``, ``E``.
    """
    if not (0 <= k <= n):
        raise ValueError(f"need 0 <= k <= n, got k={k}, n={n}")
    if not (0.0 <= epsilon_noise <= 0.25):
        raise ValueError(f"epsilon_noise must be in [0, 0.25], got {epsilon_noise}")
    rng = game_rng(seed)
    D = rng.uniform(-1.0, 1.0, size=(T, n))
    norms = np.abs(D).sum(axis=1)
    D /= np.maximum(norms, 1.0)[:, None]
    V = np.zeros((n, K))
    for j in range(K):
        if k > 0:
            support = rng.choice(n, size=k, replace=False)
            V[support, j] = rng.uniform(-1.0, 1.0, size=k)
    structure = D @ V
    E = rng.uniform(-epsilon_noise, epsilon_noise, size=(T, K)) if epsilon_noise > 0 else np.zeros((T, K))
    L = np.clip(structure + E, -1.0, 1.0)
    residual = float(np.abs(L - structure).max())
    if residual > epsilon_noise + 1e-12:
        raise AssertionError(f"structure residual {residual} exceeds epsilon_noise")
    spec = EnvironmentSpec(
        "sparse_dictionary",
        {"T": T, "K": K, "n": n, "k": k, "epsilon_noise": epsilon_noise, "seed": seed},
    )
    return MatrixOracle(L, spec, {"D": D, "V": V, "E": E})


def make_bounded_variation_adversary(T: int, K: int, seed: int) -> MatrixOracle:
    """Halving adversary: losses start at -1 and flip permanently to +1.

    Each round a uniformly random half (rounded down) of the experts still at
    -1 flips to +1, so every expert moves at most once and has total variation
    at most 2, while one expert survives at -1 throughout whenever
    ``K >= 2**T``.  Ground truth exposes the flip round per expert
    (``T + 1`` meaning "never").
    """
    if K < 2:
        raise ValueError(f"K must be >= 2, got {K}")
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if K < 2**T:
        logger.warning(
            "bounded_variation with K=%d < 2**T=%d: the all--1 expert may die out", K, 2**T
        )
    rng = game_rng(seed)
    flip_round = np.full(K, T + 1, dtype=np.int64)
    alive = np.arange(K)
    for t in range(1, T + 1):
        half = alive.size // 2
        if half == 0:
            break
        flipped = rng.choice(alive, size=half, replace=False)
        flip_round[flipped] = t
        alive = np.setdiff1d(alive, flipped, assume_unique=True)
    rounds = np.arange(1, T + 1)
    L = np.where(flip_round[None, :] <= rounds[:, None], 1.0, -1.0)
    spec = EnvironmentSpec("bounded_variation", {"T": T, "K": K, "seed": seed})
    return MatrixOracle(L, spec, {"flip_round": flip_round})


def make_iid_stochastic(
    T: int,
    K: int,
    means: Sequence[float] | float,
    noise: str = "none",
    noise_scale: float = 0.0,
    seed: int = 0,
) -> MatrixOracle:
    """Rounds drawn i.i.d. around fixed per-expert means.

    ``noise`` is ``"none"``, ``"uniform"`` (uniform on ``[-scale, scale]``), or
    ``"sign"`` (+/- ``scale`` with equal probability); means plus noise must
    stay inside ``[-1, 1]``.  Ground truth exposes the true means.
    """
    mu = np.full(K, float(means)) if np.isscalar(means) else np.asarray(means, dtype=np.float64)
    if mu.shape != (K,):
        raise ValueError(f"means must have length K={K}, got shape {mu.shape}")
    if np.abs(mu).max(initial=0.0) > 1.0:
        raise ValueError("means must lie in [-1, 1]")
    if noise not in NOISE_KINDS:
        raise ValueError(f"noise must be one of {NOISE_KINDS}, got {noise!r}")
    if noise_scale < 0.0:
        raise ValueError(f"noise_scale must be >= 0, got {noise_scale}")
    if noise != "none" and float(np.abs(mu).max(initial=0.0)) + noise_scale > 1.0:
        raise ValueError("means plus noise_scale would leave [-1, 1]")
    rng = game_rng(seed)
    if noise == "none" or noise_scale == 0.0:
        L = np.tile(mu, (T, 1))
    elif noise == "uniform":
        L = mu[None, :] + rng.uniform(-noise_scale, noise_scale, size=(T, K))
    else:
        L = mu[None, :] + noise_scale * (rng.integers(0, 2, size=(T, K)) * 2.0 - 1.0)
    spec = EnvironmentSpec(
        "iid_stochastic",
        {
            "T": T,
            "K": K,
            "means": [float(x) for x in mu],
            "noise": noise,
            "noise_scale": noise_scale,
            "seed": seed,
        },
    )
    return MatrixOracle(L, spec, {"means": mu})


def make_finite_matrix(
    matrix: np.ndarray, spec: EnvironmentSpec | None = None
) -> MatrixOracle:
    """Wrap an explicit loss matrix (for ingested files and ad hoc fixtures)."""
    return MatrixOracle(matrix, spec)


def make_environment(spec: EnvironmentSpec | dict[str, Any]) -> LossOracle:
    """Instantiate the oracle described by a spec (dicts are accepted)."""
    if isinstance(spec, dict):
        spec = EnvironmentSpec(spec["kind"], dict(spec.get("parameters", {})))
    p = spec.parameters
    if spec.kind == "finite_matrix":
        matrix = matrix_io.load_matrix(p["path"], p.get("format"))
        return MatrixOracle(matrix, spec)
    if spec.kind == "clustered_binary":
        return make_clustered_binary(int(p["T"]), int(p["K"]), int(p["N"]), int(p["seed"]))
    if spec.kind == "low_rank":
        return make_low_rank(
            int(p["T"]), int(p["K"]), int(p["d"]), float(p["epsilon_noise"]), int(p["seed"])
        )
    if spec.kind == "sparse_dictionary":
        return make_sparse_dictionary(
            int(p["T"]), int(p["K"]), int(p["n"]), int(p["k"]),
            float(p["epsilon_noise"]), int(p["seed"]),
        )
    if spec.kind == "bounded_variation":
        return make_bounded_variation_adversary(int(p["T"]), int(p["K"]), int(p["seed"]))
    if spec.kind == "iid_stochastic":
        return make_iid_stochastic(
            int(p["T"]), int(p["K"]), p["means"],
            p.get("noise", "none"), float(p.get("noise_scale", 0.0)), int(p["seed"]),
        )
    raise ValueError(f"unknown environment kind {spec.kind!r}")


def export_environment(
    oracle: LossOracle, out_base: str | Path, fmt: str = "csv"
) -> dict[str, str]:
    """Write the realized matrix, ground-truth arrays, and a JSON sidecar.

    Files land next to ``out_base``: the matrix as ``<base>.<ext>``, each
    ground-truth array as ``<base>.<name>.<ext>``, and the sidecar (spec,
    seed, file listing) as ``<base>.json``.  Returns the written paths.
    """
    if fmt not in matrix_io.FORMATS:
        raise ValueError(f"format must be one of {matrix_io.FORMATS}, got {fmt!r}")
    base = Path(out_base)
    base.parent.mkdir(parents=True, exist_ok=True)
    ext = "csv" if fmt == "csv" else "bin"

    matrix_path = base.with_suffix(f".{ext}")
    matrix_io.save_matrix(matrix_path, oracle.to_matrix(), fmt)
    written = {"matrix": str(matrix_path)}

    ground_truth = getattr(oracle, "ground_truth", {}) or {}
    for name, arr in ground_truth.items():
        gt_path = base.parent / f"{base.stem}.{name}.{ext}"
        matrix_io.save_matrix(gt_path, np.atleast_2d(np.asarray(arr, dtype=np.float64)), fmt)
        written[f"ground_truth.{name}"] = str(gt_path)

    spec = getattr(oracle, "spec", None)
    sidecar = {
        "spec": spec.as_dict() if spec is not None else None,
        "format": fmt,
        "files": {key: Path(path).name for key, path in written.items()},
    }
    sidecar_path = base.with_suffix(".json")
    sidecar_path.write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    written["sidecar"] = str(sidecar_path)
    return written


def environment_from_sidecar(path: str | Path) -> LossOracle:
    """Regenerate the environment described by an exported sidecar."""
    sidecar = json.loads(Path(path).read_text())
    spec = sidecar.get("spec")
    if spec is None:
        raise ValueError(f"{path}: sidecar carries no environment spec")
    if spec["kind"] == "finite_matrix":
        matrix_name = sidecar["files"]["matrix"]
        matrix = matrix_io.load_matrix(Path(path).parent / matrix_name, sidecar.get("format"))
        return MatrixOracle(matrix, EnvironmentSpec(**spec))
    return make_environment(spec)
