import logging

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from packhedge.core import (
    GameConfig,
    GameTrajectory,
    LossOracle,
    expected_loss,
    game_rng,
    normalize_rng,
    sample_categorical,
    validate_loss_matrix,
)


class TestSampleCategorical:
    def test_singleton_always_zero(self):
        rng = game_rng(0)
        assert all(sample_categorical([1.0], rng) == 0 for _ in range(20))

    def test_zero_mass_never_chosen(self):
        rng = game_rng(1)
        draws = {sample_categorical([0.0, 3.0], rng) for _ in range(200)}
        assert draws == {1}

    @pytest.mark.parametrize(
        "weights",
        [[], [-1.0, 2.0], [np.nan, 1.0], [np.inf, 1.0], [0.0, 0.0]],
    )
    def test_degenerate_weights_rejected(self, weights):
        with pytest.raises(ValueError, match="degenerate distribution"):
            sample_categorical(weights, game_rng(2))

    def test_uniform_frequencies(self):
        rng = game_rng(3)
        n = 100_000
        counts = np.bincount(
            [sample_categorical([1.0, 1.0, 1.0, 1.0], rng) for _ in range(n)], minlength=4
        )
        frequencies = counts / n
        assert np.all(frequencies >= 0.235) and np.all(frequencies <= 0.265)
        assert stats.chisquare(counts).pvalue > 0.01

    def test_weighted_frequencies_match_weights(self):
        rng = game_rng(4)
        weights = np.array([1.0, 2.0, 5.0])
        n = 100_000
        counts = np.bincount(
            [sample_categorical(weights, rng) for _ in range(n)], minlength=3
        )
        assert stats.chisquare(counts, f_exp=n * weights / weights.sum()).pvalue > 0.01

    def test_consumes_exactly_one_state_advance(self):
        a, b = game_rng(5), game_rng(5)
        sample_categorical([0.3, 0.7], a)
        b.random()
        assert np.array_equal(a.random(8), b.random(8))

    @given(st.lists(st.floats(min_value=0.0, max_value=100.0), min_size=1, max_size=10),
           st.integers(min_value=0, max_value=2**31))
    def test_never_returns_zero_weight_index(self, weights, seed):
        if sum(weights) <= 0:
            return
        i = sample_categorical(weights, game_rng(seed))
        assert weights[i] > 0


class TestExpectedLoss:
    def test_point_mass(self):
        assert expected_loss([1.0, 0.0], [0.5, -1.0]) == pytest.approx(0.5)

    def test_symmetric_cancellation(self):
        assert expected_loss([0.5, 0.5], [1.0, -1.0]) == pytest.approx(0.0)

    def test_hand_arithmetic(self):
        assert expected_loss([0.25, 0.75], [-1.0, 1.0]) == pytest.approx(0.5)

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="length mismatch"):
            expected_loss([1.0], [0.5, 0.5])

    def test_unnormalized_distribution_rejected(self):
        with pytest.raises(ValueError, match="sum to 1"):
            expected_loss([0.5, 0.6], [0.0, 0.0])


class TestRngStreams:
    def test_same_key_same_stream(self):
        assert np.array_equal(game_rng(7, 1).random(5), game_rng(7, 1).random(5))

    def test_different_keys_differ(self):
        assert not np.array_equal(game_rng(7, 1).random(5), game_rng(7, 2).random(5))

    def test_normalize_rng_int_records_seed(self):
        gen, seed = normalize_rng(11)
        assert seed == 11
        assert np.array_equal(gen.random(3), game_rng(11, 0).random(3))

    def test_normalize_rng_generator_passthrough(self):
        gen = game_rng(1)
        out, seed = normalize_rng(gen)
        assert out is gen and seed is None

    def test_normalize_rng_rejects_other_types(self):
        with pytest.raises(TypeError):
            normalize_rng("seed")


class TestValidateLossMatrix:
    def test_in_range_passthrough(self):
        m = np.array([[0.5, -1.0], [1.0, 0.0]])
        assert np.array_equal(validate_loss_matrix(m), m)

    def test_grazing_clamped_with_warning(self, caplog):
        m = np.array([[1.0 + 1e-13, -1.0]])
        with caplog.at_level(logging.WARNING):
            out = validate_loss_matrix(m)
        assert out.max() == 1.0
        assert any("clamping" in record.message for record in caplog.records)

    def test_clear_violation_rejected(self):
        with pytest.raises(ValueError, match="exceed"):
            validate_loss_matrix(np.array([[1.5, 0.0]]))

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError, match="non-finite"):
            validate_loss_matrix(np.array([[np.nan, 0.0]]))


class TestGameConfig:
    def test_valid(self):
        cfg = GameConfig(T=10, epsilon=0.5, seed=1, algorithm="hedge")
        assert cfg.T == 10

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"T": 0},
            {"T": 10, "epsilon": 0.0},
            {"T": 10, "epsilon": 1.5},
            {"T": 10, "algorithm": "bandit"},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            GameConfig(**kwargs)


class TestLossOracleDefaults:
    """The ABC's loss()-based fallbacks must agree with vectorized overrides."""

    class MinimalOracle(LossOracle):
        def __init__(self, matrix):
            self._m = matrix

        def horizon(self):
            return self._m.shape[0]

        def num_experts(self):
            return self._m.shape[1]

        def loss(self, t, i):
            return float(self._m[t - 1, i])

    def _pair(self, seed):
        from packhedge.environments import MatrixOracle

        matrix = game_rng(seed).uniform(-1.0, 1.0, size=(12, 9))
        return self.MinimalOracle(matrix), MatrixOracle(matrix)

    def test_losses_agree(self):
        minimal, vectorized = self._pair(0)
        for t in (1, 5, 12):
            assert np.allclose(minimal.losses(t), vectorized.losses(t))
            assert np.allclose(minimal.losses(t, [2, 7]), vectorized.losses(t, [2, 7]))

    def test_uncovered_expert_agrees(self):
        minimal, vectorized = self._pair(1)
        rng = game_rng(2)
        for _ in range(40):
            t = int(rng.integers(1, 13))
            active = list(rng.choice(9, size=int(rng.integers(1, 4)), replace=False))
            threshold = float(rng.uniform(0.0, 2.0))
            assert minimal.uncovered_expert(t, active, threshold) == vectorized.uncovered_expert(
                t, active, threshold
            )

    def test_column_sums_and_matrix_agree(self):
        minimal, vectorized = self._pair(3)
        assert np.allclose(minimal.column_sums(), vectorized.column_sums())
        assert np.array_equal(minimal.to_matrix(), vectorized.to_matrix())


class TestGameTrajectory:
    def _build(self, incurred, packing):
        n = len(incurred)
        incurred = np.asarray(incurred, dtype=np.float64)
        return GameTrajectory(
            t=np.arange(1, n + 1),
            chosen=np.zeros(n, dtype=np.int64),
            incurred=incurred,
            cumulative=np.cumsum(incurred),
            packing_size=np.asarray(packing, dtype=np.int64),
            phase=np.ones(n, dtype=np.int64),
            seed=0,
        )

    def test_valid_trajectory_passes(self):
        self._build([0.5, -0.5, 1.0], [1, 2, 2]).validate()

    def test_cumulative_mismatch_rejected(self):
        trajectory = self._build([0.5, -0.5], [1, 1])
        trajectory.cumulative = trajectory.cumulative + 1.0
        with pytest.raises(ValueError, match="cumulative"):
            trajectory.validate()

    def test_shrinking_packing_rejected(self):
        with pytest.raises(ValueError, match="non-decreasing"):
            self._build([0.0, 0.0], [2, 1]).validate()

    def test_learner_cumulative_matches_sum(self):
        trajectory = self._build([0.25, -1.0, 0.5], [1, 1, 1])
        assert trajectory.learner_cumulative == pytest.approx(-0.25)
