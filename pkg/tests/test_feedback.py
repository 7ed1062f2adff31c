import numpy as np
import pytest

from ecqsgd.feedback import (
    FeedbackConfig,
    FeedbackState,
    compensate,
    reconstruct_error_history,
    update_error,
)


class TestCompensate:
    def test_direct_arithmetic(self):
        state = FeedbackState(h=np.array([0.5, -0.5]))
        out = compensate(np.array([1.0, 2.0]), state, FeedbackConfig(alpha=0.2, beta=1.0))
        np.testing.assert_allclose(out, [1.1, 1.9])

    def test_alpha_zero_returns_gradient(self):
        state = FeedbackState(h=np.array([100.0, -7.0]))
        g = np.array([1.0, 2.0])
        out = compensate(g, state, FeedbackConfig(alpha=0.0, beta=0.9))
        np.testing.assert_array_equal(out, g)
        assert out is not g  # caller owns the result

    def test_zero_state_returns_gradient(self):
        g = np.array([3.0, -1.0])
        out = compensate(g, FeedbackState.zeros(2), FeedbackConfig(alpha=0.7, beta=1.0))
        np.testing.assert_array_equal(out, g)

    def test_does_not_mutate_state(self):
        state = FeedbackState(h=np.array([1.0]))
        compensate(np.array([2.0]), state, FeedbackConfig(alpha=0.5, beta=1.0))
        np.testing.assert_array_equal(state.h, [1.0])

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension mismatch"):
            compensate(np.zeros(3), FeedbackState.zeros(2), FeedbackConfig(0.1, 1.0))


class TestUpdateError:
    def test_direct_arithmetic(self):
        state = FeedbackState(h=np.array([0.0]))
        new = update_error(state, np.array([1.0]), np.array([0.75]), FeedbackConfig(0.0, 1.0))
        np.testing.assert_allclose(new.h, [0.25])
        assert new.iteration == 1

    def test_lossless_transmission_keeps_zero(self):
        g = np.array([1.0, -2.0])
        new = update_error(FeedbackState.zeros(2), g, g, FeedbackConfig(0.3, 0.9))
        np.testing.assert_array_equal(new.h, np.zeros(2))

    def test_full_decay(self):
        state = FeedbackState(h=np.array([7.0]))
        new = update_error(state, np.array([1.0]), np.array([1.0]), FeedbackConfig(0.5, 0.0))
        np.testing.assert_array_equal(new.h, [0.0])

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension mismatch"):
            update_error(FeedbackState.zeros(2), np.zeros(2), np.zeros(3), FeedbackConfig(0.1, 1.0))


class TestHistoryReconstruction:
    def test_empty_history_is_zero(self):
        np.testing.assert_array_equal(
            reconstruct_error_history([], FeedbackConfig(0.2, 0.9), dim=4), np.zeros(4)
        )

    def test_single_step(self):
        out = reconstruct_error_history([np.array([0.2])], FeedbackConfig(0.3, 0.8))
        np.testing.assert_allclose(out, [-0.2])

    @pytest.mark.parametrize("alpha,beta", [(0.2, 0.9), (0.0, 1.0), (1.0, 1.0), (0.4, 0.3)])
    def test_matches_iterated_update(self, alpha, beta):
        # feed consistent (g, g_tilde, eps) triples through both routes
        cfg = FeedbackConfig(alpha=alpha, beta=beta)
        gen = np.random.default_rng(12)
        d = 8
        state = FeedbackState.zeros(d)
        errors = []
        for _ in range(5):
            g = gen.normal(size=d)
            v = compensate(g, state, cfg)
            g_tilde = v + gen.normal(size=d) * 0.1  # arbitrary lossy transmission
            errors.append(g_tilde - v)
            state = update_error(state, g, g_tilde, cfg)
        oracle = reconstruct_error_history(errors, cfg)
        np.testing.assert_allclose(state.h, oracle, rtol=1e-12, atol=1e-12)


class TestConfigValidation:
    def test_alpha_negative_rejected(self):
        with pytest.raises(ValueError, match="alpha"):
            FeedbackConfig(alpha=-0.1, beta=1.0)

    def test_beta_out_of_range_rejected(self):
        with pytest.raises(ValueError, match="beta"):
            FeedbackConfig(alpha=0.1, beta=1.5)
        with pytest.raises(ValueError, match="beta"):
            FeedbackConfig(alpha=0.1, beta=-0.01)
