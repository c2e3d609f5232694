"""Error metric identities and edge cases."""

import numpy as np
import pytest

from gampsbl import NMSE_FLOOR_DB, nmse_db, tnmse_db


class TestNmse:
    """Single-vector normalized error in dB."""

    def test_zero_estimate_is_zero_db(self):
        """x_hat = 0 gives ratio 1, i.e. exactly 0 dB."""
        x = np.array([1.0, -2.0, 3.0])
        assert nmse_db(np.zeros(3), x) == 0.0

    def test_doubled_truth_is_zero_db(self):
        """x_hat = 2 x_true also gives ratio 1."""
        rng = np.random.default_rng(0)
        x = rng.standard_normal(40)
        np.testing.assert_allclose(nmse_db(2 * x, x), 0.0, atol=1e-12)

    def test_exact_recovery_hits_floor(self):
        x = np.array([0.5, 0.0, -1.5])
        assert nmse_db(x.copy(), x) == NMSE_FLOOR_DB

    def test_tiny_error_clamped_to_floor(self):
        """Errors below the floor report the floor, never -inf."""
        x = np.ones(4)
        x_hat = x + 1e-12
        assert nmse_db(x_hat, x) == NMSE_FLOOR_DB

    def test_matches_direct_formula(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            x = rng.standard_normal(30)
            x_hat = x + 0.1 * rng.standard_normal(30)
            expect = 10 * np.log10(np.sum((x_hat - x) ** 2) / np.sum(x**2))
            np.testing.assert_allclose(nmse_db(x_hat, x), expect, rtol=1e-12)

    def test_scale_invariance(self):
        """Scaling estimate and truth together leaves the dB value fixed."""
        rng = np.random.default_rng(3)
        x = rng.standard_normal(25)
        x_hat = x + 0.3 * rng.standard_normal(25)
        base = nmse_db(x_hat, x)
        np.testing.assert_allclose(nmse_db(1e3 * x_hat, 1e3 * x), base, atol=1e-10)

    def test_zero_reference_rejected(self):
        with pytest.raises(ValueError, match="zero"):
            nmse_db(np.ones(3), np.zeros(3))


class TestTnmse:
    """Frame-averaged error: ratios average before the dB conversion."""

    def test_single_frame_equals_nmse(self):
        rng = np.random.default_rng(11)
        x = rng.standard_normal(20)
        x_hat = x + 0.2 * rng.standard_normal(20)
        np.testing.assert_allclose(
            tnmse_db(x_hat[:, None], x[:, None]), nmse_db(x_hat, x), rtol=1e-12
        )

    def test_one_d_inputs_coerced(self):
        rng = np.random.default_rng(12)
        x = rng.standard_normal(20)
        x_hat = x + 0.2 * rng.standard_normal(20)
        assert tnmse_db(x_hat, x) == tnmse_db(x_hat[:, None], x[:, None])

    def test_half_exact_half_zero_estimate(self):
        """Frame ratios 0 and 1 average to 0.5, about -3.01 dB."""
        x = np.ones((5, 2))
        x_hat = np.stack([x[:, 0], np.zeros(5)], axis=1)
        np.testing.assert_allclose(tnmse_db(x_hat, x), 10 * np.log10(0.5), rtol=1e-12)

    def test_mean_of_ratios_not_ratio_of_sums(self):
        """Frames with very different energies weigh equally."""
        x = np.stack([np.full(4, 10.0), np.full(4, 0.1)], axis=1)
        x_hat = x.copy()
        x_hat[:, 1] += 0.1
        ratios = np.sum((x_hat - x) ** 2, axis=0) / np.sum(x**2, axis=0)
        np.testing.assert_allclose(
            tnmse_db(x_hat, x), 10 * np.log10(np.mean(ratios)), rtol=1e-12
        )

    def test_all_frames_exact_hits_floor(self):
        x = np.arange(1.0, 9.0).reshape(4, 2)
        assert tnmse_db(x.copy(), x) == NMSE_FLOOR_DB

    def test_zero_frame_rejected(self):
        x = np.ones((4, 2))
        x[:, 1] = 0.0
        with pytest.raises(ValueError, match="frame"):
            tnmse_db(np.ones((4, 2)), x)
