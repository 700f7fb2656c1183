"""Tests for losses and evaluation metrics."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uses_se.config import LossConfig
from uses_se.exceptions import ContractError, DimensionError, UndefinedReferenceError
from uses_se.losses import (
    multi_res_l1_loss,
    optimal_scale,
    pit_si_snr_loss,
    sdr,
    si_snr,
    si_snr_improvement,
)
from uses_se.numerics.gradcheck import grad_check
from uses_se.numerics.tensor import Tensor

SMALL_LOSS = LossConfig(mr_windows=[16, 32], time_weight=0.5)


class TestSiSnr:
    """Tests for the scale-invariant SNR."""

    def test_scale_invariant(self, rng):
        """Test rescaling the estimate does not change the score."""
        ref = rng.standard_normal(500)
        est = ref + 0.3 * rng.standard_normal(500)
        assert si_snr(est * 7.5, ref).item() == pytest.approx(si_snr(est, ref).item())

    @given(
        gain=st.floats(min_value=1e-3, max_value=1e3),
        seed=st.integers(min_value=0, max_value=2**16),
    )
    @settings(max_examples=30, deadline=None)
    def test_scale_invariant_property(self, gain, seed):
        """Test any positive gain on the estimate leaves the score unchanged."""
        rng = np.random.default_rng(seed)
        ref = rng.standard_normal(256)
        est = ref + 0.5 * rng.standard_normal(256)
        assert si_snr(gain * est, ref).item() == pytest.approx(si_snr(est, ref).item(), abs=1e-9)

    def test_known_value(self, rng):
        """Test an orthogonal error of equal energy scores 0 dB."""
        ref = np.array([1.0, 0.0, 1.0, 0.0])
        est = ref + np.array([0.0, 1.0, 0.0, 1.0])
        assert si_snr(est, ref).item() == pytest.approx(0.0, abs=1e-6)

    def test_perfect_estimate_capped(self, rng):
        """Test a perfect estimate scores at most the 80 dB cap."""
        ref = rng.standard_normal(200)
        assert si_snr(ref, ref).item() == pytest.approx(80.0, abs=1e-6)

    def test_no_mean_removal(self):
        """Test a DC offset counts as error."""
        ref = np.array([1.0, -1.0, 1.0, -1.0])
        assert si_snr(ref + 1.0, ref).item() == pytest.approx(0.0, abs=1e-6)

    def test_zero_reference(self):
        """Test an all-zero reference is undefined."""
        with pytest.raises(UndefinedReferenceError):
            si_snr(np.ones(4), np.zeros(4))

    def test_shape_mismatch(self):
        """Test estimate and reference must have equal shapes."""
        with pytest.raises(DimensionError):
            si_snr(np.ones(4), np.ones(5))

    def test_improvement(self, rng):
        """Test SI-SNRi subtracts the mixture's score."""
        ref = rng.standard_normal(400)
        mix = ref + rng.standard_normal(400)
        est = ref + 0.1 * rng.standard_normal(400)
        expected = si_snr(est, ref).item() - si_snr(mix, ref).item()
        assert si_snr_improvement(est, mix, ref) == pytest.approx(expected)
        assert expected > 10.0

    def test_gradient(self, rng):
        """Test the SI-SNR gradient with respect to the estimate."""
        ref = Tensor(rng.standard_normal(32))
        point = Tensor(rng.standard_normal(32))
        assert grad_check(lambda e: si_snr(e, ref), point) < 1e-6


class TestSdr:
    """Tests for the plain signal-to-distortion ratio."""

    def test_not_scale_invariant(self, rng):
        """Test halving the estimate lowers SDR."""
        ref = rng.standard_normal(300)
        assert sdr(0.5 * ref, ref).item() == pytest.approx(10 * np.log10(1 / 0.25), rel=1e-6)

    def test_zero_reference(self):
        """Test an all-zero reference is undefined."""
        with pytest.raises(UndefinedReferenceError):
            sdr(np.ones(3), np.zeros(3))


class TestMultiResolution:
    """Tests for the enhancement loss."""

    def test_zero_for_scaled_copy(self, rng):
        """Test any positive or negative gain of the reference costs (almost) nothing."""
        ref = rng.standard_normal((1, 256))
        assert multi_res_l1_loss(-3.0 * ref, ref, SMALL_LOSS).item() == pytest.approx(0.0, abs=1e-6)

    def test_positive_for_noise(self, rng):
        """Test an unrelated estimate has a clearly positive loss."""
        ref = rng.standard_normal((1, 256))
        assert multi_res_l1_loss(rng.standard_normal((1, 256)), ref, SMALL_LOSS).item() > 0.1

    def test_zero_estimate_falls_back(self, rng, caplog):
        """Test an all-zero estimate uses unit gain and warns."""
        ref = rng.standard_normal((1, 64))
        loss = multi_res_l1_loss(np.zeros((1, 64)), ref, SMALL_LOSS)
        assert np.isfinite(loss.item())
        assert "gain of 1" in caplog.text

    def test_optimal_scale(self, rng):
        """Test the least-squares gain of a scaled copy."""
        ref = rng.standard_normal(100)
        alpha, fell_back = optimal_scale(ref / 4.0, ref)
        assert alpha.item() == pytest.approx(4.0)
        assert not fell_back

    def test_gradient(self, rng):
        """Test the loss gradient with respect to the estimate."""
        ref = Tensor(rng.standard_normal((1, 48)))
        point = Tensor(rng.standard_normal((1, 48)))
        err = grad_check(lambda e: multi_res_l1_loss(e, ref, SMALL_LOSS), point, coords=range(0, 48, 5))
        assert err < 1e-4


class TestPit:
    """Tests for permutation-invariant training."""

    def test_finds_swap(self, rng):
        """Test swapped estimates are matched back (0-based permutation)."""
        refs = rng.standard_normal((2, 300))
        ests = refs[::-1] + 0.01 * rng.standard_normal((2, 300))
        loss, perm = pit_si_snr_loss(ests, refs)
        assert perm == (1, 0)
        assert loss.item() < -30.0

    def test_three_sources(self, rng):
        """Test a cyclic permutation of three sources."""
        refs = rng.standard_normal((3, 200))
        ests = refs[[2, 0, 1]]
        _, perm = pit_si_snr_loss(ests, refs)
        assert perm == (2, 0, 1)

    def test_single_source(self, rng):
        """Test one source reduces to negative SI-SNR."""
        refs = rng.standard_normal((1, 100))
        ests = refs + rng.standard_normal((1, 100))
        loss, perm = pit_si_snr_loss(ests, refs)
        assert perm == (0,)
        assert loss.item() == pytest.approx(-si_snr(ests[0], refs[0]).item())

    def test_too_many_sources(self, rng):
        """Test exhaustive PIT is limited to three sources."""
        with pytest.raises(ContractError, match="at most 3"):
            pit_si_snr_loss(rng.standard_normal((4, 10)), rng.standard_normal((4, 10)))

    def test_needs_two_dimensions(self, rng):
        """Test signals must be (sources, samples)."""
        with pytest.raises(DimensionError):
            pit_si_snr_loss(rng.standard_normal(10), rng.standard_normal(10))

    def test_gradient_flows_through_best_assignment(self, rng):
        """Test PIT is differentiable through the chosen permutation."""
        refs = Tensor(rng.standard_normal((2, 24)))
        point = Tensor(rng.standard_normal((2, 24)))
        assert grad_check(lambda e: pit_si_snr_loss(e, refs)[0], point) < 1e-5
