import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from boxvid.diffusion import (
    add_noise,
    cfg_combine,
    ddim_step,
    ddim_timesteps,
    make_schedule,
    reweighted_loss,
)


class TestSchedule:
    def test_single_step(self):
        s = make_schedule(1, 0.1, 0.1)
        np.testing.assert_allclose(s.alpha_bar, [0.9])

    def test_two_step_product(self):
        # hand product: 0.9 * 0.8
        s = make_schedule(2, 0.1, 0.2)
        np.testing.assert_allclose(s.alpha_bar, [0.9, 0.72])

    def test_strictly_decreasing(self):
        s = make_schedule(1000, 1e-4, 2e-2)
        assert np.all(np.diff(s.alpha_bar) < 0)
        assert np.all((s.alpha_bar > 0) & (s.alpha_bar <= 1))
        np.testing.assert_allclose(s.alpha, 1.0 - s.beta)

    def test_invalid_bounds(self):
        for args in ((0, 0.1, 0.2), (10, 0.0, 0.2), (10, 0.3, 0.2), (10, 0.1, 1.0)):
            with pytest.raises(ValueError, match="invalid-schedule"):
                make_schedule(*args)


class TestAddNoise:
    def test_alpha_bar_one_limit(self):
        # beta tiny -> alpha_bar ~ 1 -> z_t ~ z0; check the exact formula instead
        s = make_schedule(10, 1e-4, 2e-2)
        z0 = torch.randn(2, 4, 4, 3, dtype=torch.float64)
        out = add_noise(z0, 1, torch.zeros_like(z0), s)
        torch.testing.assert_close(out, np.sqrt(s.alpha_bar[0]) * z0)

    def test_linearity(self):
        s = make_schedule(100)
        z0 = torch.randn(2, 4, 4, 3, dtype=torch.float64)
        eps = torch.randn_like(z0)
        a = add_noise(z0, 50, eps, s)
        b = add_noise(2 * z0, 50, 2 * eps, s)
        torch.testing.assert_close(b, 2 * a)

    def test_shape_mismatch(self):
        s = make_schedule(10)
        with pytest.raises(ValueError, match="invalid-input"):
            add_noise(torch.zeros(2, 2), 1, torch.zeros(3, 2), s)

    def test_variance_preserved(self):
        # sample-statistics oracle: unit-variance z0 and independent eps give
        # unit-variance z_t
        s = make_schedule(1000, 1e-4, 2e-2)
        gen = torch.Generator().manual_seed(0)
        z0 = torch.randn(100_000, generator=gen, dtype=torch.float64).reshape(-1, 1)
        eps = torch.randn(100_000, generator=gen, dtype=torch.float64).reshape(-1, 1)
        for t in (1, 250, 500, 1000):
            z_t = add_noise(z0, t, eps, s)
            assert abs(z_t.var().item() - 1.0) < 0.02

    def test_per_sample_timesteps(self):
        s = make_schedule(100)
        z0 = torch.randn(3, 2, 2, 2, 1, dtype=torch.float64)
        eps = torch.randn_like(z0)
        batched = add_noise(z0, torch.tensor([1, 50, 100]), eps, s)
        for i, t in enumerate((1, 50, 100)):
            single = add_noise(z0[i], t, eps[i], s)
            torch.testing.assert_close(batched[i], single)


class TestReweightedLoss:
    def test_weight_one_is_plain_mse(self):
        gen = torch.Generator().manual_seed(1)
        for _ in range(100):
            pred = torch.randn(2, 4, 4, 3, generator=gen, dtype=torch.float64)
            target = torch.randn_like(pred)
            mask = (torch.rand(2, 4, 4, generator=gen, dtype=torch.float64) > 0.5).double()
            loss = reweighted_loss(pred, target, mask, 1.0)
            mse = ((pred - target) ** 2).mean()
            assert abs(loss.item() - mse.item()) < 1e-12

    def test_hand_2x2_example(self):
        # mask [[1,0],[0,0]], all residuals 1, weight 2 -> (2+1+1+1)/4
        pred = torch.ones(1, 2, 2, 1, dtype=torch.float64)
        target = torch.zeros_like(pred)
        mask = torch.tensor([[[1.0, 0.0], [0.0, 0.0]]], dtype=torch.float64)
        loss = reweighted_loss(pred, target, mask, 2.0)
        assert loss.item() == 1.25

    def test_full_mask_scales_mse(self):
        gen = torch.Generator().manual_seed(2)
        pred = torch.randn(3, 4, 4, 5, generator=gen, dtype=torch.float64)
        target = torch.randn_like(pred)
        mask = torch.ones(3, 4, 4, dtype=torch.float64)
        for lam in (1.0, 1.7, 2.0, 4.0):
            loss = reweighted_loss(pred, target, mask, lam)
            mse = ((pred - target) ** 2).mean()
            assert abs(loss.item() - lam * mse.item()) < 1e-12

    def test_invalid_weight(self):
        z = torch.zeros(1, 2, 2, 1)
        with pytest.raises(ValueError, match="invalid-weight"):
            reweighted_loss(z, z, torch.zeros(1, 2, 2), 0.5)

    @given(st.integers(0, 10_000), st.floats(1.0, 8.0))
    @settings(max_examples=40, deadline=None)
    def test_symmetric_nonnegative(self, seed, lam):
        gen = torch.Generator().manual_seed(seed)
        a = torch.randn(1, 2, 2, 2, generator=gen, dtype=torch.float64)
        b = torch.randn_like(a)
        mask = (torch.rand(1, 2, 2, generator=gen) > 0.5).double()
        ab = reweighted_loss(a, b, mask, lam)
        ba = reweighted_loss(b, a, mask, lam)
        assert ab.item() == ba.item()
        assert ab.item() >= 0.0
        assert reweighted_loss(a, a, mask, lam).item() == 0.0


class TestCfg:
    def test_degenerate_scales(self):
        a, b = torch.randn(2, 3, 3, 1), torch.randn(2, 3, 3, 1)
        torch.testing.assert_close(cfg_combine(a, b, 1.0), a)
        torch.testing.assert_close(cfg_combine(a, b, 0.0), b)

    def test_constant_grids_at_paper_scale(self):
        cond = torch.full((1, 2, 2, 1), 2.0)
        uncond = torch.full((1, 2, 2, 1), 1.0)
        out = cfg_combine(cond, uncond, 9.0)
        torch.testing.assert_close(out, torch.full_like(out, 10.0))

    def test_identity_when_equal(self):
        x = torch.randn(2, 2, 2, 2)
        for s in (0.0, 1.0, 9.0, -3.0):
            torch.testing.assert_close(cfg_combine(x, x, s), x)


class TestDdim:
    def test_timestep_subsequence(self):
        ts = ddim_timesteps(1000, 50)
        assert len(ts) == 50
        assert ts[0] == 981 and ts[-1] == 1
        assert all(a - b == 20 for a, b in zip(ts, ts[1:]))

    def test_invalid_steps(self):
        with pytest.raises(ValueError, match="invalid-steps"):
            ddim_timesteps(100, 200)
        with pytest.raises(ValueError, match="invalid-steps"):
            ddim_timesteps(100, 33)

    def test_inversion_identity(self):
        # oracle model returning the true eps: one step recovers z0 exactly
        s = make_schedule(1000, 1e-4, 2e-2)
        gen = torch.Generator().manual_seed(3)
        z0 = torch.randn(1, 2, 4, 4, 3, generator=gen, dtype=torch.float64)
        eps = torch.randn_like(z0)
        for t in (100, 500, 900):
            z_t = add_noise(z0, t, eps, s)
            rec = ddim_step(z_t, eps, t, 0, s)
            assert (rec - z0).abs().max().item() < 1e-5

    def test_intermediate_step_formula(self):
        s = make_schedule(1000)
        gen = torch.Generator().manual_seed(4)
        z0 = torch.randn(1, 2, 2, 2, 1, generator=gen, dtype=torch.float64)
        eps = torch.randn_like(z0)
        z_t = add_noise(z0, 500, eps, s)
        out = ddim_step(z_t, eps, 500, 250, s)
        torch.testing.assert_close(out, add_noise(z0, 250, eps, s))
