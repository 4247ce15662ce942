import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from boxvid.geometry import (
    Box,
    BoxSequence,
    LATENT,
    MaskVideo,
    PIXEL,
    blend_mask,
    interpolate_trajectory,
    invert_mask,
    load_box_sequence,
    rasterize_boxes,
    resize_to_latent,
    save_box_sequence,
)


def seq(*boxes):
    return BoxSequence(tuple(boxes))


@st.composite
def valid_boxes(draw):
    x1 = draw(st.floats(0, 1))
    x2 = draw(st.floats(x1, 1))
    y1 = draw(st.floats(0, 1))
    y2 = draw(st.floats(y1, 1))
    return Box(x1, y1, x2, y2)


class TestBox:
    def test_invariants_enforced(self):
        with pytest.raises(ValueError, match="invalid-box"):
            Box(0.5, 0.0, 0.2, 1.0)
        with pytest.raises(ValueError, match="invalid-box"):
            Box(-0.1, 0.0, 0.5, 1.0)
        with pytest.raises(ValueError, match="invalid-box"):
            Box(0.0, 0.0, 1.2, 1.0)

    def test_properties(self):
        b = Box(0.1, 0.2, 0.5, 0.8)
        assert b.width == pytest.approx(0.4)
        assert b.height == pytest.approx(0.6)
        assert b.centroid == pytest.approx((0.3, 0.5))
        assert not b.is_degenerate()
        assert Box(0.3, 0.3, 0.3, 0.9).is_degenerate()


class TestInterpolateTrajectory:
    def test_constant_trajectory(self):
        b = Box(0.1, 0.1, 0.3, 0.3)
        out = interpolate_trajectory(b, b, 8)
        assert len(out) == 8
        assert all(box == b for box in out)

    def test_two_frames_are_endpoints(self):
        a, b = Box(0, 0, 0.2, 0.2), Box(0.8, 0.8, 1, 1)
        out = interpolate_trajectory(a, b, 2)
        assert out[0] == a and out[1] == b

    def test_midpoint(self):
        # hand linear interpolation per corner
        out = interpolate_trajectory(Box(0, 0, 0.2, 0.2), Box(0.8, 0.8, 1, 1), 3)
        mid = out[1]
        assert (mid.x1, mid.y1, mid.x2, mid.y2) == pytest.approx((0.4, 0.4, 0.6, 0.6))

    def test_invalid_frame_count(self):
        with pytest.raises(ValueError, match="invalid-frame-count"):
            interpolate_trajectory(Box(0, 0, 1, 1), Box(0, 0, 1, 1), 1)

    @given(valid_boxes(), valid_boxes(), st.integers(2, 16))
    @settings(max_examples=60, deadline=None)
    def test_outputs_always_valid(self, a, b, frames):
        out = interpolate_trajectory(a, b, frames)
        assert len(out) == frames
        for box in out:  # Box construction enforces the invariants
            assert 0.0 <= box.x1 <= box.x2 <= 1.0
            assert 0.0 <= box.y1 <= box.y2 <= 1.0


class TestRasterize:
    def test_full_frame_box(self):
        m = rasterize_boxes(seq(Box(0, 0, 1, 1)), 5, 7)
        assert m.resolution == PIXEL
        assert np.all(m.values == 1.0)

    def test_zero_area_box(self):
        m = rasterize_boxes(seq(Box(0.5, 0.2, 0.5, 0.9)), 8, 8)
        assert np.all(m.values == 0.0)

    def test_half_frame(self):
        m = rasterize_boxes(seq(Box(0, 0, 0.5, 1)), 4, 4)
        expected = np.zeros((4, 4))
        expected[:, :2] = 1.0  # per-pixel-center membership
        np.testing.assert_array_equal(m.values[0], expected)

    def test_pixel_center_oracle(self, rng):
        # brute-force membership per pixel center
        boxes = []
        for _ in range(5):
            x1, y1 = rng.uniform(0, 0.5, 2)
            x2, y2 = x1 + rng.uniform(0, 0.5), y1 + rng.uniform(0, 0.5)
            boxes.append(Box(x1, y1, x2, y2))
        m = rasterize_boxes(BoxSequence(tuple(boxes)), 13, 9)
        for i, b in enumerate(boxes):
            for r in range(13):
                for c in range(9):
                    cx, cy = (c + 0.5) / 9, (r + 0.5) / 13
                    inside = b.x1 <= cx < b.x2 and b.y1 <= cy < b.y2
                    assert m.values[i, r, c] == float(inside)


class TestInvert:
    def test_all_ones(self):
        m = MaskVideo(np.ones((2, 3, 3)), PIXEL)
        assert np.all(invert_mask(m).values == 0.0)

    def test_involution(self, rng):
        m = MaskVideo(rng.uniform(0, 1, (3, 4, 4)), LATENT)
        np.testing.assert_array_equal(invert_mask(invert_mask(m)).values, m.values)

    def test_complement_of_box(self):
        # background of the motion signal lines up with the blank-background
        # subject image: ones exactly outside the box
        m = rasterize_boxes(seq(Box(0, 0, 0.5, 1)), 4, 4)
        inv = invert_mask(m)
        np.testing.assert_array_equal(inv.values, 1.0 - m.values)
        assert np.all(inv.values[0][:, 2:] == 1.0)


class TestResize:
    def test_all_ones_and_zeros(self):
        ones = MaskVideo(np.ones((1, 8, 8)), PIXEL)
        assert np.all(resize_to_latent(ones, 2, 2).values == 1.0)
        zeros = MaskVideo(np.zeros((1, 8, 8)), PIXEL)
        assert np.all(resize_to_latent(zeros, 2, 2).values == 0.0)

    def test_checkerboard(self):
        board = np.indices((4, 4)).sum(axis=0) % 2
        m = MaskVideo(board[None].astype(float), PIXEL)
        out = resize_to_latent(m, 2, 2)
        assert out.resolution == LATENT
        np.testing.assert_allclose(out.values, 0.5)

    def test_block_average_oracle(self, rng):
        vals = rng.uniform(0, 1, (2, 8, 12))
        out = resize_to_latent(MaskVideo(vals, PIXEL), 4, 4)
        for f in range(2):
            for r in range(4):
                for c in range(4):
                    block = vals[f, r * 2:(r + 1) * 2, c * 3:(c + 1) * 3]
                    assert out.values[f, r, c] == pytest.approx(block.mean())

    def test_non_divisible_rejected(self):
        m = MaskVideo(np.ones((1, 10, 10)), PIXEL)
        with pytest.raises(ValueError, match="invalid-resize"):
            resize_to_latent(m, 3, 3)

    def test_area_preserved_for_grid_aligned_boxes(self, rng):
        # rasterize -> resize keeps the box area fraction (exact for boxes on
        # the pixel grid, comfortably within the 1/(h*w) budget)
        H = W = 64
        for _ in range(20):
            c0, r0 = rng.integers(0, W - 1), rng.integers(0, H - 1)
            c1, r1 = rng.integers(c0 + 1, W + 1), rng.integers(r0 + 1, H + 1)
            b = Box(c0 / W, r0 / H, c1 / W, r1 / H)
            m = rasterize_boxes(seq(b), H, W)
            lat = resize_to_latent(m, 16, 16)
            assert abs(lat.values.mean() - b.area) <= 1.0 / (16 * 16)


class TestBlend:
    def test_foreground_fixed_point(self):
        m = MaskVideo(np.ones((1, 4, 4)), LATENT)
        for lam in (0.0, 0.3, 0.75, 1.0):
            assert np.all(blend_mask(m, lam).values == 1.0)

    def test_background_weight(self):
        m = MaskVideo(np.zeros((1, 4, 4)), LATENT)
        assert np.all(blend_mask(m, 0.75).values == 0.75)

    def test_disabled_mask(self, rng):
        m = MaskVideo(rng.uniform(0, 1, (2, 4, 4)), LATENT)
        assert np.all(blend_mask(m, 1.0).values == 1.0)

    def test_identity_on_binary_at_zero(self):
        vals = (np.arange(16).reshape(1, 4, 4) % 2).astype(float)
        m = MaskVideo(vals, LATENT)
        np.testing.assert_array_equal(blend_mask(m, 0.0).values, vals)

    def test_invalid_weight(self):
        m = MaskVideo(np.zeros((1, 2, 2)), LATENT)
        with pytest.raises(ValueError, match="invalid-weight"):
            blend_mask(m, 1.5)

    @given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
    @settings(max_examples=100, deadline=None)
    def test_monotone_in_weight(self, v, lam1, lam2):
        lo, hi = sorted((lam1, lam2))
        m = MaskVideo(np.full((1, 1, 1), v), LATENT)
        assert blend_mask(m, lo).values[0, 0, 0] <= blend_mask(m, hi).values[0, 0, 0]


class TestBoxFileFormat:
    def test_round_trip(self, tmp_path):
        s = seq(Box(0.1234, 0.5, 0.9, 1.0), Box(0, 0, 0.25, 0.25))
        path = tmp_path / "boxes.txt"
        save_box_sequence(s, path)
        lines = path.read_text().strip().splitlines()
        assert len(lines) == 2
        assert lines[0] == "0.1234 0.5000 0.9000 1.0000"
        loaded = load_box_sequence(path)
        assert len(loaded) == 2
        assert loaded[0].x1 == pytest.approx(0.1234)

    def test_malformed_reports_line(self, tmp_path):
        path = tmp_path / "boxes.txt"
        path.write_text("0 0 1 1\n0 0 1\n")
        with pytest.raises(ValueError, match="line 2"):
            load_box_sequence(path)

    def test_non_numeric_reports_line(self, tmp_path):
        path = tmp_path / "boxes.txt"
        path.write_text("0 0 1 1\nx y z w\n")
        with pytest.raises(ValueError, match="line 2"):
            load_box_sequence(path)
